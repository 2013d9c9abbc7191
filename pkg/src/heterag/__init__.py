"""Heterogeneous RAG: decoupled chunk representations for retrieval and generation.

Chunks carry two representations. The retrieval view enriches the chunk
with multi-granular context (document lead, section lead, neighbors) and
document metadata (title, section path, keywords, abstract) so the searcher
can find it; the generation view is the bare chunk text so the generator
prompt stays clean. Per-level linear adapters over a frozen embedder are
trained contrastively (InfoNCE, in-batch plus random negatives), and an
evaluation harness scores retrieval (nDCG) and end-to-end QA (EM, token F1,
answer recall).
"""

from .corpus import (
    Chunk,
    ChunkingConfig,
    CorpusFormatError,
    Document,
    Metadata,
    Section,
    chunk_document,
    detokenize,
    document_tokens,
    extract_metadata,
    load_chunk_store,
    parse_corpus,
    tokenize,
    write_chunk_store,
)
from .views import (
    ContextBundle,
    GenerationView,
    RetrievalView,
    ViewConfig,
    build_context,
    build_generation_view,
    build_retrieval_view,
    build_views_for_document,
    render_context_body,
    render_metadata_body,
    render_view_text,
    truncate_to_budget,
)
from .embed import (
    LEVELS,
    AdapterParams,
    ContractError,
    EmbedderError,
    EmbedderSpec,
    HashEmbedder,
    RemoteEmbedder,
    TransportError,
    embed_query,
    embed_retrieval_views,
    embed_texts,
    fnv1a_64,
    fuse_embeddings,
    hash_embed_text,
    l2_normalize,
    make_embedder,
    scaled_similarity,
)
from .index import (
    SearchResult,
    VectorIndex,
    build_index,
    dedup_by_document,
    load_index,
    save_index,
    search_topk,
)
from .tuning import (
    Batch,
    TrainConfig,
    TrainingData,
    TrainingExample,
    grad_infonce,
    infonce_loss,
    load_loss_trace,
    load_training_examples,
    prepare_training_data,
    sample_batch,
    save_loss_trace,
    train_adapter,
)
from .eval import (
    QARecord,
    QAReport,
    Qrels,
    Query,
    RetrievalReport,
    answer_recall,
    build_corpus_index,
    exact_match,
    load_qa_records,
    load_qrels,
    load_queries,
    naive_view_config,
    ndcg_at_k,
    normalize_answer,
    run_qa_eval,
    run_retrieval_eval,
    token_f1,
)
from .rag import (
    DEFAULT_PASSAGE_FORMAT,
    DEFAULT_QUESTION_FORMAT,
    DEFAULT_SYSTEM_INSTRUCTION,
    GenerationContractError,
    GenerationError,
    GenerationTransportError,
    GeneratorSpec,
    PipelineResult,
    PromptTemplate,
    RAGConfig,
    assemble_prompt,
    generate_answer,
    run_pipeline,
)

__version__ = "0.1.0"
