"""
The full answer pipeline, end to end
====================================

Retrieve with the enriched views, prompt with the bare ones. The generator
here is the echo stub, a deterministic stand-in that scans the prompt for a
marker and returns the rest of that line, so the whole demo runs offline.
"""

from heterag import (
    ChunkingConfig,
    Document,
    GeneratorSpec,
    RAGConfig,
    HashEmbedder,
    Section,
    ViewConfig,
    assemble_prompt,
    build_corpus_index,
    run_pipeline,
)

# Corpus text is lowercased and punctuation-split during chunking, so the
# stub's marker below matches the detokenized form "answer :".
docs = [
    Document(
        doc_id="doc-sun",
        title="solar physics primer",
        sections=(
            Section(
                path=("core",),
                text="what powers the sun answer : hydrogen fusion in the core",
            ),
        ),
    ),
    Document(
        doc_id="doc-sea",
        title="tides explained",
        sections=(
            Section(
                path=("mechanics",),
                text="what drives the tides answer : the gravity of the moon",
            ),
        ),
    ),
]

emb = HashEmbedder(128)
index, generation_views = build_corpus_index(
    docs, ViewConfig(), ChunkingConfig(chunk_size=32), emb
)

cfg = RAGConfig(top_k=1, generator=GeneratorSpec(echo_marker="answer :"))
result = run_pipeline("solar physics fusion", cfg, index, generation_views, emb)

print("answer:    ", result.answer)
print("provenance:", [(p.chunk_id, round(p.score, 4)) for p in result.provenance])

# Peek at the actual prompt: bare passage text only, numbered from one,
# then the question. No retrieval markers leak through.
passages = [generation_views[p.chunk_id] for p in result.provenance]
print("\nprompt sent to the generator:")
print(assemble_prompt(cfg.template, "solar physics fusion", passages))

# The same pipeline degrades to closed-book on an empty index.
from heterag import build_index
import numpy as np

empty = build_index([], np.zeros((0, 128)), dimension=128)
closed = run_pipeline(
    "anything at all",
    RAGConfig(generator=GeneratorSpec(echo_fixed="no sources, fixed reply")),
    empty, {}, emb,
)
print("\nclosed-book answer:", closed.answer)
print("closed-book provenance:", closed.provenance)
