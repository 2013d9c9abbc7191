"""Command-line entry point wiring the modules into reproducible runs.

Configuration comes from an optional TOML file plus flag overrides (flags
win). Every command is deterministic given config and seed, writes its
artifacts to the configured paths, and exits nonzero with a diagnostic when
a prerequisite is missing or malformed.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .corpus import (
    ChunkingConfig,
    CorpusFormatError,
    Document,
    chunk_document,
    parse_corpus,
    write_chunk_store,
)
from .embed import AdapterParams, EmbedderSpec, embed_query, make_embedder
from .eval import (
    load_qa_records,
    load_qrels,
    load_queries,
    run_qa_eval,
    run_retrieval_eval,
)
from .index import load_index, save_index, search_topk
from .rag import GeneratorSpec, PromptTemplate, RAGConfig
from .tuning import TrainConfig, load_training_examples, save_loss_trace, train_adapter
from .views import ViewConfig, build_views_for_document, render_view_text
from .eval import build_corpus_index, naive_view_config

DEFAULT_PATHS = {
    "corpus": "corpus.jsonl",
    "queries": "queries.jsonl",
    "qrels": "qrels.tsv",
    "qa": "qa.jsonl",
    "training_pairs": "pairs.jsonl",
    "chunk_store": "chunks.jsonl",
    "index": "index.bin",
    "adapter": "adapter.bin",
    "loss_csv": "loss.csv",
    "retrieval_report_json": "retrieval_report.json",
    "retrieval_report_table": "retrieval_report.txt",
    "qa_report_json": "qa_report.json",
    "qa_report_table": "qa_report.txt",
}


@dataclass
class EvalSettings:
    chunk_sizes: tuple[int, ...] = (64,)
    methods: tuple[str, ...] = ("naive", "heterag")
    k_values: tuple[int, ...] = (1, 10)
    qa_k_values: tuple[int, ...] = (5,)
    dataset_label: str = "qa"


@dataclass
class RunConfig:
    seed: int = 0
    method: str = "heterag"
    paths: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_PATHS))
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    view: ViewConfig = field(default_factory=ViewConfig)
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    rag: RAGConfig = field(default_factory=RAGConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)


class CLIError(RuntimeError):
    """Fatal command error; the message goes to stderr and exit is nonzero."""


def _build(cls, table: dict, what: str):
    try:
        return cls(**table)
    except TypeError as exc:
        raise CLIError(f"config section [{what}]: {exc}") from exc
    except ValueError as exc:
        raise CLIError(f"config section [{what}]: {exc}") from exc


def load_config(path: str | None) -> RunConfig:
    """Parse the TOML config file into a RunConfig; absent file means defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise CLIError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise CLIError(f"{path}: {exc}") from exc

    cfg.seed = int(data.get("seed", cfg.seed))
    cfg.method = str(data.get("method", cfg.method))
    cfg.paths.update({k: str(v) for k, v in data.get("paths", {}).items()})
    unknown = set(cfg.paths) - set(DEFAULT_PATHS)
    if unknown:
        raise CLIError(f"unknown path keys: {sorted(unknown)}")

    if "chunking" in data:
        cfg.chunking = _build(ChunkingConfig, data["chunking"], "chunking")
    if "view" in data:
        table = dict(data["view"])
        if "fusion_weights" in table:
            table["fusion_weights"] = tuple(table["fusion_weights"])
        cfg.view = _build(ViewConfig, table, "view")
    if "embedder" in data:
        table = dict(data["embedder"])
        table.setdefault("endpoint", None)
        cfg.embedder = _build(EmbedderSpec, table, "embedder")
    if "train" in data:
        cfg.train = _build(TrainConfig, data["train"], "train")
    if "rag" in data:
        table = dict(data["rag"])
        template = _build(PromptTemplate, table.pop("template", {}), "rag.template")
        gen_table = dict(table.pop("generator", {}))
        gen_table.setdefault("endpoint", None)
        generator = _build(GeneratorSpec, gen_table, "rag.generator")
        cfg.rag = _build(
            RAGConfig, {**table, "template": template, "generator": generator}, "rag"
        )
    if "eval" in data:
        table = dict(data["eval"])
        for key in ("chunk_sizes", "methods", "k_values", "qa_k_values"):
            if key in table:
                table[key] = tuple(table[key])
        cfg.eval = _build(EvalSettings, table, "eval")
    return cfg


def apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Flag overrides win over the config file."""
    if args.seed is not None:
        cfg.seed = args.seed
    if args.chunk_size is not None:
        cfg.chunking = dataclasses.replace(cfg.chunking, chunk_size=args.chunk_size)
    if args.top_k is not None:
        cfg.rag = dataclasses.replace(cfg.rag, top_k=args.top_k)
    if args.method is not None:
        cfg.method = args.method
    view_updates = {}
    if args.fusion is not None:
        view_updates["fusion_mode"] = args.fusion
    if args.no_context:
        view_updates["use_context"] = False
    if args.no_metadata:
        view_updates["use_metadata"] = False
    if view_updates:
        cfg.view = dataclasses.replace(cfg.view, **view_updates)
    embed_updates = {}
    if args.embedder is not None:
        embed_updates["kind"] = args.embedder
    if args.endpoint is not None:
        embed_updates["endpoint"] = args.endpoint
    if embed_updates:
        cfg.embedder = dataclasses.replace(cfg.embedder, **embed_updates)
    cfg.train = dataclasses.replace(cfg.train, seed=cfg.seed)
    return cfg


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise CLIError(f"missing {what}: {path}")
    return path


def _load_docs(cfg: RunConfig) -> list[Document]:
    path = _require(cfg.paths["corpus"], "corpus file")
    try:
        return parse_corpus(path)
    except CorpusFormatError as exc:
        raise CLIError(f"{path}: {exc}") from exc


def _view_for_method(cfg: RunConfig, method: str) -> ViewConfig:
    if method == "naive":
        return naive_view_config(cfg.view)
    if method == "heterag":
        return cfg.view
    raise CLIError(f"unknown method {method!r}")


def _adapters(cfg: RunConfig, embedder) -> AdapterParams | None:
    """Load trained adapters when the configured file exists; else identity."""
    path = cfg.paths["adapter"]
    if os.path.exists(path):
        params = AdapterParams.load(path, temperature=cfg.train.temperature)
        if params.dimension != embedder.dimension:
            raise CLIError(
                f"adapter dimension {params.dimension} != embedder {embedder.dimension}"
            )
        return params
    return None


def cmd_ingest(cfg: RunConfig) -> int:
    docs = _load_docs(cfg)
    chunks = []
    for doc in docs:
        chunks.extend(chunk_document(doc, cfg.chunking))
    write_chunk_store(chunks, cfg.paths["chunk_store"])
    print(f"documents: {len(docs)}")
    print(f"chunks: {len(chunks)}")
    print(f"chunk store: {cfg.paths['chunk_store']}")
    return 0


def cmd_index(cfg: RunConfig) -> int:
    docs = _load_docs(cfg)
    embedder = make_embedder(cfg.embedder)
    view_cfg = _view_for_method(cfg, cfg.method)
    index, _ = build_corpus_index(
        docs, view_cfg, cfg.chunking, embedder, _adapters(cfg, embedder)
    )
    save_index(index, cfg.paths["index"])
    print(f"indexed chunks: {len(index)}")
    print(f"dimension: {index.dimension}")
    print(f"index file: {cfg.paths['index']}")
    return 0


def cmd_search(cfg: RunConfig, query: str) -> int:
    index = load_index(_require(cfg.paths["index"], "index file"))
    embedder = make_embedder(cfg.embedder)
    q = embed_query(query, embedder, _adapters(cfg, embedder))
    results = search_topk(index, q, cfg.rag.top_k) if len(index) else []
    for rank, r in enumerate(results, start=1):
        print(f"{rank}\t{r.chunk_id}\t{r.doc_id}\t{r.score:.6f}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    docs = _load_docs(cfg)
    examples = load_training_examples(_require(cfg.paths["training_pairs"], "training pairs"))
    embedder = make_embedder(cfg.embedder)
    view_cfg = _view_for_method(cfg, cfg.method)
    corpus: list[tuple[str, str]] = []
    for doc in docs:
        r_views, _ = build_views_for_document(doc, view_cfg, cfg.chunking)
        for rv in r_views:
            text = rv.rendered_text if rv.rendered_text is not None else render_view_text(rv)
            corpus.append((rv.chunk_id, text))
    params, trace = train_adapter(examples, corpus, embedder, cfg.train)
    params.save(cfg.paths["adapter"])
    save_loss_trace(trace, cfg.paths["loss_csv"])
    first = trace[0] if trace else float("nan")
    last = trace[-1] if trace else float("nan")
    print(f"steps: {len(trace)}")
    print(f"initial loss: {first:.6f}")
    print(f"final loss: {last:.6f}")
    print(f"adapter file: {cfg.paths['adapter']}")
    print(f"loss trace: {cfg.paths['loss_csv']}")
    return 0


def cmd_eval_retrieval(cfg: RunConfig, methods: tuple[str, ...] | None = None) -> int:
    docs = _load_docs(cfg)
    queries = load_queries(_require(cfg.paths["queries"], "queries file"))
    qrels = load_qrels(_require(cfg.paths["qrels"], "qrels file"))
    embedder = make_embedder(cfg.embedder)
    report = run_retrieval_eval(
        docs,
        queries,
        qrels,
        chunk_sizes=cfg.eval.chunk_sizes,
        methods=methods or cfg.eval.methods,
        view_cfg=cfg.view,
        embedder=embedder,
        adapters=_adapters(cfg, embedder),
        k_values=cfg.eval.k_values,
        neighbor_radius=cfg.chunking.neighbor_radius,
        embedder_label=cfg.embedder.kind,
    )
    report.save(cfg.paths["retrieval_report_json"], cfg.paths["retrieval_report_table"])
    sys.stdout.write(report.to_table())
    return 0


def cmd_eval_rag(cfg: RunConfig) -> int:
    docs = _load_docs(cfg)
    records = load_qa_records(_require(cfg.paths["qa"], "qa file"))
    embedder = make_embedder(cfg.embedder)
    adapters = _adapters(cfg, embedder)
    view_cfg = _view_for_method(cfg, cfg.method)
    index, generation_views = build_corpus_index(
        docs, view_cfg, cfg.chunking, embedder, adapters
    )
    report = run_qa_eval(
        records,
        index,
        generation_views,
        embedder,
        adapters,
        rag_cfg=cfg.rag,
        k_values=cfg.eval.qa_k_values,
        generator_label=cfg.rag.generator.kind,
        dataset_label=cfg.eval.dataset_label,
        method_label=cfg.method,
    )
    report.save(cfg.paths["qa_report_json"], cfg.paths["qa_report_table"])
    sys.stdout.write(report.to_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heterag",
        description="Heterogeneous RAG: decoupled retrieval/generation chunk views.",
    )
    parser.add_argument("--config", metavar="PATH", help="TOML config file")
    parser.add_argument("--seed", type=int, help="global random seed (default 0)")
    parser.add_argument("--chunk-size", type=int, help="tokens per chunk")
    parser.add_argument("--top-k", type=int, help="results per query")
    parser.add_argument(
        "--method", choices=("naive", "heterag"), help="chunk representation method"
    )
    parser.add_argument(
        "--fusion", choices=("text", "embedding"), help="retrieval view fusion mode"
    )
    parser.add_argument(
        "--no-context", action="store_true", help="drop multi-granular context from views"
    )
    parser.add_argument(
        "--no-metadata", action="store_true", help="drop metadata from views"
    )
    parser.add_argument(
        "--embedder", choices=("hash", "remote"), help="embedding backend"
    )
    parser.add_argument("--endpoint", metavar="URL", help="remote embedder endpoint")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="parse the corpus and write the chunk store")
    sub.add_parser("index", help="embed retrieval views and write the index file")
    p_search = sub.add_parser("search", help="query an existing index")
    p_search.add_argument("query", help="query text")
    sub.add_parser("train", help="train adapters on annotated pairs")
    sub.add_parser("eval-retrieval", help="nDCG sweep over chunk sizes and methods")
    sub.add_parser("eval-rag", help="end-to-end QA metrics via the full pipeline")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_flags(load_config(args.config), args)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "index":
            return cmd_index(cfg)
        if args.command == "search":
            return cmd_search(cfg, args.query)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval-retrieval":
            methods = (args.method,) if args.method is not None else None
            return cmd_eval_retrieval(cfg, methods)
        if args.command == "eval-rag":
            return cmd_eval_rag(cfg)
        raise CLIError(f"unknown command {args.command!r}")
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
