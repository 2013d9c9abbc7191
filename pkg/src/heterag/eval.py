"""Retrieval and QA evaluation: metrics, file loaders, and sweep drivers.

Retrieval is scored at the document level (chunks map to their documents,
deduplicated keeping the best rank) with nDCG. QA is scored with exact
match, token F1, and answer recall over normalized strings. Sweeps iterate
chunk sizes and methods, producing deterministic reports serializable as
sorted-key JSON and aligned text tables.
"""

from __future__ import annotations

import dataclasses
import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import ChunkingConfig, Document
from .embed import AdapterParams, HashEmbedder, embed_query, embed_retrieval_views
from .index import VectorIndex, build_index, dedup_by_document, search_topk
from .rag import GenerationError, RAGConfig, run_pipeline
from .views import GenerationView, ViewConfig, build_views_for_document

__all__ = [
    "Query",
    "QARecord",
    "Qrels",
    "load_queries",
    "load_qrels",
    "load_qa_records",
    "ndcg_at_k",
    "normalize_answer",
    "exact_match",
    "token_f1",
    "answer_recall",
    "RetrievalReport",
    "QAReport",
    "run_retrieval_eval",
    "run_qa_eval",
]

# query_id -> (doc_id -> relevance grade); absent pairs mean grade 0.
Qrels = dict[str, dict[str, int]]


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str


@dataclass(frozen=True)
class QARecord:
    query_id: str
    question: str
    golden_answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.golden_answers:
            raise ValueError("golden_answers must be non-empty")


def _jsonl_objects(path: str):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON") from exc
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def load_queries(path: str) -> list[Query]:
    """Read JSON Lines of {"query_id": ..., "text": ...}."""
    queries: list[Query] = []
    for lineno, obj in _jsonl_objects(path):
        qid = obj.get("query_id")
        text = obj.get("text")
        if not isinstance(qid, str) or not qid:
            raise ValueError(f"{path}:{lineno}: missing or empty 'query_id'")
        if not isinstance(text, str):
            raise ValueError(f"{path}:{lineno}: missing 'text'")
        queries.append(Query(query_id=qid, text=text))
    return queries


def load_qrels(path: str) -> Qrels:
    """Read TSV lines query_id<TAB>doc_id<TAB>grade with integer grades >= 0."""
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            qid, did, grade_str = parts
            try:
                grade = int(grade_str)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: grade {grade_str!r} is not an integer") from exc
            if grade < 0:
                raise ValueError(f"{path}:{lineno}: grade must be >= 0")
            qrels.setdefault(qid, {})[did] = grade
    return qrels


def load_qa_records(path: str) -> list[QARecord]:
    """Read JSON Lines of {"query_id", "question", "golden_answers": [...]}."""
    records: list[QARecord] = []
    for lineno, obj in _jsonl_objects(path):
        qid = obj.get("query_id")
        question = obj.get("question")
        golds = obj.get("golden_answers")
        if not isinstance(qid, str) or not qid:
            raise ValueError(f"{path}:{lineno}: missing or empty 'query_id'")
        if not isinstance(question, str):
            raise ValueError(f"{path}:{lineno}: missing 'question'")
        if (
            not isinstance(golds, list)
            or not golds
            or not all(isinstance(g, str) for g in golds)
        ):
            raise ValueError(f"{path}:{lineno}: 'golden_answers' must be a non-empty string list")
        records.append(QARecord(query_id=qid, question=question, golden_answers=tuple(golds)))
    return records


def ndcg_at_k(ranked_doc_ids: Sequence[str], rels: Mapping[str, int], k: int) -> float:
    """Normalized discounted cumulative gain with linear gain rel/log2(rank+1).

    The ideal ordering ranks all judged documents by grade descending,
    truncated at k. A query with no relevant documents scores 0 by
    convention (IDCG would be 0).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = 0.0
    for i, doc_id in enumerate(ranked_doc_ids[:k]):
        grade = rels.get(doc_id, 0)
        if grade:
            dcg += grade / math.log2(i + 2)
    ideal = sorted((g for g in rels.values() if g > 0), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLES = {"a", "an", "the"}


def normalize_answer(s: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    s = s.lower().translate(_PUNCT_TABLE)
    return " ".join(tok for tok in s.split() if tok not in _ARTICLES)


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals some normalized gold."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in golds))


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    """Best token-level F1 between the prediction and any gold.

    Tokens are whitespace splits of normalized strings; overlap is the
    multiset intersection. Two empty token lists count as a perfect match.
    """
    if not golds:
        raise ValueError("golds must be non-empty")
    pred_tokens = normalize_answer(prediction).split()
    best = 0.0
    for gold in golds:
        gold_tokens = normalize_answer(gold).split()
        if not pred_tokens and not gold_tokens:
            best = max(best, 1.0)
            continue
        shared = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
        if shared == 0:
            continue
        precision = shared / len(pred_tokens)
        recall = shared / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def answer_recall(prediction: str, golds: Sequence[str]) -> int:
    """1 iff some normalized gold appears as a substring of the prediction."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pred = normalize_answer(prediction)
    return int(any(normalize_answer(g) in pred for g in golds))


def _render_table(header: list[str], rows: list[list[str]], footer: list[str]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    lines.extend(footer)
    return "\n".join(lines) + "\n"


@dataclass
class RetrievalReport:
    """nDCG cells keyed by (embedder label, chunk size, method)."""

    rows: dict[tuple[str, int, str], dict[str, float]] = field(default_factory=dict)
    skipped_queries: int = 0

    @staticmethod
    def _key_str(key: tuple[str, int, str]) -> str:
        embedder, chunk_size, method = key
        return f"{embedder}/{chunk_size}/{method}"

    def to_json(self) -> str:
        payload = {
            "rows": {self._key_str(k): v for k, v in self.rows.items()},
            "skipped_queries": self.skipped_queries,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_table(self) -> str:
        metrics = sorted({m for cell in self.rows.values() for m in cell})
        header = ["embedder", "chunk_size", "method", *metrics]
        body = []
        for key in sorted(self.rows, key=self._key_str):
            emb, size, method = key
            cell = self.rows[key]
            body.append(
                [emb, str(size), method, *(f"{cell.get(m, 0.0):.4f}" for m in metrics)]
            )
        footer = [f"skipped queries: {self.skipped_queries}"]
        return _render_table(header, body, footer)

    def save(self, json_path: str, table_path: str | None = None) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        if table_path is not None:
            with open(table_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_table())


@dataclass
class QAReport:
    """EM/F1/Recall cells keyed by (generator label, dataset, method, top_k)."""

    rows: dict[tuple[str, str, str, int], dict[str, float]] = field(default_factory=dict)
    failures: dict[tuple[str, str, str, int], int] = field(default_factory=dict)

    @staticmethod
    def _key_str(key: tuple[str, str, str, int]) -> str:
        llm, dataset, method, top_k = key
        return f"{llm}/{dataset}/{method}/k={top_k}"

    def to_json(self) -> str:
        payload = {
            "rows": {self._key_str(k): v for k, v in self.rows.items()},
            "failures": {self._key_str(k): v for k, v in self.failures.items()},
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_table(self) -> str:
        metrics = sorted({m for cell in self.rows.values() for m in cell})
        header = ["llm", "dataset", "method", "top_k", *metrics, "failures"]
        body = []
        for key in sorted(self.rows, key=self._key_str):
            llm, dataset, method, top_k = key
            cell = self.rows[key]
            body.append(
                [
                    llm,
                    dataset,
                    method,
                    str(top_k),
                    *(f"{cell.get(m, 0.0):.4f}" for m in metrics),
                    str(self.failures.get(key, 0)),
                ]
            )
        return _render_table(header, body, [])

    def save(self, json_path: str, table_path: str | None = None) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        if table_path is not None:
            with open(table_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_table())


def naive_view_config(base: ViewConfig) -> ViewConfig:
    """The bare-chunk baseline: same budget, no context, no metadata."""
    return dataclasses.replace(
        base, use_context=False, use_metadata=False, fusion_mode="text"
    )


def build_corpus_index(
    docs: Sequence[Document],
    view_cfg: ViewConfig,
    chunking: ChunkingConfig,
    embedder,
    adapters: AdapterParams | None = None,
) -> tuple[VectorIndex, dict[str, GenerationView]]:
    """Chunk, build views, embed, and index a whole corpus.

    Returns the index plus the generation views keyed by chunk_id, which is
    everything the QA pipeline needs.
    """
    keys: list[tuple[str, str]] = []
    retrieval_views = []
    generation_views: dict[str, GenerationView] = {}
    for doc in docs:
        r_views, g_views = build_views_for_document(doc, view_cfg, chunking)
        for rv, gv in zip(r_views, g_views):
            keys.append((rv.chunk_id, doc.doc_id))
            retrieval_views.append(rv)
            generation_views[gv.chunk_id] = gv
    vectors = embed_retrieval_views(retrieval_views, view_cfg, embedder, adapters)
    index = build_index(keys, vectors, dimension=embedder.dimension)
    return index, generation_views


def run_retrieval_eval(
    docs: Sequence[Document],
    queries: Sequence[Query],
    qrels: Qrels,
    chunk_sizes: Sequence[int] = (64,),
    methods: Sequence[str] = ("naive", "heterag"),
    view_cfg: ViewConfig | None = None,
    embedder=None,
    adapters: AdapterParams | None = None,
    k_values: Sequence[int] = (1, 10),
    neighbor_radius: int = 1,
    embedder_label: str | None = None,
) -> RetrievalReport:
    """Sweep (chunk_size, method) cells and average nDCG@k over queries.

    Ranked lists are document-level: chunk hits deduplicate to their best-
    ranked document before scoring. Queries with no qrels row are skipped
    and counted once in the report. method "naive" indexes bare chunks;
    "heterag" uses view_cfg (context and metadata on by default).
    """
    if embedder is None:
        embedder = HashEmbedder()
    if view_cfg is None:
        view_cfg = ViewConfig()
    if embedder_label is None:
        embedder_label = type(embedder).__name__.replace("Embedder", "").lower() or "hash"
    for method in methods:
        if method not in ("naive", "heterag"):
            raise ValueError(f"unknown method {method!r}")

    evaluated = sorted((q for q in queries if q.query_id in qrels), key=lambda q: q.query_id)
    skipped = len(queries) - len(evaluated)
    query_vectors = {
        q.query_id: embed_query(q.text, embedder, adapters) for q in evaluated
    }

    report = RetrievalReport(skipped_queries=skipped)
    for chunk_size in chunk_sizes:
        chunking = ChunkingConfig(chunk_size=chunk_size, neighbor_radius=neighbor_radius)
        for method in methods:
            cfg = naive_view_config(view_cfg) if method == "naive" else view_cfg
            index, _ = build_corpus_index(docs, cfg, chunking, embedder, adapters)
            sums = {k: 0.0 for k in k_values}
            for query in evaluated:
                results = search_topk(index, query_vectors[query.query_id], max(len(index), 1))
                ranked = [r.doc_id for r in dedup_by_document(results)]
                rels = qrels[query.query_id]
                for k in k_values:
                    sums[k] += ndcg_at_k(ranked, rels, k)
            n = max(len(evaluated), 1)
            report.rows[(embedder_label, chunk_size, method)] = {
                f"ndcg@{k}": sums[k] / n for k in k_values
            }
    return report


def run_qa_eval(
    records: Sequence[QARecord],
    index: VectorIndex,
    generation_views: Mapping[str, GenerationView],
    embedder,
    adapters: AdapterParams | None = None,
    rag_cfg: RAGConfig | None = None,
    k_values: Sequence[int] = (5,),
    generator_label: str = "echo_stub",
    dataset_label: str = "qa",
    method_label: str = "heterag",
) -> QAReport:
    """Run the full pipeline per record and k, averaging EM/F1/Recall.

    A record whose generation fails is tallied as a failure for that cell
    and excluded from the means.
    """
    if rag_cfg is None:
        rag_cfg = RAGConfig()
    report = QAReport()
    ordered = sorted(records, key=lambda r: r.query_id)
    for k in k_values:
        cfg = dataclasses.replace(rag_cfg, top_k=k)
        key = (generator_label, dataset_label, method_label, k)
        sums = {"em": 0.0, "f1": 0.0, "recall": 0.0}
        successes = 0
        failures = 0
        for record in ordered:
            try:
                result = run_pipeline(
                    record.question, cfg, index, generation_views, embedder, adapters
                )
            except GenerationError:
                failures += 1
                continue
            sums["em"] += exact_match(result.answer, record.golden_answers)
            sums["f1"] += token_f1(result.answer, record.golden_answers)
            sums["recall"] += answer_recall(result.answer, record.golden_answers)
            successes += 1
        n = max(successes, 1)
        report.rows[key] = {m: sums[m] / n for m in ("em", "f1", "recall")}
        report.failures[key] = failures
    return report
