"""Contrastive adapter training: InfoNCE over scaled cosine similarity.

The embedder stays frozen; what trains are the per-level linear adapters.
Positives come from annotated (query, chunk) pairs, negatives are the other
positives in the batch plus K chunks sampled from the rest of the corpus.
Gradients are exact and analytic (chain rule through normalize(A v + b) and
the cosine), optimized with plain SGD, and the whole trajectory is a pure
function of (seed, config, data).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embed import AdapterParams

__all__ = [
    "TrainingExample",
    "TrainConfig",
    "Batch",
    "TrainingData",
    "load_training_examples",
    "prepare_training_data",
    "sample_batch",
    "infonce_loss",
    "grad_infonce",
    "train_adapter",
    "save_loss_trace",
    "load_loss_trace",
]

# Adapter levels touched by this training path: queries go through "query",
# corpus view embeddings (positives and negatives) through "view".
QUERY_LEVEL = "query"
CORPUS_LEVEL = "view"


@dataclass(frozen=True)
class TrainingExample:
    query: str
    positive_chunk_id: str


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    random_negatives: int = 8
    temperature: float = 0.05
    learning_rate: float = 1e-2
    steps: int = 100
    seed: int = 0
    freeze_query: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.random_negatives < 0:
            raise ValueError("random_negatives must be >= 0")
        if self.batch_size == 1 and self.random_negatives == 0:
            raise ValueError("batch_size 1 with no random negatives has no contrast")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass(frozen=True)
class Batch:
    """Query, positive, and random-negative vectors for one step.

    Rows of queries and positives align (positive i belongs to query i).
    The container does not know whether adapters were applied; the trainer
    samples raw embeddings, feeds them to the gradient, and applies adapters
    only to report the loss.
    """

    queries: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self) -> None:
        n, d = self.queries.shape
        if self.positives.shape != (n, d):
            raise ValueError("positives must align with queries")
        if self.negatives.ndim != 2 or self.negatives.shape[1] != d:
            raise ValueError("negatives must share the embedding dimension")
        for name, arr in (
            ("queries", self.queries),
            ("positives", self.positives),
            ("negatives", self.negatives),
        ):
            if arr.shape[0] and not np.allclose(np.linalg.norm(arr, axis=1), 1.0, atol=1e-6):
                raise ValueError(f"{name} must be unit-norm")


@dataclass(frozen=True)
class TrainingData:
    """Precomputed raw embeddings for the training loop.

    query_vectors[i] embeds examples[i].query; positive_indices[i] is the
    row of that example's positive chunk in chunk_vectors.
    """

    query_vectors: np.ndarray
    positive_indices: np.ndarray
    chunk_ids: tuple[str, ...]
    chunk_vectors: np.ndarray


def load_training_examples(path: str) -> list[TrainingExample]:
    """Read JSON Lines of {"query": ..., "positive_chunk_id": ...}."""
    examples: list[TrainingExample] = []
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
            query = obj.get("query")
            positive = obj.get("positive_chunk_id")
            if not isinstance(query, str) or not query:
                raise ValueError(f"{path}:{lineno}: missing or empty 'query'")
            if not isinstance(positive, str) or not positive:
                raise ValueError(f"{path}:{lineno}: missing or empty 'positive_chunk_id'")
            examples.append(TrainingExample(query=query, positive_chunk_id=positive))
    return examples


def prepare_training_data(
    examples: Sequence[TrainingExample],
    corpus: Sequence[tuple[str, str]],
    embedder,
) -> TrainingData:
    """Embed queries and corpus texts once, before any training step.

    corpus is (chunk_id, retrieval_text) pairs; every example's positive
    must be among the chunk_ids.
    """
    chunk_ids = tuple(cid for cid, _ in corpus)
    if len(set(chunk_ids)) != len(chunk_ids):
        raise ValueError("duplicate chunk_ids in corpus")
    row_of = {cid: i for i, cid in enumerate(chunk_ids)}
    missing = sorted({e.positive_chunk_id for e in examples if e.positive_chunk_id not in row_of})
    if missing:
        raise ValueError(f"positive chunks not in corpus: {missing[:5]}")
    query_vectors = embedder.embed([e.query for e in examples], level=QUERY_LEVEL)
    chunk_vectors = embedder.embed([text for _, text in corpus], level=CORPUS_LEVEL)
    positive_indices = np.array([row_of[e.positive_chunk_id] for e in examples], dtype=np.int64)
    return TrainingData(
        query_vectors=query_vectors,
        positive_indices=positive_indices,
        chunk_ids=chunk_ids,
        chunk_vectors=chunk_vectors,
    )


def sample_batch(data: TrainingData, cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    """Draw N examples without replacement plus K negatives from the rest.

    Negatives are uniform over corpus chunks that are not positives of this
    batch, so a negative can never duplicate an in-batch positive.
    """
    n_examples = data.query_vectors.shape[0]
    if n_examples < cfg.batch_size:
        raise ValueError(
            f"need at least {cfg.batch_size} examples, have {n_examples}"
        )
    if len(data.chunk_ids) < cfg.batch_size + cfg.random_negatives:
        raise ValueError(
            f"corpus has {len(data.chunk_ids)} chunks; need at least "
            f"{cfg.batch_size + cfg.random_negatives}"
        )
    picked = rng.choice(n_examples, size=cfg.batch_size, replace=False)
    pos_rows = data.positive_indices[picked]
    if cfg.random_negatives > 0:
        excluded = set(pos_rows.tolist())
        pool = np.array(
            [i for i in range(len(data.chunk_ids)) if i not in excluded], dtype=np.int64
        )
        neg_rows = pool[rng.choice(len(pool), size=cfg.random_negatives, replace=False)]
        negatives = data.chunk_vectors[neg_rows]
    else:
        negatives = np.zeros((0, data.chunk_vectors.shape[1]), dtype=np.float64)
    return Batch(
        queries=data.query_vectors[picked],
        positives=data.chunk_vectors[pos_rows],
        negatives=negatives,
    )


def _logits(queries: np.ndarray, positives: np.ndarray, negatives: np.ndarray,
            tau: float) -> np.ndarray:
    """Scaled-similarity matrix: row i holds s(q_i, e_j) then s(q_i, f_k)."""
    s_pos = queries @ positives.T
    if negatives.shape[0]:
        s = np.concatenate([s_pos, queries @ negatives.T], axis=1)
    else:
        s = s_pos
    return s / tau


def infonce_loss(batch: Batch, tau: float) -> float:
    """Mean negative log-likelihood of each query's own positive.

    The denominator runs over all in-batch positives plus the random
    negatives. Computed with max-subtraction so large scaled similarities
    cannot overflow.
    """
    if tau <= 0.0:
        raise ValueError("tau must be > 0")
    s = _logits(batch.queries, batch.positives, batch.negatives, tau)
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("non-finite similarity in batch")
    m = s.max(axis=1, keepdims=True)
    log_z = m[:, 0] + np.log(np.exp(s - m).sum(axis=1))
    diag = np.diagonal(s[:, : batch.queries.shape[0]])
    return float(np.mean(log_z - diag))


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    m = s.max(axis=1, keepdims=True)
    e = np.exp(s - m)
    return e / e.sum(axis=1, keepdims=True)


def _through_normalize(grad_out: np.ndarray, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Backprop grad through y = z/|z|: dz = (g - (g.y) y)/|z|, rowwise."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return (grad_out - (grad_out * out).sum(axis=1, keepdims=True) * out) / norms


def grad_infonce(
    batch: Batch, params: AdapterParams, cfg: TrainConfig
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of the loss w.r.t. every adapter, at the given params.

    The batch must hold raw (pre-adapter) embeddings; this function pushes
    them through the query adapter (queries) and the view adapter
    (positives and negatives), then differentiates the loss back to each
    (A, b). Unused levels get zero gradients so the structure always
    mirrors AdapterParams.
    """
    tau = cfg.temperature
    n, d = batch.queries.shape
    k = batch.negatives.shape[0]
    A_q, b_q = params.params[QUERY_LEVEL]
    A_v, b_v = params.params[CORPUS_LEVEL]

    z_q = batch.queries @ A_q.T + b_q
    z_p = batch.positives @ A_v.T + b_v
    norms_q = np.linalg.norm(z_q, axis=1)
    norms_p = np.linalg.norm(z_p, axis=1)
    if np.any(norms_q == 0.0) or np.any(norms_p == 0.0):
        raise FloatingPointError("adapter produced a zero vector")
    q = z_q / norms_q[:, None]
    e = z_p / norms_p[:, None]
    if k:
        z_n = batch.negatives @ A_v.T + b_v
        norms_n = np.linalg.norm(z_n, axis=1)
        if np.any(norms_n == 0.0):
            raise FloatingPointError("adapter produced a zero vector")
        f = z_n / norms_n[:, None]
        s = np.concatenate([q @ e.T, q @ f.T], axis=1) / tau
    else:
        f = np.zeros((0, d))
        s = (q @ e.T) / tau
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("non-finite similarity in batch")

    sigma = _softmax_rows(s)
    coef = sigma / (n * tau)
    coef[:, :n] -= np.eye(n) / (n * tau)

    d_q = coef[:, :n] @ e + (coef[:, n:] @ f if k else 0.0)
    d_e = coef[:, :n].T @ q
    d_z_q = _through_normalize(d_q, z_q, q)
    d_z_p = _through_normalize(d_e, z_p, e)

    grad_A_q = d_z_q.T @ batch.queries
    grad_b_q = d_z_q.sum(axis=0)
    grad_A_v = d_z_p.T @ batch.positives
    grad_b_v = d_z_p.sum(axis=0)
    if k:
        d_f = coef[:, n:].T @ q
        d_z_n = _through_normalize(d_f, z_n, f)
        grad_A_v = grad_A_v + d_z_n.T @ batch.negatives
        grad_b_v = grad_b_v + d_z_n.sum(axis=0)

    grads = {
        level: (np.zeros((d, d)), np.zeros(d)) for level in params.params
    }
    grads[QUERY_LEVEL] = (grad_A_q, grad_b_q)
    grads[CORPUS_LEVEL] = (grad_A_v, grad_b_v)
    return grads


def train_adapter(
    examples: Sequence[TrainingExample],
    corpus: Sequence[tuple[str, str]],
    embedder,
    cfg: TrainConfig,
) -> tuple[AdapterParams, list[float]]:
    """Run plain SGD for cfg.steps steps; return params and the loss trace.

    Each trace entry is the loss at the params in force when the step
    started (before that step's update). Step t draws its batch from a
    generator seeded with (seed, t), so any step is reproducible in
    isolation.
    """
    data = prepare_training_data(examples, corpus, embedder)
    params = AdapterParams.identity(embedder.dimension, temperature=cfg.temperature)
    trace: list[float] = []
    for step in range(cfg.steps):
        rng = np.random.default_rng([cfg.seed, step])
        batch = sample_batch(data, cfg, rng)
        applied = Batch(
            queries=params.apply(QUERY_LEVEL, batch.queries),
            positives=params.apply(CORPUS_LEVEL, batch.positives),
            negatives=(
                params.apply(CORPUS_LEVEL, batch.negatives)
                if batch.negatives.shape[0]
                else batch.negatives
            ),
        )
        loss = infonce_loss(applied, cfg.temperature)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {step}")
        trace.append(loss)
        grads = grad_infonce(batch, params, cfg)
        for level, (g_A, g_b) in grads.items():
            if cfg.freeze_query and level == QUERY_LEVEL:
                continue
            A, b = params.params[level]
            params.params[level] = (A - cfg.learning_rate * g_A, b - cfg.learning_rate * g_b)
    return params, trace


def save_loss_trace(trace: Sequence[float], path: str) -> None:
    """Write the per-step losses as CSV with a step,loss header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(trace):
            fh.write(f"{step},{loss!r}\n")


def load_loss_trace(path: str) -> list[float]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "step,loss":
        raise ValueError(f"{path}: missing step,loss header")
    trace: list[float] = []
    for i, line in enumerate(lines[1:]):
        step_str, loss_str = line.split(",", 1)
        if int(step_str) != i:
            raise ValueError(f"{path}: non-contiguous steps at line {i + 2}")
        trace.append(float(loss_str))
    return trace
