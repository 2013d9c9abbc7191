"""Embedders, per-level adapters, fusion, and scaled similarity.

Two embedder backends share one interface: a deterministic local feature
hashing embedder (useful for tests and offline runs) and an HTTP client for
a remote embedding service. Small trainable linear adapters sit on top of
the frozen embedder, one per representation level, so retrieval can be tuned
without touching the backbone. Optional per-level instruction prefixes are
prepended to texts before embedding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import requests

from .corpus import tokenize
from .views import (
    RetrievalView,
    ViewConfig,
    render_context_body,
    render_metadata_body,
    render_view_text,
)

__all__ = [
    "LEVELS",
    "fnv1a_64",
    "hash_embed_text",
    "EmbedderSpec",
    "make_embedder",
    "embed_texts",
    "HashEmbedder",
    "RemoteEmbedder",
    "EmbedderError",
    "TransportError",
    "ContractError",
    "AdapterParams",
    "l2_normalize",
    "fuse_embeddings",
    "scaled_similarity",
    "embed_retrieval_views",
    "embed_query",
]

# Canonical representation levels; also the storage order in adapter files.
LEVELS = ("query", "chunk", "context", "metadata", "view")

ADAPTER_MAGIC = b"HRAGADP1"

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 16)
def _token_hash(token: str) -> int:
    return fnv1a_64(token.encode("utf-8"))


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    """Row-normalize to unit L2 norm; an all-zero row is an error.

    Adapters and fusion must never emit the zero vector (degenerate
    parameters or perfectly cancelling components); only the hash embedder
    has a defined zero fallback, handled at its own call site.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero vector")
    out = arr / norms[:, None]
    return out[0] if single else out


def hash_embed_text(text: str, dimension: int) -> np.ndarray:
    """Embed one text by signed feature hashing of its tokens.

    Each token hashes to a bucket (hash mod dimension) with sign +1 when the
    hash's top bit is set, else -1; contributions accumulate and the vector
    is L2-normalized. All-zero accumulation (e.g. empty text) yields e0.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    v = np.zeros(dimension, dtype=np.float64)
    for token in tokenize(text):
        h = _token_hash(token)
        v[h % dimension] += 1.0 if (h >> 63) & 1 else -1.0
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        v[0] = 1.0
        return v
    return v / norm


class EmbedderError(RuntimeError):
    """Base class for embedding backend failures."""


class TransportError(EmbedderError):
    """The embedding service could not be reached or returned a non-200."""


class ContractError(EmbedderError):
    """The embedding service replied with a malformed or invalid payload."""


@dataclass(frozen=True)
class EmbedderSpec:
    """Which embedder to use and how texts are conditioned before embedding."""

    kind: str = "hash"
    dimension: int = 384
    max_tokens: int = 512
    endpoint: str | None = None
    instruction_prefixes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("hash", "remote"):
            raise ValueError("kind must be 'hash' or 'remote'")
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote embedder requires an endpoint")
        for level in self.instruction_prefixes:
            if level not in LEVELS:
                raise ValueError(f"unknown level {level!r} in instruction_prefixes")


def _apply_prefix(prefixes: Mapping[str, str], level: str, texts: Sequence[str]) -> list[str]:
    prefix = prefixes.get(level, "")
    if not prefix:
        return list(texts)
    return [prefix + t for t in texts]


class HashEmbedder:
    """Deterministic local embedder built on token feature hashing.

    Stateless apart from its dimension: the same text always maps to the
    same unit vector, with no model weights and no network. Token order
    does not matter (bag of tokens).
    """

    def __init__(
        self,
        dimension: int = 384,
        instruction_prefixes: Mapping[str, str] | None = None,
    ):
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self._dimension = dimension
        self._prefixes = dict(instruction_prefixes or {})

    @property
    def dimension(self) -> int:
        return self._dimension

    def embed(self, texts: Sequence[str], level: str = "view") -> np.ndarray:
        if level not in LEVELS:
            raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
        texts = _apply_prefix(self._prefixes, level, texts)
        if not texts:
            return np.zeros((0, self._dimension), dtype=np.float64)
        return np.stack([hash_embed_text(t, self._dimension) for t in texts])


class RemoteEmbedder:
    """Client for an HTTP embedding service.

    Wire contract: POST {endpoint}/embed with {"level": str, "texts": [str]}
    returns {"dimension": int, "vectors": [[float]]} where every vector is
    unit-norm at the declared dimension; GET {endpoint}/health returns
    {"status": "ok", "dimension": int}. Any non-200 status or unreachable
    host raises TransportError after the configured retries; a malformed
    payload raises ContractError.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 2,
        instruction_prefixes: Mapping[str, str] | None = None,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self._prefixes = dict(instruction_prefixes or {})
        self._session = session or requests.Session()
        self._dimension: int | None = None

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = f"{self.endpoint}{path}"
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._session.request(method, url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = TransportError(f"{url} returned {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"{url} returned {resp.status_code}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise ContractError(f"{url} returned non-JSON body") from exc
            if not isinstance(body, dict):
                raise ContractError(f"{url} returned non-object JSON")
            return body
        if isinstance(last_exc, TransportError):
            raise last_exc
        raise TransportError(
            f"could not reach {url} after {self.retries + 1} attempts: {last_exc}"
        )

    def health(self) -> dict:
        body = self._request("GET", "/health")
        if body.get("status") != "ok" or not isinstance(body.get("dimension"), int):
            raise ContractError(f"bad health payload: {body!r}")
        self._dimension = body["dimension"]
        return body

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            self.health()
        assert self._dimension is not None
        return self._dimension

    def embed(self, texts: Sequence[str], level: str = "view") -> np.ndarray:
        if level not in LEVELS:
            raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
        texts = _apply_prefix(self._prefixes, level, texts)
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float64)
        body = self._request("POST", "/embed", {"level": level, "texts": list(texts)})
        dim = body.get("dimension")
        vectors = body.get("vectors")
        if not isinstance(dim, int) or not isinstance(vectors, list):
            raise ContractError(f"bad embed payload keys: {sorted(body)}")
        if len(vectors) != len(texts):
            raise ContractError(f"expected {len(texts)} vectors, got {len(vectors)}")
        try:
            arr = np.asarray(vectors, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ContractError("vectors are not numeric") from exc
        if arr.shape != (len(texts), dim):
            raise ContractError(f"vector shape {arr.shape} != ({len(texts)}, {dim})")
        if not np.all(np.isfinite(arr)):
            raise ContractError("vectors contain non-finite values")
        if self._dimension is None:
            self._dimension = dim
        elif dim != self._dimension:
            raise ContractError(f"dimension changed from {self._dimension} to {dim}")
        norms = np.linalg.norm(arr, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-3):
            raise ContractError("service returned non-unit vectors")
        # Tighten to exact unit norm so all downstream math sees norm 1.
        return arr / norms[:, None]


def make_embedder(spec: EmbedderSpec):
    """Instantiate the embedder backend named by a spec."""
    if spec.kind == "hash":
        return HashEmbedder(spec.dimension, spec.instruction_prefixes)
    return RemoteEmbedder(spec.endpoint or "", instruction_prefixes=spec.instruction_prefixes)


def embed_texts(spec: EmbedderSpec, level: str, texts: Sequence[str]) -> np.ndarray:
    """One-shot embedding of texts at a level under a spec."""
    return make_embedder(spec).embed(texts, level=level)


@dataclass
class AdapterParams:
    """One trainable linear map per level plus the similarity temperature.

    Applying a level maps v to normalize(A @ v + b). Initialization is
    identity/zero, a no-op on unit vectors; training nudges A and b away
    from identity.
    """

    dimension: int
    params: dict[str, tuple[np.ndarray, np.ndarray]]
    temperature: float = 0.05

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")

    @classmethod
    def identity(cls, dimension: int, temperature: float = 0.05) -> "AdapterParams":
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        params = {
            level: (np.eye(dimension, dtype=np.float64), np.zeros(dimension, dtype=np.float64))
            for level in LEVELS
        }
        return cls(dimension=dimension, params=params, temperature=temperature)

    def copy(self) -> "AdapterParams":
        return AdapterParams(
            dimension=self.dimension,
            params={lvl: (A.copy(), b.copy()) for lvl, (A, b) in self.params.items()},
            temperature=self.temperature,
        )

    def apply(self, level: str, vectors: np.ndarray) -> np.ndarray:
        if level not in self.params:
            raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
        A, b = self.params[level]
        arr = np.asarray(vectors, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.shape[1] != self.dimension:
            raise ValueError(f"vectors have dim {arr.shape[1]}, adapter has {self.dimension}")
        out = l2_normalize(arr @ A.T + b)
        return out[0] if single else out

    def save(self, path: str) -> None:
        """Write all five adapters as little-endian float32, fixed level order.

        The temperature is configuration, not a learned weight, so it is not
        stored; pass it again when loading.
        """
        with open(path, "wb") as fh:
            fh.write(ADAPTER_MAGIC)
            fh.write(struct.pack("<I", self.dimension))
            for level in LEVELS:
                A, b = self.params[level]
                fh.write(A.astype("<f4").tobytes(order="C"))
                fh.write(b.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str, temperature: float = 0.05) -> "AdapterParams":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[: len(ADAPTER_MAGIC)] != ADAPTER_MAGIC:
            raise ValueError(f"{path}: bad magic, not an adapter file")
        offset = len(ADAPTER_MAGIC)
        (dim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        expected = offset + len(LEVELS) * (dim * dim + dim) * 4
        if len(data) != expected:
            raise ValueError(f"{path}: file size {len(data)} != expected {expected}")
        params = {}
        for level in LEVELS:
            A = np.frombuffer(data, dtype="<f4", count=dim * dim, offset=offset)
            offset += dim * dim * 4
            b = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
            offset += dim * 4
            params[level] = (
                A.astype(np.float64).reshape(dim, dim),
                b.astype(np.float64),
            )
        return cls(dimension=dim, params=params, temperature=temperature)


def fuse_embeddings(
    weights: Sequence[float],
    chunk_v: np.ndarray,
    ctx_v: np.ndarray | None = None,
    meta_v: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted sum of chunk, context, and metadata vectors, renormalized.

    Absent components contribute zero. A sum that cancels exactly to zero is
    an error (the weights or adapters are degenerate).
    """
    w_c, w_x, w_m = weights
    if w_c <= 0:
        raise ValueError("chunk weight must be > 0")
    if w_x < 0 or w_m < 0:
        raise ValueError("weights must be non-negative")
    acc = w_c * np.asarray(chunk_v, dtype=np.float64)
    if ctx_v is not None:
        acc = acc + w_x * np.asarray(ctx_v, dtype=np.float64)
    if meta_v is not None:
        acc = acc + w_m * np.asarray(meta_v, dtype=np.float64)
    return l2_normalize(acc)


def scaled_similarity(q: np.ndarray, e: np.ndarray, tau: float) -> float:
    """Cosine similarity divided by the temperature."""
    if tau <= 0.0:
        raise ValueError("tau must be > 0")
    q = np.asarray(q, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    qn = float(np.linalg.norm(q))
    en = float(np.linalg.norm(e))
    if qn == 0.0 or en == 0.0:
        raise ValueError("similarity of a zero vector is undefined")
    return float(np.dot(q, e) / (qn * en)) / tau


def embed_retrieval_views(
    views: Sequence[RetrievalView],
    cfg: ViewConfig,
    embedder,
    adapters: AdapterParams | None = None,
) -> np.ndarray:
    """Embed retrieval views under the configured fusion mode.

    Text mode embeds the rendered composite at the view level. Embedding
    mode embeds chunk, context, and metadata separately, passes each through
    its own adapter, and takes the renormalized weighted sum. Both modes
    finish with the view adapter so the two paths are tuned at the same
    place.
    """
    if adapters is None:
        adapters = AdapterParams.identity(embedder.dimension)
    if not views:
        return np.zeros((0, embedder.dimension), dtype=np.float64)

    if cfg.fusion_mode == "text":
        texts = [
            v.rendered_text if v.rendered_text is not None else render_view_text(v)
            for v in views
        ]
        return adapters.apply("view", embedder.embed(texts, level="view"))

    w_chunk, w_ctx, w_meta = cfg.fusion_weights
    fused = w_chunk * adapters.apply(
        "chunk", embedder.embed([v.chunk_text for v in views], level="chunk")
    )
    for level, weight, bodies in (
        ("context", w_ctx, [render_context_body(v.context) if v.context else "" for v in views]),
        (
            "metadata",
            w_meta,
            [render_metadata_body(v.metadata) if v.metadata else "" for v in views],
        ),
    ):
        if weight == 0.0:
            continue
        present = [i for i, body in enumerate(bodies) if body]
        if not present:
            continue
        vecs = adapters.apply(level, embedder.embed([bodies[i] for i in present], level=level))
        fused[present] += weight * vecs
    return adapters.apply("view", l2_normalize(fused))


def embed_query(text: str, embedder, adapters: AdapterParams | None = None) -> np.ndarray:
    """Embed one query at the query level, through the query adapter."""
    if adapters is None:
        adapters = AdapterParams.identity(embedder.dimension)
    return adapters.apply("query", embedder.embed([text], level="query"))[0]
