"""Generation-side prompt assembly and end-to-end pipeline orchestration.

Prompts are built from bare generation views only: whatever metadata and
context the retrieval side used to find a chunk, the generator sees just
the chunk text. The generator client is pluggable; a deterministic echo
stub makes the whole pipeline a pure function for tests and offline runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import requests

from .embed import AdapterParams, embed_query
from .index import SearchResult, VectorIndex, search_topk
from .views import GenerationView

__all__ = [
    "DEFAULT_SYSTEM_INSTRUCTION",
    "DEFAULT_PASSAGE_FORMAT",
    "DEFAULT_QUESTION_FORMAT",
    "PromptTemplate",
    "GeneratorSpec",
    "RAGConfig",
    "PipelineResult",
    "GenerationError",
    "GenerationTransportError",
    "GenerationContractError",
    "assemble_prompt",
    "generate_answer",
    "run_pipeline",
]

DEFAULT_SYSTEM_INSTRUCTION = (
    "Answer the question based on the given passages. "
    "Only give me the answer and do not output any other words."
)
DEFAULT_PASSAGE_FORMAT = "Passage {index}: {text}"
DEFAULT_QUESTION_FORMAT = "Question: {question}"


class GenerationError(RuntimeError):
    """Base class for generator client failures."""


class GenerationTransportError(GenerationError):
    """The generation service could not be reached or returned a non-200."""


class GenerationContractError(GenerationError):
    """The generation service replied with a malformed payload."""


@dataclass(frozen=True)
class PromptTemplate:
    system_instruction: str = DEFAULT_SYSTEM_INSTRUCTION
    passage_format: str = DEFAULT_PASSAGE_FORMAT
    question_format: str = DEFAULT_QUESTION_FORMAT

    def __post_init__(self) -> None:
        for fmt, slot in (
            (self.passage_format, "{index}"),
            (self.passage_format, "{text}"),
            (self.question_format, "{question}"),
        ):
            if fmt.count(slot) != 1:
                raise ValueError(f"format {fmt!r} must contain {slot} exactly once")


@dataclass(frozen=True)
class GeneratorSpec:
    """Which generator to call and its decoding settings.

    The echo stub is deterministic: with echo_fixed set it always returns
    that string; otherwise it returns the remainder of the first prompt
    line containing echo_marker (empty string when the marker is absent).
    """

    kind: str = "echo_stub"
    endpoint: str | None = None
    max_new_tokens: int = 64
    temperature: float = 0.0
    echo_fixed: str | None = None
    echo_marker: str = "ANSWER:"
    timeout: float = 60.0
    retries: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ("echo_stub", "remote"):
            raise ValueError("kind must be 'echo_stub' or 'remote'")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote generator requires an endpoint")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class RAGConfig:
    """Pipeline settings; reverse_passages flips prompt order to worst-first
    while provenance stays in rank order."""

    top_k: int = 5
    template: PromptTemplate = field(default_factory=PromptTemplate)
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    reverse_passages: bool = False

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class PipelineResult:
    answer: str
    provenance: tuple[SearchResult, ...]


def assemble_prompt(
    template: PromptTemplate, question: str, passages: Sequence[GenerationView]
) -> str:
    """System instruction, then 1-based passages, then the question.

    Passages carry only bare chunk text; no retrieval-side markers or
    metadata can leak into the prompt. Zero passages degrade to closed-book
    (instruction plus question).
    """
    parts = [template.system_instruction]
    for i, passage in enumerate(passages, start=1):
        parts.append(template.passage_format.format(index=i, text=passage.text))
    parts.append(template.question_format.format(question=question))
    return "\n".join(parts)


def _echo_answer(spec: GeneratorSpec, prompt: str) -> str:
    if spec.echo_fixed is not None:
        return spec.echo_fixed
    pos = prompt.find(spec.echo_marker)
    if pos < 0:
        return ""
    rest = prompt[pos + len(spec.echo_marker) :]
    return rest.split("\n", 1)[0].strip()


def _remote_answer(spec: GeneratorSpec, prompt: str) -> str:
    url = f"{(spec.endpoint or '').rstrip('/')}/generate"
    payload = {
        "prompt": prompt,
        "max_new_tokens": spec.max_new_tokens,
        "temperature": spec.temperature,
    }
    last_exc: Exception | None = None
    for _ in range(spec.retries + 1):
        try:
            resp = requests.post(url, json=payload, timeout=spec.timeout)
        except requests.RequestException as exc:
            last_exc = exc
            continue
        if resp.status_code >= 500:
            last_exc = GenerationTransportError(f"{url} returned {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise GenerationTransportError(f"{url} returned {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise GenerationContractError(f"{url} returned non-JSON body") from exc
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise GenerationContractError(f"bad generate payload: {body!r}")
        return body["text"]
    if isinstance(last_exc, GenerationTransportError):
        raise last_exc
    raise GenerationTransportError(
        f"could not reach {url} after {spec.retries + 1} attempts: {last_exc}"
    )


def generate_answer(spec: GeneratorSpec, prompt: str) -> str:
    if spec.kind == "echo_stub":
        return _echo_answer(spec, prompt)
    return _remote_answer(spec, prompt)


def run_pipeline(
    question: str,
    cfg: RAGConfig,
    index: VectorIndex,
    generation_views: Mapping[str, GenerationView],
    embedder,
    adapters: AdapterParams | None = None,
) -> PipelineResult:
    """Retrieve, assemble, generate.

    The provenance lists exactly the chunks whose text entered the prompt,
    in rank order, with the scores search_topk produced. An empty index
    degrades to closed-book generation with empty provenance.
    """
    if len(index) == 0:
        results: list[SearchResult] = []
    else:
        q = embed_query(question, embedder, adapters)
        results = search_topk(index, q, cfg.top_k)
    try:
        passages = [generation_views[r.chunk_id] for r in results]
    except KeyError as exc:
        raise ValueError(f"index entry {exc} has no generation view") from exc
    if cfg.reverse_passages:
        passages = passages[::-1]
    prompt = assemble_prompt(cfg.template, question, passages)
    answer = generate_answer(cfg.generator, prompt)
    return PipelineResult(answer=answer, provenance=tuple(results))
