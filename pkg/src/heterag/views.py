"""Decoupled chunk representations for retrieval and generation.

Each chunk gets two views: a retrieval view that enriches the chunk text
with multi-granular context (document lead, section lead, neighbor chunks)
and document metadata (title, section path, keywords, abstract), and a
generation view that is the bare chunk text and nothing else. Retrieval
views can be fused as one rendered string (text mode) or as separately
embedded components (embedding mode).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .corpus import (
    Chunk,
    ChunkingConfig,
    Document,
    Metadata,
    chunk_document,
    detokenize,
    document_tokens,
    extract_metadata,
    tokenize,
)

__all__ = [
    "Metadata",
    "ContextBundle",
    "ViewConfig",
    "RetrievalView",
    "GenerationView",
    "build_context",
    "build_retrieval_view",
    "build_generation_view",
    "build_views_for_document",
    "truncate_to_budget",
    "render_metadata_body",
    "render_context_body",
    "render_view_text",
]

META_MARKER = "[META]"
CTX_MARKER = "[CTX]"
CHUNK_MARKER = "[CHUNK]"

FUSION_MODES = ("text", "embedding")


@dataclass(frozen=True)
class ContextBundle:
    """Multi-granular context for one chunk.

    doc_lead and section_lead are leading-token excerpts of the document and
    the chunk's section; neighbors are verbatim texts of adjacent chunks,
    ordered by ascending position (farthest-first before, nearest-first
    after).
    """

    doc_lead: str = ""
    section_lead: str = ""
    neighbors_before: tuple[str, ...] = ()
    neighbors_after: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.doc_lead or self.section_lead or self.neighbors_before or self.neighbors_after
        )


@dataclass(frozen=True)
class ViewConfig:
    """Controls what goes into retrieval views and how it is fused."""

    use_context: bool = True
    use_metadata: bool = True
    fusion_mode: str = "text"
    token_budget: int = 512
    doc_lead_tokens: int = 64
    section_lead_tokens: int = 32
    fusion_weights: tuple[float, float, float] = (1.0, 0.5, 0.5)

    def __post_init__(self) -> None:
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.token_budget < 1:
            raise ValueError("token_budget must be >= 1")
        if self.doc_lead_tokens < 0 or self.section_lead_tokens < 0:
            raise ValueError("lead token counts must be >= 0")
        w_chunk, w_ctx, w_meta = self.fusion_weights
        if w_chunk <= 0:
            raise ValueError("chunk fusion weight must be > 0")
        if w_ctx < 0 or w_meta < 0:
            raise ValueError("fusion weights must be non-negative")


@dataclass(frozen=True)
class RetrievalView:
    """The enriched representation of a chunk used only for embedding/search."""

    chunk_id: str
    chunk_text: str
    context: ContextBundle | None = None
    metadata: Metadata | None = None
    rendered_text: str | None = None


@dataclass(frozen=True)
class GenerationView:
    """The bare chunk text placed into generator prompts: no context, no metadata."""

    chunk_id: str
    text: str


def build_context(
    doc: Document,
    chunk: Chunk,
    cfg: ViewConfig,
    chunking: ChunkingConfig,
    doc_chunks: list[Chunk] | None = None,
) -> ContextBundle:
    """Assemble document lead, section lead, and neighbor texts for a chunk.

    doc_chunks, when given, must be chunk_document(doc, chunking); passing it
    avoids re-chunking when building views for a whole document.
    """
    if doc_chunks is None:
        doc_chunks = chunk_document(doc, chunking)
    i = chunk.index_in_doc
    if not (0 <= i < len(doc_chunks)) or doc_chunks[i].chunk_id != chunk.chunk_id:
        raise ValueError(
            f"chunk {chunk.chunk_id!r} does not belong to document {doc.doc_id!r} "
            "under this chunking config"
        )
    radius = chunking.neighbor_radius
    before = tuple(c.text for c in doc_chunks[max(0, i - radius) : i])
    after = tuple(c.text for c in doc_chunks[i + 1 : i + 1 + radius])
    section = doc.sections[chunk.section_index]
    return ContextBundle(
        doc_lead=detokenize(document_tokens(doc)[: cfg.doc_lead_tokens]),
        section_lead=detokenize(tokenize(section.text)[: cfg.section_lead_tokens]),
        neighbors_before=before,
        neighbors_after=after,
    )


def render_metadata_body(meta: Metadata) -> str:
    """Render metadata fields in fixed order, skipping empty ones."""
    parts: list[str] = []
    if meta.title:
        parts.append(f"title: {meta.title}")
    if meta.section_path:
        parts.append(f"section: {' > '.join(meta.section_path)}")
    if meta.keywords:
        parts.append(f"keywords: {', '.join(meta.keywords)}")
    if meta.abstract:
        parts.append(f"abstract: {meta.abstract}")
    for key in sorted(meta.extra):
        parts.append(f"{key}: {meta.extra[key]}")
    return " | ".join(parts)


def render_context_body(ctx: ContextBundle) -> str:
    """Render non-empty context components joined by the fixed separator."""
    parts: list[str] = []
    if ctx.doc_lead:
        parts.append(ctx.doc_lead)
    if ctx.section_lead:
        parts.append(ctx.section_lead)
    if ctx.neighbors_before:
        parts.append(" ".join(ctx.neighbors_before))
    if ctx.neighbors_after:
        parts.append(" ".join(ctx.neighbors_after))
    return " || ".join(parts)


def render_view_text(view: RetrievalView) -> str:
    """Compose the newline-separated retrieval text from a view's components.

    Segment order is metadata, context, chunk; a segment is omitted when its
    source is absent or renders empty. When no metadata or context segment
    survives, the result is the bare chunk text with no marker, so a view
    with everything disabled embeds identically to the chunk itself.
    """
    lines: list[str] = []
    if view.metadata is not None:
        body = render_metadata_body(view.metadata)
        if body:
            lines.append(f"{META_MARKER} {body}")
    if view.context is not None:
        body = render_context_body(view.context)
        if body:
            lines.append(f"{CTX_MARKER} {body}")
    if not lines:
        return view.chunk_text
    lines.append(f"{CHUNK_MARKER} {view.chunk_text}")
    return "\n".join(lines)


def _drop_steps(view: RetrievalView) -> list[RetrievalView]:
    """Successive reductions of a view, least important component first.

    Order: doc lead, section lead, neighbors from farthest to nearest (both
    sides per step), extra metadata, abstract, keywords, then titles. The
    chunk text itself is never dropped here.
    """
    states: list[RetrievalView] = []
    current = view
    ctx = current.context
    if ctx is not None:
        if ctx.doc_lead:
            ctx = dataclasses.replace(ctx, doc_lead="")
            current = dataclasses.replace(current, context=ctx)
            states.append(current)
        if ctx.section_lead:
            ctx = dataclasses.replace(ctx, section_lead="")
            current = dataclasses.replace(current, context=ctx)
            states.append(current)
        while ctx.neighbors_before or ctx.neighbors_after:
            ctx = dataclasses.replace(
                ctx,
                neighbors_before=ctx.neighbors_before[1:],
                neighbors_after=ctx.neighbors_after[:-1],
            )
            current = dataclasses.replace(current, context=ctx)
            states.append(current)
    meta = current.metadata
    if meta is not None:
        if meta.extra:
            meta = dataclasses.replace(meta, extra={})
            current = dataclasses.replace(current, metadata=meta)
            states.append(current)
        if meta.abstract:
            meta = dataclasses.replace(meta, abstract=None)
            current = dataclasses.replace(current, metadata=meta)
            states.append(current)
        if meta.keywords:
            meta = dataclasses.replace(meta, keywords=())
            current = dataclasses.replace(current, metadata=meta)
            states.append(current)
        if meta.title or meta.section_path:
            meta = dataclasses.replace(meta, title="", section_path=())
            current = dataclasses.replace(current, metadata=meta)
            states.append(current)
    return states


def truncate_to_budget(view: RetrievalView, budget: int) -> RetrievalView:
    """Shrink a rendered view until it fits the token budget.

    Whole components are removed in priority order (see _drop_steps); the
    chunk text survives everything else and is only cut when it alone
    exceeds the budget.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rendered = render_view_text(view)
    if len(tokenize(rendered)) <= budget:
        return dataclasses.replace(view, rendered_text=rendered)
    steps = _drop_steps(view)
    for reduced in steps:
        rendered = render_view_text(reduced)
        if len(tokenize(rendered)) <= budget:
            return dataclasses.replace(reduced, rendered_text=rendered)
    # Everything droppable is gone; fall back to the bare chunk, cut to fit.
    bare = steps[-1] if steps else view
    chunk_tokens = tokenize(bare.chunk_text)
    if len(chunk_tokens) > budget:
        bare = dataclasses.replace(bare, chunk_text=detokenize(chunk_tokens[:budget]))
    return dataclasses.replace(bare, rendered_text=bare.chunk_text)


def build_retrieval_view(
    doc: Document,
    chunk: Chunk,
    cfg: ViewConfig,
    chunking: ChunkingConfig,
    doc_chunks: list[Chunk] | None = None,
) -> RetrievalView:
    """Build the retrieval-side representation of a chunk.

    Context and metadata are attached per cfg; in text fusion mode the view
    carries rendered_text produced by the fixed template and truncated to
    the token budget.
    """
    if cfg.token_budget < chunking.chunk_size:
        raise ValueError(
            f"token_budget {cfg.token_budget} must be >= chunk_size {chunking.chunk_size}"
        )
    context = build_context(doc, chunk, cfg, chunking, doc_chunks) if cfg.use_context else None
    metadata = extract_metadata(doc, chunk) if cfg.use_metadata else None
    view = RetrievalView(
        chunk_id=chunk.chunk_id,
        chunk_text=chunk.text,
        context=context,
        metadata=metadata,
    )
    if cfg.fusion_mode == "text":
        view = truncate_to_budget(view, cfg.token_budget)
    return view


def build_generation_view(chunk: Chunk) -> GenerationView:
    """The generation-side representation: the chunk text, verbatim."""
    return GenerationView(chunk_id=chunk.chunk_id, text=chunk.text)


def build_views_for_document(
    doc: Document,
    cfg: ViewConfig,
    chunking: ChunkingConfig,
) -> tuple[list[RetrievalView], list[GenerationView]]:
    """Chunk a document once and build both views for every chunk."""
    doc_chunks = chunk_document(doc, chunking)
    retrieval = [build_retrieval_view(doc, c, cfg, chunking, doc_chunks) for c in doc_chunks]
    generation = [build_generation_view(c) for c in doc_chunks]
    return retrieval, generation
