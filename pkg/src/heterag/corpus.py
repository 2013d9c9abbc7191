"""Corpus model: documents, sections, fixed-size token chunks, and metadata.

Documents are parsed from JSON Lines files, tokenized with a deterministic
lowercasing tokenizer, and split into fixed-size token windows that never
cross section boundaries. Chunk text is the canonical detokenization of its
tokens (tokens joined by single spaces), so chunking is reproducible without
any model dependency.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

__all__ = [
    "Document",
    "Section",
    "Chunk",
    "ChunkingConfig",
    "Metadata",
    "CorpusFormatError",
    "tokenize",
    "detokenize",
    "chunk_document",
    "parse_corpus",
    "load_chunk_store",
    "write_chunk_store",
    "extract_metadata",
    "document_tokens",
]

# Word runs stay together; every other non-space character is its own token.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class CorpusFormatError(ValueError):
    """Raised when a corpus file violates the JSON Lines document schema."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


def tokenize(text: str) -> list[str]:
    """Lowercase and split text into word tokens and standalone punctuation.

    Deterministic and pure; joining the result with single spaces is the
    canonical detokenization.
    """
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: list[str]) -> str:
    """Render tokens back to text by joining with single spaces."""
    return " ".join(tokens)


@dataclass(frozen=True)
class Section:
    """One titled (or untitled) unit of a document.

    path is the title chain, e.g. ["Methods", "Setup"]; empty for untitled
    sections. text may be empty when the section is purely a container.
    """

    path: tuple[str, ...] = ()
    text: str = ""

    @staticmethod
    def untitled(text: str) -> "Section":
        return Section(path=(), text=text)


@dataclass(frozen=True)
class Document:
    """A corpus document with global metadata and an ordered section list."""

    doc_id: str
    title: str
    sections: tuple[Section, ...]
    abstract: str | None = None
    keywords: tuple[str, ...] = ()
    extra_meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.sections:
            raise ValueError(f"document {self.doc_id!r} must have at least one section")


@dataclass(frozen=True)
class Chunk:
    """A contiguous token window from one section of one document."""

    chunk_id: str
    doc_id: str
    section_index: int
    index_in_doc: int
    tokens: tuple[str, ...]
    text: str

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("chunk must contain at least one token")


@dataclass(frozen=True)
class ChunkingConfig:
    """Fixed-window chunking parameters.

    chunk_size is the window length in tokens; neighbor_radius is how many
    adjacent chunks on each side count as retrieval context.
    """

    chunk_size: int = 64
    neighbor_radius: int = 1

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.neighbor_radius < 0:
            raise ValueError("neighbor_radius must be >= 0")


@dataclass(frozen=True)
class Metadata:
    """Document-global structured fields attached to a chunk for retrieval."""

    title: str
    section_path: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()
    abstract: str | None = None
    extra: dict[str, str] = field(default_factory=dict)


def _chunk_id(doc_id: str, index_in_doc: int) -> str:
    # Zero-padded so lexicographic order equals chunk order within a document.
    return f"{doc_id}:{index_in_doc:05d}"


def chunk_document(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    """Split a document into consecutive token windows of cfg.chunk_size.

    Within each section, tokens are partitioned into windows of exactly
    chunk_size tokens except for a possibly shorter final window. Chunks
    never span section boundaries; index_in_doc is a 0-based running
    counter over the whole document. Sections with no tokens yield no
    chunks.
    """
    chunks: list[Chunk] = []
    index_in_doc = 0
    for section_index, section in enumerate(doc.sections):
        tokens = tokenize(section.text)
        for start in range(0, len(tokens), cfg.chunk_size):
            window = tuple(tokens[start : start + cfg.chunk_size])
            chunks.append(
                Chunk(
                    chunk_id=_chunk_id(doc.doc_id, index_in_doc),
                    doc_id=doc.doc_id,
                    section_index=section_index,
                    index_in_doc=index_in_doc,
                    tokens=window,
                    text=detokenize(list(window)),
                )
            )
            index_in_doc += 1
    return chunks


def document_tokens(doc: Document) -> list[str]:
    """All tokens of a document: section token lists concatenated in order."""
    tokens: list[str] = []
    for section in doc.sections:
        tokens.extend(tokenize(section.text))
    return tokens


def _parse_sections(obj: dict, line_number: int) -> tuple[Section, ...]:
    raw_sections = obj.get("sections")
    if raw_sections is None:
        # Flat document: one untitled section holding the `text` field.
        return (Section.untitled(str(obj.get("text", ""))),)
    if not isinstance(raw_sections, list) or not raw_sections:
        raise CorpusFormatError("'sections' must be a non-empty array", line_number)
    sections = []
    for i, raw in enumerate(raw_sections):
        if not isinstance(raw, dict):
            raise CorpusFormatError(f"section {i} must be an object", line_number)
        path = raw.get("path", [])
        if not isinstance(path, list) or not all(isinstance(p, str) for p in path):
            raise CorpusFormatError(f"section {i} 'path' must be an array of strings", line_number)
        sections.append(Section(path=tuple(path), text=str(raw.get("text", ""))))
    return tuple(sections)


def parse_corpus(path: str) -> list[Document]:
    """Parse a JSON Lines corpus file into documents, order preserved.

    Each line is one object with required `doc_id` and `title`, optional
    `abstract`, `keywords`, and either `sections` ([{path, text}]) or a flat
    `text` field. Malformed lines and duplicate doc_ids raise
    CorpusFormatError naming the offending line.
    """
    documents: list[Document] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line_number) from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError("record must be a JSON object", line_number)
            doc_id = obj.get("doc_id")
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusFormatError("missing or empty 'doc_id'", line_number)
            if doc_id in seen_ids:
                raise CorpusFormatError(f"duplicate doc_id {doc_id!r}", line_number)
            seen_ids.add(doc_id)
            title = obj.get("title")
            if not isinstance(title, str):
                raise CorpusFormatError("missing 'title'", line_number)
            abstract = obj.get("abstract")
            if abstract is not None and not isinstance(abstract, str):
                raise CorpusFormatError("'abstract' must be a string", line_number)
            keywords = obj.get("keywords", [])
            if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
                raise CorpusFormatError("'keywords' must be an array of strings", line_number)
            extra = obj.get("extra_meta", {})
            if not isinstance(extra, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in extra.items()
            ):
                raise CorpusFormatError("'extra_meta' must be a string-to-string map", line_number)
            documents.append(
                Document(
                    doc_id=doc_id,
                    title=title,
                    sections=_parse_sections(obj, line_number),
                    abstract=abstract,
                    keywords=tuple(keywords),
                    extra_meta=dict(extra),
                )
            )
    return documents


def extract_metadata(doc: Document, chunk: Chunk) -> Metadata:
    """Project a chunk's document-global metadata and its section path."""
    if chunk.doc_id != doc.doc_id:
        raise ValueError(
            f"chunk {chunk.chunk_id!r} belongs to document {chunk.doc_id!r}, not {doc.doc_id!r}"
        )
    if not 0 <= chunk.section_index < len(doc.sections):
        raise ValueError(f"chunk {chunk.chunk_id!r} has out-of-range section index")
    return Metadata(
        title=doc.title,
        section_path=doc.sections[chunk.section_index].path,
        keywords=doc.keywords,
        abstract=doc.abstract,
        extra=dict(doc.extra_meta),
    )


def write_chunk_store(chunks: list[Chunk], path: str) -> None:
    """Write chunks as JSON Lines, one chunk per line, in the given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(
                json.dumps(
                    {
                        "chunk_id": chunk.chunk_id,
                        "doc_id": chunk.doc_id,
                        "section_index": chunk.section_index,
                        "index_in_doc": chunk.index_in_doc,
                        "tokens": list(chunk.tokens),
                        "text": chunk.text,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_chunk_store(path: str) -> list[Chunk]:
    """Read a chunk store written by write_chunk_store."""
    chunks: list[Chunk] = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line_number) from exc
            chunks.append(
                Chunk(
                    chunk_id=obj["chunk_id"],
                    doc_id=obj["doc_id"],
                    section_index=int(obj["section_index"]),
                    index_in_doc=int(obj["index_in_doc"]),
                    tokens=tuple(obj["tokens"]),
                    text=obj["text"],
                )
            )
    return chunks
