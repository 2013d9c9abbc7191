"""
Chunking a document and building its two views
==============================================

A chunk leads a double life. At retrieval time it travels with document
context and metadata so the embedder can tell it apart from lookalikes.
At generation time the same chunk is handed to the language model bare,
with none of that scaffolding. This script walks through both.
"""

from heterag import (
    ChunkingConfig,
    Document,
    Section,
    ViewConfig,
    build_views_for_document,
    chunk_document,
    tokenize,
)

doc = Document(
    doc_id="mars-log",
    title="Mars Rover Field Log",
    abstract="Daily notes from the rover team.",
    keywords=("mars", "rover", "dust"),
    sections=(
        Section(
            path=("Sol 412", "Morning"),
            text=(
                "dust storm cleared overnight and the panels recovered "
                "fourteen percent of their rated output by noon"
            ),
        ),
        Section(
            path=("Sol 412", "Afternoon"),
            text="drive team plotted a route around the crater rim",
        ),
    ),
)

# Fixed-token chunking never crosses a section boundary.
chunking = ChunkingConfig(chunk_size=8, neighbor_radius=1)
chunks = chunk_document(doc, chunking)
print(f"{len(chunks)} chunks from {len(tokenize(doc.sections[0].text))}"
      f"+{len(tokenize(doc.sections[1].text))} tokens")
for c in chunks:
    path = " > ".join(doc.sections[c.section_index].path)
    print(f"  {c.chunk_id}  [{path}]  {c.text!r}")

# The retrieval view wraps the chunk in rendered context and metadata.
view_cfg = ViewConfig(token_budget=128)
retrieval_views, generation_views = build_views_for_document(doc, view_cfg, chunking)

print("\nretrieval view of the second chunk:")
print(retrieval_views[1].rendered_text)

print("\ngeneration view of the same chunk (what the LLM sees):")
print(generation_views[1].text)

# Squeeze the budget and the enrichment degrades gracefully: document lead
# goes first, then section lead, neighbors, and metadata, before the chunk
# itself is ever touched. At 30 tokens only title and section survive.
tight = ViewConfig(token_budget=30)
tight_views, _ = build_views_for_document(doc, tight, chunking)
print("\nsame view under a 30-token budget:")
print(tight_views[1].rendered_text)

# Disabling both context and metadata collapses the retrieval view to the
# bare chunk, which is exactly the naive baseline.
bare = ViewConfig(use_context=False, use_metadata=False)
bare_views, _ = build_views_for_document(doc, bare, chunking)
assert bare_views[1].rendered_text == generation_views[1].text
print("\nwith enrichment off, both views coincide:", repr(bare_views[1].rendered_text))
