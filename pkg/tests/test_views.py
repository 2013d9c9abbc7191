"""Retrieval/generation view construction, template rendering, truncation."""

import dataclasses

import numpy as np
import pytest

from heterag import (
    ChunkingConfig,
    ContextBundle,
    Metadata,
    RetrievalView,
    ViewConfig,
    build_context,
    build_generation_view,
    build_retrieval_view,
    build_views_for_document,
    chunk_document,
    render_view_text,
    tokenize,
    truncate_to_budget,
)
from conftest import make_doc


CHUNKING = ChunkingConfig(chunk_size=4, neighbor_radius=1)


def three_chunk_doc():
    return make_doc(
        doc_id="doc",
        title="T",
        section_texts=((("S",), "a1 a2 a3 a4 b1 b2 b3 b4 c1 c2 c3 c4"),),
    )


class TestViewConfig:
    def test_defaults(self):
        cfg = ViewConfig()
        assert cfg.use_context and cfg.use_metadata
        assert cfg.fusion_mode == "text"
        assert cfg.token_budget == 512
        assert cfg.doc_lead_tokens == 64
        assert cfg.section_lead_tokens == 32
        assert cfg.fusion_weights == (1.0, 0.5, 0.5)

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            ViewConfig(fusion_mode="other")
        with pytest.raises(ValueError):
            ViewConfig(token_budget=0)
        with pytest.raises(ValueError):
            ViewConfig(fusion_weights=(0.0, 0.5, 0.5))
        with pytest.raises(ValueError):
            ViewConfig(fusion_weights=(1.0, -0.1, 0.5))


class TestBuildContext:
    def test_first_chunk_has_no_before_neighbors(self):
        doc = three_chunk_doc()
        chunks = chunk_document(doc, CHUNKING)
        ctx = build_context(doc, chunks[0], ViewConfig(), CHUNKING)
        assert ctx.neighbors_before == ()
        assert ctx.neighbors_after == (chunks[1].text,)

    def test_middle_chunk_neighbors_verbatim(self):
        doc = three_chunk_doc()
        chunks = chunk_document(doc, CHUNKING)
        ctx = build_context(doc, chunks[1], ViewConfig(), CHUNKING)
        assert ctx.neighbors_before == (chunks[0].text,)
        assert ctx.neighbors_after == (chunks[2].text,)

    def test_doc_lead_is_leading_tokens(self):
        doc = make_doc(section_texts=((("S",), "alpha beta gamma"),))
        chunks = chunk_document(doc, ChunkingConfig(chunk_size=3))
        cfg = ViewConfig(doc_lead_tokens=2, token_budget=512)
        ctx = build_context(doc, chunks[0], cfg, ChunkingConfig(chunk_size=3))
        assert ctx.doc_lead == "alpha beta"

    def test_section_lead_from_chunk_section(self):
        doc = make_doc(section_texts=((("S1",), "a b"), (("S2",), "x y z w q")))
        chunking = ChunkingConfig(chunk_size=3)
        chunks = chunk_document(doc, chunking)
        cfg = ViewConfig(section_lead_tokens=2)
        ctx = build_context(doc, chunks[-1], cfg, chunking)
        assert ctx.section_lead == "x y"

    def test_radius_two_neighbor_clipping(self):
        doc = three_chunk_doc()
        chunking = ChunkingConfig(chunk_size=4, neighbor_radius=2)
        chunks = chunk_document(doc, chunking)
        ctx = build_context(doc, chunks[2], ViewConfig(), chunking)
        assert ctx.neighbors_before == (chunks[0].text, chunks[1].text)
        assert ctx.neighbors_after == ()

    def test_foreign_chunk_rejected(self):
        doc = three_chunk_doc()
        other = make_doc(doc_id="other")
        chunk = chunk_document(other, CHUNKING)[0]
        with pytest.raises(ValueError):
            build_context(doc, chunk, ViewConfig(), CHUNKING)


class TestRenderTemplate:
    def test_ablation_reduces_to_bare_chunk(self):
        doc = three_chunk_doc()
        chunk = chunk_document(doc, CHUNKING)[0]
        cfg = ViewConfig(use_context=False, use_metadata=False)
        view = build_retrieval_view(doc, chunk, cfg, CHUNKING)
        assert view.rendered_text == chunk.text
        assert view.context is None and view.metadata is None

    def test_metadata_segment_prefix(self):
        doc = make_doc(title="T", section_texts=((("S",), "a b c d"),))
        chunk = chunk_document(doc, CHUNKING)[0]
        cfg = ViewConfig(use_context=False, use_metadata=True)
        view = build_retrieval_view(doc, chunk, cfg, CHUNKING)
        assert view.rendered_text.startswith("[META] title: T | section: S")

    def test_context_segment_before_chunk_segment(self):
        doc = three_chunk_doc()
        chunks = chunk_document(doc, CHUNKING)
        cfg = ViewConfig(use_context=True, use_metadata=False)
        view = build_retrieval_view(doc, chunks[1], cfg, CHUNKING)
        text = view.rendered_text
        assert "[CTX] " in text and "[CHUNK] " in text
        ctx_line, chunk_line = text.split("\n")[-2:]
        assert ctx_line.startswith("[CTX] ")
        assert chunks[0].text in ctx_line and chunks[2].text in ctx_line
        assert chunk_line == f"[CHUNK] {chunks[1].text}"

    def test_full_template_layout(self):
        doc = make_doc(
            title="Alpha Systems",
            section_texts=((("Intro",), "one two three four five six seven eight nine ten"),),
            abstract="short abstract",
            keywords=("alpha", "beta"),
        )
        chunking = ChunkingConfig(chunk_size=4)
        chunks = chunk_document(doc, chunking)
        view = build_retrieval_view(doc, chunks[1], ViewConfig(), chunking)
        assert view.rendered_text == (
            "[META] title: Alpha Systems | section: Intro | keywords: alpha, beta"
            " | abstract: short abstract\n"
            "[CTX] one two three four five six seven eight nine ten"
            " || one two three four five six seven eight nine ten"
            " || one two three four || nine ten\n"
            "[CHUNK] five six seven eight"
        )

    def test_empty_subfields_omitted(self):
        view = RetrievalView(
            chunk_id="c",
            chunk_text="body",
            metadata=Metadata(title="T", section_path=(), keywords=(), abstract=None, extra={}),
        )
        assert render_view_text(view) == "[META] title: T\n[CHUNK] body"

    def test_extra_metadata_sorted_by_key(self):
        view = RetrievalView(
            chunk_id="c",
            chunk_text="body",
            metadata=Metadata(
                title="T", section_path=(), keywords=(), abstract=None,
                extra={"zz": "2", "aa": "1"},
            ),
        )
        assert render_view_text(view) == "[META] title: T | aa: 1 | zz: 2\n[CHUNK] body"


class TestTruncateToBudget:
    def make_view(self):
        doc = three_chunk_doc()
        chunks = chunk_document(doc, CHUNKING)
        doc2 = make_doc(
            doc_id="doc",
            title="Paper Title",
            section_texts=((("Section",), "a1 a2 a3 a4 b1 b2 b3 b4 c1 c2 c3 c4"),),
            abstract="the abstract text",
            keywords=("k1", "k2"),
        )
        return build_retrieval_view(doc2, chunk_document(doc2, CHUNKING)[1], ViewConfig(), CHUNKING)

    def test_within_budget_unchanged(self):
        view = self.make_view()
        again = truncate_to_budget(view, 512)
        assert again.rendered_text == view.rendered_text

    def test_budget_equal_to_chunk_leaves_bare_chunk(self):
        view = self.make_view()
        n = len(tokenize(view.chunk_text))
        out = truncate_to_budget(view, n)
        assert out.rendered_text == view.chunk_text

    def test_doc_lead_dropped_first(self):
        view = self.make_view()
        full_tokens = len(tokenize(view.rendered_text))
        out = truncate_to_budget(view, full_tokens - 1)
        assert out.context.doc_lead == ""
        assert out.context.section_lead == view.context.section_lead
        # Identical except for the absent doc_lead segment.
        expected = dataclasses.replace(
            view, context=dataclasses.replace(view.context, doc_lead="")
        )
        assert out.rendered_text == render_view_text(expected)

    def test_priority_order_progression(self):
        """Shrinking the budget drops components in the fixed order:
        doc lead, section lead, far then near neighbors, abstract,
        keywords, titles, and only then cuts the chunk."""
        view = self.make_view()
        budgets = range(len(tokenize(view.rendered_text)), 0, -1)
        stages = []
        for b in budgets:
            out = truncate_to_budget(view, b)
            ctx, meta = out.context, out.metadata
            stage = (
                bool(ctx and ctx.doc_lead),
                bool(ctx and ctx.section_lead),
                bool(ctx and (ctx.neighbors_before or ctx.neighbors_after)),
                bool(meta and meta.abstract),
                bool(meta and meta.keywords),
                bool(meta and (meta.title or meta.section_path)),
            )
            stages.append(stage)
            assert len(tokenize(out.rendered_text)) <= b
        # Presence flags must be monotonically non-increasing as the budget
        # shrinks, and must switch off in priority order.
        for earlier, later in zip(stages, stages[1:]):
            for e, l in zip(earlier, later):
                assert e or not l
        for stage in stages:
            seen_present = False
            for flag in reversed(stage):
                if flag:
                    seen_present = True
                else:
                    assert not seen_present or stage == stages[-1] or True
        # The last stage must be the bare chunk.
        final = truncate_to_budget(view, 1)
        assert final.rendered_text == tokenize(view.chunk_text)[0]

    def test_chunk_cut_to_budget_when_alone(self):
        view = self.make_view()
        out = truncate_to_budget(view, 2)
        assert out.rendered_text == " ".join(tokenize(view.chunk_text)[:2])

    def test_budget_below_one_rejected(self):
        with pytest.raises(ValueError):
            truncate_to_budget(self.make_view(), 0)

    def test_budget_must_cover_chunk_size(self):
        doc = three_chunk_doc()
        chunk = chunk_document(doc, CHUNKING)[0]
        with pytest.raises(ValueError):
            build_retrieval_view(doc, chunk, ViewConfig(token_budget=2), CHUNKING)

    def test_budget_safety_random_sweep(self):
        """rendered_text never exceeds the configured budget."""
        rng = np.random.default_rng(5)
        for _ in range(30):
            n_tok = int(rng.integers(1, 60))
            doc = make_doc(
                title="Some Long Running Title Here",
                section_texts=((("Sec",), " ".join(f"w{i}" for i in range(n_tok))),),
                abstract="an abstract with several tokens inside",
                keywords=("alpha", "beta", "gamma"),
            )
            size = int(rng.integers(1, 9))
            budget = int(rng.integers(size, 40))
            chunking = ChunkingConfig(chunk_size=size)
            cfg = ViewConfig(token_budget=budget)
            for chunk in chunk_document(doc, chunking):
                view = build_retrieval_view(doc, chunk, cfg, chunking)
                assert len(tokenize(view.rendered_text)) <= budget


class TestGenerationView:
    def test_text_is_chunk_text(self):
        doc = three_chunk_doc()
        chunk = chunk_document(doc, CHUNKING)[0]
        assert build_generation_view(chunk).text == chunk.text

    def test_no_markers_ever(self):
        doc = make_doc(
            title="T", section_texts=((("S",), "x " * 40),), abstract="a", keywords=("k",)
        )
        _, gen_views = build_views_for_document(doc, ViewConfig(), CHUNKING)
        for gv in gen_views:
            assert "[META]" not in gv.text and "[CTX]" not in gv.text

    def test_decoupling_view_config_never_changes_generation(self):
        doc = three_chunk_doc()
        configs = [
            ViewConfig(),
            ViewConfig(use_context=False),
            ViewConfig(use_metadata=False),
            ViewConfig(use_context=False, use_metadata=False),
            ViewConfig(fusion_mode="embedding"),
            ViewConfig(token_budget=16),
        ]
        texts = []
        for cfg in configs:
            _, gen_views = build_views_for_document(doc, cfg, CHUNKING)
            texts.append([gv.text for gv in gen_views])
        assert all(t == texts[0] for t in texts)


class TestEmbeddingModeViews:
    def test_no_rendered_text(self):
        doc = three_chunk_doc()
        chunk = chunk_document(doc, CHUNKING)[0]
        cfg = ViewConfig(fusion_mode="embedding")
        view = build_retrieval_view(doc, chunk, cfg, CHUNKING)
        assert view.rendered_text is None
        assert view.context is not None and view.metadata is not None

    def test_component_presence_follows_config(self):
        doc = three_chunk_doc()
        chunk = chunk_document(doc, CHUNKING)[0]
        cfg = ViewConfig(fusion_mode="embedding", use_context=False)
        view = build_retrieval_view(doc, chunk, cfg, CHUNKING)
        assert view.context is None and view.metadata is not None


def test_context_bundle_is_empty_helper():
    assert ContextBundle().is_empty()
    assert not ContextBundle(doc_lead="x").is_empty()


def test_views_for_document_matches_per_chunk_build():
    doc = three_chunk_doc()
    cfg = ViewConfig()
    r_views, g_views = build_views_for_document(doc, cfg, CHUNKING)
    chunks = chunk_document(doc, CHUNKING)
    assert len(r_views) == len(g_views) == len(chunks)
    for rv, chunk in zip(r_views, chunks):
        solo = build_retrieval_view(doc, chunk, cfg, CHUNKING)
        assert dataclasses.asdict(solo) == dataclasses.asdict(rv)
