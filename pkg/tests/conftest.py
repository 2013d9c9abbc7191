"""Shared fixtures: small document builders and corpus file writers."""

from __future__ import annotations

import json

import pytest

from heterag import Document, Section


def make_doc(
    doc_id: str = "d1",
    title: str = "Sample Title",
    section_texts: tuple[tuple[tuple[str, ...], str], ...] = (
        (("Intro",), "one two three four five six seven eight nine ten"),
    ),
    abstract: str | None = None,
    keywords: tuple[str, ...] = (),
    extra_meta: dict[str, str] | None = None,
) -> Document:
    sections = tuple(Section(path=path, text=text) for path, text in section_texts)
    return Document(
        doc_id=doc_id,
        title=title,
        sections=sections,
        abstract=abstract,
        keywords=keywords,
        extra_meta=extra_meta or {},
    )


def write_jsonl(path, rows) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return str(path)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance checklist after the usual test summary."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance checks")
        for line in RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def corpus_file(tmp_path):
    """A three-document corpus exercising sections, flat text, and metadata."""
    rows = [
        {
            "doc_id": "alpha",
            "title": "Alpha Study",
            "abstract": "A study of alpha.",
            "keywords": ["alpha", "signals"],
            "sections": [
                {"path": ["Intro"], "text": "alpha begins here with early findings"},
                {"path": ["Methods", "Setup"], "text": "alpha methods use strict controls"},
            ],
        },
        {
            "doc_id": "beta",
            "title": "Beta Report",
            "text": "beta is a flat document with no explicit sections at all",
        },
        {
            "doc_id": "gamma",
            "title": "Gamma Notes",
            "keywords": ["gamma"],
            "sections": [{"path": [], "text": "gamma text lives in one untitled section"}],
        },
    ]
    return write_jsonl(tmp_path / "corpus.jsonl", rows)
