"""Prompt assembly, generator clients, end-to-end answer pipeline."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from heterag import (
    DEFAULT_SYSTEM_INSTRUCTION,
    ChunkingConfig,
    GenerationContractError,
    GenerationTransportError,
    GenerationView,
    GeneratorSpec,
    HashEmbedder,
    PromptTemplate,
    RAGConfig,
    ViewConfig,
    assemble_prompt,
    build_corpus_index,
    build_index,
    generate_answer,
    run_pipeline,
)
from conftest import make_doc


def gen_view(chunk_id, text):
    return GenerationView(chunk_id=chunk_id, text=text)


class TestPromptTemplate:
    def test_defaults(self):
        t = PromptTemplate()
        assert t.system_instruction == (
            "Answer the question based on the given passages. "
            "Only give me the answer and do not output any other words."
        )
        assert t.passage_format == "Passage {index}: {text}"
        assert t.question_format == "Question: {question}"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"passage_format": "no slots"},
            {"passage_format": "{index} only"},
            {"passage_format": "{index} {text} {text}"},
            {"question_format": "no slot"},
            {"question_format": "{question} {question}"},
        ],
    )
    def test_slot_validation(self, kwargs):
        with pytest.raises(ValueError):
            PromptTemplate(**kwargs)


class TestAssemblePrompt:
    def test_zero_passages_is_closed_book(self):
        prompt = assemble_prompt(PromptTemplate(), "who?", [])
        assert prompt == DEFAULT_SYSTEM_INSTRUCTION + "\nQuestion: who?"

    def test_one_passage(self):
        prompt = assemble_prompt(PromptTemplate(), "who?", [gen_view("d:00000", "some text")])
        lines = prompt.split("\n")
        assert lines[0] == DEFAULT_SYSTEM_INSTRUCTION
        assert lines[1] == "Passage 1: some text"
        assert lines[2] == "Question: who?"

    def test_passages_numbered_from_one(self):
        views = [gen_view(f"d:{i:05d}", f"text {i}") for i in range(3)]
        prompt = assemble_prompt(PromptTemplate(), "q", views)
        assert "Passage 1: text 0" in prompt
        assert "Passage 2: text 1" in prompt
        assert "Passage 3: text 2" in prompt

    def test_no_retrieval_markers_leak(self):
        views = [gen_view("d:00000", "clean body text")]
        prompt = assemble_prompt(PromptTemplate(), "q", views)
        for marker in ("[META]", "[CTX]", "[CHUNK]"):
            assert marker not in prompt

    def test_custom_template(self):
        t = PromptTemplate(
            system_instruction="Use the context.",
            passage_format="[{index}] {text}",
            question_format="Q: {question}",
        )
        prompt = assemble_prompt(t, "why?", [gen_view("d:00000", "body")])
        assert prompt == "Use the context.\n[1] body\nQ: why?"


class TestGeneratorSpec:
    def test_defaults(self):
        spec = GeneratorSpec()
        assert spec.kind == "echo_stub"
        assert spec.max_new_tokens == 64
        assert spec.temperature == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            GeneratorSpec(kind="other")
        with pytest.raises(ValueError):
            GeneratorSpec(kind="remote")
        with pytest.raises(ValueError):
            GeneratorSpec(max_new_tokens=0)
        with pytest.raises(ValueError):
            GeneratorSpec(temperature=-0.1)


class TestEchoStub:
    def test_fixed_answer(self):
        spec = GeneratorSpec(echo_fixed="always this")
        assert generate_answer(spec, "whatever prompt") == "always this"

    def test_marker_extraction(self):
        spec = GeneratorSpec()
        prompt = "Passage 1: context ANSWER: forty two\nQuestion: what?"
        assert generate_answer(spec, prompt) == "forty two"

    def test_marker_takes_first_occurrence(self):
        spec = GeneratorSpec()
        prompt = "ANSWER: first\nANSWER: second"
        assert generate_answer(spec, prompt) == "first"

    def test_missing_marker_yields_empty(self):
        assert generate_answer(GeneratorSpec(), "no marker here") == ""

    def test_custom_marker(self):
        spec = GeneratorSpec(echo_marker="GOLD=")
        assert generate_answer(spec, "text GOLD= value here") == "value here"

    def test_determinism(self):
        spec = GeneratorSpec()
        prompt = "ANSWER: stable"
        assert generate_answer(spec, prompt) == generate_answer(spec, prompt)


class _GenHandler(BaseHTTPRequestHandler):
    mode = "ok"
    seen = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        if self.path != "/generate":
            self.send_error(404)
            return
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _GenHandler.seen.append(body)
        if self.mode == "boom":
            self.send_error(500)
            return
        if self.mode == "malformed":
            payload = {"unexpected": 1}
        else:
            payload = {"text": f"echo of {len(body['prompt'])} chars"}
        data = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def gen_server():
    server = HTTPServer(("127.0.0.1", 0), _GenHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _GenHandler.mode = "ok"
    _GenHandler.seen = []
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    thread.join()


class TestRemoteGenerator:
    def test_round_trip_and_payload(self, gen_server):
        spec = GeneratorSpec(
            kind="remote", endpoint=gen_server, max_new_tokens=32, temperature=0.0
        )
        out = generate_answer(spec, "hello")
        assert out == "echo of 5 chars"
        assert _GenHandler.seen[-1] == {
            "prompt": "hello",
            "max_new_tokens": 32,
            "temperature": 0.0,
        }

    def test_server_error_is_transport_error(self, gen_server):
        _GenHandler.mode = "boom"
        spec = GeneratorSpec(kind="remote", endpoint=gen_server, retries=1)
        with pytest.raises(GenerationTransportError):
            generate_answer(spec, "x")

    def test_malformed_payload_is_contract_error(self, gen_server):
        _GenHandler.mode = "malformed"
        spec = GeneratorSpec(kind="remote", endpoint=gen_server)
        with pytest.raises(GenerationContractError):
            generate_answer(spec, "x")

    def test_unreachable_endpoint(self):
        spec = GeneratorSpec(
            kind="remote", endpoint="http://127.0.0.1:9", timeout=0.2, retries=1
        )
        with pytest.raises(GenerationTransportError):
            generate_answer(spec, "x")


def pipeline_fixture():
    # Corpus text is lowercased with punctuation split off, so the stub's
    # marker must match the detokenized form ("answer :").
    docs = [
        make_doc(
            doc_id="doc-sun",
            title="solar physics",
            section_texts=((("core",), "fusion powers the sun answer : hydrogen burning"),),
        ),
        make_doc(
            doc_id="doc-sea",
            title="oceanography",
            section_texts=((("tides",), "the moon drives tides answer : lunar gravity"),),
        ),
    ]
    emb = HashEmbedder(128)
    index, gen_views = build_corpus_index(
        docs, ViewConfig(), ChunkingConfig(chunk_size=16), emb
    )
    return index, gen_views, emb


MARKER_CFG = GeneratorSpec(echo_marker="answer :")


class TestRunPipeline:
    def test_answer_and_provenance(self):
        index, gen_views, emb = pipeline_fixture()
        cfg = RAGConfig(top_k=1, generator=MARKER_CFG)
        result = run_pipeline("solar physics fusion", cfg, index, gen_views, emb)
        assert result.answer == "hydrogen burning"
        assert len(result.provenance) == 1
        assert result.provenance[0].doc_id == "doc-sun"

    def test_provenance_in_rank_order(self):
        index, gen_views, emb = pipeline_fixture()
        cfg = RAGConfig(top_k=2)
        result = run_pipeline("solar physics fusion", cfg, index, gen_views, emb)
        scores = [p.score for p in result.provenance]
        assert scores == sorted(scores, reverse=True)

    def test_reverse_passages_keeps_provenance_order(self):
        index, gen_views, emb = pipeline_fixture()
        fwd = run_pipeline(
            "solar physics fusion",
            RAGConfig(top_k=2, generator=MARKER_CFG),
            index, gen_views, emb,
        )
        rev = run_pipeline(
            "solar physics fusion",
            RAGConfig(top_k=2, reverse_passages=True, generator=MARKER_CFG),
            index, gen_views, emb,
        )
        assert [p.chunk_id for p in fwd.provenance] == [p.chunk_id for p in rev.provenance]
        # Reversed prompt surfaces the other passage's marker first.
        assert fwd.answer != rev.answer

    def test_empty_index_closed_book(self):
        emb = HashEmbedder(8)
        index = build_index([], np.zeros((0, 8)), dimension=8)
        cfg = RAGConfig(generator=GeneratorSpec(echo_fixed="fallback"))
        result = run_pipeline("anything", cfg, index, {}, emb)
        assert result.answer == "fallback"
        assert result.provenance == ()

    def test_missing_generation_view_is_error(self):
        index, gen_views, emb = pipeline_fixture()
        broken = dict(gen_views)
        broken.pop(next(iter(broken)))
        with pytest.raises(ValueError):
            run_pipeline("solar physics fusion", RAGConfig(top_k=2), index, broken, emb)

    def test_determinism(self):
        index, gen_views, emb = pipeline_fixture()
        cfg = RAGConfig(top_k=2)
        a = run_pipeline("the moon and tides", cfg, index, gen_views, emb)
        b = run_pipeline("the moon and tides", cfg, index, gen_views, emb)
        assert a == b

    def test_top_k_caps_passages(self):
        index, gen_views, emb = pipeline_fixture()
        cfg = RAGConfig(top_k=50)
        result = run_pipeline("solar", cfg, index, gen_views, emb)
        assert len(result.provenance) == len(index)
