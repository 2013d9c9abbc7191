"""Command-line entry points: config handling, artifacts, exit codes."""

import json

import pytest

from heterag import AdapterParams, load_index, load_loss_trace
from heterag.cli import main
from conftest import write_jsonl


TEN_TOKEN_DOC = {
    "doc_id": "solo",
    "title": "ten token study",
    "text": "one two three four five six seven eight nine ten",
}

CONFIG_TOML = """\
seed = 7

[embedder]
dimension = 32

[chunking]
chunk_size = 4

[train]
steps = 2
batch_size = 2
random_negatives = 1

[eval]
chunk_sizes = [4]
k_values = [1]
qa_k_values = [1]
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Isolated cwd with a corpus file and a small config."""
    monkeypatch.chdir(tmp_path)
    write_jsonl(tmp_path / "corpus.jsonl", [TEN_TOKEN_DOC])
    (tmp_path / "run.toml").write_text(CONFIG_TOML, encoding="utf-8")
    return tmp_path


class TestIngest:
    def test_ten_tokens_size_four_gives_three_chunks(self, workspace, capsys):
        assert main(["--config", "run.toml", "ingest"]) == 0
        out = capsys.readouterr().out
        assert "documents: 1" in out
        assert "chunks: 3" in out
        assert (workspace / "chunks.jsonl").exists()

    def test_rerun_byte_identical(self, workspace, capsys):
        main(["--config", "run.toml", "ingest"])
        first = (workspace / "chunks.jsonl").read_bytes()
        main(["--config", "run.toml", "ingest"])
        assert (workspace / "chunks.jsonl").read_bytes() == first

    def test_flag_overrides_config_chunk_size(self, workspace, capsys):
        assert main(["--config", "run.toml", "--chunk-size", "5", "ingest"]) == 0
        assert "chunks: 2" in capsys.readouterr().out

    def test_missing_corpus_is_clean_error(self, workspace, capsys):
        (workspace / "corpus.jsonl").unlink()
        assert main(["--config", "run.toml", "ingest"]) == 2
        assert "missing corpus file" in capsys.readouterr().err


class TestIndexAndSearch:
    def test_index_writes_loadable_file(self, workspace, capsys):
        assert main(["--config", "run.toml", "index"]) == 0
        out = capsys.readouterr().out
        assert "indexed chunks: 3" in out
        idx = load_index(str(workspace / "index.bin"))
        assert len(idx) == 3
        assert idx.dimension == 32

    def test_search_prints_ranked_rows(self, workspace, capsys):
        main(["--config", "run.toml", "index"])
        capsys.readouterr()
        assert main(["--config", "run.toml", "--top-k", "2", "search", "seven eight"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        rank, chunk_id, doc_id, score = lines[0].split("\t")
        assert rank == "1"
        assert doc_id == "solo"
        assert chunk_id.startswith("solo:")
        float(score)

    def test_search_without_index_fails(self, workspace, capsys):
        assert main(["--config", "run.toml", "search", "anything"]) == 2
        assert "missing index file" in capsys.readouterr().err

    def test_naive_method_flag_changes_index(self, workspace):
        main(["--config", "run.toml", "index"])
        hetero = (workspace / "index.bin").read_bytes()
        main(["--config", "run.toml", "--method", "naive", "index"])
        naive = (workspace / "index.bin").read_bytes()
        assert hetero != naive

    def test_no_context_no_metadata_match_naive(self, workspace):
        main(["--config", "run.toml", "--method", "naive", "index"])
        naive = (workspace / "index.bin").read_bytes()
        main(["--config", "run.toml", "--no-context", "--no-metadata", "index"])
        ablated = (workspace / "index.bin").read_bytes()
        assert ablated == naive


class TestTrain:
    def setup_pairs(self, workspace):
        write_jsonl(workspace / "pairs.jsonl", [
            {"query": "ten token study chunk", "positive_chunk_id": "solo:00000"},
            {"query": "seven eight nine", "positive_chunk_id": "solo:00001"},
        ])

    def test_train_writes_adapter_and_trace(self, workspace, capsys):
        self.setup_pairs(workspace)
        assert main(["--config", "run.toml", "train"]) == 0
        out = capsys.readouterr().out
        assert "steps: 2" in out
        params = AdapterParams.load(str(workspace / "adapter.bin"))
        assert params.dimension == 32
        assert len(load_loss_trace(str(workspace / "loss.csv"))) == 2

    def test_trained_adapter_auto_loads_into_index(self, workspace):
        main(["--config", "run.toml", "index"])
        before = (workspace / "index.bin").read_bytes()
        self.setup_pairs(workspace)
        main(["--config", "run.toml", "train"])
        main(["--config", "run.toml", "index"])
        after = (workspace / "index.bin").read_bytes()
        assert before != after

    def test_adapter_dimension_mismatch_is_clean_error(self, workspace, capsys):
        AdapterParams.identity(16).save(str(workspace / "adapter.bin"))
        assert main(["--config", "run.toml", "index"]) == 2
        assert "dimension" in capsys.readouterr().err

    def test_missing_pairs_file(self, workspace, capsys):
        assert main(["--config", "run.toml", "train"]) == 2
        assert "missing training pairs" in capsys.readouterr().err


class TestEvalRetrieval:
    def setup_eval_files(self, workspace):
        write_jsonl(workspace / "queries.jsonl", [
            {"query_id": "q1", "text": "ten token study"},
        ])
        (workspace / "qrels.tsv").write_text("q1\tsolo\t1\n", encoding="utf-8")

    def test_writes_reports_and_prints_table(self, workspace, capsys):
        self.setup_eval_files(workspace)
        assert main(["--config", "run.toml", "eval-retrieval"]) == 0
        out = capsys.readouterr().out
        assert "naive" in out and "heterag" in out
        report = json.loads((workspace / "retrieval_report.json").read_text())
        assert "hash/4/naive" in report["rows"]
        assert "hash/4/heterag" in report["rows"]
        assert (workspace / "retrieval_report.txt").exists()

    def test_method_flag_restricts_cells(self, workspace, capsys):
        self.setup_eval_files(workspace)
        assert main(["--config", "run.toml", "--method", "heterag", "eval-retrieval"]) == 0
        report = json.loads((workspace / "retrieval_report.json").read_text())
        assert list(report["rows"]) == ["hash/4/heterag"]

    def test_deterministic_reports(self, workspace, capsys):
        self.setup_eval_files(workspace)
        main(["--config", "run.toml", "eval-retrieval"])
        first = (workspace / "retrieval_report.json").read_bytes()
        main(["--config", "run.toml", "eval-retrieval"])
        assert (workspace / "retrieval_report.json").read_bytes() == first


class TestEvalRag:
    def test_end_to_end_report(self, workspace, capsys):
        write_jsonl(workspace / "qa.jsonl", [
            {"query_id": "q1", "question": "which study", "golden_answers": ["ten"]},
        ])
        config = CONFIG_TOML + '\n[rag.generator]\necho_fixed = "ten"\n'
        (workspace / "run.toml").write_text(config, encoding="utf-8")
        assert main(["--config", "run.toml", "eval-rag"]) == 0
        report = json.loads((workspace / "qa_report.json").read_text())
        row = report["rows"]["echo_stub/qa/heterag/k=1"]
        assert row["em"] == 1.0
        assert report["failures"]["echo_stub/qa/heterag/k=1"] == 0


class TestConfigHandling:
    def test_missing_config_file(self, workspace, capsys):
        assert main(["--config", "absent.toml", "ingest"]) == 2
        assert "config file not found" in capsys.readouterr().err

    def test_invalid_toml(self, workspace, capsys):
        (workspace / "bad.toml").write_text("not [valid", encoding="utf-8")
        assert main(["--config", "bad.toml", "ingest"]) == 2

    def test_unknown_path_key_rejected(self, workspace, capsys):
        (workspace / "bad.toml").write_text('[paths]\nbogus = "x"\n', encoding="utf-8")
        assert main(["--config", "bad.toml", "ingest"]) == 2
        assert "unknown path keys" in capsys.readouterr().err

    def test_bad_section_value_reports_section(self, workspace, capsys):
        (workspace / "bad.toml").write_text("[chunking]\nchunk_size = 0\n", encoding="utf-8")
        assert main(["--config", "bad.toml", "ingest"]) == 2
        assert "[chunking]" in capsys.readouterr().err

    def test_defaults_without_config(self, workspace, capsys):
        assert main(["ingest"]) == 0
        # Default chunk size is 64; ten tokens make a single chunk.
        assert "chunks: 1" in capsys.readouterr().out

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("ingest", "index", "search", "train", "eval-retrieval", "eval-rag"):
            assert cmd in out
