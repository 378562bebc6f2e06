import json
from pathlib import Path

import pytest

from multirag.cli import main


def write_corpus(tmp_path: Path, n=8) -> Path:
    path = tmp_path / "corpus.jsonl"
    rows = [{"id": f"c{i}", "text": f"Ann kept {i} coins and found {i + 2} more. "
                                    f"#### {2 * i + 2}", "kind": "qa"}
            for i in range(n)]
    rows.append({"id": "tb0", "text": "Addition combines counts.", "kind": "textbook"})
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


def write_gold(tmp_path: Path, n=6) -> Path:
    path = tmp_path / "gold.jsonl"
    rows = [{"id": f"q{i}", "question": f"Ben saw {i} birds and then {i + 3} more.",
             "answer": str(2 * i + 3)} for i in range(n)]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


def write_config(tmp_path: Path, **extra) -> Path:
    cfg = {
        "embedding": {"models": ["det-a", "det-b", "det-c"]},
        "retrieval": {"k": 2, "quotas": None},
        "eval": {"combination_sizes": [2, 3]},
        "corpus": [{"path": str(write_corpus(tmp_path)), "kind": "qa"}],
        "gold_path": str(write_gold(tmp_path)),
        "output_dir": str(tmp_path / "out"),
        "seed": 7,
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


class TestIngest:
    def test_valid_file_prints_counts(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path)
        assert main(["ingest", str(corpus), "--kind", "qa"]) == 0
        out = capsys.readouterr().out
        assert "9 chunk(s) ingested" in out
        assert "total: 9" in out

    def test_bad_line_nonzero_exit_with_line_number(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "ok"}\n{broken\n')
        assert main(["ingest", str(path)]) == 1
        err = capsys.readouterr().err
        assert ":2:" in err

    def test_two_files_per_kind_totals(self, tmp_path, capsys):
        qa = write_corpus(tmp_path)
        tb = tmp_path / "book.txt"
        tb.write_text("chapter one\n\nchapter two\n")
        assert main(["ingest", str(qa), str(tb), "--kind", "qa"]) == 0
        out = capsys.readouterr().out
        # the .txt file takes the --kind default; jsonl lines carry their own
        assert "kind qa: 10" in out
        assert "kind textbook: 1" in out


class TestAsk:
    def test_stable_output(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["ask", "Cora has 2 bags of 3 apples.", "--config", str(cfg),
                     "--pipeline", "confident"]) == 0
        first = capsys.readouterr().out
        assert main(["ask", "Cora has 2 bags of 3 apples.", "--config", str(cfg),
                     "--pipeline", "confident"]) == 0
        assert capsys.readouterr().out == first
        assert "####" in first

    def test_manifest_honors_flags(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        outdir = tmp_path / "ask-out"
        assert main(["ask", "How many?", "--config", str(cfg),
                     "--pipeline", "confident", "--metric", "dp",
                     "--out", str(outdir)]) == 0
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["pipeline"] == "confident"
        assert manifest["metric"] == "dp"
        answer = json.loads((outdir / "answer.json").read_text())
        assert answer["pipeline"] == "confident"

    def test_k_zero_is_bare_llm(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["ask", "Just the question.", "--config", str(cfg),
                     "--pipeline", "vanilla", "--models", "det-a", "--k", "0",
                     "--verbose"]) == 0
        out = capsys.readouterr().out
        assert "retrieved: []" in out

    def test_vanilla_needs_single_model(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["ask", "q", "--config", str(cfg),
                     "--pipeline", "vanilla"]) == 1

    def test_unknown_model_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["ask", "q", "--config", str(cfg),
                     "--pipeline", "mixture", "--models", "not-there"]) == 1

    def test_verbose_prints_scores_and_winner(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["ask", "Dara folds 4 cranes per day for 2 days.",
                     "--config", str(cfg), "--pipeline", "confident",
                     "--verbose"]) == 0
        out = capsys.readouterr().out
        assert "winner index" in out
        assert "self-certainty: raw=" in out


class TestEval:
    def test_full_run_writes_all_files(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg)]) == 0
        outdir = tmp_path / "out"
        report = json.loads((outdir / "report.json").read_text())
        assert report["vanilla_llm"]["accuracy"] is not None
        assert (outdir / "tables.txt").read_text()
        assert json.loads((outdir / "manifest.json").read_text())["seed"] == 7
        for metric in ("avg-log-p", "self-certainty", "gini", "entropy", "dp"):
            assert (outdir / f"cdf_{metric}.csv").exists()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg), "--out",
                     str(tmp_path / "r1")]) == 0
        assert main(["eval", "--config", str(cfg), "--out",
                     str(tmp_path / "r2")]) == 0
        for name in ["report.json", "tables.txt", "cdf_dp.csv",
                     "cdf_self-certainty.csv"]:
            a = (tmp_path / "r1" / name).read_bytes()
            b = (tmp_path / "r2" / name).read_bytes()
            assert a == b, f"{name} differs between reruns"

    def test_accuracy_cells_match_recount(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg)]) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        for mid, acc in report["vanilla_rag"]["per_model"].items():
            flags = [q["vanilla"][mid]["correct"] for q in report["questions"]]
            assert acc == pytest.approx(sum(flags) / len(flags))
        for metric, section in report["confident"].items():
            for tag, acc in section["per_combination"].items():
                flags = [q["confident"][tag][metric]["correct"]
                         for q in report["questions"]]
                assert acc == pytest.approx(sum(flags) / len(flags))

    def test_gold_required(self, tmp_path, capsys):
        cfg = write_config(tmp_path, gold_path=None)
        assert main(["eval", "--config", str(cfg)]) == 1

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"seeed": 3}))
        assert main(["eval", "--config", str(path)]) == 1
        assert "unknown key" in capsys.readouterr().err


class TestReport:
    def test_rerender_tables(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["eval", "--config", str(cfg)]) == 0
        capsys.readouterr()
        report_path = tmp_path / "out" / "report.json"
        assert main(["report", str(report_path)]) == 0
        out = capsys.readouterr().out
        assert "Vanilla LLM and vanilla RAG" in out
        rendered = (tmp_path / "out" / "tables.txt").read_text()
        assert out.strip().splitlines()[0] == rendered.strip().splitlines()[0]

    def test_missing_report(self, tmp_path, capsys):
        assert main(["report", str(tmp_path / "nope.json")]) == 1
