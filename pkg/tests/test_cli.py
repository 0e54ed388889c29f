import csv
import json
from pathlib import Path

import pytest

from infip.cli import main
from infip.similarity import validate_report_dict

FAST_TRAIN = ["--synthetic", "--train-size", "300", "--test-size", "120", "--epochs", "2"]


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train") / "m1"
    assert run("train", *FAST_TRAIN, "--seed", "1", "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def extracted(trained, tmp_path_factory):
    out = tmp_path_factory.mktemp("extract") / "fp1"
    assert (
        run(
            "extract", "--model", trained / "model.infm", "--synthetic",
            "--test-size", "120", "--n", "30", "--seed", "1", "--out", out,
        )
        == 0
    )
    return out


class TestTrain:
    def test_deterministic_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("train", *FAST_TRAIN, "--seed", "3", "--out", a) == 0
        assert run("train", *FAST_TRAIN, "--seed", "3", "--out", b) == 0
        assert (a / "model.infm").read_bytes() == (b / "model.infm").read_bytes()
        assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()

    def test_metrics_written(self, trained):
        metrics = json.loads((trained / "metrics.json").read_text())
        assert 0.0 <= metrics["test_accuracy"] <= 1.0
        assert metrics["model_hash"]

    def test_invalid_dataset_dir_fails(self, tmp_path, capsys):
        rc = run("train", "--dataset", tmp_path / "nope", "--out", tmp_path / "out")
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_needs_a_data_source(self, tmp_path, capsys):
        assert run("train", "--out", tmp_path / "out") == 1
        assert "--dataset or --synthetic" in capsys.readouterr().err


class TestExtract:
    def test_deterministic_directories(self, trained, tmp_path):
        args = ["extract", "--model", trained / "model.infm", "--synthetic",
                "--test-size", "120", "--n", "20", "--seed", "2"]
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_low_lambda_flagged(self, trained, tmp_path, capsys):
        assert (
            run("extract", "--model", trained / "model.infm", "--synthetic",
                "--test-size", "120", "--n", "10", "--lambda", "200", "--out", tmp_path / "fp")
            == 0
        )
        assert "low visibility" in capsys.readouterr().out

    def test_n_larger_than_dataset_fails(self, trained, tmp_path, capsys):
        rc = run("extract", "--model", trained / "model.infm", "--synthetic",
                 "--test-size", "120", "--n", "500", "--out", tmp_path / "fp")
        assert rc == 1
        assert "exceeds" in capsys.readouterr().err

    def test_reusing_keys_gives_same_key_hash(self, trained, extracted, tmp_path):
        out2 = tmp_path / "fp2"
        assert (
            run("extract", "--model", trained / "model.infm", "--keys", extracted / "keys",
                "--out", out2)
            == 0
        )
        m1 = json.loads((extracted / "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m1["key_set_hash"] == m2["key_set_hash"]
        assert tree_bytes(extracted) == tree_bytes(out2)


class TestVerify:
    def test_self_verification(self, extracted, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        assert run("verify", extracted, extracted, "--out", report_path) == 0
        doc = json.loads(report_path.read_text())
        validate_report_dict(doc)
        assert doc["assim"] == 1.0
        assert doc["decision"] == "pirated"
        assert "pirated" in capsys.readouterr().out

    def test_plot_written(self, extracted, tmp_path):
        report_path = tmp_path / "report.json"
        assert run("verify", extracted, extracted, "--out", report_path, "--plot") == 0
        assert (tmp_path / "report.png").is_file()

    def test_mismatched_key_sets_fail(self, trained, extracted, tmp_path, capsys):
        other = tmp_path / "fp_other"
        assert (
            run("extract", "--model", trained / "model.infm", "--synthetic",
                "--test-size", "120", "--n", "30", "--seed", "99", "--out", other)
            == 0
        )
        rc = run("verify", extracted, other, "--out", tmp_path / "r.json")
        assert rc == 1
        assert "key instance sets" in capsys.readouterr().err


class TestAttack:
    def test_prune_then_verify_stays_pirated(self, trained, extracted, tmp_path):
        attacked = tmp_path / "pruned"
        assert (
            run("attack", "--model", trained / "model.infm", "--attack", "prune",
                "--prune-rate", "0.4", "--out", attacked)
            == 0
        )
        fp2 = tmp_path / "fp2"
        assert (
            run("extract", "--model", attacked / "model.infm", "--keys", extracted / "keys",
                "--out", fp2)
            == 0
        )
        report_path = tmp_path / "report.json"
        assert run("verify", extracted, fp2, "--out", report_path) == 0
        doc = json.loads(report_path.read_text())
        assert doc["assim"] > 0.85
        assert doc["decision"] == "pirated"

    def test_finetune_zero_epochs_identical_fingerprints(self, trained, extracted, tmp_path):
        attacked = tmp_path / "ft0"
        assert (
            run("attack", "--model", trained / "model.infm", "--attack", "finetune",
                "--epochs", "0", "--synthetic", "--data-size", "100", "--out", attacked)
            == 0
        )
        fp2 = tmp_path / "fp2"
        assert (
            run("extract", "--model", attacked / "model.infm", "--keys", extracted / "keys",
                "--out", fp2)
            == 0
        )
        report_path = tmp_path / "r.json"
        assert run("verify", extracted, fp2, "--out", report_path) == 0
        assert json.loads(report_path.read_text())["assim"] == 1.0

    def test_overwrite_records_watermark_accuracy(self, trained, tmp_path):
        attacked = tmp_path / "wm"
        assert (
            run("attack", "--model", trained / "model.infm", "--attack", "overwrite",
                "--synthetic", "--data-size", "300", "--epochs", "2",
                "--trigger-count", "40", "--out", attacked)
            == 0
        )
        metrics = json.loads((attacked / "metrics.json").read_text())
        assert "watermark_accuracy" in metrics

    def test_attack_config_file(self, trained, tmp_path):
        cfg = tmp_path / "spec.json"
        cfg.write_text(json.dumps({"prune_rate": 0.2}))
        out = tmp_path / "cfg_attack"
        assert (
            run("attack", "--model", trained / "model.infm", "--attack", "prune",
                "--attack-config", cfg, "--out", out)
            == 0
        )
        assert json.loads((out / "metrics.json").read_text())["prune_rate"] == 0.2

    def test_unknown_attack_kind_is_usage_error(self, trained, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("attack", "--model", trained / "model.infm", "--attack", "steal",
                "--out", tmp_path / "x")
        assert exc.value.code == 2

    def test_lineage_recorded(self, trained, tmp_path):
        from infip.modelio import load_model

        out = tmp_path / "pr"
        assert (
            run("attack", "--model", trained / "model.infm", "--attack", "prune",
                "--prune-rate", "0.3", "--out", out)
            == 0
        )
        assert any("prune" in note for note in load_model(out / "model.infm").lineage)


class TestSweep:
    def test_lambda_sweep_outputs(self, trained, tmp_path):
        out = tmp_path / "sweep"
        assert (
            run("sweep", "--model", trained / "model.infm", "--synthetic",
                "--test-size", "120", "--param", "lambda", "--values", "1000,5000",
                "--attacks", "none,prune", "--n", "20", "--seed", "2", "--out", out)
            == 0
        )
        with open(out / "sweep.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        none_rows = [r for r in rows if r["attack"] == "none"]
        assert len(none_rows) == 2
        assert all(float(r["assim"]) == 1.0 for r in none_rows)
        assert (out / "sweep_lambda.png").is_file()
        assert (out / "montage_none_lambda1000.pgm").is_file()
        assert (out / "montage_prune_lambda5000.pgm").is_file()

    def test_sweep_deterministic(self, trained, tmp_path):
        args = ["sweep", "--model", trained / "model.infm", "--synthetic",
                "--test-size", "120", "--param", "lambda", "--values", "5000",
                "--attacks", "none", "--n", "10", "--seed", "2"]
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_colorize_writes_png_montages(self, trained, tmp_path):
        out = tmp_path / "color"
        assert (
            run("sweep", "--model", trained / "model.infm", "--synthetic",
                "--test-size", "120", "--param", "lambda", "--values", "5000",
                "--attacks", "none", "--n", "10", "--seed", "2", "--colorize", "--out", out)
            == 0
        )
        assert (out / "montage_none_lambda5000.png").is_file()

    def test_empty_grid_is_an_error(self, trained, tmp_path, capsys):
        rc = run("sweep", "--model", trained / "model.infm", "--synthetic",
                 "--param", "lambda", "--values", " ", "--attacks", "none",
                 "--out", tmp_path / "x")
        assert rc == 1
        assert "at least one" in capsys.readouterr().err

    def test_unknown_attack_rejected(self, trained, tmp_path, capsys):
        rc = run("sweep", "--model", trained / "model.infm", "--synthetic",
                 "--param", "lambda", "--values", "5000", "--attacks", "teleport",
                 "--out", tmp_path / "x")
        assert rc == 1
        assert "unknown attack" in capsys.readouterr().err


@pytest.fixture(scope="module")
def converged_model_file(model_a, tmp_path_factory):
    from infip.modelio import save_model

    path = tmp_path_factory.mktemp("vis") / "model.infm"
    save_model(model_a, path)
    return path


class TestVisibilityFlag:
    def test_lambda_1000_flagged(self, converged_model_file, tmp_path, capsys):
        rc = run("extract", "--model", converged_model_file, "--synthetic", "--n", "50",
                 "--lambda", "1000", "--seed", "1", "--out", tmp_path / "fp")
        assert rc == 0
        assert "low visibility" in capsys.readouterr().out

    def test_default_lambda_not_flagged(self, converged_model_file, tmp_path, capsys):
        rc = run("extract", "--model", converged_model_file, "--synthetic", "--n", "50",
                 "--seed", "1", "--out", tmp_path / "fp")
        assert rc == 0
        assert "low visibility" not in capsys.readouterr().out


class TestThreadsEnv:
    def test_invalid_thread_count_rejected(self, monkeypatch):
        from infip.fingerprint import worker_count

        monkeypatch.setenv("INFIP_THREADS", "lots")
        with pytest.raises(ValueError, match="INFIP_THREADS"):
            worker_count()

    def test_thread_count_honored(self, monkeypatch):
        from infip.fingerprint import worker_count

        monkeypatch.setenv("INFIP_THREADS", "2")
        assert worker_count() == 2
