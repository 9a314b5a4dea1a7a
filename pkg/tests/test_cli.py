"""
Tests for the invseg command line.
"""
import json

import pytest

from src.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from src.data import Split, read_manifest
from src.tensor import Precision
from src.training import CheckResult, SuiteReport

TINY_CONFIG = """
steps=1
precision=f64
prefetch=false
model.num_classes=3
model.levels=2
model.base_width=4
model.blocks_per_level=1
model.patch_size=16
sampler.patch_size=16
data.held_out_patches=0
"""


def _run(*argv):
    return main(["--no-progress", *argv])


class TestUsage:
    def test_help(self, capsys):
        assert _run("--help") == EXIT_OK
        assert "profile-memory" in capsys.readouterr().out

    def test_unknown_command(self):
        assert _run("frobnicate") == EXIT_USAGE

    def test_bad_block_list(self):
        assert _run("profile-memory", "--blocks", "1,x") == EXIT_USAGE

    def test_missing_config(self, tmp_path):
        assert _run("train", "--config", str(tmp_path / "absent.cfg")) == EXIT_USAGE

    def test_invalid_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(TINY_CONFIG, encoding="utf-8")
        assert _run("train", "--config", str(path), "--set", "model.depth=2") == EXIT_USAGE


class TestCommands:
    def test_gen_data(self, tmp_path, capsys):
        out = tmp_path / "ds"
        code = _run(
            "gen-data", "--out", str(out), "--num-volumes", "2", "--size", "16",
            "--num-classes", "3", "--test-fraction", "0.5",
        )
        assert code == EXIT_OK
        manifest = read_manifest(out)
        assert len(manifest.entries) == 2
        assert sum(e.split is Split.TEST for e in manifest.entries) == 1
        assert "Wrote 2 volumes" in capsys.readouterr().out

    def test_train_then_eval(self, tmp_path, capsys):
        data = tmp_path / "ds"
        assert _run(
            "gen-data", "--out", str(data), "--num-volumes", "2", "--size", "16",
            "--num-classes", "3", "--test-fraction", "0.5",
        ) == EXIT_OK

        config = tmp_path / "tiny.cfg"
        config.write_text(TINY_CONFIG + f"data.path={data}\n", encoding="utf-8")
        run_dir = tmp_path / "run"
        assert _run("train", "--config", str(config), "--out", str(run_dir)) == EXIT_OK
        assert (run_dir / "train.cfg").exists()
        assert json.loads((run_dir / "train_report.json").read_text())["steps"][0]["step"] == 1

        report_path = tmp_path / "eval.json"
        code = _run(
            "eval", "--checkpoint", str(run_dir / "ckpt_1.ivparams"), "--data", str(data),
            "--out", str(report_path),
        )
        assert code == EXIT_OK
        payload = json.loads(report_path.read_text())
        assert len(payload["classes"]) == 2
        assert "mean" in capsys.readouterr().out

    def test_eval_missing_checkpoint(self, tmp_path):
        config = tmp_path / "train.cfg"
        config.write_text(TINY_CONFIG, encoding="utf-8")
        code = _run("eval", "--checkpoint", str(tmp_path / "ckpt_9.ivparams"), "--data", str(tmp_path))
        assert code == EXIT_USAGE

    def test_profile_memory_chain(self, tmp_path, capsys):
        out = tmp_path / "memory.json"
        code = _run(
            "profile-memory", "--arch", "chain", "--blocks", "1,2", "--width", "4", "--patch", "4",
            "--out", str(out),
        )
        assert code == EXIT_OK
        rows = json.loads(out.read_text())["rows"]
        assert set(rows) == {"chain L=1", "chain L=2"}
        assert set(rows["chain L=2"]) == {"store", "checkpoint", "invertible"}
        assert "chain L=2" in capsys.readouterr().out

    def test_verify_subset(self, tmp_path):
        out = tmp_path / "verify.json"
        assert _run("verify", "--suite", "shuffle", "--out", str(out)) == EXIT_OK
        assert json.loads(out.read_text())["checks"]

    def test_verify_failure_exit_code(self, mocker):
        failing = SuiteReport(precision=Precision.F64, checks=[CheckResult(name="x", passed=False)])
        mocked = mocker.patch("src.cli.run_verification", return_value=failing)
        assert _run("verify", "--precision", "f32") == EXIT_FAILURE
        assert mocked.call_args.args[0] is Precision.F32

    def test_unexpected_error_exit_code(self, mocker):
        mocker.patch("src.cli.run_verification", side_effect=RuntimeError("boom"))
        assert _run("verify") == EXIT_FAILURE


@pytest.mark.slow
def test_profile_memory_models(capsys):
    assert _run("profile-memory", "--levels", "2", "--width", "4", "--blocks", "1", "--patch", "16") == EXIT_OK
    out = capsys.readouterr().out
    assert "fully_invres b=1" in out
