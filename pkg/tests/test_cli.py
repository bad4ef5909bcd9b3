import json
import subprocess
import sys

import pytest

from timeslice.cli import build_parser, main


def write_config(tmp_path, **cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


BOUNDED = dict(n=512, box=12.0, hbars=[1.0, 0.25], taus=[0.4], ps=[2.0, 4.0])


def test_parser_lists_every_subcommand():
    sub = build_parser()._subparsers._group_actions[0]
    assert set(sub.choices) == {"converge", "bounded", "residual", "gabor", "sharpness", "flow-dump", "table-dump"}


def test_bounded_pass_writes_outputs(tmp_path):
    out = tmp_path / "run"
    code = main(["bounded", "--config", write_config(tmp_path, **BOUNDED), "--out", str(out), "--threads", "2"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["config"]["threads"] == 2
    assert (out / "bounded.csv").exists()


def test_same_seed_gives_identical_csv(tmp_path):
    cfg = write_config(tmp_path, n=256, box=6.0, t=0.5, radius=1.0)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["flow-dump", "--config", cfg, "--out", str(a), "--seed", "7"]) == 0
    assert main(["flow-dump", "--config", cfg, "--out", str(b), "--seed", "7"]) == 0
    assert (a / "flow.csv").read_bytes() == (b / "flow.csv").read_bytes()
    assert json.loads((a / "summary.json").read_text())["config"]["seed"] == 7


def test_bad_config_exit_code(tmp_path):
    assert main(["bounded", "--config", write_config(tmp_path, hbar=[1.0]), "--out", str(tmp_path)]) == 3
    assert main(["bounded", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3


def test_guard_abort_is_recorded(tmp_path):
    # the translated Gaussian at lambda = 12 leaves a box of half-width 10
    cfg = write_config(tmp_path, n=1024, box=10.0, lambdas=[2.0, 4.0, 12.0])
    assert main(["sharpness", "--config", cfg, "--out", str(tmp_path)]) == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["aborted"] == "guard" and not summary["passed"]


def test_failing_criterion_exit_code(tmp_path):
    # tameness fails this close to the first focal time of the oscillator
    cfg = write_config(tmp_path, n=64, box=3.0, t=1.55)
    assert main(["table-dump", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "timeslice.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "flow-dump" in proc.stdout
    with pytest.raises(SystemExit):
        build_parser().parse_args(["nope"])
