from __future__ import annotations

import json

import pytest

from subgoal_avi.cli import main, parse_seeds
from subgoal_avi.experiments import read_curve

FAST = ["--ars-iterations", "1", "--horizon", "8", "--directions", "4", "--top-b", "2",
        "--eval-episodes", "3", "--induce-episodes", "3", "--m-starts", "3", "--pool-capacity", "20"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    rc = main(["train", "--env", "nine_rooms", "--regions", "doorways", "--iterations", "3",
               "--seeds", "0,1", "--out", str(out), *FAST])
    assert rc == 0
    return out


def test_train_writes_curves_and_checkpoints(trained):
    for seed in (0, 1):
        d = trained / f"seed_{seed}"
        assert len(read_curve(d / "curve.csv")) == 3
        assert (d / "iter_001" / "policy.txt").exists()
        assert (d / "final" / "options" / "options.json").exists()
    assert len(read_curve(trained / "curve_mean.csv")) == 3


def test_eval_is_deterministic(trained, capsys):
    args = ["eval", str(trained / "seed_0" / "final"), "--episodes", "5", "--seed", "3"]
    assert main(args) == 0
    first = json.loads(capsys.readouterr().out)
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out) == first
    assert 0.0 <= first["success_probability"] <= 1.0


def test_transfer_reports_estimation_steps(trained, capsys, tmp_path):
    rc = main(["transfer", str(trained / "seed_0" / "final"), "--env", "nine_rooms_obstacle",
               "--grid", "2", "--episodes", "3", "--out", str(tmp_path)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["plan"][0] == 3 and out["estimation_steps"] > 0
    assert (tmp_path / "tables.txt").exists()


def test_transfer_with_new_endpoints(trained, capsys):
    rc = main(["transfer", str(trained / "seed_0" / "final"), "--env", "nine_rooms", "--start", "1",
               "--goal", "9", "--grid", "2", "--episodes", "2"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["plan"][0] == 1


def test_eval_rejects_mismatched_artifacts(trained, tmp_path):
    import shutil
    bad = tmp_path / "bad"
    shutil.copytree(trained / "seed_0" / "final", bad)
    (bad / "policy.txt").write_text("region option source target\n3 0 0 1\n")
    assert main(["eval", str(bad)]) == 2
    assert main(["eval", str(tmp_path / "missing")]) == 2


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\niterations = 1\nseeds = 0\n[env]\nroom_size = 8\n")
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--out", str(out), *FAST]) == 0
    assert len(read_curve(out / "seed_0" / "curve.csv")) == 1
    cfg.write_text("[run]\nwidgets = 3\n")
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 2


def test_bad_inputs_exit_nonzero(tmp_path):
    assert main(["train", "--iterations", "0", "--out", str(tmp_path)]) == 2
    assert main(["train", "--regions", "file", "--spec-file", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path)]) == 2
    assert main(["bound", "--n-regions", "3", "--eps-t", "-1", "--eps-r", "0"]) == 2


def test_bound_command(capsys):
    assert main(["bound", "--n-regions", "3", "--eps-t", "0.02", "--eps-r", "0.05", "--gamma", "0.9"]) == 0
    out = capsys.readouterr().out
    assert "16.25" in out and "holds: yes" in out
    assert main(["bound", "--n-regions", "14", "--eps-t", "0.005", "--eps-r", "0", "--gamma", "0.95"]) == 0
    assert "inf" in capsys.readouterr().out


def test_regions_command(tmp_path, capsys):
    p = tmp_path / "spec.json"
    assert main(["regions", "--kind", "random", "--n", "6", "--k", "2", "--out", str(p)]) == 0
    assert "8 regions" in capsys.readouterr().out
    assert main(["regions", "--validate", str(p)]) == 0


def test_parse_seeds():
    assert parse_seeds("0-2,5") == [0, 1, 2, 5]
    assert parse_seeds(3) == [3]
