import json
import subprocess
import sys
from types import SimpleNamespace

import pytest

from scenesearch import cli


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    events = [json.loads(line) for line in out.out.splitlines() if line.strip()]
    return code, events, out.err


@pytest.fixture(scope="module")
def one_object_scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    assert cli.main(["synth", "--objects", "block", "--seed", "4", "--out", str(d)]) == 0
    return d / "scene.pcd"


def test_models_then_synth_with_model_dir(tmp_path, capsys):
    code, events, _ = run(capsys, "models", "--out", tmp_path / "m")
    assert code == 0 and events[0]["event"] == "models"
    assert (tmp_path / "m" / "models.json").exists()
    code, events, _ = run(capsys, "synth", "--models", tmp_path / "m", "--objects", "can", "--out", tmp_path / "s")
    assert code == 0
    assert events[-1]["required"] == ["can"]
    assert (tmp_path / "s" / "scene.pcd").exists() and (tmp_path / "s" / "scene.json").exists()


def test_solve_and_eval_round_trip(one_object_scene, tmp_path, capsys):
    code, events, _ = run(capsys, "solve", "--scene", one_object_scene, "--no-icp", "--out", tmp_path)
    assert code == 0
    kinds = {e["event"] for e in events}
    assert {"expand", "done", "result"} <= kinds
    assert events[-1]["cost"] == 0
    code, events, _ = run(capsys, "eval", "--poses", tmp_path / "poses.json", "--truth", one_object_scene.with_suffix(".json"), "--out", tmp_path)
    assert code == 0
    assert events[-1]["objects"] == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["histogram"]


def test_bad_parameter_exits_2(one_object_scene, capsys):
    code, _, err = run(capsys, "solve", "--scene", one_object_scene, "--w", "0.5")
    assert code == 2
    assert "error" in err


def test_bad_environment_exits_2(one_object_scene, capsys, monkeypatch):
    monkeypatch.setenv("SCENESEARCH_DELTA", "lots")
    code, _, _ = run(capsys, "solve", "--scene", one_object_scene)
    assert code == 2


def test_missing_side_file_exits_2(tmp_path, capsys):
    (tmp_path / "x.pcd").write_text("FIELDS x y z\nPOINTS 1\nDATA ascii\n0 0 0\n")
    code, _, _ = run(capsys, "solve", "--scene", tmp_path / "x.pcd")
    assert code == 2
    code, _, _ = run(capsys, "solve", "--scene", tmp_path / "nope.pcd")
    assert code == 2


def test_bad_spec_exits_2(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"objects": [], "trials": 1}))
    code, _, _ = run(capsys, "experiment", "--spec", spec)
    assert code == 2
    spec.write_text(json.dumps({"objects": ["can"], "colour": "red"}))
    code, _, _ = run(capsys, "experiment", "--spec", spec)
    assert code == 2


def test_tiny_time_limit_exits_4(one_object_scene, capsys):
    code, events, _ = run(capsys, "solve", "--scene", one_object_scene, "--time-limit", "1e-9", "--no-icp")
    assert code == 4
    assert events[-1]["cost"] is None


def test_exit_code_mapping():
    assert cli._solve_exit(SimpleNamespace(goal=object(), timed_out=True)) == 0
    assert cli._solve_exit(SimpleNamespace(goal=None, timed_out=True)) == 4
    assert cli._solve_exit(SimpleNamespace(goal=None, timed_out=False)) == 3


def test_infeasible_scene_exits_3(one_object_scene, capsys, monkeypatch):
    # an open list that empties without a goal, as on a grid where no order is monotone
    empty = SimpleNamespace(goal=None, cost=None, poses=[], timed_out=False)
    monkeypatch.setattr(cli, "solve", lambda task, cfg, on_event=None: empty)
    code, events, _ = run(capsys, "solve", "--scene", one_object_scene, "--no-icp")
    assert code == 3
    assert events[-1] == {"event": "result", "cost": None, "poses": []}


def test_experiment_writes_artifacts(tmp_path, capsys):
    code, events, _ = run(capsys, "experiment", "--objects", "block", "--trials", "2", "--no-icp", "--out", tmp_path)
    assert code == 0
    assert [e["trial"] for e in events if e["event"] == "trial"] == [0, 1]
    assert events[-1]["event"] == "report"
    for name in ("results.json", "histogram.csv", "timing.json"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "histogram.csv").read_text().splitlines()[0] == "dt_m,dtheta_deg,correct,total"


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "scenesearch.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "solve" in out.stdout
