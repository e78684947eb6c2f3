import json
import math

import numpy as np
import pytest

from lieicp.cli import fmt, main, run_sweep
from lieicp.core import PointCloud
from lieicp.dataset import save_cloud

from conftest import blob


@pytest.fixture(scope="module")
def scenario_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scn")
    save_cloud(PointCloud(blob(600, seed=8, scale=0.07)), d / "cloud.ply")
    code = main(["scenario", "--in", str(d / "cloud.ply"), "--step", "3", "--angle", "45", "--axis", "y",
                 "--out", str(d / "out"), "--hole-radius", "0.03", "--noise-percent", "5", "--seed", "7"])
    assert code == 0
    return d / "out"


def test_scenario_files(scenario_dir):
    names = sorted(p.name for p in scenario_dir.iterdir())
    assert names == ["hole.json", "hole_source.xyz", "hole_target.xyz", "noise.json", "noise_source.xyz",
                     "noise_target.xyz", "original.json", "original_source.xyz", "original_target.xyz"]
    doc = json.loads((scenario_dir / "original.json").read_text())
    c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
    # ground truth undoes a +45 deg turn about y
    assert np.allclose(np.reshape(doc["ground_truth"]["R"], (3, 3)), [[c, 0, -s], [0, 1, 0], [s, 0, c]])
    assert json.loads((scenario_dir / "hole.json").read_text())["tag"] == "hole"


def test_scenario_is_deterministic(tmp_path, scenario_dir):
    cloud = scenario_dir.parent / "cloud.ply"
    for sub in ("a", "b"):
        assert main(["scenario", "--in", str(cloud), "--step", "3", "--out", str(tmp_path / sub),
                     "--noise-percent", "5", "--seed", "7"]) == 0
    for name in ("noise_source.xyz", "noise_target.xyz", "noise.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_register_zero_angle(tmp_path, scenario_dir):
    cloud = scenario_dir.parent / "cloud.ply"
    main(["scenario", "--in", str(cloud), "--step", "3", "--angle", "0", "--out", str(tmp_path / "z")])
    out = tmp_path / "runs"
    assert main(["register", "--manifest", str(tmp_path / "z" / "original.json"), "--algorithm", "ICP",
                 "--out", str(out), "--name", "r"]) == 0
    summary = json.loads((out / "r.json").read_text())
    assert summary["final_mrms"] < 1e-10
    assert summary["config"]["algorithm"] == "ICP"
    assert (out / "r.csv").read_text().splitlines()[0] == "iteration,mrms,w_m,matches"


def test_register_is_byte_deterministic(tmp_path, scenario_dir):
    args = ["register", "--manifest", str(scenario_dir / "original.json"), "--algorithm", "ICP-CTSF",
            "--k", "10", "--max-iterations", "15"]
    main(args + ["--out", str(tmp_path), "--name", "a"])
    main(args + ["--out", str(tmp_path), "--name", "b"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_manifest_config_precedence(tmp_path, scenario_dir):
    doc = json.loads((scenario_dir / "original.json").read_text())
    doc["config"] = {"max_iterations": 3, "tau": 0.2}
    for key in ("source_file", "target_file"):
        doc[key] = str(scenario_dir / doc[key])
    m = tmp_path / "m.json"
    m.write_text(json.dumps(doc))
    main(["register", "--manifest", str(m), "--algorithm", "ICP", "--tau", "0.1", "--out", str(tmp_path), "--name", "p"])
    cfg = json.loads((tmp_path / "p.json").read_text())["config"]
    assert cfg["max_iterations"] == 3 and cfg["tau"] == 0.1


def test_usage_errors_exit_2(tmp_path, scenario_dir, capsys):
    assert main([]) == 2
    assert main(["register", "--manifest", str(scenario_dir / "original.json"), "--algorithm", "BOGUS"]) == 2
    assert main(["register", "--manifest", str(scenario_dir / "original.json"), "--algorithm", "ICP",
                 "--tau", "1.5"]) == 2
    assert main(["sweep", "--manifest", str(scenario_dir / "original.json"), "--jobs", "0"]) == 2


def test_runtime_errors_exit_1(tmp_path):
    assert main(["register", "--manifest", str(tmp_path / "missing.json"), "--algorithm", "ICP"]) == 1
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2\n")
    assert main(["scenario", "--in", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_sweep_single_row(scenario_dir):
    text = run_sweep([scenario_dir / "original.json"], ["ICP"], [5.0], {})
    lines = text.splitlines()
    assert lines[0] == "strategy,scenario,manifest,algorithm,k,final_mrms,rotation_error_deg,iterations,status,best"
    assert len(lines) == 2 and lines[1].startswith("-,original,original.json,ICP,5,")


def test_sweep_records_failures_and_continues(tmp_path, scenario_dir):
    text = run_sweep([tmp_path / "nope.json", scenario_dir / "original.json"], ["ICP"], [5.0], {})
    rows = text.splitlines()[1:]
    assert len(rows) == 2
    assert any("error" in r for r in rows) and any(",ok," in r for r in rows)


def test_sweep_jobs_do_not_change_output(scenario_dir):
    args = ([scenario_dir / "original.json", scenario_dir / "hole.json"], ["ICP-CTSF", "ICP-LIE-0"], [10.0, 25.0],
            {"max_iterations": 8})
    assert run_sweep(*args, jobs=1) == run_sweep(*args, jobs=2)


def test_inspect_tensors(tmp_path, scenario_dir):
    out = tmp_path / "t.csv"
    assert main(["inspect-tensors", "--manifest", str(scenario_dir / "original.json"), "--k", "10",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[:7] == ["index", "x", "y", "z", "l1", "l2", "l3"]
    assert len(lines[0].split(",")) == 7 + 9 + 3
    assert len(lines) == 1 + 200


def test_fmt_fifteen_digits():
    assert fmt(0.010257717275893123) == "0.0102577172758931"
    assert fmt(3) == "3" and fmt(True) == "true" and fmt("x") == "x"
