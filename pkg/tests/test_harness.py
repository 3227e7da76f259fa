import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from orbitstat.arithmetic_groups import Family, GroupSpec, ball_count
from orbitstat.cli import main
from orbitstat.config import ConfigError, base_points, load_config
from orbitstat.harness import RunManifest, compare_runs, derived_seed, run, verify
from orbitstat.spaces import SpaceModel


def _cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_count_only_prints_ball_count(capsys):
    code, out, _ = _cli(capsys, "enum-ball", "--family", "sl2z", "--t", "2.0", "--count-only")
    assert code == 0
    assert out.strip() == str(ball_count(GroupSpec(Family.SL2Z), 2.0))


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "orbitstat.cli", "enum-ball", "--family", "sl2z", "--t", "1.0",
                          "--count-only"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip().isdigit()


@pytest.mark.parametrize("args,key", [
    (("enum-ball", "--family", "sl2z", "--t", "-1"), "'t'"),
    (("enum-ball", "--family", "gl3z", "--t", "1"), "'family'"),
    (("enum-ball", "--family", "sl2z"), "'t'"),
    (("growth", "--family", "sl2z", "--set", "t_grid=[3.0, 2.0]"), "'t_grid'"),
    (("volumes", "--stabilizer", "SO12", "--set", "t_grid=[2.0]", "--set", "samples=0"), "'samples'"),
    (("orbit", "--model", "punctured-plane", "--t", "2", "--set", "phi={kind='box', lo=[-1.0, -1.0], hi=[1.0, 1.0]}"),
     "'phi'"),
    (("growth", "--family", "sl2z", "--set", "t_grid=[2.0, 3.0]", "--set", "budget.max_elements=-5"),
     "'budget.max_elements'"),
])
def test_config_errors_name_the_key(capsys, args, key):
    code, _, err = _cli(capsys, *args)
    assert code == 2
    assert key in err


def test_unwritable_out(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = _cli(capsys, "enum-ball", "--family", "sl2z", "--t", "1.0", "--out", str(blocker / "sub"))
    assert code == 2 and "'out'" in err


def test_runtime_error_exit_code(capsys, tmp_path):
    code, _, err = _cli(capsys, "growth", "--family", "sl2z", "--set", "t_grid=[2.0, 30.0]",
                        "--out", str(tmp_path / "r"))
    assert code == 3 and "runtime error" in err


def test_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "c.toml"
    cfg_file.write_text('experiment = "growth"\nfamily = "sl2z"\nt_grid = {start = 1.0, stop = 2.0, step = 0.5}\n')
    cfg = load_config(cfg_file, ["seed=7"])
    assert cfg.t_grid == [1.0, 1.5, 2.0]
    assert cfg["seed"] == 7
    assert cfg.hash() == load_config(cfg_file, ["seed=7"]).hash()
    assert cfg.hash() != load_config(cfg_file, ["seed=8"]).hash()
    with pytest.raises(ConfigError) as err:
        load_config(cfg_file, experiment="volumes")
    assert err.value.key == "experiment"
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.toml")
    assert err.value.key == "config"


def test_base_points_seeded():
    model = SpaceModel("de-sitter-2")
    a = base_points(model, load_config(None, ["seed=3"], experiment="orbit",
                                       extra={"model": "de-sitter-2", "t": 2.0,
                                              "phi": {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}}))
    b = base_points(model, load_config(None, ["seed=3"], experiment="orbit",
                                       extra={"model": "de-sitter-2", "t": 2.0,
                                              "phi": {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}}))
    assert np.array_equal(a, b) and a.shape == (10, 3)


def test_derived_seeds_distinct():
    seeds = {derived_seed(0, 1, k) for k in range(100)}
    assert len(seeds) == 100 and all(0 <= s < 2**63 for s in seeds)


def _growth(tmp_path, name, *extra):
    cfg = load_config(None, ["t_grid=[1.0, 2.0, 3.0]", *extra], experiment="growth", extra={"family": "sl2zi"})
    return run(cfg, tmp_path / name)


def test_run_manifest_and_verify(tmp_path):
    m = _growth(tmp_path, "a")
    loaded = RunManifest.load(tmp_path / "a")
    assert loaded.config_hash == m.config_hash
    assert set(loaded.outputs) >= {"growth.csv", "config.resolved.json"}
    assert verify(tmp_path / "a") == []
    with open(tmp_path / "a" / "growth.csv", "a") as fh:
        fh.write("tampered\n")
    assert verify(tmp_path / "a") == ["growth.csv"]


def test_compare_identical_runs_empty(tmp_path, capsys):
    _growth(tmp_path, "a")
    _growth(tmp_path, "b", "workers=2")
    rep = compare_runs(tmp_path / "a", tmp_path / "b")
    assert rep.empty
    code, out, _ = _cli(capsys, "compare", str(tmp_path / "a"), str(tmp_path / "b"))
    assert code == 0 and "no differences" in out


def test_compare_flags_changes(tmp_path):
    _growth(tmp_path, "a")
    _growth(tmp_path, "b")
    p = tmp_path / "b" / "growth.csv"
    rows = list(csv.reader(open(p)))
    rows[1][-1] = str(int(rows[1][-1]) + 1)
    with open(p, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    rep = compare_runs(tmp_path / "a", tmp_path / "b")
    assert len(rep.flagged) == 1 and rep.flagged[0].column == "ball_count"


def test_compare_mc_seeds_within_stderr(tmp_path):
    def vol(name, seed):
        cfg = load_config(None, ["t_grid=[2.0, 3.0]", "samples=200000", f"seed={seed}"], experiment="volumes",
                          extra={"stabilizer": "SL2R"})
        return run(cfg, tmp_path / name)

    vol("a", 1)
    vol("b", 1)
    vol("c", 2)
    assert compare_runs(tmp_path / "a", tmp_path / "b").empty
    rep = compare_runs(tmp_path / "a", tmp_path / "c")
    assert not rep.empty and not rep.flagged


def test_compare_rejects_different_experiments(tmp_path):
    _growth(tmp_path, "a")
    cfg = load_config(None, [], experiment="enum-ball", extra={"family": "sl2z", "t": 1.0})
    run(cfg, tmp_path / "b")
    with pytest.raises(ValueError):
        compare_runs(tmp_path / "a", tmp_path / "b")


@pytest.mark.parametrize("exp,extra,sets,files", [
    ("enum-ball", {"family": "sl2z", "t": 1.5}, [], {"ball.txt"}),
    ("theta", {"stabilizer": "SO12", "t": 6.0}, ["r1=[0.0, 1.0]", "r2=[0.0]", "k_nodes=64"], {"theta.csv"}),
    ("orbit", {"model": "projective-line", "t": 3.0}, ["phi={kind='box', lo=[0.2], hi=[1.2]}", "n_points=2"],
     {"reports.csv", "report.json"}),
    ("ratio", {"model": "de-sitter-2", "t": 4.0},
     ["phi={kind='box', lo=[-1.0, 0.0], hi=[0.0, 3.0]}", "psi={kind='box', lo=[0.0, 3.2], hi=[1.0, 6.2]}",
      "n_points=2"], {"reports.csv", "report.json"}),
    ("report", {"model": "affine-solvable"}, ["t_grid=[4.0, 6.0, 8.0, 10.0, 12.0, 14.0]",
                                              "phi={kind='box', lo=[0.0, 0.0], hi=[1.0, 1.0]}", "n_points=2"],
     {"reports.csv", "report.json"}),
])
def test_experiments_run(tmp_path, exp, extra, sets, files):
    cfg = load_config(None, sets, experiment=exp, extra=extra)
    m = run(cfg, tmp_path / "r")
    assert files <= set(m.outputs)
    assert verify(tmp_path / "r") == []
    json.loads((tmp_path / "r" / "manifest.json").read_text())


def test_enum_ball_dump(tmp_path):
    cfg = load_config(None, [], experiment="enum-ball", extra={"family": "sl2z", "t": 1.0})
    m = run(cfg, tmp_path / "r")
    lines = (tmp_path / "r" / "ball.txt").read_text().splitlines()
    assert lines[0].split()[0] == "sl2z" and int(lines[0].split()[2]) == m.summary["count"] == len(lines) - 1


def test_budget_enforced(tmp_path, capsys):
    code, _, err = _cli(capsys, "orbit", "--model", "punctured-plane", "--t", "5.0",
                        "--set", "phi={kind='box', lo=[0.5, 0.5], hi=[1.0, 1.0]}",
                        "--set", "budget.max_elements=1000", "--out", str(tmp_path / "r"))
    assert code == 3 and "budget" in err
