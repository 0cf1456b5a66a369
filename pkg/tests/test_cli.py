import csv
import hashlib
import json

import numpy as np
import pytest

from patrolgrad.cli import main
from patrolgrad.scenario import AgentSpec, TargetSpec, bundled_configs, dump_scenario, make_mission


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", bundled_configs())
def test_simulate_every_bundled_config(name, tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", name, "--out-dir", tmp_path)
    assert code == 0
    assert out.startswith("J = ")
    for f in ("events.csv", "trajectories.csv", "sequences.csv", "manifest.json"):
        assert (tmp_path / f).exists()


def test_simulate_examples_path_resolves_to_bundled(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--config", "examples/square4.cfg", "--out-dir", tmp_path)
    assert code == 0


def test_reruns_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(capsys, "simulate", "--config", "counterexample2a5t", "--gradient", "--out-dir", d)[0] == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["artifacts"] == mb["artifacts"]
    for name in ma["artifacts"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert b"\r" not in (a / "events.csv").read_bytes()


def test_manifest_contents(tmp_path, capsys):
    run(capsys, "simulate", "--config", "onea2t", "--horizon", "30", "--out-dir", tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["subcommand"] == "simulate"
    assert m["config"] == "onea2t"
    assert m["parameters"]["horizon"] == 30.0
    assert m["duration_s"] >= 0
    for name, digest in m["artifacts"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest


def test_optimize_counterexample(tmp_path, capsys):
    code, out, _ = run(capsys, "optimize", "--config", "counterexample2a5t", "--iters", 300,
                       "--out-dir", tmp_path)
    assert code == 0
    th = rows(tmp_path / "theta_final.csv")
    diag = {}
    for r in th:
        if r["p"] == r["q"]:
            diag.setdefault(r["agent"], []).append(float(r["theta"]))
    assert all(max(v) > 1.0 for v in diag.values())
    cost = rows(tmp_path / "cost_trace.csv")
    assert len(cost) == 301
    assert "agent 2 diagonal" in out


def test_optimize_theta_trace(tmp_path, capsys):
    code, _, _ = run(capsys, "optimize", "--config", "onea2t", "--iters", 3, "--theta-trace",
                     "--out-dir", tmp_path)
    assert code == 0
    tr = rows(tmp_path / "theta_trace.csv")
    assert {r["l"] for r in tr} == {"0", "1", "2", "3"}
    assert len(rows(tmp_path / "visits.csv")) == 4


def test_gradcheck_random_seed(tmp_path, capsys):
    code, out, _ = run(capsys, "gradcheck", "--seed", 5, "--targets", 3, "--horizon", 25,
                       "--out-dir", tmp_path)
    assert code == 0
    table = rows(tmp_path / "gradcheck.csv")
    assert table and set(table[0]) == {"p", "q", "z", "ipa", "fd", "rel_error", "sequence_changed"}
    assert "max relative error" in out
    assert (tmp_path / "scenario.cfg").exists()
    worst = float(out.strip().split()[-1])
    assert worst <= 1e-2


def test_gradcheck_config_file(tmp_path, capsys):
    code, _, _ = run(capsys, "gradcheck", "--config", "onea2t", "--horizon", "20",
                     "--out-dir", tmp_path)
    assert code == 0
    assert not (tmp_path / "scenario.cfg").exists()


def test_dp_reduced_square(tmp_path, capsys):
    code, out, _ = run(capsys, "dp", "--config", "square4", "--horizon", 20, "--out-dir", tmp_path)
    assert code == 0
    text = (tmp_path / "dp_cost.txt").read_text()
    J = float(text.split()[1])
    assert J > 0
    roll = rows(tmp_path / "dp_policy_rollout.csv")
    assert len(roll) == 20


def test_dp_budget_exit(tmp_path, capsys):
    code, _, err = run(capsys, "dp", "--config", "square4", "--max-states", 1000, "--out-dir", tmp_path)
    assert code == 4
    assert "budget" in err
    assert not (tmp_path / "manifest.json").exists()


def test_analyze(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze-1a2t", "--rho", 0.3, "--cycles", 50, "--out-dir", tmp_path)
    assert code == 0
    spec = rows(tmp_path / "spectral.csv")
    assert len(spec) == 9
    assert "eig4_imag" in spec[0]
    cyc = rows(tmp_path / "grad_cycles.csv")
    assert len(cyc) == 51 and "engine_dR1_dth1" in cyc[0]
    line = next(l for l in out.splitlines() if l.startswith("equilibrium:"))
    assert np.allclose([float(v) for v in line.split()[1:]], [1, 0, 0, 1], atol=1e-10)


def test_analyze_heterogeneous_and_divergent(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze-1a2t", "--A1", 0.2, "--B1", 1.5, "--A2", 0.4, "--B2", 2,
                       "--grid", "0.1,0.2", "--cycles", 10, "--out-dir", tmp_path)
    assert code == 0
    assert len(rows(tmp_path / "spectral.csv")) == 2
    code, out, _ = run(capsys, "analyze-1a2t", "--rho", 0.6, "--cycles", 100, "--out-dir", tmp_path)
    assert code == 0
    assert "diverged" in out


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "no_such_file.cfg"],
    ["simulate", "--config", "square4", "--horizon", "-1"],
    ["optimize", "--config", "square4", "--gamma", "0.3"],
    ["dp", "--config", "square4", "--dt", "0"],
    ["analyze-1a2t", "--rho", "1.0"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    code, _, err = run(capsys, *argv, "--out-dir", tmp_path)
    assert code == 2
    assert "configuration error" in err


def test_bad_config_file_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("this is not a scenario\n")
    assert run(capsys, "simulate", "--config", bad, "--out-dir", tmp_path)[0] == 2


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 2


def test_singular_guard_exit_3(tmp_path, capsys):
    spec = make_mission(10, [TargetSpec(1, (0, 0), 2.0, 2.0, 5.0)], [], [AgentSpec(1, 1)], 1.0)
    cfg = tmp_path / "flat.cfg"
    cfg.write_text(dump_scenario(spec))
    code, _, err = run(capsys, "simulate", "--config", cfg, "--gradient", "--out-dir", tmp_path)
    assert code == 3
    assert "diagnostic" in err
    assert run(capsys, "optimize", "--config", cfg, "--out-dir", tmp_path / "o")[0] == 3
