import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from yosida_sei import cli
from yosida_sei import config as C
from yosida_sei import verify as V
from yosida_sei.operators import Check

FAST = """\
schema_version: 1
grid: {d: 1, n: 16}
model:
  operator: porous_media
  p: 1.5
  graph: {type: power, p: 1.5, nu: 0.0}
noise: {coeffs: [0.02, 0.02]}
initial: {kind: sine, amplitude: 0.2}
simulation: {T: 0.3, dt: 0.002, mu: 0.001, N: 4, stride: 10, seed: 5}
extinction: {N: 100, floor: 0.5}
sweep: {mus: [0.1, 0.01, 0.001], N: 4}
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(FAST)
    return p


def test_config_defaults_and_round_trip():
    cfg = C.load(FAST)
    assert cfg.simulation.seed == 5 and cfg.grid.n == 16
    assert C.load(C.dump(cfg)) == cfg
    assert C.load("") == C.RunConfig()


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 10), st.integers(2, 64), st.sampled_from(["implicit", "explicit"]),
       st.lists(st.floats(0, 1), max_size=3), st.integers(0, 2**31))
def test_config_round_trip_property(T, n, scheme, coeffs, seed):
    text = C.dump(C.RunConfig.model_validate({
        "grid": {"n": n}, "noise": {"coeffs": coeffs},
        "simulation": {"T": T, "dt": T / 10, "scheme": scheme, "seed": seed}}))
    once = C.load(text)
    assert C.load(C.dump(once)) == once


def test_config_errors_carry_locations():
    with pytest.raises(C.ConfigError, match="bogus.*line 2, column"):
        C.load("schema_version: 1\nbogus: 1\n")
    with pytest.raises(C.ConfigError, match=r"grid\.n.*line 4"):
        C.load("schema_version: 1\ngrid:\n  d: 1\n  n: 1\n")
    with pytest.raises(C.ConfigError, match="line 1, column 19"):
        C.load("grid: {d: 1, n: [1}")
    with pytest.raises(C.ConfigError, match="schema_version"):
        C.load("schema_version: 7\n")
    with pytest.raises(C.ConfigError, match="graph type"):
        C.load("model: {graph: {type: nope}}\n")


def test_config_builds_simulation():
    sim = C.load(FAST).build_sim()
    assert sim.operator.kind == "porous_media" and sim.noise.K == 2
    np.testing.assert_allclose(sim.x, 0.2 * sim.operator.grid.sine_mode())
    assert sim.eps == pytest.approx(1e-6 * sim.operator.triple.norm_H(sim.x))


def test_resolve_table(capsys):
    assert cli.main(["resolve", "--graph", "{type: sign}", "--s", "3", "0.5", "--lam", "1", "--alpha", "2"]) == 0
    rows = [ln.split() for ln in capsys.readouterr().out.splitlines()[2:]]
    assert float(rows[0][1]) == pytest.approx(2.0, abs=1e-12)
    assert float(rows[1][1]) == 0.0 and float(rows[1][2]) == pytest.approx(0.5)
    assert cli.main(["resolve", "--graph", "{type: linear, slope: 1}", "--s", "1", "--lam", "0.25"]) == 0
    row = capsys.readouterr().out.splitlines()[2].split()
    assert float(row[1]) == pytest.approx(0.8, abs=1e-12)


def test_resolve_reports_parse_position(capsys):
    assert cli.main(["resolve", "--graph", "{type: power, p: [1.5", "--s", "1", "--lam", "1"]) == 2
    assert "line 1, column" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert cli.main([]) == 2
    assert cli.main(["simulate", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("simulation: {T: -1}\n")
    assert cli.main(["simulate", str(bad)]) == 2
    assert "simulation.T" in capsys.readouterr().err


def test_simulate_outputs_are_byte_identical(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", str(cfg_file), "--out", str(a), "--threads", "1"]) == 0
    assert cli.main(["simulate", str(cfg_file), "--out", str(b), "--threads", "8"]) == 0
    for name in ("trajectories.csv", "summary.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["schema_version"] == 1 and C.RunConfig.model_validate(man["config"]) == C.load(FAST)
    assert "finished" in json.loads((a / ".meta.json").read_text())
    header = (a / "trajectories.csv").read_text().splitlines()[0]
    assert header == "trajectory,time,norm_H,norm_V,norm_H_pow(0.5),extinct_flag"


def test_seed_override_and_env_out(cfg_file, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", str(cfg_file), "--seed", "9", "--threads", "1"]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["config"]["simulation"]["seed"] == 9


def test_extinction_command(cfg_file, tmp_path, capsys):
    out = tmp_path / "ext"
    assert cli.main(["extinction", str(cfg_file), "--out", str(out), "--threads", "1"]) == 0
    rep = json.loads((out / "extinction_report.json").read_text())
    assert rep["passed"] and rep["extinction"]["bound_prob"] == pytest.approx(0.5)
    assert len(rep["supermartingale"]["times"]) == 11
    assert capsys.readouterr().out.count("PASS") == 5


def test_extinction_rejects_alpha_above_two(tmp_path, capsys):
    p = tmp_path / "a.yaml"
    p.write_text("grid: {n: 8}\nmodel: {p: 2.5, graph: {type: power, p: 2.5}}\nextinction: {N: 100}\n")
    assert cli.main(["extinction", str(p), "--out", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err


def test_extinction_zero_initial_state(tmp_path):
    p = tmp_path / "z.yaml"
    p.write_text(FAST.replace("kind: sine", "kind: zero").replace("N: 4", "N: 1").replace("floor: 0.5", "checkpoints: 2")
                 .replace("n: 16", "n: 8"))
    assert cli.main(["extinction", str(p), "--out", str(tmp_path), "--threads", "1"]) == 0
    rep = json.loads((tmp_path / "extinction_report.json").read_text())
    assert rep["extinction"]["prob"] == 1.0 and rep["extinction"]["mean_lower"] == 0.0


def test_sweep_command(cfg_file, tmp_path, capsys):
    text = FAST.replace("T: 0.3", "T: 0.02").replace("dt: 0.002", "dt: 0.001")
    cfg_file.write_text(text)
    out = tmp_path / "sw"
    assert cli.main(["sweep", str(cfg_file), "--out", str(out), "--threads", "1"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "mu_i,mu_next,time,mean_sq_diff_H,se" and len(lines) == 3
    assert "PASS" in capsys.readouterr().out


def test_verify_exit_codes(tmp_path, monkeypatch):
    def good(rng, lv):
        return [Check("always", True, 1.0)]

    def bad(rng, lv):
        return [Check("never", False, -1.0)]

    monkeypatch.setattr(V, "SUITE", (good,))
    assert cli.main(["verify", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "verify_fast.json").read_text())
    assert summary["passed"] and "timings_s" not in summary
    assert "timings_s" in json.loads((tmp_path / ".meta.json").read_text())
    monkeypatch.setattr(V, "SUITE", (good, bad))
    assert cli.main(["verify", "--out", str(tmp_path)]) == 1
    assert cli.main(["verify", "--level", "huge", "--out", str(tmp_path)]) == 2
