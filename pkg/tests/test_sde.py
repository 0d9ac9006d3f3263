import csv

import numpy as np
import pytest
import scipy.linalg

from oracles import dense_laplacian, heat_exact
from yosida_sei import graphs as G
from yosida_sei import operators as O
from yosida_sei import sde as S
from yosida_sei.spaces import GelfandTriple, Grid

ZERO = G.piecewise([], [[0.0, 0.0]])


def pm_op(g, d=1, n=16, p=2.0):
    return O.porous_media(g, GelfandTriple(Grid(d, n), "porous_media", p))


def fast_diffusion(n=32):
    return pm_op(G.power(1.5, 0.0), n=n, p=1.5)


def test_brownian_increments(rng):
    assert S.brownian_increments(rng, S.NoiseModel(), 0.1).shape == (0,)
    one = S.NoiseModel((1.0,))
    dt = 0.01
    draws = np.array([S.brownian_increments(rng, one, dt)[0] for _ in range(100_000)])
    assert abs(draws.mean()) <= 4 * np.sqrt(dt / 1e5)
    assert draws.var() == pytest.approx(dt, rel=0.05)
    with pytest.raises(ValueError):
        S.brownian_increments(rng, one, 0.0)


def test_noise_increment(rng):
    noise = S.NoiseModel((0.3,))
    assert not np.any(S.noise_increment(np.zeros(5), 0.0, 0.1, noise, rng))
    X = rng.standard_normal(5)
    dW = np.array([0.7])
    np.testing.assert_array_equal(S.noise_increment(X, 0.0, 0.1, noise, rng, dW), 0.3 * 0.7 * X)
    two = S.NoiseModel((0.3, 0.4), family="exp_decay", gamma=0.5)
    t, dt = 0.8, 0.01
    inc = np.array([S.noise_increment(X, t, dt, two, rng)[2] for _ in range(10_000)])
    assert inc.var() == pytest.approx(two.h(t) * dt * X[2] ** 2, rel=0.1)
    assert two.integral_h() == pytest.approx(0.25 / 1.0)
    with pytest.raises(ValueError):
        S.NoiseModel((1.0,), family="exp_decay")


def test_config_validation():
    op = fast_diffusion(8)
    x = op.grid.sine_mode()
    with pytest.raises(ValueError):
        S.SimConfig(op, x, T=0.1, dt=0.2, mu=0.1)
    with pytest.raises(ValueError):
        S.SimConfig(op, x, T=0.1, dt=0.01, mu=1.0)
    with pytest.raises(ValueError):
        S.SimConfig(op, x, T=0.1, dt=0.01, mu=0.1, eps=10.0)
    with pytest.raises(ValueError):
        S.SimConfig(op, x, T=0.1, dt=0.01, mu=0.1, scheme="rk4")
    with pytest.raises(ValueError):
        S.SimConfig(op, x, T=0.1, dt=0.01, mu=0.1, drift=O.SingleValuedDrift("reaction_diffusion", (0, 1.0)))
    cfg = S.SimConfig(op, x, T=0.1, dt=0.01, mu=0.1)
    assert cfg.eps == pytest.approx(1e-6 * op.triple.norm_H(x))
    assert cfg.steps == 10


def test_step_trivial_cases(rng):
    op = pm_op(ZERO)
    x = op.grid.sine_mode()
    cfg = S.SimConfig(op, x, T=1.0, dt=0.1, mu=0.1)
    np.testing.assert_array_equal(S.step(x, 0.0, cfg, rng), x)
    small = x * cfg.eps / op.triple.norm_H(x) * 0.5
    assert not np.any(S.step(small, 0.0, cfg, rng))


@pytest.mark.parametrize("d,n", [(1, 32), (2, 10)])
def test_heat_equation_first_order(d, n):
    grid = Grid(d, n)
    op = O.porous_media(G.linear(1.0), GelfandTriple(grid, "porous_media", 2.0))
    x = grid.sine_mode(*(1,) * d) + 0.5 * grid.sine_mode(*(3,) * d)
    ref = heat_exact(dense_laplacian(d, n), x, 0.1)
    errs = []
    for dt in (1e-3, 5e-4):
        tr = S.simulate(S.SimConfig(op, x, T=0.1, dt=dt, mu=1e-9, snapshot_times=(0.1,)))
        errs.append(op.triple.norm_H(tr.snapshots[0.1] - ref))
    assert 1.7 <= errs[0] / errs[1] <= 2.3


def test_explicit_scheme_first_order():
    grid = Grid(1, 8)
    op = O.porous_media(G.linear(1.0), GelfandTriple(grid, "porous_media", 2.0))
    x = grid.sine_mode(1) + grid.sine_mode(2)
    ref = heat_exact(dense_laplacian(1, 8), x, 0.05)
    errs = [op.triple.norm_H(S.simulate(S.SimConfig(op, x, 0.05, dt, 1e-9, scheme="explicit",
                                                     snapshot_times=(0.05,))).snapshots[0.05] - ref)
            for dt in (1e-3, 5e-4)]
    assert 1.7 <= errs[0] / errs[1] <= 2.3


@pytest.mark.parametrize("scheme", ["implicit", "semi-implicit-linear"])
def test_reaction_diffusion_schemes(scheme):
    grid = Grid(1, 10)
    op = O.phi_laplace(G.linear(1.0), GelfandTriple(grid, "phi_laplace", 2.0))
    drift = O.SingleValuedDrift("reaction_diffusion", coeffs=(0.0, 3.0))
    x = grid.sine_mode(1) + 0.3 * grid.sine_mode(4)
    L = -dense_laplacian(1, 10)
    T = 0.02
    ref = scipy.linalg.expm(-T * (2 * L + 3.0 * np.eye(10))) @ x
    dts = (1e-3, 5e-4)
    errs = [op.triple.norm_H(S.simulate(S.SimConfig(op, x, T, dt, 1e-9, drift=drift, scheme=scheme,
                                                     snapshot_times=(T,))).snapshots[T] - ref)
            for dt in dts]
    assert 1.7 <= errs[0] / errs[1] <= 2.3


def test_step_guard_halves_and_reports():
    grid = Grid(1, 16)
    op = O.porous_media(G.linear(1.0), GelfandTriple(grid, "porous_media", 2.0))
    x = grid.sine_mode(16)
    cfg = S.SimConfig(op, x, T=0.01, dt=0.01, mu=1e-9, scheme="explicit")
    tr = S.simulate(cfg)
    assert tr.norm_H[-1] < tr.norm_H[0]
    with pytest.raises(S.StepRejected):
        S.simulate(cfg.with_(max_halvings=1))


def test_simulation_is_deterministic():
    op = fast_diffusion(16)
    cfg = S.SimConfig(op, 0.2 * op.grid.sine_mode(), T=0.05, dt=1e-3, mu=1e-3,
                      noise=S.NoiseModel((0.3, 0.2)), seed=7, snapshot_times=(0.05,))
    a, b = S.simulate(cfg, 3), S.simulate(cfg, 3)
    np.testing.assert_array_equal(a.norm_H, b.norm_H)
    np.testing.assert_array_equal(a.snapshots[0.05], b.snapshots[0.05])
    assert not np.array_equal(a.norm_H, S.simulate(cfg, 4).norm_H)
    one = S.run_trajectories(cfg, 6, threads=1)
    many = S.run_trajectories(cfg, 6, threads=8)
    for u, v in zip(one, many):
        np.testing.assert_array_equal(u.norm_H, v.norm_H)
        assert u.seed == v.seed


def test_deterministic_fast_diffusion_decreases_to_extinction():
    op = fast_diffusion(32)
    tr = S.simulate(S.SimConfig(op, 0.2 * op.grid.sine_mode(), T=0.3, dt=1e-3, mu=1e-3))
    assert tr.extinct
    alive = tr.norm_H[tr.times < tr.tau]
    assert np.all(np.diff(alive) < 0)
    assert not np.any(tr.norm_H[tr.times >= tr.tau])
    assert tr.alive_time[-1] == pytest.approx(tr.tau)


def test_pure_noise_keeps_the_initial_shape(rng):
    op = pm_op(ZERO, d=2, n=6)
    x = rng.standard_normal(op.grid.size)
    cfg = S.SimConfig(op, x, T=0.2, dt=0.01, mu=0.1, noise=S.NoiseModel((0.5, 0.3)), snapshot_times=(0.1, 0.2))
    tr = S.simulate(cfg, 2)
    for t in (0.1, 0.2):
        X = tr.snapshots[t]
        c = X @ x / (x @ x)
        np.testing.assert_allclose(X, c * x, atol=1e-12 * np.abs(X).max())


def test_moments_stay_bounded_for_small_noise():
    op = fast_diffusion(16)
    x = 0.2 * op.grid.sine_mode()
    cfg = S.SimConfig(op, x, T=0.1, dt=2e-3, mu=1e-3, noise=S.NoiseModel((0.05,)), stride=5)
    trajs = S.run_trajectories(cfg, 100, threads=4)
    sup = max(np.max(t.norm_H**2) for t in trajs)
    assert np.isfinite(sup) and sup <= 10 * op.triple.norm_H(x) ** 2


@pytest.mark.parametrize("g", [G.non_newtonian(3.0), G.sign()], ids=["smooth", "sign"])
def test_energy_nonincreasing_without_noise(g):
    grid = Grid(1, 12)
    op = O.phi_laplace(g, GelfandTriple(grid, "phi_laplace", 3.0 if g.p == 3.0 else 2.0))
    x = grid.sine_mode(1) + 0.5 * grid.sine_mode(3)
    tr = S.simulate(S.SimConfig(op, x, T=0.05, dt=1e-3, mu=1e-2, eps=1e-8))
    assert np.all(np.diff(tr.norm_H) <= 1e-14)


def test_subdifferential_sign_primal_solver():
    grid = Grid(1, 12)
    op = O.subdifferential(G.sign(), GelfandTriple(grid, "phi_laplace", 2.0))
    tr = S.simulate(S.SimConfig(op, grid.sine_mode(), T=0.5, dt=1e-2, mu=1e-3))
    assert tr.extinct


def test_porous_media_sign_graph_uses_primal_solver():
    op = pm_op(G.sign(), n=12)
    x = op.grid.sine_mode()
    tr = S.simulate(S.SimConfig(op, x, T=0.05, dt=1e-3, mu=1e-3))
    assert np.all(np.diff(tr.norm_H[tr.norm_H > 0]) < 0)


def test_lambda_sweep_coupling():
    op = pm_op(G.sign(), n=12)
    x = 0.5 * op.grid.sine_mode()
    cfg = S.SimConfig(op, x, T=0.02, dt=1e-3, mu=0.1, noise=S.NoiseModel((0.3,)))
    same = S.lambda_sweep(cfg, [1e-2, 1e-2], 5, [0.01, 0.02], threads=2)
    assert not np.any(same.diffs)
    table = S.lambda_sweep(cfg, [1e-1, 1e-2, 1e-3, 1e-4], 5, [0.02], threads=2)
    col = table.diffs[:, 0]
    assert np.all(np.diff(col) < 0)
    with pytest.raises(ValueError):
        S.lambda_sweep(cfg, [1e-3, 1e-2], 2, [0.01])


def test_lambda_sweep_linear_graph_is_small():
    op = pm_op(G.linear(1.0), n=12)
    x = op.grid.sine_mode()
    cfg = S.SimConfig(op, x, T=0.02, dt=1e-3, mu=0.1, noise=S.NoiseModel((0.3,)))
    table = S.lambda_sweep(cfg, [1e-4, 1e-5, 1e-6], 4, [0.02], threads=1)
    assert np.all(table.diffs <= 1e-8 * op.triple.norm_H(x) ** 2)


def test_csv_export(tmp_path):
    op = fast_diffusion(8)
    cfg = S.SimConfig(op, 0.2 * op.grid.sine_mode(), T=0.2, dt=1e-2, mu=1e-3, stride=5)
    trajs = S.run_trajectories(cfg, 2, threads=1)
    path = tmp_path / "t.csv"
    S.write_trajectories_csv(trajs, path, alpha=1.5)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["trajectory", "time", "norm_H", "norm_V", "norm_H_pow(0.5)", "extinct_flag"]
    assert len(rows) == 1 + sum(len(t.times) for t in trajs)
    flags = [int(r[5]) for r in rows[1:]]
    assert flags[-1] == 1 and flags[0] == 0
