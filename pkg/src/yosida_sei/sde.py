"""Time integration of the regularized stochastic evolution inclusion.

The state ``X`` is a node field.  Its evolution in ``H`` is

    dX = -[lift(A_mu(X)) + lift(B(X))] dt + X * sum_k h_k(t) dbeta_k

where ``A_mu`` replaces the graph by its generalized Yosida approximation and
``lift`` maps a dual element to its ``H`` representative.  For porous media
this is ``dX = Delta_h psi_mu(X) dt + ...`` in state space, with the
``H^{-1}`` norm used only for recording.

Three schemes are available:

implicit (default)
    Drift implicit, noise explicit (Ito).  Each step solves a convex problem
    by damped Newton.
semi-implicit-linear
    Only the Laplacian part of a reaction-diffusion drift is implicit.
explicit
    Euler-Maruyama.  Stable only for ``dt * |lift A_mu'|`` below 2.

Trajectory ``i`` draws from ``default_rng(SeedSequence([seed, i]))``, so runs
are reproducible under any parallel schedule.  The Brownian increments of a
step do not depend on the state, which couples runs that differ only in ``mu``.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import graphs as G
from ._newton import NewtonDivergence, newton_minimize
from .operators import MultiValuedOperator, SingleValuedDrift, reaction_part, _cap

logger = logging.getLogger(__name__)

Scheme = Literal["implicit", "semi-implicit-linear", "explicit"]

__all__ = [
    "NoiseModel", "SimConfig", "Trajectory", "StepRejected", "SweepTable",
    "brownian_increments", "noise_increment", "step", "simulate", "run_trajectories",
    "lambda_sweep", "write_trajectories_csv", "write_sweep_csv", "default_threads",
]


class StepRejected(RuntimeError):
    def __init__(self, t: float, norm_before: float, norm_after: float):
        super().__init__(f"step at t={t:.6g} rejected after all halvings "
                         f"(|X|_H {norm_before:.3e} -> {norm_after:.3e})")
        self.t, self.norm_before, self.norm_after = t, norm_before, norm_after


def default_threads() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class NoiseModel:
    """Linear multiplicative noise ``sigma(t, x) v = sum_k h_k(t) x <v, g_k>``.

    ``family`` is ``constant`` (``h_k = c_k``) or ``exp_decay``
    (``h_k = c_k exp(-gamma t)``).  ``horizon`` only bounds the time window
    scanned by assumption checks.
    """

    coeffs: tuple = ()
    family: Literal["constant", "exp_decay"] = "constant"
    gamma: float = 0.0
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.family not in ("constant", "exp_decay"):
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.family == "exp_decay" and not self.gamma > 0:
            raise ValueError("exponential decay needs gamma > 0")
        if not all(np.isfinite(self.coeffs)):
            raise ValueError("noise coefficients must be finite")

    @property
    def K(self) -> int:
        return len(self.coeffs)

    def h_k(self, t: float) -> np.ndarray:
        c = np.asarray(self.coeffs, dtype=float)
        return c * np.exp(-self.gamma * t) if self.family == "exp_decay" else c

    def h(self, t: float) -> float:
        """``sum_k h_k(t)^2``."""
        return float(np.sum(self.h_k(t) ** 2))

    def integral_h(self, T: float | None = None) -> float:
        """``int_0^T h``; ``T = None`` means the whole half line."""
        s = float(np.sum(np.square(self.coeffs)))
        if self.family == "constant":
            return s * T if T is not None else (0.0 if s == 0 else float("inf"))
        T = np.inf if T is None else T
        return s * (1.0 - np.exp(-2.0 * self.gamma * T)) / (2.0 * self.gamma)


def brownian_increments(rng: np.random.Generator, noise: NoiseModel, dt: float) -> np.ndarray:
    """``K`` independent ``N(0, dt)`` draws."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return rng.standard_normal(noise.K) * np.sqrt(dt)


def noise_increment(X: np.ndarray, t: float, dt: float, noise: NoiseModel,
                    rng: np.random.Generator, dW: np.ndarray | None = None) -> np.ndarray:
    """``X * sum_k h_k(t) dW_k`` with ``h_k`` taken at the left end point."""
    if dW is None:
        dW = brownian_increments(rng, noise, dt)
    return X * float(noise.h_k(t) @ dW) if noise.K else np.zeros_like(X)


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One simulation setup.

    ``eps`` defaults to ``1e-6 |x|_H``.  ``extra_thresholds`` lists multiples
    of ``eps`` whose first-passage times are also recorded; absorption always
    happens at ``eps``.  ``alpha`` is the gauge of the Yosida regularization
    (defaults to the triple's gauge).
    """

    operator: MultiValuedOperator
    x: np.ndarray
    T: float
    dt: float
    mu: float
    drift: SingleValuedDrift = field(default_factory=SingleValuedDrift)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    scheme: Scheme = "implicit"
    eps: float | None = None
    stride: int = 1
    alpha: float | None = None
    snapshot_times: tuple = ()
    extra_thresholds: tuple = ()
    newton_tol: float = 1e-12
    guard: float = 10.0
    max_halvings: int = 8

    def __post_init__(self):
        op = self.operator
        x = op.grid.field(self.x)
        object.__setattr__(self, "x", x)
        if not self.T > 0 or not self.dt > 0:
            raise ValueError("T and dt must be positive")
        if self.dt > self.T:
            raise ValueError("dt must not exceed T")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if op.graph.delta > 0 and not self.mu * op.graph.delta < 1:
            raise ValueError(f"mu={self.mu} must be below 1/delta={1 / op.graph.delta:g}")
        if self.scheme not in ("implicit", "semi-implicit-linear", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be nonnegative")
        if self.drift.kind != "zero" and op.kind == "porous_media":
            raise ValueError("reaction-diffusion drift needs an L^2 pivot space")
        xn = op.triple.norm_H(x)
        eps = 1e-6 * xn if self.eps is None else float(self.eps)
        if xn > 0 and not 0 < eps < xn:
            raise ValueError(f"eps={eps:g} must lie in (0, |x|_H={xn:g})")
        object.__setattr__(self, "eps", eps)
        if any(m < 1 for m in self.extra_thresholds):
            raise ValueError("extra thresholds are multiples >= 1 of eps")
        if self.yosida_alpha <= 1:
            raise ValueError("alpha must exceed 1")

    @property
    def yosida_alpha(self) -> float:
        return self.operator.triple.gauge if self.alpha is None else float(self.alpha)

    @property
    def steps(self) -> int:
        return max(1, int(np.ceil(self.T / self.dt - 1e-9)))

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class Trajectory:
    index: int
    seed: tuple
    times: np.ndarray
    norm_H: np.ndarray
    norm_V: np.ndarray
    norm_H_pow: np.ndarray  # |X|_H^(2 - alpha)
    alive_time: np.ndarray  # int_0^t 1{|X|_H > 0} ds at the recorded times
    extinct: bool
    tau: float | None  # first step time with |X|_H <= eps
    first_passage: dict = field(default_factory=dict)  # multiple of eps -> time
    snapshots: dict = field(default_factory=dict)  # time -> field

    def rows(self):
        for t, a, b, c in zip(self.times, self.norm_H, self.norm_V, self.norm_H_pow):
            yield t, a, b, c, int(self.tau is not None and t >= self.tau)


class _Integrator:
    """Per-trajectory stepping state and scratch."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        op = cfg.operator
        self.op, self.grid, self.triple = op, op.grid, op.triple
        self.g = op.graph
        self.mu, self.alpha = cfg.mu, cfg.yosida_alpha
        self.L = (-self.grid.laplacian_matrix).tocsc()
        self.D = self.grid.gradient_matrix
        self.I = sp.identity(self.grid.size, format="csc")
        self.has_B = cfg.drift.kind != "zero"
        self.dual_form = op.kind == "porous_media" and self.g.inverse is not None
        self.w = None  # last dual iterate of the porous-media solve
        self.x_norm = self.triple.norm_H(cfg.x)

    # -- drift pieces ------------------------------------------------------
    def psi(self, q):
        val, der, _ = G.yosida_section(self.g, q, self.mu, self.alpha)
        return val, der

    def lift_A(self, X):
        val, _ = self.psi(self.op.argument(X))
        if self.op.kind == "porous_media":
            return self.L @ val
        if self.op.kind == "phi_laplace":
            return self.D.T @ val
        return self.L @ X + val

    def reaction(self, t, X):
        return reaction_part(self.cfg.drift, t, X, self.grid) if self.has_B else 0.0

    # -- schemes -----------------------------------------------------------
    def advance(self, t, X, dt, xi):
        """One step of length ``dt`` with scalar noise factor ``xi``."""
        scheme = self.cfg.scheme
        if scheme == "explicit":
            out = X - dt * self.lift_A(X) + X * xi
            if self.has_B:
                out = out - dt * (self.L @ X + self.reaction(t, X))
            return out
        if scheme == "semi-implicit-linear":
            rhs = X - dt * self.lift_A(X) + X * xi
            if not self.has_B:
                return rhs
            rhs = rhs - dt * self.reaction(t, X)
            return spla.spsolve((self.I + dt * self.L).tocsc(), rhs)
        target = X * (1.0 + xi) - dt * self.reaction(t, X)
        return self.solve_implicit(target, dt)

    def _converged(self, scale):
        def conv(z, F):
            res = float(np.max(np.abs(F), initial=0.0))
            return res <= self.cfg.newton_tol * scale, res
        return conv

    def solve_implicit(self, target, dt):
        """Solve ``X + dt (lift A_mu(X) + [L X]) = target``."""
        scale = float(np.max(np.abs(target), initial=0.0))
        if scale == 0.0:
            self.w = None
            return np.zeros_like(target)
        if self.dual_form:
            return self._solve_porous_dual(target, dt, scale)
        if self.op.kind == "porous_media":
            return self._solve_porous_primal(target, dt, scale)
        return self._solve_l2(target, dt, scale)

    def _gamma(self, v):
        """Inverse of the regularized graph, ``g^{-1}(v) + j^{-1}(mu v)``, with its slope."""
        a, mu = self.alpha, self.mu
        z = mu * v
        e = 1.0 / (a - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dj = np.where(z != 0, e * np.abs(z) ** (e - 1.0), 0.0 if e > 1 else (1.0 if e == 1 else np.inf))
        return self.g.inverse(v) + G.inverse_duality(z, a), self.g.inverse_derivative(v) + mu * dj

    def _solve_porous_dual(self, target, dt, scale):
        # gamma(w) + dt L w = target, the gradient of a strictly convex energy in w
        L = self.L

        def grad(w):
            return self._gamma(w)[0] + dt * (L @ w) - target

        def stepdir(w, gw):
            d = _cap(self._gamma(w)[1], floor=0.0)
            return -spla.spsolve((sp.diags(d) + dt * L).tocsc(), gw)

        w0 = self.w if self.w is not None else self.psi(target)[0]
        w, _, _ = newton_minimize(grad, stepdir, w0, converged=self._converged(scale), stage="step")
        self.w = w
        return self._gamma(w)[0]

    def _solve_porous_primal(self, target, dt, scale):
        # H^{-1} gradient of |X - target|^2_{H^-1}/2 + dt sum Psi_mu(X)
        L, grid = self.L, self.grid

        def F(X):
            return X - target + dt * (L @ self.psi(X)[0])

        def grad(X):
            return grid.solve_negative_laplacian(F(X))

        def stepdir(X, gX):
            d = _cap(self.psi(X)[1], floor=0.0)
            return -spla.spsolve((self.I + dt * (L @ sp.diags(d))).tocsc(), L @ gX)

        conv = self._converged(scale)
        X, _, _ = newton_minimize(grad, stepdir, target.copy(),
                                  converged=lambda X, gX: conv(X, L @ gX), stage="step")
        return X

    def _solve_l2(self, target, dt, scale):
        L, D = self.L, self.D
        lin = dt * L if self.has_B else None

        def grad(X):
            out = X - target + dt * self.lift_A(X)
            return out + lin @ X if lin is not None else out

        def stepdir(X, gX):
            d = _cap(self.psi(self.op.argument(X))[1], floor=0.0)
            if self.op.kind == "phi_laplace":
                J = self.I + dt * (D.T @ sp.diags(d) @ D)
            else:
                J = self.I + dt * (L + sp.diags(d))
            if lin is not None:
                J = J + lin
            return -spla.spsolve(J.tocsc(), gX)

        X, _, _ = newton_minimize(grad, stepdir, target.copy(), converged=self._converged(scale), stage="step")
        return X

    # -- guarded step --------------------------------------------------------
    def guarded(self, t, X, dt, xi):
        nX = self.triple.norm_H(X)
        bound = self.cfg.guard * max(nX, self.x_norm)
        w_saved = self.w
        out, nout = None, np.inf
        for k in range(self.cfg.max_halvings + 1):
            m = 2**k
            self.w = w_saved
            Y = X
            try:
                for j in range(m):
                    # the step's Brownian increment is split evenly over substeps
                    Y = self.advance(t + j * dt / m, Y, dt / m, xi / m)
                nY = self.triple.norm_H(Y)
            except NewtonDivergence:
                nY = np.inf
            if np.all(np.isfinite(Y)) and nY <= bound:
                return Y, nY
            out, nout = Y, nY
            logger.debug("step at t=%g rejected with %d substeps (|X|_H=%g)", t, m, nY)
        raise StepRejected(t, nX, nout)


def step(X: np.ndarray, t: float, config: SimConfig, rng: np.random.Generator,
         dt: float | None = None) -> np.ndarray:
    """One guarded step of the configured scheme, including the absorbing rule."""
    dt = config.dt if dt is None else dt
    integ = _Integrator(config)
    triple = config.operator.triple
    if triple.norm_H(X) <= config.eps:
        return np.zeros_like(X)
    xi = float(config.noise.h_k(t) @ brownian_increments(rng, config.noise, dt)) if config.noise.K else 0.0
    Y, nY = integ.guarded(t, X, dt, xi)
    return np.zeros_like(Y) if nY <= config.eps else Y


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def simulate(config: SimConfig, index: int = 0) -> Trajectory:
    """Simulate trajectory ``index``; a pure function of ``(config, index)``."""
    rng = trajectory_rng(config.seed, index)
    integ = _Integrator(config)
    triple = config.operator.triple
    n, dt, T = config.steps, config.dt, config.T
    alpha = config.yosida_alpha
    eps = config.eps
    snap_steps: dict[int, list] = {}
    for s in config.snapshot_times:
        snap_steps.setdefault(min(n, int(round(s / dt))), []).append(s)
    thresholds = sorted(set(config.extra_thresholds))

    X = config.x.copy()
    nH = triple.norm_H(X)
    times, hs, vs, alive = [], [], [], []
    snaps, passage = {}, {}
    tau = None
    alive_t = 0.0

    def record(t, X, nH):
        times.append(t)
        hs.append(nH)
        vs.append(triple.norm_V(X) if nH > 0 else 0.0)
        alive.append(alive_t)

    def check_passage(t, nH):
        for m in thresholds:
            if m not in passage and nH <= m * eps:
                passage[m] = t

    if nH <= eps:
        X[:] = 0.0
        nH = 0.0
        tau = 0.0
    check_passage(0.0, nH)
    record(0.0, X, nH)
    for s in snap_steps.get(0, ()):
        snaps[s] = X.copy()
    for k in range(n):
        t = k * dt
        h = min(dt, T - t) if k == n - 1 else dt
        dW = brownian_increments(rng, config.noise, h)
        if tau is None:
            xi = float(config.noise.h_k(t) @ dW) if config.noise.K else 0.0
            X, nH = integ.guarded(t, X, h, xi)
            alive_t += h
            check_passage(t + h, nH)
            if nH <= eps:
                X = np.zeros_like(X)
                nH = 0.0
                tau = t + h
        tk = T if k == n - 1 else (k + 1) * dt
        if (k + 1) % config.stride == 0 or k == n - 1:
            record(tk, X, nH)
        for s in snap_steps.get(k + 1, ()):
            snaps[s] = X.copy()
    hs = np.array(hs)
    with np.errstate(divide="ignore"):
        pw = np.where(hs > 0, hs ** (2.0 - alpha), 0.0)
    if tau is not None:
        for m in thresholds:
            passage.setdefault(m, tau)
    return Trajectory(index, (int(config.seed), int(index)), np.array(times), hs, np.array(vs), pw,
                      np.array(alive), tau is not None, tau, passage, snaps)


def run_trajectories(config: SimConfig, N: int, threads: int | None = None, start: int = 0) -> list[Trajectory]:
    """Trajectories ``start .. start + N - 1`` in index order."""
    threads = threads or default_threads()
    idx = range(start, start + N)
    if threads == 1 or N == 1:
        return [simulate(config, i) for i in idx]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: simulate(config, i), idx))


@dataclass
class SweepTable:
    mus: tuple
    checkpoints: tuple
    diffs: np.ndarray  # [pair, checkpoint] mean of |X_mu_i(t) - X_mu_{i+1}(t)|_H^2
    se: np.ndarray
    N: int

    def rows(self):
        for i in range(len(self.mus) - 1):
            for j, t in enumerate(self.checkpoints):
                yield self.mus[i], self.mus[i + 1], t, self.diffs[i, j], self.se[i, j]


def lambda_sweep(config: SimConfig, mus: Sequence[float], N: int, checkpoints: Sequence[float],
                 threads: int | None = None) -> SweepTable:
    """Coupled Cauchy differences ``E |X_mu_i(t) - X_mu_{i+1}(t)|_H^2``."""
    mus = tuple(float(m) for m in mus)
    if len(mus) < 2:
        raise ValueError("need at least two values of mu")
    if any(b > a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu list must be nonincreasing")
    checkpoints = tuple(float(t) for t in checkpoints)
    if any(not 0 <= t <= config.T for t in checkpoints):
        raise ValueError("checkpoints must lie in [0, T]")
    triple = config.operator.triple
    runs = [run_trajectories(config.with_(mu=m, snapshot_times=checkpoints), N, threads) for m in mus]
    diffs = np.zeros((len(mus) - 1, len(checkpoints)))
    se = np.zeros_like(diffs)
    for i in range(len(mus) - 1):
        for j, t in enumerate(checkpoints):
            vals = np.array([triple.norm_H(a.snapshots[t] - b.snapshots[t]) ** 2
                             for a, b in zip(runs[i], runs[i + 1])])
            diffs[i, j] = vals.mean()
            se[i, j] = vals.std(ddof=1) / np.sqrt(N) if N > 1 else 0.0
    return SweepTable(mus, checkpoints, diffs, se, N)


def write_trajectories_csv(trajs: Sequence[Trajectory], path, alpha: float) -> None:
    """Long-format CSV, one row per (trajectory, recorded time)."""
    pow_col = f"norm_H_pow({2 - alpha:g})"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory", "time", "norm_H", "norm_V", pow_col, "extinct_flag"])
        for tr in trajs:
            for row in tr.rows():
                w.writerow([tr.index, *(repr(float(v)) for v in row[:4]), row[4]])


def write_sweep_csv(table: SweepTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu_i", "mu_next", "time", "mean_sq_diff_H", "se"])
        for row in table.rows():
            w.writerow([repr(float(v)) for v in row])
