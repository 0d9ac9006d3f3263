"""Monte Carlo extinction statistics and the bounds they are compared with.

With ``c* = 1 / (delta (c0/2)^alpha (1 - alpha/2))`` the bounds read
``P(tau <= T) >= 1 - c* |x|_H^(2-alpha) / T`` and ``E tau <= c* |x|_H^(2-alpha)``,
where ``c0`` is the embedding constant ``|u|_V >= c0 |u|_H``.  Extinction is
measured at a threshold: ``tau^eps`` is the first step time with
``|X|_H <= eps``.  Runs absorb at ``eps / 10`` so that the ``eps / 10``
passage time is available as a sensitivity column.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .operators import validate_assumptions
from .sde import SimConfig, Trajectory, run_trajectories
from .spaces import embedding_constant

__all__ = [
    "ExtinctionReport", "PreconditionError", "c_star", "theoretical_floor", "extinction_time",
    "wilson_interval", "extinction_run", "mc_extinction", "supermartingale_check",
    "energy_inequality_check", "write_report_json", "write_tau_csv",
]

MIN_TRAJECTORIES = 100


class PreconditionError(ValueError):
    pass


def c_star(delta: float, alpha: float, c0: float) -> float:
    """``1 / (delta (c0/2)^alpha (1 - alpha/2))``."""
    if not 1 < alpha < 2:
        raise PreconditionError(f"alpha must lie in (1, 2), got {alpha}")
    if not delta > 0 or not c0 > 0:
        raise PreconditionError("delta and c0 must be positive")
    return 1.0 / (delta * (c0 / 2.0) ** alpha * (1.0 - alpha / 2.0))


def decay_rate(delta: float, alpha: float, c0: float) -> float:
    """``delta (c0/2)^alpha (1 - alpha/2)``, the drift of ``|X|^(2-alpha)`` while alive."""
    return delta * (c0 / 2.0) ** alpha * (1.0 - alpha / 2.0)


def theoretical_floor(cs: float, x_norm: float, alpha: float, T: float) -> float:
    """``1 - c* |x|_H^(2-alpha) / T``."""
    return 1.0 - cs * x_norm ** (2.0 - alpha) / T


def extinction_time(traj: Trajectory, T: float | None = None, threshold: float | None = None):
    """``(time, censored)``; censored samples report the horizon.

    ``threshold`` selects a recorded multiple of the absorption level.
    """
    T = float(traj.times[-1]) if T is None else T
    tau = traj.tau if threshold is None else traj.first_passage.get(threshold)
    if tau is None:
        return T, True
    return float(tau), False


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def _alpha(config: SimConfig) -> float:
    A = config.operator.assumptions
    return A.alpha if A is not None else config.yosida_alpha


def _check_preconditions(config: SimConfig) -> None:
    alpha = _alpha(config)
    if not 1 < alpha < 2:
        raise PreconditionError(f"extinction bounds need alpha in (1, 2), got alpha={alpha:g}")
    if config.drift.kind != "zero" and config.drift.coercivity_f(config.operator.grid.measure) != 0:
        raise PreconditionError("extinction bounds need a drift B with f = 0")
    rep = validate_assumptions(config.operator, config.drift, replace(config.noise, horizon=config.T))
    failed = [c.name for c in rep.checks if not c.passed]
    if failed:
        raise PreconditionError("assumption checks failed: " + ", ".join(failed))


def _run_config(config: SimConfig, checkpoints: Sequence[float]) -> SimConfig:
    return config.with_(eps=config.eps / 10.0, extra_thresholds=(10.0,),
                        snapshot_times=tuple(float(t) for t in checkpoints))


def default_checkpoints(T: float, count: int = 10) -> tuple:
    return tuple(float(t) for t in np.linspace(0.0, T, count + 1))


def extinction_run(config: SimConfig, N: int, checkpoints: Sequence[float] | None = None,
                   threads: int | None = None) -> list[Trajectory]:
    """The shared Monte Carlo run behind the checks of this module."""
    if checkpoints is None:
        checkpoints = default_checkpoints(config.T)
    return run_trajectories(_run_config(config, checkpoints), N, threads)


@dataclass
class ExtinctionReport:
    N: int
    T: float
    eps: float
    eps_fine: float
    alpha: float
    delta: float
    c0: float
    rho: float
    c_star: float
    x_norm: float
    tau: list
    censored: list
    tau_fine: list
    censored_fine: list
    prob: float
    prob_se: float
    prob_ci: tuple
    prob_fine: float
    mean_lower: float  # censored samples replaced by T
    mean_upper: float  # censored samples replaced by T + c* |X(T)|^(2-alpha)
    mean_se: float
    mean_rel_se: float
    mean_lower_fine: float
    bound_prob: float
    bound_mean: float
    pass_prob: bool
    pass_mean: bool

    @property
    def passed(self) -> bool:
        return self.pass_prob and self.pass_mean

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prob_ci"] = list(self.prob_ci)
        d["passed"] = self.passed
        return d


def mc_extinction(config: SimConfig, N: int, *, c0: float | None = None, threads: int | None = None,
                  trajectories: Sequence[Trajectory] | None = None,
                  check_assumptions: bool = True) -> ExtinctionReport:
    """Empirical extinction probability and censored mean against the bounds."""
    if N < MIN_TRAJECTORIES:
        raise PreconditionError(f"need at least {MIN_TRAJECTORIES} trajectories, got {N}")
    if check_assumptions:
        _check_preconditions(config)
    alpha = _alpha(config)
    op = config.operator
    delta = op.assumptions.delta
    if c0 is None:
        c0 = embedding_constant(op.triple).c0
    cs = c_star(delta, alpha, c0)
    trajs = list(trajectories) if trajectories is not None else extinction_run(config, N, threads=threads)
    if len(trajs) != N:
        raise ValueError("trajectory count does not match N")
    T = config.T
    x_norm = op.triple.norm_H(config.x)

    tau, cens = zip(*(extinction_time(tr, T, threshold=10.0) for tr in trajs))
    tau_f, cens_f = zip(*(extinction_time(tr, T) for tr in trajs))
    tau, cens = np.array(tau), np.array(cens)
    tau_f, cens_f = np.array(tau_f), np.array(cens_f)

    k = int(np.sum(~cens))
    prob = k / N
    prob_se = float(np.sqrt(max(prob * (1 - prob), 0.0) / N))
    end_pow = np.array([tr.norm_H_pow[-1] for tr in trajs])
    upper = np.where(cens, T + cs * end_pow, tau)
    mean_lower = float(tau.mean())
    mean_se = float(tau.std(ddof=1) / np.sqrt(N))
    rel_se = mean_se / mean_lower if mean_lower > 0 else 0.0
    bound_prob = theoretical_floor(cs, x_norm, alpha, T)
    bound_mean = cs * x_norm ** (2.0 - alpha)
    return ExtinctionReport(
        N=N, T=T, eps=config.eps, eps_fine=config.eps / 10.0, alpha=alpha, delta=delta, c0=c0,
        rho=c0 / 2.0, c_star=cs, x_norm=x_norm,
        tau=tau.tolist(), censored=cens.tolist(), tau_fine=tau_f.tolist(), censored_fine=cens_f.tolist(),
        prob=prob, prob_se=prob_se, prob_ci=wilson_interval(k, N), prob_fine=float(np.mean(~cens_f)),
        mean_lower=mean_lower, mean_upper=float(upper.mean()), mean_se=mean_se, mean_rel_se=rel_se,
        mean_lower_fine=float(tau_f.mean()), bound_prob=bound_prob, bound_mean=bound_mean,
        pass_prob=bool(prob >= bound_prob - 3.0 * prob_se),
        pass_mean=bool(mean_lower <= bound_mean * (1.0 + 3.0 * rel_se)),
    )


def _mean(vals: np.ndarray) -> np.ndarray:
    """Column means, exact when a column is constant."""
    return vals[0] + (vals - vals[0]).mean(axis=0)


def _checkpoint_norms(trajs: Sequence[Trajectory], config: SimConfig, checkpoints) -> np.ndarray:
    triple = config.operator.triple
    return np.array([[triple.norm_H(tr.snapshots[t]) for t in checkpoints] for tr in trajs])


@dataclass
class CheckTable:
    times: list
    values: list
    se: list
    margins: list  # per checkpoint (or consecutive pair); nonnegative means pass

    @property
    def passed(self) -> bool:
        return all(m >= 0 for m in self.margins)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def supermartingale_check(config: SimConfig, N: int, checkpoints: Sequence[float] | None = None, *,
                          trajectories: Sequence[Trajectory] | None = None,
                          threads: int | None = None) -> CheckTable:
    """Mean of ``|X(t)|_H^(2-alpha)`` must not increase by more than 2 SE between checkpoints."""
    alpha = _alpha(config)
    if not 1 < alpha < 2:
        raise PreconditionError(f"alpha must lie in (1, 2), got {alpha}")
    checkpoints = tuple(checkpoints) if checkpoints is not None else default_checkpoints(config.T)
    trajs = trajectories if trajectories is not None else extinction_run(config, N, checkpoints, threads)
    vals = _checkpoint_norms(trajs, config, checkpoints) ** (2.0 - alpha)
    m = _mean(vals)
    se = vals.std(axis=0, ddof=1) / np.sqrt(len(trajs)) if len(trajs) > 1 else np.zeros(len(checkpoints))
    margins = [float(m[j] + 2.0 * se[j] - m[j + 1]) for j in range(len(checkpoints) - 1)]
    return CheckTable(list(checkpoints), m.tolist(), se.tolist(), margins)


def energy_inequality_check(config: SimConfig, N: int, times: Sequence[float] | None = None, *,
                            c0: float | None = None, trajectories: Sequence[Trajectory] | None = None,
                            threads: int | None = None) -> CheckTable:
    """``E|X(t)|^(2-alpha) + rate * E int_0^t 1{alive} <= |x|^(2-alpha) + 2 SE``."""
    alpha = _alpha(config)
    if not 1 < alpha < 2:
        raise PreconditionError(f"alpha must lie in (1, 2), got {alpha}")
    op = config.operator
    if c0 is None:
        c0 = embedding_constant(op.triple).c0
    rate = decay_rate(op.assumptions.delta, alpha, c0)
    T = config.T
    times = tuple(times) if times is not None else (T / 4, T / 2, T)
    trajs = trajectories if trajectories is not None else extinction_run(config, N, times, threads)
    x_pow = op.triple.norm_H(config.x) ** (2.0 - alpha)
    pows = _checkpoint_norms(trajs, config, times) ** (2.0 - alpha)
    # absorption is exact, so the alive time up to t is min(t, tau) on the step grid
    alive = np.array([[min(t, tr.tau) if tr.tau is not None else t for t in times] for tr in trajs])
    lhs = pows + rate * alive
    m = _mean(lhs)
    se = lhs.std(axis=0, ddof=1) / np.sqrt(len(trajs)) if len(trajs) > 1 else np.zeros(len(times))
    margins = [float(x_pow + 2.0 * se[j] - m[j]) for j in range(len(times))]
    return CheckTable(list(times), m.tolist(), se.tolist(), margins)


def write_report_json(report, path) -> None:
    data = report.to_dict() if hasattr(report, "to_dict") else report
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_tau_csv(report: ExtinctionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory", "tau_eps", "censored_eps", "tau_eps_over_10", "censored_eps_over_10"])
        for i, row in enumerate(zip(report.tau, report.censored, report.tau_fine, report.censored_fine)):
            w.writerow([i, repr(row[0]), int(row[1]), repr(row[2]), int(row[3])])
