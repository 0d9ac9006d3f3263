"""Built-in property suite run by ``yosida-sei verify``.

Every check returns an :class:`~yosida_sei.operators.Check` whose margin is
positive when the property holds with room to spare.  Sample sizes depend on
the level: ``fast`` caps grids at 16 nodes per axis and samples at 100,
``full`` uses the acceptance sizes (8x8 vector suite, 10^4 scalar samples).

The summary is a pure function of the level and seed, so two runs produce
byte-identical JSON.  Wall-clock timings go to a separate sidecar.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import extinction as E
from . import graphs as G
from . import operators as O
from . import sde as S
from .graphs import YosidaParams
from .operators import Check
from .spaces import GelfandTriple, Grid, embedding_constant, laplacian, lp_norm

LEVELS = ("fast", "full")


@dataclass(frozen=True)
class Level:
    scalar: int  # scalar samples per check
    fields: int  # random fields per vector check
    grid_n: int  # side of the 2D grid for vector checks
    mc: int  # trajectories for Monte Carlo checks

    @classmethod
    def named(cls, name: str) -> "Level":
        if name == "fast":
            return cls(scalar=100, fields=6, grid_n=4, mc=8)
        if name == "full":
            return cls(scalar=10_000, fields=50, grid_n=8, mc=100)
        raise ValueError(f"unknown level {name!r}; expected one of {LEVELS}")


def shipped_graphs() -> list:
    return [G.sign(), G.sign(0.5), G.power(1.5, 0.0), G.power(1.5, 1.0), G.power(3.0, 0.5),
            G.btw(0.0), G.btw(0.5), G.linear(1.0), G.linear(2.5), G.non_newtonian(3.0),
            G.piecewise([-1.0, 1.0], [[-1.0, 1.0], [0.0, 0.5], [1.0, 2.0]])]


def psi(p: float) -> G.ScalarGraph:
    """``sign(s) (1 + |s|^(p-1))``."""
    return G.power(p, 1.0)


def _check(name: str, margin: float, detail: str = "") -> Check:
    margin = float(margin)
    return Check(name, bool(margin >= 0), margin, detail)


def reference_bisection(g: G.ScalarGraph, s, lam: float, alpha: float, rng, iters: int = 3000):
    """Plain bisection for ``0 in j(y - s) + lam g(y)`` from a random wide bracket.

    Independent of the ordered-bit solver: it only queries ``g.bounds``.
    """
    s = np.asarray(s, dtype=float)
    width = rng.uniform(5.0, 50.0, size=s.shape)
    a = s - width * (1 + np.abs(s))
    b = s + width * (1 + np.abs(s))
    for _ in range(iters):
        m = 0.5 * (a + b)
        if np.all((m == a) | (m == b)):
            break
        lo, hi = g.bounds(m)
        r = m - s
        base = np.sign(r) * np.abs(r) ** (alpha - 1)
        flo, fhi = base + lam * lo, base + lam * hi
        a = np.where(fhi < 0, m, a)
        b = np.where(flo > 0, m, b)
        hit = (flo <= 0) & (fhi >= 0)
        a = np.where(hit, m, a)
        b = np.where(hit, m, b)
    return 0.5 * (a + b)


def _scalar_cases(rng, count: int, graphs=None):
    graphs = graphs or [G.sign(), G.power(1.5, 0.0), G.power(3.0, 1.0), G.btw(0.5), G.linear(1.0)]
    for _ in range(count):
        g = graphs[rng.integers(len(graphs))]
        yield g, rng.uniform(-5, 5), 10.0 ** rng.uniform(-3, 0.5), rng.uniform(1.05, 3.0)


# -- spaces --------------------------------------------------------------------

def check_laplacian(rng, lv: Level) -> list[Check]:
    sym, neg, riesz = np.inf, np.inf, np.inf
    for d, n in ((1, 16), (2, min(lv.grid_n * 2, 16))):
        grid = Grid(d, n)
        t = GelfandTriple(grid, "porous_media", 2.0)
        for _ in range(min(lv.scalar, 100) // 4):
            u, v = rng.standard_normal((2, grid.size))
            a = laplacian(grid, u) @ v * grid.w
            b = u @ laplacian(grid, v) * grid.w
            sym = min(sym, 1e-12 * (abs(a) + abs(b) + 1) - abs(a - b))
            neg = min(neg, -(laplacian(grid, u) @ u))
            riesz = min(riesz, 1e-12 * t.norm_H(u) ** 2 - abs(t.norm_H(u) ** 2
                        - u @ grid.solve_negative_laplacian(u) * grid.w))
    return [_check("laplacian_symmetry", sym), _check("laplacian_negative_definite", neg),
            _check("riesz_identity", riesz)]


def check_embedding(rng, lv: Level) -> list[Check]:
    margin = np.inf
    for kind, p in (("porous_media", 1.5), ("phi_laplace", 3.0)):
        t = GelfandTriple(Grid(1, 16), kind, p)
        c0 = embedding_constant(t).c0
        for u in O._random_fields(t.grid, min(lv.scalar, 100), rng):
            margin = min(margin, t.norm_V(u) - c0 * t.norm_H(u) + 1e-9 * t.norm_V(u))
    return [_check("embedding_bound", margin)]


def check_power_means(rng, lv: Level) -> list[Check]:
    # normalized by the measure, ||u||_p is nondecreasing in p
    margin = np.inf
    grid = Grid(1, 16)
    for _ in range(min(lv.scalar, 100)):
        u = rng.standard_normal(grid.size)
        p, q = np.sort(rng.uniform(1.01, 6.0, 2))
        mp = lp_norm(u, p, grid.w) / grid.measure ** (1 / p)
        mq = lp_norm(u, q, grid.w) / grid.measure ** (1 / q)
        direct = (np.sum(np.abs(u) ** p) / grid.size) ** (1 / p)
        margin = min(margin, mq - mp + 1e-12 * mq, 1e-12 * direct - abs(mp - direct))
    return [_check("normalized_power_means", margin)]


# -- graphs --------------------------------------------------------------------

def check_scalar_resolvent(rng, lv: Level) -> list[Check]:
    uniq, oracle = np.inf, np.inf
    for g, s, lam, alpha in _scalar_cases(rng, lv.scalar):
        y = G.scalar_resolvent(g, s, YosidaParams(lam, alpha))
        r1 = reference_bisection(g, s, lam, alpha, rng)
        r2 = reference_bisection(g, s, lam, alpha, rng)
        uniq = min(uniq, 1e-10 - abs(r1 - r2))
        oracle = min(oracle, 1e-10 - abs(y - r1))
    return [_check("resolvent_uniqueness", uniq), _check("resolvent_matches_bisection", oracle)]


def check_scalar_yosida(rng, lv: Level) -> list[Check]:
    bounded = in_graph = mono = gauge = odd = np.inf
    for g, s, lam, alpha in _scalar_cases(rng, lv.scalar):
        prm = YosidaParams(lam, alpha)
        sol = G.resolvent_solution(g, s, prm)
        y, r = float(sol.x[0]), float(sol.offset[0])
        a = G.scalar_duality(r, alpha) / lam
        bounded = min(bounded, abs(G.minimal_section(g, s)) + 1e-10 - abs(a))
        lo, hi = g.bounds(y)
        in_graph = min(in_graph, a - lo + 1e-9 * (1 + abs(lo)), hi - a + 1e-9 * (1 + abs(hi)))
        t = rng.uniform(-5, 5)
        mono = min(mono, (a - G.scalar_yosida(g, t, prm)) * (s - t) + 1e-10)
        q = alpha / (alpha - 1)
        lhs, rhs = abs(r) ** alpha, lam**q * abs(a) ** q
        gauge = min(gauge, 1e-9 - abs(lhs - rhs) / max(lhs, rhs, 1e-300))
        if g.odd:
            odd = min(odd, 1e-12 * (1 + abs(y)) - abs(G.scalar_resolvent(g, -s, prm) + y))
    return [_check("yosida_bounded_by_minimal_section", bounded),
            _check("yosida_in_graph_at_resolvent", in_graph),
            _check("yosida_monotone", mono), _check("gauge_identity", gauge),
            _check("odd_symmetry", odd)]


def check_scalar_limit(rng, lv: Level, graphs=None, alphas=(1.5, 2.0), count=None) -> list[Check]:
    """Gap to the minimal section is nonincreasing along lam = 10^0..10^-6 and ends below 1e-4."""
    s = rng.uniform(-2, 2, count or min(lv.scalar, 200))
    decreasing, final = np.inf, np.inf
    for g in graphs or (psi(1.5), psi(3.0), G.btw(0.5), G.sign()):
        a0 = G.minimal_section(g, s)
        for alpha in alphas:
            gaps = [np.max(np.abs(G.scalar_yosida(g, s, YosidaParams(lam, alpha)) - a0))
                    for lam in 10.0 ** -np.arange(0, 7)]
            decreasing = min(decreasing, min(a + 1e-12 - b for a, b in zip(gaps, gaps[1:])))
            final = min(final, 1e-4 - gaps[-1])
    return [_check("yosida_limit_monotone", decreasing), _check("yosida_limit_gap", final)]


def check_scalar_coercivity(rng, lv: Level) -> list[Check]:
    margin = np.inf
    for g in (psi(1.5), psi(3.0), G.power(1.5, 0.0), G.linear(1.0)):
        alpha = g.p
        for lam in (0.05, 0.5, 0.99 / g.delta):
            s = rng.uniform(-5, 5, min(lv.scalar, 500))
            a = G.scalar_yosida(g, s, YosidaParams(lam, alpha))
            margin = min(margin, np.min(a * s - g.delta * 2.0 ** (-alpha) * np.abs(s) ** alpha - g.C + 1e-9))
    return [_check("scalar_coercivity", margin)]


def check_range(rng, lv: Level) -> list[Check]:
    margin = np.inf
    for g in shipped_graphs():
        for lam in (0.1, 1.0, 10.0):
            y = rng.uniform(-10, 10, max(lv.scalar // 10, 10))
            sol = G.range_solution(g, y, lam, rng.uniform(1.2, 3.0))
            margin = min(margin, 1e-10 - sol.residual.max())
    return [_check("range_condition", margin)]


# -- operators -----------------------------------------------------------------

def check_duality(rng, lv: Level) -> list[Check]:
    ident = mono = np.inf
    for kind, p in (("porous_media", 1.5), ("porous_media", 3.0), ("phi_laplace", 1.5), ("phi_laplace", 3.0)):
        for alpha in (p, 1.5, 2.0):
            t = GelfandTriple(Grid(2, lv.grid_n), kind, p, alpha)
            for _ in range(max(lv.fields // 2, 3)):
                u, v = rng.standard_normal((2, t.grid.size)) * rng.uniform(0.01, 10, (2, 1))
                Ju, Jv = O.duality_map(u, t), O.duality_map(v, t)
                nu, nv = t.norm_V(u), t.norm_V(v)
                ident = min(ident, 1e-9 * nu**alpha - abs(t.pairing(Ju, u) - nu**alpha),
                            1e-9 * nu ** (alpha - 1) - abs(t.density_norm(Ju) - nu ** (alpha - 1)))
                lhs = t.pairing(Ju - Jv, u - v)
                mono = min(mono, lhs - (nu ** (alpha - 1) - nv ** (alpha - 1)) * (nu - nv) + 1e-9 * (1 + abs(lhs)))
    return [_check("duality_identities", ident), _check("duality_monotone", mono)]


def check_vector_yosida(rng, lv: Level, ps=(1.5, 3.0), lams=(1.0, 0.1, 0.01)) -> list[Check]:
    """Bound by the minimal section, selection property and decreasing gap on a 2D grid."""
    bound = select = gap = resid = np.inf
    for p in ps:
        op = O.porous_media(psi(p), GelfandTriple(Grid(2, lv.grid_n), "porous_media", p))
        t = op.triple
        for _ in range(lv.fields):
            x = rng.standard_normal(op.grid.size) * rng.uniform(0.1, 3)
            a0 = O.apply_minimal(op, x)
            n0 = t.dual_norm(a0)
            gaps = []
            for lam in lams:
                prm = YosidaParams(lam, p)
                res = O.resolvent_solution(op, x, prm)
                a = O.duality_map(x - res.y, t, p) * (1.0 / lam)
                resid = min(resid, 1e-10 - res.relative_residual)
                bound = min(bound, n0 * (1 + 1e-6) - t.dual_norm(a))
                lo, hi = op.selection_bounds(res.y)
                slack = 1e-6 * (1 + np.abs(a.values))
                select = min(select, np.min(a.values - lo + slack), np.min(hi - a.values + slack))
                gaps.append(t.dual_norm(a - a0))
            gap = min(gap, min(u - v + 1e-6 * n0 for u, v in zip(gaps, gaps[1:])))
    return [_check("vector_resolvent_residual", resid), _check("vector_yosida_bounded", bound),
            _check("vector_yosida_selection", select), _check("vector_yosida_gap_decreasing", gap)]


def check_vector_monotone(rng, lv: Level) -> list[Check]:
    yos = op_mono = uniq = np.inf
    for p in (1.5, 3.0):
        op = O.porous_media(psi(p), GelfandTriple(Grid(2, lv.grid_n), "porous_media", p))
        t = op.triple
        prm = YosidaParams(0.3, p)
        alt = O.SolverOpts(mu_schedule=(1e-2, 1e-4, 1e-6), method="newton")
        for _ in range(max(lv.fields // 2, 2)):
            u, v = rng.standard_normal((2, op.grid.size)) * rng.uniform(0.1, 3, (2, 1))
            au, av = O.vector_yosida(op, u, prm), O.vector_yosida(op, v, prm)
            yos = min(yos, t.pairing(au - av, u - v) + 1e-8)
            mu, mv = O.apply_minimal(op, u), O.apply_minimal(op, v)
            op_mono = min(op_mono, t.pairing(mu - mv, u - v) + 1e-9)
            y1 = O.vector_resolvent(op, u, prm)
            y2 = O.vector_resolvent(op, u, prm, alt)
            uniq = min(uniq, 1e-6 - t.norm_H(y1 - y2))
    for g in (G.sign(), G.non_newtonian(3.0)):
        pp = 3.0 if g.p == 3.0 else 2.0
        op = O.phi_laplace(g, GelfandTriple(Grid(1, 16), "phi_laplace", pp))
        for _ in range(max(lv.fields // 2, 2)):
            u, v = rng.standard_normal((2, op.grid.size))
            mu, mv = O.apply_minimal(op, u), O.apply_minimal(op, v)
            op_mono = min(op_mono, op.triple.pairing(mu - mv, u - v) + 1e-9)
    return [_check("vector_yosida_monotone", yos), _check("operator_monotone", op_mono),
            _check("vector_resolvent_uniqueness", uniq)]


def check_vector_coercivity(rng, lv: Level, fields: int | None = None) -> list[Check]:
    bound = hA2 = np.inf
    for p in (1.5, 3.0):
        op = O.porous_media(psi(p), GelfandTriple(Grid(2, lv.grid_n), "porous_media", p))
        g, t, a = op.graph, op.triple, op.assumptions
        for lam in (0.05, 0.5, 0.99):
            for _ in range(fields or max(lv.fields // 3, 2)):
                x = rng.standard_normal(op.grid.size) * rng.uniform(0.1, 5)
                ay = O.vector_yosida(op, x, YosidaParams(lam, p))
                bnd = g.delta * 2.0 ** (-p) * t.norm_V(x) ** p + g.C * op.grid.measure
                bound = min(bound, t.pairing(ay, x) - bnd + 1e-8)
                a0 = O.apply_minimal(op, x)
                hA2 = min(hA2, t.pairing(a0, x) - a.delta * t.norm_V(x) ** a.alpha + a.f + 1e-8)
    return [_check("vector_coercivity", bound), _check("operator_coercivity", hA2)]


# -- sde -----------------------------------------------------------------------

def _fast_diffusion(n: int) -> O.MultiValuedOperator:
    return O.porous_media(G.power(1.5, 0.0), GelfandTriple(Grid(1, n), "porous_media", 1.5))


def check_scheme_consistency(rng, lv: Level, n: int | None = None) -> list[Check]:
    n = n or (16 if lv.grid_n <= 4 else 32)
    grid = Grid(1, n)
    op = O.porous_media(G.linear(1.0), GelfandTriple(grid, "porous_media", 2.0))
    x = grid.sine_mode(1) + 0.5 * grid.sine_mode(3)
    ref = scipy.linalg.expm(0.1 * grid.laplacian_matrix.toarray()) @ x
    errs = [op.triple.norm_H(S.simulate(S.SimConfig(op, x, 0.1, dt, 1e-9, snapshot_times=(0.1,)))
                             .snapshots[0.1] - ref) for dt in (1e-3, 5e-4)]
    ratio = errs[0] / errs[1]
    return [_check("scheme_consistency", min(ratio - 1.7, 2.3 - ratio), f"ratio={ratio:.6f}")]


def check_paths(rng, lv: Level) -> list[Check]:
    op = _fast_diffusion(16)
    x = 0.2 * op.grid.sine_mode()
    cfg = S.SimConfig(op, x, T=0.15, dt=2e-3, mu=1e-3, noise=S.NoiseModel((0.3, 0.2)), seed=11,
                      snapshot_times=(0.05,))
    one = S.run_trajectories(cfg, lv.mc, threads=1)
    many = S.run_trajectories(cfg, lv.mc, threads=8)
    same = all(np.array_equal(a.norm_H, b.norm_H) and np.array_equal(a.snapshots[0.05], b.snapshots[0.05])
               for a, b in zip(one, many))
    absorbing = min((0.0 if not np.any(tr.norm_H[tr.times >= tr.tau]) else -1.0)
                    for tr in one if tr.extinct) if any(tr.extinct for tr in one) else -1.0
    # pure noise: the state stays a multiple of x
    zero = G.piecewise([], [[0.0, 0.0]])
    opz = O.porous_media(zero, GelfandTriple(Grid(2, 6), "porous_media", 2.0))
    xz = rng.standard_normal(opz.grid.size)
    trz = S.simulate(S.SimConfig(opz, xz, T=0.2, dt=0.01, mu=0.1, noise=S.NoiseModel((0.5, 0.3)),
                                 snapshot_times=(0.2,)))
    X = trz.snapshots[0.2]
    shape = 1e-12 * np.abs(X).max() - np.abs(X - (X @ xz / (xz @ xz)) * xz).max()
    # empty noise: the H-norm is nonincreasing
    energy = np.inf
    for g in (G.non_newtonian(3.0), G.sign()):
        p = 3.0 if g.p == 3.0 else 2.0
        opl = O.phi_laplace(g, GelfandTriple(Grid(1, 12), "phi_laplace", p))
        xl = opl.grid.sine_mode(1) + 0.5 * opl.grid.sine_mode(3)
        tr = S.simulate(S.SimConfig(opl, xl, T=0.05, dt=1e-3, mu=1e-2, eps=1e-8))
        energy = min(energy, np.min(1e-14 - np.diff(tr.norm_H)))
    return [_check("thread_determinism", 0.0 if same else -1.0), _check("zero_absorbing", absorbing),
            _check("noise_structure", shape), _check("energy_nonincreasing_without_noise", energy)]


# -- extinction ------------------------------------------------------------------

def check_extinction(rng, lv: Level) -> list[Check]:
    floor = np.inf
    for _ in range(min(lv.scalar, 100)):
        alpha = rng.uniform(1.05, 1.95)
        cs = E.c_star(1.0, alpha, 2.0)
        xn, T, dx, dT = rng.uniform(0.01, 10, 4)
        f = E.theoretical_floor(cs, xn, alpha, T)
        floor = min(floor, E.theoretical_floor(cs, xn, alpha, T + dT) - f, f - E.theoretical_floor(cs, xn + dx, alpha, T))
    op = _fast_diffusion(8)
    cfg = S.SimConfig(op, 0.2 * op.grid.sine_mode(), T=0.2, dt=4e-3, mu=1e-3, noise=S.NoiseModel((0.02, 0.02)))
    a = E.mc_extinction(cfg, E.MIN_TRAJECTORIES, threads=1)
    b = E.mc_extinction(cfg, E.MIN_TRAJECTORIES, threads=4)
    bracket = a.mean_upper - a.mean_lower
    return [_check("floor_monotone", floor),
            _check("report_determinism", 0.0 if a.to_dict() == b.to_dict() else -1.0),
            _check("censored_mean_bracket", bracket)]


SUITE = (check_laplacian, check_embedding, check_power_means, check_scalar_resolvent, check_scalar_yosida,
         check_scalar_limit, check_scalar_coercivity, check_range, check_duality, check_vector_yosida,
         check_vector_monotone, check_vector_coercivity, check_scheme_consistency, check_paths,
         check_extinction)


@dataclass
class SuiteResult:
    level: str
    seed: int
    checks: list
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"level": self.level, "seed": self.seed, "passed": self.passed,
                "checks": {c.name: {"passed": c.passed, "margin": c.margin, "detail": c.detail}
                           for c in self.checks}}


def run_suite(level: str = "fast", seed: int = 0, progress=None) -> SuiteResult:
    lv = Level.named(level)
    out = SuiteResult(level, seed, [])
    for k, fn in enumerate(SUITE):
        rng = np.random.default_rng([seed, k])
        t0 = time.perf_counter()
        checks = fn(rng, lv)
        out.timings[fn.__name__] = time.perf_counter() - t0
        out.checks.extend(checks)
        if progress:
            for c in checks:
                progress(c)
    return out
