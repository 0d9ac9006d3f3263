"""Field-level multi-valued operators, the gauged duality map and vector Yosida approximations.

Three operator families act on grid fields through a scalar graph ``g``:

porous_media
    ``u -> -Delta g(u)`` on ``V = L^p``, duals stored as ``L^{p'}`` densities
    (the density of ``-Delta w`` is ``w``).
phi_laplace
    ``u -> -div g(grad u)`` on ``V = W^{1,p}_0``, duals stored as edge densities.
subdifferential
    ``u -> -Delta u + g(u)``, the subdifferential of
    ``1/2 |grad u|^2 + G(u)`` on ``V = W^{1,2}_0``; duals are node functionals.

The generalized resolvent ``0 in J(y - x) + lam A(y)`` is the minimizer of the
strictly convex energy ``|y - x|_V^alpha / alpha + lam * phi(y)``.  It is
computed by damped Newton on the energy with the graph replaced by its
Moreau-Yosida smoothing, driving the smoothing parameter down a geometric
schedule.  For the two node-wise families an exact-branch Newton polish with
the jump nodes held fixed then removes the smoothing bias.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from . import graphs as G
from ._newton import NewtonDivergence, newton_minimize
from .graphs import ScalarGraph, YosidaParams
from .spaces import Dual, GelfandTriple, Grid, inv_laplacian, lp_norm

logger = logging.getLogger(__name__)

OperatorKind = Literal["porous_media", "phi_laplace", "subdifferential"]

__all__ = [
    "MultiValuedOperator", "OperatorAssumptions", "SingleValuedDrift", "SolverOpts",
    "NewtonDivergence", "porous_media", "phi_laplace", "subdifferential", "duality_map",
    "apply_minimal", "vector_resolvent", "vector_yosida", "resolvent_solution",
    "yosida_regularized_drift", "drift_B", "validate_assumptions",
]


@dataclass(frozen=True)
class OperatorAssumptions:
    """Constants in ``<v, u> >= delta |u|_V^alpha - f`` and
    ``|A0(u)|_{V*}^{alpha/(alpha-1)} <= (f + C |u|_V^alpha)(1 + |u|_H^beta)``."""

    delta: float
    alpha: float
    beta: float = 0.0
    C: float = 0.0
    f: float = 0.0
    lower: float = 0.0  # signed constant of the coercivity bound, -f_coercive

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if self.beta < 0 or self.f < 0 or self.C < 0:
            raise ValueError("beta, f and C must be nonnegative")


@dataclass(frozen=True, eq=False)
class MultiValuedOperator:
    kind: OperatorKind
    graph: ScalarGraph
    triple: GelfandTriple
    assumptions: OperatorAssumptions | None = None

    def __post_init__(self):
        need = {"porous_media": "porous_media", "phi_laplace": "phi_laplace",
                "subdifferential": "phi_laplace"}
        if self.kind not in need:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.triple.kind != need[self.kind]:
            raise ValueError(f"{self.kind} operator needs a {need[self.kind]} triple")
        if self.kind == "subdifferential" and self.triple.p != 2.0:
            raise ValueError("subdifferential operator needs p = 2")
        if self.assumptions is None:
            object.__setattr__(self, "assumptions", _derive_assumptions(self))

    def __repr__(self):
        return f"MultiValuedOperator({self.kind}, {self.graph.name}, p={self.triple.p:g})"

    @property
    def grid(self) -> Grid:
        return self.triple.grid

    @property
    def dual_kind(self) -> str:
        return {"porous_media": "density", "phi_laplace": "grad", "subdifferential": "node"}[self.kind]

    @property
    def graph_measure(self) -> float:
        """Quadrature measure of the points the graph acts on (nodes or edges)."""
        if self.kind == "phi_laplace":
            return self.grid.edge_count * self.grid.w
        return self.grid.measure

    def argument(self, u: np.ndarray) -> np.ndarray:
        """Where the graph is evaluated: ``u`` itself or its edge gradient."""
        return self.grid.gradient_matrix @ u if self.kind == "phi_laplace" else u

    def assemble(self, values: np.ndarray, u: np.ndarray) -> Dual:
        """Dual element built from graph values at :meth:`argument`."""
        if self.kind == "subdifferential":
            return Dual("node", -(self.grid.laplacian_matrix @ u) + values)
        return Dual(self.dual_kind, values)

    def selection_bounds(self, u: np.ndarray):
        return self.graph.bounds(self.argument(u))


def porous_media(graph: ScalarGraph, triple: GelfandTriple, **kw) -> MultiValuedOperator:
    return MultiValuedOperator("porous_media", graph, triple, **kw)


def phi_laplace(graph: ScalarGraph, triple: GelfandTriple, **kw) -> MultiValuedOperator:
    return MultiValuedOperator("phi_laplace", graph, triple, **kw)


def subdifferential(graph: ScalarGraph, triple: GelfandTriple, **kw) -> MultiValuedOperator:
    return MultiValuedOperator("subdifferential", graph, triple, **kw)


def _derive_assumptions(op: MultiValuedOperator) -> OperatorAssumptions | None:
    g, t = op.graph, op.triple
    meas = op.graph_measure
    if op.kind == "subdifferential":
        # -Delta part gives delta = 1; the graph only shifts the lower constant
        lower = min(0.0, g.C) * meas
        if g.p > 2:
            return OperatorAssumptions(1.0, 2.0, 0.0, 0.0, -lower, lower)
        c0sq = t.grid.mode_eigenvalue()
        c = g.growth
        C = 2.0 + 4.0 * c * c / c0sq**2
        f = max(-lower, 16.0 * c * c * meas / c0sq)
        return OperatorAssumptions(1.0, 2.0, 0.0, C, f, lower)
    if g.delta <= 0 or g.p != t.p:
        return None
    q = t.p / (t.p - 1.0)
    Cg = 2.0 ** (q - 1.0) * g.growth**q
    lower = min(0.0, g.C) * meas
    return OperatorAssumptions(g.delta, t.p, 0.0, Cg, max(Cg * meas, -lower), lower)


# -- duality map and minimal section -----------------------------------------

def duality_map(u: np.ndarray, triple: GelfandTriple, alpha: float | None = None) -> Dual:
    """Gauged duality map, the gradient of ``|u|_V^alpha / alpha``."""
    alpha = triple.gauge if alpha is None else alpha
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    p, w = triple.p, triple.grid.w
    r = u if triple.kind == "porous_media" else triple.grid.gradient_matrix @ u
    kind = "density" if triple.kind == "porous_media" else "grad"
    m = lp_norm(r, p, w)
    if m == 0:
        return Dual(kind, np.zeros_like(r))
    return Dual(kind, m ** (alpha - p) * np.sign(r) * np.abs(r) ** (p - 1.0))


def apply_minimal(op: MultiValuedOperator, u: np.ndarray) -> Dual:
    """Least-norm element of ``A(u)``.

    Pointwise minimal section for porous media (exact) and phi-Laplace (a
    representative); for the subdifferential family the graph selection on
    jump nodes solves the bound-constrained least ``W^{-1,2}`` norm problem.
    """
    g = op.graph
    if op.kind != "subdifferential":
        return Dual(op.dual_kind, G.minimal_section(g, op.argument(u)))
    grid = op.grid
    b = -(grid.laplacian_matrix @ u)
    lo, hi = g.bounds(u)
    sigma = G.minimal_section(g, u)
    free = lo < hi
    if not free.any():
        return Dual("node", b + sigma)
    idx = np.flatnonzero(free)

    def fun(z):
        s = sigma.copy()
        s[idx] = z
        v = b + s
        Lv = inv_laplacian(grid, v)
        return 0.5 * float(v @ Lv), Lv[idx]

    # start from the pointwise projection of -b, the unconstrained minimizer
    z0 = np.clip(-b[idx], lo[idx], hi[idx])
    res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B",
                            bounds=list(zip(lo[idx], hi[idx])),
                            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000})
    sigma[idx] = res.x
    return Dual("node", b + sigma)


# -- vector resolvent -----------------------------------------------------------

@dataclass(frozen=True)
class SolverOpts:
    mu_schedule: tuple = tuple(10.0 ** -k for k in range(1, 7))
    tol: float = 1e-10
    stage_tol: float = 1e-9
    max_newton: int = 200
    polish: bool = True
    method: Literal["auto", "newton"] = "auto"


@dataclass
class ResolventResult:
    y: np.ndarray
    selection: Dual  # element of A(y) balancing the duality term
    residual: float  # dual norm of J(y - x) + lam * selection
    relative_residual: float
    stages: list = field(default_factory=list)
    polished: bool = False


class _Energy:
    """``|G1 (y - x)|_p^alpha / alpha + lam (sum Gs(G2 y) + y'Ky/2)``, everything divided by ``h^d``."""

    def __init__(self, op: MultiValuedOperator, x: np.ndarray, lam: float, alpha: float):
        grid = op.grid
        self.op, self.x, self.lam, self.alpha = op, x, lam, alpha
        self.p, self.w = op.triple.p, grid.w
        D, L = grid.gradient_matrix, (-grid.laplacian_matrix).tocsr()
        if op.kind == "porous_media":
            self.G1 = self.G2 = self.K = None
        elif op.kind == "phi_laplace":
            self.G1 = self.G2 = D
            self.K = None
        else:
            self.G1, self.G2, self.K = D, None, L

    @staticmethod
    def _mul(M, v):
        return v if M is None else M @ v

    @staticmethod
    def _tmul(M, v):
        return v if M is None else M.T @ v

    def duality_part(self, y):
        r = self._mul(self.G1, y - self.x)
        S = float(np.sum(np.abs(r) ** self.p)) * self.w
        kappa = S ** (self.alpha / self.p - 1.0) if S > 0 else 0.0
        jr = np.sign(r) * np.abs(r) ** (self.p - 1.0)
        return r, S, kappa, jr

    def gradient(self, y, section):
        _, _, kappa, jr = self.duality_part(y)
        val, _ = section(self._mul(self.G2, y))
        a = self._tmul(self.G2, val)
        if self.K is not None:
            a = a + self.K @ y
        return self._tmul(self.G1, kappa * jr) + self.lam * a

    def scales(self, y, section):
        _, _, kappa, jr = self.duality_part(y)
        val, _ = section(self._mul(self.G2, y))
        a = self._tmul(self.G2, val)
        if self.K is not None:
            a = a + self.K @ y
        return max(np.max(np.abs(self._tmul(self.G1, kappa * jr)), initial=0.0),
                   self.lam * np.max(np.abs(a), initial=0.0))

    def newton_step(self, y, g, section, free=None):
        r, S, kappa, jr = self.duality_part(y)
        p = self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            dJ = kappa * (p - 1.0) * np.abs(r) ** (p - 2.0)
        dJ = _cap(dJ)
        _, der = section(self._mul(self.G2, y))
        der = _cap(self.lam * np.asarray(der, dtype=float), floor=0.0)
        if self.G1 is None and self.G2 is None and self.K is None:
            M = sp.diags(dJ + der, format="csc")
        else:
            M = self._assemble(self.G1, dJ) + self._assemble(self.G2, der)
            if self.K is not None:
                M = M + self.lam * self.K
            M = M.tocsc()
        v = self._tmul(self.G1, jr)
        c = (self.alpha - p) * S ** (self.alpha / p - 2.0) * self.w if S > 0 else 0.0
        if free is not None:
            idx = np.flatnonzero(free)
            M = M[idx][:, idx]
            g, v = g[idx], v[idx]
        d = _woodbury_solve(M, c, v, -g)
        if free is not None:
            full = np.zeros_like(y)
            full[idx] = d
            return full
        return d

    @staticmethod
    def _assemble(Gm, diag):
        if Gm is None:
            return sp.diags(diag, format="csr")
        return (Gm.T @ sp.diags(diag) @ Gm).tocsr()


def _cap(d, floor=None):
    d = np.asarray(d, dtype=float)
    finite = d[np.isfinite(d) & (d > 0)]
    ref = float(np.max(finite)) if finite.size else 1.0
    hi = 1e12 * ref
    lo = 1e-14 * ref if floor is None else floor
    return np.clip(np.where(np.isnan(d), hi, d), lo, hi)


def _woodbury_solve(M, c, v, rhs):
    if M.shape[0] == 0:
        return np.zeros(0)
    if sp.issparse(M) and M.nnz == M.shape[0] and (M.indices == np.arange(M.shape[0])).all():
        dia = M.diagonal()
        solve = lambda b: b / dia  # noqa: E731
    else:
        lu = spla.splu(M)
        solve = lu.solve
    z = solve(rhs)
    if c != 0 and np.any(v):
        zv = solve(v)
        denom = 1.0 + c * float(v @ zv)
        if denom > 1e-12:
            z = z - c * float(v @ z) / denom * zv
    return z


def _smoothed(g: ScalarGraph, mu: float):
    def section(q):
        val, der, _ = G.moreau_section(g, q, mu)
        return val, der
    return section


def _exact(g: ScalarGraph):
    def section(q):
        lo, hi = g.bounds(q)
        return lo, g.derivative(q)
    return section


def _residual(energy: _Energy, y: np.ndarray, sigma: np.ndarray) -> tuple[float, float, Dual]:
    """Dual norm of ``J(y - x) + lam a`` for the selection ``a`` built from ``sigma``."""
    op, lam = energy.op, energy.lam
    triple = op.triple
    _, _, kappa, jr = energy.duality_part(y)
    if op.kind == "porous_media":
        Jv = kappa * jr
        sel = Dual("density", sigma)
        res = Dual("density", Jv + lam * sigma)
        rn = triple.dual_norm(res)
        scale = max(triple.dual_norm(Dual("density", Jv)), lam * triple.dual_norm(sel))
    else:
        grid = op.grid
        D = grid.gradient_matrix
        Jn = D.T @ (kappa * jr)
        if op.kind == "phi_laplace":
            a_node = D.T @ sigma
            sel = Dual("grad", sigma)
        else:
            a_node = -(grid.laplacian_matrix @ y) + sigma
            sel = Dual("node", a_node)
        rn = triple.dual_norm(Dual("node", Jn + lam * a_node))
        scale = max(triple.dual_norm(Dual("node", Jn)), lam * triple.dual_norm(Dual("node", a_node)))
    return rn, rn / scale if scale > 0 else rn, sel


def _selection(g: ScalarGraph, q: np.ndarray, mu: float) -> np.ndarray:
    """Smoothed section clipped to the value set, jump values taken at nearby breakpoints."""
    val, _, _ = G.moreau_section(g, q, mu)
    q = q.copy()
    for b, lo, hi in g.jump_intervals:
        if hi > lo:
            q[np.abs(q - b) <= 2.0 * mu * (1.0 + max(abs(lo), abs(hi)))] = b
    return G.selection(g, q, val)


def _porous_media_reduction(op: MultiValuedOperator, x: np.ndarray, lam: float, alpha: float):
    """Porous-media resolvent through scalar resolvents.

    With ``m = |y - x|_p`` the inclusion reads ``j_p(y - x) + lam m^(p-alpha) g(y)``
    node by node, so ``y = R(x; lam m^(p-alpha))`` and ``m`` solves a scalar
    fixed point ``log m(lam m^(p-alpha)) = log m``, strictly decreasing in ``log m``.
    """
    g, p, w = op.graph, op.triple.p, op.grid.w

    def scalar(lp):
        return G.resolvent_solution(g, x, YosidaParams(lp, p)).x

    y = scalar(lam)
    m0 = lp_norm(y - x, p, w)
    if alpha == p or m0 == 0.0:
        return y

    def F(t):
        return np.log(lp_norm(scalar(lam * np.exp((p - alpha) * t)) - x, p, w)) - t

    t0 = np.log(m0)
    f0 = F(t0)
    step = 1.0 if f0 > 0 else -1.0
    a, b = t0, t0 + step
    while F(b) * f0 > 0:
        a, b = b, b + step
        step *= 2.0
        if abs(step) > 4096:
            raise NewtonDivergence("reduction", abs(f0), "no bracket for the norm fixed point")
    t = optimize.brentq(F, min(a, b), max(a, b), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return scalar(lam * np.exp((p - alpha) * t))


def _polish(energy: _Energy, y: np.ndarray, mu: float, opts: SolverOpts):
    """Exact-branch Newton with jump nodes fixed at their breakpoints.

    Edge-wise graphs are only polished when they have no jumps.
    """
    g, lam = energy.op.graph, energy.lam
    jumps = [(b, lo, hi) for b, lo, hi in g.jump_intervals if hi > lo]
    y = y.copy()
    active = np.zeros(y.shape, dtype=bool)
    for b, lo, hi in jumps:
        near = np.abs(y - b) <= 2.0 * mu * (1.0 + max(abs(lo), abs(hi))) + 1e-14
        active |= near
        y[near] = b
    free = ~active
    section = _exact(g)

    def grad(z):
        gz = energy.gradient(z, section)
        gz[active] = 0.0
        return gz

    def conv(z, gz):
        sc = energy.scales(z, section)
        res = np.max(np.abs(gz), initial=0.0)
        return res <= opts.tol * sc or res == 0.0, res / sc if sc > 0 else res

    if free.any():
        try:
            y, _, _ = newton_minimize(grad, lambda z, gz: energy.newton_step(z, gz, section, free),
                                      y, converged=conv, max_iter=opts.max_newton, stage="polish")
        except NewtonDivergence:
            return None
    # multipliers on the fixed nodes must lie in the value interval there
    sigma = g.bounds(energy._mul(energy.G2, y))[0].copy()
    if active.any():
        _, _, kappa, jr = energy.duality_part(y)
        rest = energy._tmul(energy.G1, kappa * jr)
        if energy.K is not None:
            rest = rest + lam * (energy.K @ y)
        need = -rest[active] / lam
        lo, hi = g.bounds(y[active])
        slack = 1e-9 * (1.0 + np.abs(lo) + np.abs(hi))
        if np.any(need < lo - slack) or np.any(need > hi + slack):
            return None
        sigma[active] = np.clip(need, lo, hi)
    for b, _, _ in jumps:
        if np.any(free & (np.abs(y - b) <= 1e-13 * (1 + abs(b)))):
            return None
    return y, sigma


def resolvent_solution(op: MultiValuedOperator, x: np.ndarray, params: YosidaParams,
                       solver: SolverOpts | None = None) -> ResolventResult:
    """Generalized resolvent with diagnostics."""
    solver = solver or SolverOpts()
    x = op.grid.field(x)
    lam, alpha = params.lam, params.alpha
    energy = _Energy(op, x, lam, alpha)
    g = op.graph
    if op.kind == "porous_media" and solver.method == "auto":
        y = _porous_media_reduction(op, x, lam, alpha)
        _, _, kappa, jr = energy.duality_part(y)
        sigma = G.selection(g, y, -kappa * jr / lam)
        rn, rel, sel = _residual(energy, y, sigma)
        return ResolventResult(y, sel, rn, rel, [("reduction", 0, rel)], False)
    if op.kind == "porous_media":
        # exact when alpha = p: the problem decouples node by node
        y = G.resolvent_solution(g, x, YosidaParams(lam, op.triple.p)).x
    else:
        y = x.copy()
    stages = []
    for k, mu in enumerate(solver.mu_schedule):
        section = _smoothed(g, mu)
        last = k == len(solver.mu_schedule) - 1
        tol = solver.tol if last else solver.stage_tol

        def conv(z, gz, section=section, tol=tol):
            sc = energy.scales(z, section)
            res = np.max(np.abs(gz), initial=0.0)
            return res <= tol * sc or res == 0.0, res / sc if sc > 0 else res

        y, its, res = newton_minimize(lambda z, s=section: energy.gradient(z, s),
                                      lambda z, gz, s=section: energy.newton_step(z, gz, s),
                                      y, converged=conv, max_iter=solver.max_newton, stage=mu)
        stages.append((mu, its, res))
    mu = solver.mu_schedule[-1]
    sigma = _selection(g, energy._mul(energy.G2, y), mu)
    rn, rel, sel = _residual(energy, y, sigma)
    polished = False
    has_jumps = any(hi > lo for _, lo, hi in g.jump_intervals)
    if solver.polish and (op.kind != "phi_laplace" or not has_jumps):
        out = _polish(energy, y, mu, solver)
        if out is not None:
            rn2, rel2, sel2 = _residual(energy, out[0], out[1])
            if rn2 <= rn:
                y, rn, rel, sel, polished = out[0], rn2, rel2, sel2, True
    return ResolventResult(y, sel, rn, rel, stages, polished)


def vector_resolvent(op: MultiValuedOperator, x: np.ndarray, params: YosidaParams,
                     solver: SolverOpts | None = None) -> np.ndarray:
    """The unique ``y`` with ``0 in J(y - x) + lam A(y)``."""
    return resolvent_solution(op, x, params, solver).y


def vector_yosida(op: MultiValuedOperator, x: np.ndarray, params: YosidaParams,
                  solver: SolverOpts | None = None) -> Dual:
    """Generalized Yosida approximation ``J(x - R_lam x) / lam``."""
    y = vector_resolvent(op, x, params, solver)
    return duality_map(x - y, op.triple, params.alpha) * (1.0 / params.lam)


# -- simulation drifts -----------------------------------------------------------

def yosida_regularized_drift(op: MultiValuedOperator, u: np.ndarray, mu: float,
                             alpha: float | None = None) -> Dual:
    """Drift with the graph replaced pointwise by its generalized Yosida approximation."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if op.graph.delta > 0 and not mu * op.graph.delta < 1:
        raise ValueError(f"mu={mu} must be below 1/delta={1 / op.graph.delta}")
    alpha = op.triple.gauge if alpha is None else alpha
    val, _, _ = G.yosida_section(op.graph, op.argument(u), mu, alpha)
    return op.assemble(val, u)


@dataclass(frozen=True)
class SingleValuedDrift:
    """``Zero`` or reaction-diffusion ``-Delta u + g(t, xi, u, grad u)``.

    The shipped reaction is ``sum_k coeffs[k] u^k + advection * sum_j d_j u``;
    a custom ``gfun(t, xi, u, grad)`` may replace it.  ``f``, ``C`` and ``beta``
    are the declared constants of the weak coercivity and growth bounds; ``f``
    defaults to the value implied by the polynomial.
    """

    kind: Literal["zero", "reaction_diffusion"] = "zero"
    coeffs: tuple = ()
    advection: float = 0.0
    gfun: Callable | None = None
    f: float | None = None
    C: float | None = None
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "reaction_diffusion"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind == "zero" and (self.coeffs or self.advection or self.gfun):
            raise ValueError("zero drift takes no reaction terms")

    def coercivity_f(self, measure: float) -> float | None:
        """Constant ``f`` with ``2<B(u),u> >= -f (1 + |u|_H^2)``, or None if not implied."""
        if self.kind == "zero":
            return 0.0
        if self.f is not None:
            return self.f
        if self.gfun is not None:
            return None
        f = 0.0
        for k, a in enumerate(self.coeffs):
            if a == 0:
                continue
            if k == 0:
                f += abs(a) * max(1.0, measure)
            elif k == 1:
                f += 2.0 * max(0.0, -a)
            elif k % 2 == 0 or a < 0:
                return None  # a u^(k+1) is unbounded below
        return f


def _reaction(d: SingleValuedDrift, t: float, grid: Grid, u: np.ndarray) -> np.ndarray:
    grads = np.column_stack([C @ u for C in grid.centered_gradient_matrices])
    if d.gfun is not None:
        return np.asarray(d.gfun(t, grid.coordinates(), u, grads), dtype=float)
    out = np.zeros_like(u)
    for k, a in enumerate(d.coeffs):
        if a:
            out += a * u**k
    if d.advection:
        out += d.advection * grads.sum(axis=1)
    return out


def drift_B(d: SingleValuedDrift, t: float, u: np.ndarray, grid: Grid) -> Dual:
    """Single-valued drift as an ``L^2`` node density."""
    if d.kind == "zero":
        return Dual("node", np.zeros_like(u))
    return Dual("node", -(grid.laplacian_matrix @ u) + _reaction(d, t, grid, u))


def reaction_part(d: SingleValuedDrift, t: float, u: np.ndarray, grid: Grid) -> np.ndarray:
    """The ``g`` term alone (used by schemes that treat the Laplacian implicitly)."""
    if d.kind == "zero":
        return np.zeros_like(u)
    return _reaction(d, t, grid, u)


# -- assumption validation ----------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "margin": c.margin, "detail": c.detail} for c in self.checks}


def _random_fields(grid: Grid, n: int, rng) -> list[np.ndarray]:
    out = []
    for _ in range(n):
        scale = 10.0 ** rng.uniform(-2, 1.5)
        kind = rng.integers(3)
        if kind == 0:
            u = rng.standard_normal(grid.size)
        elif kind == 1:
            u = grid.sine_mode(*rng.integers(1, 4, size=grid.d))
        else:
            u = rng.standard_normal(grid.size) * (rng.random(grid.size) < 0.3)
        out.append(scale * u)
    return out


def _graph_checks(g: ScalarGraph, rng) -> list[Check]:
    s = np.concatenate([rng.uniform(-5, 5, 2000), [0.0], list(g.breakpoints)])
    lo, hi = g.bounds(s)
    checks = [Check("graph_maximal_monotone", G.is_maximal_monotone(g), 0.0,
                    "branch monotonicity and breakpoint limits")]
    if g.delta > 0:
        bound = g.delta * np.abs(s) ** g.p + g.C
        m = float(np.min(np.minimum(s * lo, s * hi) - bound))
        checks.append(Check("graph_coercivity", m >= -1e-9, m, f"c1={g.delta:g}, c2={-g.C:g}, p={g.p:g}"))
    else:
        checks.append(Check("graph_coercivity", False, float("-inf"), "graph declares no coercivity"))
    gp = max(g.p, 1.0)
    gb = g.growth * np.abs(s) ** (gp - 1.0) + g.growth
    m = float(np.min(gb - np.maximum(np.abs(lo), np.abs(hi))))
    checks.append(Check("graph_growth", m >= -1e-9, m, f"c={g.growth:g}"))
    return checks


def validate_assumptions(op: MultiValuedOperator, drift: SingleValuedDrift | None = None,
                         noise=None, *, samples: int = 100, seed: int = 0) -> AssumptionReport:
    """Symbolic and randomized checks of the standing assumptions.

    ``noise`` is anything with an ``h(t)`` method (see ``sde.NoiseModel``);
    its ``horizon`` attribute, if present, bounds the time grid sampled.
    """
    rng = np.random.default_rng(seed)
    drift = drift or SingleValuedDrift()
    grid, triple = op.grid, op.triple
    checks = _graph_checks(op.graph, rng)
    fields = _random_fields(grid, samples, rng)
    A = op.assumptions

    # monotonicity of pointwise selections
    worst = np.inf
    for u, v in zip(fields, fields[::-1]):
        lo_u, hi_u = op.selection_bounds(u)
        lo_v, hi_v = op.selection_bounds(v)
        su = lo_u + rng.random(lo_u.shape) * (hi_u - lo_u)
        sv = lo_v + rng.random(lo_v.shape) * (hi_v - lo_v)
        val = triple.pairing(op.assemble(su, u) - op.assemble(sv, v), u - v)
        scale = 1.0 + abs(triple.pairing(op.assemble(su, u), u)) + abs(triple.pairing(op.assemble(sv, v), v))
        worst = min(worst, val / scale)
    checks.append(Check("H_A1_monotone", worst >= -1e-9, float(worst)))

    if A is None:
        checks.append(Check("H_A2_coercive", False, float("-inf"), "no coercivity constant declared"))
        checks.append(Check("H_A3_growth", False, float("-inf"), "no growth constants declared"))
    else:
        if op.kind != "subdifferential" and A.alpha != triple.gauge:
            checks.append(Check("gauge_matches_exponent", False, triple.gauge - A.alpha,
                                "declared constants hold with alpha = p"))
        m2, m3 = np.inf, np.inf
        for u in fields:
            a = apply_minimal(op, u)
            nv = triple.norm_V(u)
            lhs = triple.pairing(a, u)
            rhs = A.delta * nv**A.alpha - A.f
            m2 = min(m2, (lhs - rhs) / (1.0 + abs(rhs)))
            an = triple.dual_norm(a) if op.kind != "phi_laplace" else triple.density_norm(a)
            grow = an ** (A.alpha / (A.alpha - 1.0))
            bound = (A.f + A.C * nv**A.alpha) * (1.0 + triple.norm_H(u) ** A.beta)
            m3 = min(m3, (bound - grow) / (1.0 + bound))
        checks.append(Check("H_A2_coercive", m2 >= -1e-8, float(m2), f"delta={A.delta:g}, f={A.f:g}"))
        checks.append(Check("H_A3_growth", m3 >= -1e-9, float(m3), f"C={A.C:g}, beta={A.beta:g}"))

    # drift
    fB = drift.coercivity_f(grid.measure)
    if fB is None:
        checks.append(Check("H_B1_weak_coercive", False, float("-inf"), "reaction not bounded below"))
    elif drift.kind == "zero":
        checks.append(Check("H_B1_weak_coercive", True, 0.0, "zero drift"))
    else:
        if triple.kind != "phi_laplace":
            checks.append(Check("H_B1_weak_coercive", False, float("-inf"),
                                "reaction-diffusion drift needs the L^2 triple"))
        else:
            m = np.inf
            for u in fields:
                lhs = 2.0 * triple.pairing(drift_B(drift, 0.0, u, grid), u)
                rhs = -fB * (1.0 + triple.norm_H(u) ** 2)
                m = min(m, (lhs - rhs) / (1.0 + abs(rhs)))
            checks.append(Check("H_B1_weak_coercive", m >= -1e-9, float(m), f"f={fB:g}"))
    if drift.kind == "zero":
        checks.append(Check("H_B2_growth", True, 0.0, "zero drift"))
    elif drift.C is None:
        checks.append(Check("H_B2_growth", False, float("-inf"), "growth constants not declared"))
    else:
        alpha = 2.0
        m = np.inf
        for u in fields:
            b = drift_B(drift, 0.0, u, grid)
            grow = triple.dual_norm(b) ** (alpha / (alpha - 1.0))
            bound = ((drift.f or 0.0) + drift.C * triple.norm_V(u) ** alpha) * (1 + triple.norm_H(u) ** drift.beta)
            m = min(m, (bound - grow) / (1.0 + bound))
        checks.append(Check("H_B2_growth", m >= -1e-9, float(m)))

    if noise is not None:
        horizon = getattr(noise, "horizon", None) or 10.0
        ts = np.linspace(0.0, horizon, 201)
        h = np.array([noise.h(t) for t in ts])
        finite = bool(np.all(np.isfinite(h)))
        checks.append(Check("H_sigma", finite, float(np.max(h)) if finite else float("inf"),
                            "|sigma(t,x)|^2 = h(t)|x|_H^2 with f_sigma = h"))
        alpha = A.alpha if A is not None else triple.gauge
        fb = fB if fB is not None else np.inf
        m = float(np.min((alpha - 1.0) * h - fb))
        checks.append(Check("H_sigma_star", m >= 0.0, m, f"(alpha-1) h(t) >= f = {fb:g}"))
    return AssumptionReport(checks)
