"""Scalar maximal-monotone graphs and their generalized resolvents.

A graph is stored as a sorted list of breakpoints and one continuous,
nondecreasing branch per open interval between them.  The value set at a
breakpoint is the closed interval spanned by the one-sided branch limits, so
maximality holds by construction.  All evaluation routines are vectorized
over numpy arrays; scalars go in and come out as 0-d results.

The inclusion ``0 in j(y - s) + lam * g(y)`` with ``j(r) = |r|^(alpha-1) sign(r)``
is solved by bisection on the ordered bit pattern of doubles, which reaches
adjacent floating point numbers in at most 64 halvings from any bracket.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Branch = Callable[[np.ndarray], np.ndarray]


class BracketError(RuntimeError):
    """The root bracket could not be expanded to contain a sign change."""


class GraphError(ValueError):
    """A graph definition is not monotone or not maximal."""


def _const(c: float) -> Branch:
    return lambda s: np.full_like(np.asarray(s, dtype=float), c)


@dataclass(frozen=True, eq=False)
class ScalarGraph:
    """A maximal-monotone graph on the real line.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing points where the graph may be multi-valued.
    branches : sequence of callables
        ``len(breakpoints) + 1`` vectorized continuous nondecreasing functions;
        branch ``k`` is used on ``(b[k-1], b[k])``.  Each branch must extend
        continuously to the endpoints of its interval.
    derivatives : sequence of callables, optional
        Branch derivatives.  Central differences are used where absent.
    delta, p, C :
        Coercivity ``s * v >= delta |s|^p + C`` for every ``v in g(s)``
        (``delta = 0`` when the graph is not coercive).
    growth :
        Constant ``c`` with ``|v| <= c |s|^(p-1) + c``.
    inverse : callable, optional
        Single-valued inverse, available when the graph is strictly increasing.
    """

    breakpoints: tuple
    branches: tuple
    derivatives: tuple | None = None
    name: str = "graph"
    delta: float = 0.0
    p: float = 2.0
    C: float = 0.0
    growth: float = 1.0
    odd: bool = False
    inverse: Branch | None = None
    inverse_derivative: Branch | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b.ndim != 1 or np.any(np.diff(b) <= 0) or not np.all(np.isfinite(b)):
            raise GraphError("breakpoints must be finite and strictly increasing")
        if len(self.branches) != len(b) + 1:
            raise GraphError(f"need {len(b) + 1} branches for {len(b)} breakpoints")
        if self.derivatives is not None and len(self.derivatives) != len(self.branches):
            raise GraphError("need one derivative per branch")
        if self.delta < 0:
            raise GraphError("coercivity constant must be nonnegative")
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in b))
        object.__setattr__(self, "branches", tuple(self.branches))
        lo = np.array([self.branches[k](np.array(x)) for k, x in enumerate(b)], dtype=float)
        hi = np.array([self.branches[k + 1](np.array(x)) for k, x in enumerate(b)], dtype=float)
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise GraphError("branch limits at breakpoints must be finite")
        if np.any(lo > hi):
            raise GraphError("graph is not monotone across a breakpoint")
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    def __repr__(self):
        return f"ScalarGraph({self.name})"

    @property
    def jump_intervals(self) -> list[tuple[float, float, float]]:
        """``(breakpoint, lo, hi)`` for every breakpoint."""
        return [(b, float(l), float(h)) for b, l, h in zip(self.breakpoints, self._lo, self._hi)]

    @property
    def has_flats(self) -> bool:
        """Whether the graph fails to be strictly increasing (then it has no single-valued inverse)."""
        return self.inverse is None

    def _locate(self, s: np.ndarray):
        b = np.asarray(self.breakpoints)
        idx = np.searchsorted(b, s, side="left")
        at_bp = np.zeros(s.shape, dtype=bool)
        if b.size:
            inside = idx < b.size
            at_bp[inside] = s[inside] == b[idx[inside]]
        return idx, at_bp

    def _apply(self, funcs, s, idx):
        out = np.empty_like(s)
        for k, f in enumerate(funcs):
            m = idx == k
            if np.any(m):
                out[m] = f(s[m])
        return out

    def bounds(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper ends of the value set at ``s``."""
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        idx, at_bp = self._locate(flat)
        val = self._apply(self.branches, flat, np.where(at_bp, -1, idx))
        lo, hi = val.copy(), val.copy()
        if np.any(at_bp):
            lo[at_bp] = self._lo[idx[at_bp]]
            hi[at_bp] = self._hi[idx[at_bp]]
        return lo.reshape(s.shape), hi.reshape(s.shape)

    def derivative(self, s) -> np.ndarray:
        """Branch derivative; ``inf`` at breakpoints carrying a jump."""
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        idx, at_bp = self._locate(flat)
        if self.derivatives is not None:
            d = self._apply(self.derivatives, flat, np.where(at_bp, -1, idx))
        else:
            step = 1e-6 * np.maximum(1.0, np.abs(flat))
            up = self._apply(self.branches, flat + step, idx)
            dn = self._apply(self.branches, flat - step, idx)
            d = (up - dn) / (2 * step)
        if np.any(at_bp):
            k = idx[at_bp]
            jump = self._hi[k] > self._lo[k]
            dd = d[at_bp]
            if self.derivatives is not None:
                # one-sided derivative from the right branch at a continuous breakpoint
                right = np.array([self.derivatives[kk + 1](np.array(x)) for kk, x in zip(k, flat[at_bp])])
                dd = right.reshape(dd.shape)
            dd = np.where(jump, np.inf, dd)
            d[at_bp] = dd
        return d.reshape(s.shape)


# -- builders ---------------------------------------------------------------

def sign(rho: float = 1.0) -> ScalarGraph:
    """``rho * sign(s)`` with ``[-rho, rho]`` at the origin."""
    if rho <= 0:
        raise GraphError("rho must be positive")
    return ScalarGraph(
        (0.0,), (_const(-rho), _const(rho)), (_const(0.0), _const(0.0)),
        name=f"sign(rho={rho:g})", delta=0.0, p=1.0, C=0.0, growth=rho, odd=True,
        params={"type": "sign", "rho": rho},
    )


def power(p: float, nu: float = 0.0) -> ScalarGraph:
    """``sign(s) (nu + |s|^(p-1))``, coercive with ``delta = 1`` and ``C = 0``."""
    if p <= 1:
        raise GraphError("power graph needs p > 1")
    if nu < 0:
        raise GraphError("nu must be nonnegative")
    q = p - 1.0

    def pos(s):
        return nu + np.abs(s) ** q

    def neg(s):
        return -(nu + np.abs(s) ** q)

    def dpow(s):
        a = np.abs(s)
        with np.errstate(divide="ignore"):
            return np.where(a > 0, q * a ** (q - 1.0), np.inf if q < 1 else (1.0 if q == 1 else 0.0))

    def inv(w):
        w = np.asarray(w, dtype=float)
        return np.sign(w) * np.maximum(np.abs(w) - nu, 0.0) ** (1.0 / q)

    def dinv(w):
        a = np.maximum(np.abs(np.asarray(w, dtype=float)) - nu, 0.0)
        e = 1.0 / q - 1.0
        with np.errstate(divide="ignore"):
            pos_part = (1.0 / q) * a ** e if e != 0 else np.full_like(a, 1.0 / q)
        return np.where(a > 0, pos_part, 0.0 if e > 0 else (1.0 / q if e == 0 else np.inf))

    return ScalarGraph(
        (0.0,), (neg, pos), (dpow, dpow),
        name=f"power(p={p:g}, nu={nu:g})", delta=1.0, p=p, C=0.0, growth=max(1.0, nu),
        odd=True, inverse=inv, inverse_derivative=dinv,
        params={"type": "power", "p": p, "nu": nu},
    )


def btw(delta: float = 0.0) -> ScalarGraph:
    """Sandpile graph: 0 for ``s < 0``, ``[0, 1]`` at 0 and ``1 + delta s`` for ``s > 0``."""
    if delta < 0:
        raise GraphError("delta must be nonnegative")
    return ScalarGraph(
        (0.0,), (_const(0.0), lambda s: 1.0 + delta * np.asarray(s)),
        (_const(0.0), _const(delta)),
        name=f"btw(delta={delta:g})", delta=0.0, p=2.0, C=0.0, growth=max(1.0, delta),
        odd=False, params={"type": "btw", "delta": delta},
    )


def linear(slope: float = 1.0) -> ScalarGraph:
    if slope <= 0:
        raise GraphError("slope must be positive")
    return ScalarGraph(
        (), (lambda s: slope * np.asarray(s, dtype=float),), (_const(slope),),
        name=f"linear(slope={slope:g})", delta=slope, p=2.0, C=0.0, growth=slope, odd=True,
        inverse=lambda w: np.asarray(w, dtype=float) / slope, inverse_derivative=_const(1.0 / slope),
        params={"type": "linear", "slope": slope},
    )


def non_newtonian(p: float) -> ScalarGraph:
    """``(1 + s^2)^((p-2)/2) s``, single-valued and strictly increasing."""
    if p <= 1:
        raise GraphError("non-Newtonian graph needs p > 1")
    e = (p - 2.0) / 2.0

    def f(s):
        s = np.asarray(s, dtype=float)
        return (1.0 + s * s) ** e * s

    def df(s):
        s = np.asarray(s, dtype=float)
        return (1.0 + s * s) ** (e - 1.0) * (1.0 + (p - 1.0) * s * s)

    c1 = 1.0 if p >= 2 else 2.0 ** e
    return ScalarGraph(
        (), (f,), (df,), name=f"non_newtonian(p={p:g})", delta=c1, p=p,
        C=0.0 if p >= 2 else -c1, growth=max(1.0, 2.0 ** e), odd=True,
        params={"type": "non_newtonian", "p": p},
    )


def piecewise(breakpoints: Sequence[float], branches: Sequence[Sequence[float]],
              *, delta: float = 0.0, p: float = 2.0, C: float = 0.0) -> ScalarGraph:
    """Piecewise-affine graph; branch ``k`` is ``a + b s`` given as ``[a, b]`` with ``b >= 0``."""
    coeffs = [tuple(float(c) for c in br) for br in branches]
    for c in coeffs:
        if len(c) != 2:
            raise GraphError("affine branch needs [intercept, slope]")
        if c[1] < 0:
            raise GraphError("branch slopes must be nonnegative")
    fs = [(lambda a, b: (lambda s: a + b * np.asarray(s, dtype=float)))(a, b) for a, b in coeffs]
    ds = [_const(b) for _, b in coeffs]
    g = ScalarGraph(tuple(breakpoints), tuple(fs), tuple(ds), name="piecewise",
                    delta=delta, p=p, C=C,
                    growth=max([1.0] + [abs(a) + b for a, b in coeffs]),
                    params={"type": "piecewise", "breakpoints": list(map(float, breakpoints)),
                            "branches": [list(c) for c in coeffs]})
    if not is_maximal_monotone(g):
        raise GraphError("piecewise graph is not monotone")
    return g


def from_spec(spec: dict) -> ScalarGraph:
    """Build a graph from a ``{"type": ..., **params}`` mapping."""
    spec = dict(spec)
    kind = spec.pop("type")
    builders = {"sign": sign, "power": power, "btw": btw, "linear": linear,
                "piecewise": piecewise, "non_newtonian": non_newtonian}
    if kind not in builders:
        raise GraphError(f"unknown graph type {kind!r}")
    return builders[kind](**spec)


def is_maximal_monotone(g: ScalarGraph, samples: int = 64) -> bool:
    """Check branch monotonicity on sample points and breakpoint consistency."""
    b = list(g.breakpoints)
    edges = [-10.0 + (min(b) if b else 0.0)] + b + [10.0 + (max(b) if b else 0.0)]
    for k, f in enumerate(g.branches):
        t = np.linspace(edges[k], edges[k + 1], samples)
        v = f(t)
        if np.any(~np.isfinite(v)) or np.any(np.diff(v) < -1e-12 * (1 + np.abs(v[:-1]))):
            return False
    return bool(np.all(g._lo <= g._hi))


# -- evaluation -------------------------------------------------------------

def eval(g: ScalarGraph, s) -> tuple[np.ndarray, np.ndarray]:
    """Value set ``[lo, hi]`` of ``g`` at ``s``."""
    return g.bounds(s)


def minimal_section(g: ScalarGraph, s, *, return_ties: bool = False):
    """Value of least modulus in ``g(s)``.

    Returns 0 when the interval contains 0, otherwise the endpoint nearer to 0.
    Equal-modulus endpoints resolve to ``lo``; ``return_ties`` also returns the
    boolean mask of such points.
    """
    lo, hi = g.bounds(s)
    out = np.where((lo <= 0) & (hi >= 0), 0.0, np.where(np.abs(lo) <= np.abs(hi), lo, hi))
    if return_ties:
        ties = (lo != hi) & (np.abs(lo) == np.abs(hi)) & ~((lo <= 0) & (hi >= 0))
        return out, ties
    return out


def scalar_duality(r, alpha):
    """``|r|^(alpha-1) sign(r)``; ``alpha`` may be an array broadcasting with ``r``."""
    if np.any(np.asarray(alpha) <= 1):
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    r = np.asarray(r, dtype=float)
    return np.sign(r) * np.abs(r) ** (alpha - 1.0)


def inverse_duality(v, alpha: float):
    """Inverse of :func:`scalar_duality`."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** (1.0 / (alpha - 1.0))


@dataclass(frozen=True)
class YosidaParams:
    lam: float
    alpha: float = 2.0
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if self.max_iter < 64:
            raise ValueError("max_iter below 64 cannot reach double precision")

    def check_coercive(self, g: ScalarGraph) -> None:
        """Raise unless ``lam < 1/delta`` for a coercive graph."""
        if g.delta > 0 and not self.lam * g.delta < 1:
            raise ValueError(f"lambda={self.lam} must be below 1/delta={1 / g.delta}")


@dataclass
class InclusionSolution:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    offset: np.ndarray | None = None


_SIGN = np.int64(-0x8000000000000000)


def _to_ordered(x: np.ndarray) -> np.ndarray:
    bits = np.ascontiguousarray(x, dtype=np.float64).view(np.int64)
    return np.where(bits < 0, _SIGN - bits, bits)


def _from_ordered(k: np.ndarray) -> np.ndarray:
    bits = np.where(k < 0, _SIGN - k, k)
    return bits.astype(np.int64).view(np.float64)


def _ordered_mid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a // 2 + b // 2 + ((a & 1) + (b & 1)) // 2


def solve_monotone_inclusion(F, center, radius, *, knots=(), tol=1e-12, max_iter=200,
                             scale=None, fscale=None):
    """Find ``x`` with ``0 in [Flo(x), Fhi(x)]`` for a nondecreasing set-valued ``F``.

    ``F(x)`` returns the pair ``(Flo, Fhi)``.  The bracket ``center +- radius``
    is doubled (up to 60 times) until it contains the root.  ``knots`` (points
    where ``F`` may jump, broadcast against ``center``) are tested first.
    Bisection runs in the ordered bit representation of doubles and stops per
    element once the bracket is narrower than ``tol * max(1, |x|, scale)`` and
    ``F`` varies by less than ``tol * fscale`` across it, or the two
    ends are adjacent doubles.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float)).copy()
    radius = np.broadcast_to(np.asarray(radius, dtype=float), center.shape).copy()
    a, b = center - radius, center + radius
    for _ in range(60):
        need_a = ~(F(a)[0] <= 0)  # root lies right of a iff Flo(a) <= 0
        need_b = ~(F(b)[1] >= 0)
        if not (need_a.any() or need_b.any()):
            break
        radius = np.where(need_a | need_b, 2 * radius, radius)
        a = np.where(need_a, center - radius, a)
        b = np.where(need_b, center + radius, b)
    else:
        raise BracketError("could not bracket the root of the monotone inclusion")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise BracketError("bracket expansion overflowed")
    done = np.zeros(center.shape, dtype=bool)
    x = np.zeros_like(center)
    for c in knots:
        c = np.broadcast_to(np.asarray(c, dtype=float), center.shape)
        inside = (c >= a) & (c <= b) & ~done
        if not inside.any():
            continue
        flo, fhi = F(np.where(inside, c, a))
        hit = inside & (flo <= 0) & (fhi >= 0)
        x = np.where(hit, c, x)
        done |= hit
        a = np.where(inside & (fhi < 0), c, a)
        b = np.where(inside & (flo > 0), c, b)
    fa_hi, fb_lo = F(a)[1], F(b)[0]
    ka, kb = _to_ordered(a), _to_ordered(b)
    xref = np.maximum(1.0, np.abs(center) if scale is None else np.asarray(scale, dtype=float))
    fref = tol * (1.0 if fscale is None else np.asarray(fscale, dtype=float))
    it = 0
    for it in range(1, max_iter + 1):
        if done.all():
            break
        km = _ordered_mid(ka, kb)
        m = _from_ordered(km)
        flo, fhi = F(m)
        hit = (flo <= 0) & (fhi >= 0) & ~done
        x = np.where(hit, m, x)
        done |= hit
        go_right = (fhi < 0) & ~done
        go_left = (flo > 0) & ~done
        ka = np.where(go_right, km, ka)
        fa_hi = np.where(go_right, fhi, fa_hi)
        kb = np.where(go_left, km, kb)
        fb_lo = np.where(go_left, flo, fb_lo)
        fa, fb = _from_ordered(ka), _from_ordered(kb)
        narrow = (fb - fa) <= tol * np.maximum(xref, np.abs(fa))
        flat = (fb_lo - fa_hi) <= fref
        fin = ((narrow & flat) | (kb - ka <= 1)) & ~done
        if fin.any():
            # pick the end with the smaller residual
            pick = np.where(fb_lo < -fa_hi, fb, fa)
            x = np.where(fin, np.where(narrow & flat, 0.5 * (fa + fb), pick), x)
            done |= fin
    if not done.all():
        x = np.where(done, x, 0.5 * (_from_ordered(ka) + _from_ordered(kb)))
    return x, it


def _inclusion_residual(lo, hi, base):
    """Distance from 0 to ``base + [lo, hi]``."""
    return np.maximum(0.0, np.maximum(base + lo, -(base + hi)))


def _snap(g: ScalarGraph, y: np.ndarray, ref: np.ndarray) -> np.ndarray:
    # s - (s - b) can miss a breakpoint b by a few ulps
    for bp in g.breakpoints:
        near = np.abs(y - bp) <= 4 * np.finfo(float).eps * np.maximum(np.abs(ref), abs(bp))
        y = np.where(near, bp, y)
    return y


def _zero(g: ScalarGraph) -> float | None:
    """A point ``z`` with ``0 in g(z)``, if one is cheap to find."""
    for z in (0.0, *g.breakpoints):
        lo, hi = g.bounds(np.array([z]))
        if lo[0] <= 0 <= hi[0]:
            return z
    return None


def _resolvent_core(g: ScalarGraph, s_arr, lam, alpha, tol, max_iter) -> InclusionSolution:
    g0 = minimal_section(g, s_arr)
    with np.errstate(over="ignore"):
        radius = 1.0 + (lam * np.abs(g0)) ** (1.0 / (alpha - 1.0))
    z = _zero(g)
    if z is not None:
        # the root lies between s and any zero of g
        radius = np.minimum(radius, 1.0 + np.abs(s_arr - z))

    def F(r):
        lo, hi = g.bounds(_snap(g, s_arr - r, s_arr))
        jr = scalar_duality(r, alpha)
        return jr - lam * hi, jr - lam * lo

    knots = (0.0,) + tuple(s_arr - bp for bp in g.breakpoints)
    r, it = solve_monotone_inclusion(F, np.zeros_like(s_arr), radius, knots=knots, tol=tol,
                                     max_iter=max_iter, fscale=lam * np.abs(g0))
    y = _snap(g, s_arr - r, s_arr)
    lo, hi = g.bounds(y)
    res = _inclusion_residual(-lam * hi, -lam * lo, scalar_duality(r, alpha))
    return InclusionSolution(y, res, it, r)


def resolvent_solution(g: ScalarGraph, s, params: YosidaParams) -> InclusionSolution:
    """Solve ``0 in j(y - s) + lam g(y)`` and report the membership residual.

    The unknown is the offset ``r = s - y``, which keeps full relative precision
    when ``y`` is close to ``s`` (small ``lam``).
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    return _resolvent_core(g, s_arr, params.lam, params.alpha, params.tol, params.max_iter)


def resolvent_batch(g: ScalarGraph, s, lam, alpha, *, tol: float = 1e-12,
                    max_iter: int = 200) -> InclusionSolution:
    """:func:`resolvent_solution` with one ``(lam, alpha)`` pair per point."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), s_arr.shape)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), s_arr.shape)
    if not (np.all(lam > 0) and np.all(alpha > 1)):
        raise ValueError("need lam > 0 and alpha > 1")
    return _resolvent_core(g, s_arr, lam, alpha, tol, max_iter)


def _shape_like(val, s):
    return val.reshape(np.shape(s)) if np.ndim(s) else float(val[0])


def scalar_resolvent(g: ScalarGraph, s, params: YosidaParams):
    """Generalized resolvent ``R_lam(s)``: the unique ``y`` with ``0 in j(y - s) + lam g(y)``."""
    return _shape_like(resolvent_solution(g, s, params).x, s)


def scalar_yosida(g: ScalarGraph, s, params: YosidaParams):
    """Generalized Yosida approximation ``j(s - R_lam(s)) / lam``."""
    r = resolvent_solution(g, s, params).offset
    return _shape_like(scalar_duality(r, params.alpha) / params.lam, s)


def yosida_pair(g: ScalarGraph, s, params: YosidaParams):
    """``(R_lam(s), A_lam(s))`` from a single solve."""
    sol = resolvent_solution(g, s, params)
    return _shape_like(sol.x, s), _shape_like(scalar_duality(sol.offset, params.alpha) / params.lam, s)


def range_solution(g: ScalarGraph, y, lam: float, alpha: float, *, tol: float = 1e-12,
                   max_iter: int = 200) -> InclusionSolution:
    """Solve ``y in lam j(x) + g(x)``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    g0 = minimal_section(g, np.zeros_like(y_arr))
    radius = 1.0 + (np.abs(y_arr - g0) / lam) ** (1.0 / (alpha - 1.0))

    def F(x):
        lo, hi = g.bounds(x)
        base = lam * scalar_duality(x, alpha) - y_arr
        return base + lo, base + hi

    x, it = solve_monotone_inclusion(F, np.zeros_like(y_arr), radius, knots=(0.0,) + tuple(g.breakpoints),
                                     tol=tol, max_iter=max_iter, scale=np.abs(y_arr),
                                     fscale=np.maximum(1.0, np.abs(y_arr)))
    lo, hi = g.bounds(x)
    res = _inclusion_residual(lo, hi, lam * scalar_duality(x, alpha) - y_arr)
    return InclusionSolution(x, res, it)


def range_solve(g: ScalarGraph, y, lam: float, alpha: float):
    """The ``x`` with ``y in lam j(x) + g(x)``; exists for every ``y``."""
    return _shape_like(range_solution(g, y, lam, alpha).x, y)


# -- classical smoothing used by the Newton solvers ---------------------------

def yosida_section(g: ScalarGraph, s, mu: float, alpha: float = 2.0):
    """Generalized Yosida approximation with its slope.

    Returns ``(value, derivative, y)`` where ``y = R_mu(s)``.  Off jumps the
    slope is ``g' j' / (j' + mu g')`` with ``j' = (alpha - 1)|s - y|^(alpha - 2)``;
    where ``y`` sits inside a jump it is ``j' / mu``.  ``alpha = 2`` gives the
    classical Moreau-Yosida regularization.
    """
    sol = resolvent_solution(g, np.atleast_1d(np.asarray(s, dtype=float)), YosidaParams(mu, alpha))
    y, r = sol.x, sol.offset
    val = scalar_duality(r, alpha) / mu
    lo, hi = g.bounds(y)
    on_jump = (lo < hi) & (val > lo) & (val < hi)
    dg = g.derivative(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        dj = (alpha - 1.0) * np.abs(r) ** (alpha - 2.0) if alpha != 2 else np.ones_like(r)
        d = 1.0 / (1.0 / dg + mu / dj)
        d = np.where(on_jump, dj / mu, d)
    return val, d, y


def moreau_section(g: ScalarGraph, s, mu: float):
    """Classical Yosida regularization ``(s - y) / mu`` with ``y + mu g(y) = s``, its slope and ``y``."""
    return yosida_section(g, s, mu, 2.0)


def selection(g: ScalarGraph, s, candidate):
    """Project ``candidate`` onto the value set ``g(s)``."""
    lo, hi = g.bounds(s)
    return np.clip(candidate, lo, hi)
