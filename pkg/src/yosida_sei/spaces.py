"""Uniform Dirichlet grids on the unit cube, discrete norms and Gelfand triples.

Fields are plain 1-D numpy arrays of length ``grid.size`` holding interior
node values (boundary values are identically zero and never stored).
Elements of the dual space ``V*`` are wrapped in :class:`Dual`, which tags the
representation the values are stored in:

``density``
    porous-media dual: the ``L^{p'}`` pre-image ``w`` of ``-Delta w``;
    pairs with a field ``u`` as ``sum(w * u) * h^d``.
``grad``
    Phi-Laplace dual: a density on the edge (gradient) space; the element
    is ``-div_h g`` and pairs as ``sum(g * D u) * h^d``.
``node``
    an ``L^2`` functional on the Phi-Laplace triple; pairs as
    ``sum(f * u) * h^d``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 10_000


class SolverError(RuntimeError):
    """An iterative linear or nonlinear solve failed to converge."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _forward_difference(n: int, h: float) -> sp.csr_matrix:
    # (n+1) x n, rows are edges i+1/2 for i = 0..n, boundary values zero
    rows = np.concatenate([np.arange(n), np.arange(1, n + 1)])
    cols = np.concatenate([np.arange(n), np.arange(n)])
    vals = np.concatenate([-np.ones(n), np.ones(n)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n)) / h


@dataclass(frozen=True, eq=False)
class Grid:
    """Interior nodes of a uniform grid on ``(0, 1)^d`` with zero boundary values."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.d}")
        if self.n < 1:
            raise ValueError(f"need at least one interior node per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def w(self) -> float:
        """Quadrature weight of one node (and of one edge)."""
        return self.h**self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def measure(self) -> float:
        """Total quadrature weight of the interior nodes."""
        return self.size * self.w

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.d, self.n) == (other.d, other.n)

    def __hash__(self):
        return hash((self.d, self.n))

    def __repr__(self):
        return f"Grid(d={self.d}, n={self.n})"

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(size, d)``, C-ordered with the last axis fastest."""
        x = self.h * np.arange(1, self.n + 1)
        if self.d == 1:
            return x[:, None]
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def field(self, values) -> np.ndarray:
        """Validate and return ``values`` as a field on this grid."""
        u = np.asarray(values, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"field has shape {u.shape}, expected ({self.size},)")
        if not np.all(np.isfinite(u)):
            raise ValueError("field contains NaN or Inf")
        return u

    def sine_mode(self, *k: int) -> np.ndarray:
        """``prod_j sin(k_j pi xi_j)`` sampled on the nodes (default ``k = 1``)."""
        ks = k or (1,) * self.d
        if len(ks) != self.d:
            raise ValueError("need one wave number per axis")
        xi = self.coordinates()
        return np.prod([np.sin(kj * np.pi * xi[:, j]) for j, kj in enumerate(ks)], axis=0)

    def mode_eigenvalue(self, *k: int) -> float:
        """Eigenvalue of ``-Delta_h`` for :meth:`sine_mode` ``(k...)``."""
        ks = k or (1,) * self.d
        return float(sum(2.0 / self.h**2 * (1.0 - np.cos(kj * np.pi * self.h)) for kj in ks))

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse ``Delta_h`` (negative definite)."""
        L1 = _second_difference(self.n, self.h)
        if self.d == 1:
            return L1
        eye = sp.identity(self.n, format="csr")
        return (sp.kron(L1, eye) + sp.kron(eye, L1)).tocsr()

    @cached_property
    def gradient_matrix(self) -> sp.csr_matrix:
        """Forward-difference gradient onto the edge space; ``D.T @ D == -Delta_h``."""
        D1 = _forward_difference(self.n, self.h)
        if self.d == 1:
            return D1
        eye = sp.identity(self.n, format="csr")
        return sp.vstack([sp.kron(D1, eye), sp.kron(eye, D1)]).tocsr()

    @cached_property
    def centered_gradient_matrices(self) -> tuple[sp.csr_matrix, ...]:
        """Centered differences ``(u[i+1] - u[i-1]) / 2h`` per axis, zero boundary values."""
        n = self.n
        C1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr") / (2 * self.h)
        if self.d == 1:
            return (C1,)
        eye = sp.identity(n, format="csr")
        return (sp.kron(C1, eye).tocsr(), sp.kron(eye, C1).tocsr())

    @property
    def edge_count(self) -> int:
        return self.gradient_matrix.shape[0]

    @cached_property
    def _factor(self):
        # splu of -Delta_h, shared read-only between callers
        return spla.splu((-self.laplacian_matrix).tocsc())

    def solve_negative_laplacian(self, f: np.ndarray, *, rtol: float = 1e-12) -> np.ndarray:
        """Return ``u`` with ``-Delta_h u = f``."""
        f = np.asarray(f, dtype=float)
        if not np.any(f):
            return np.zeros_like(f)
        if self.size <= DIRECT_SOLVE_LIMIT:
            return self._factor.solve(f)
        A = -self.laplacian_matrix
        u, info = spla.cg(A, f, rtol=rtol, atol=0.0, maxiter=20 * self.size)
        res = np.linalg.norm(A @ u - f) / np.linalg.norm(f)
        if info != 0 or res > 10 * rtol:
            raise SolverError("conjugate gradient did not converge", res)
        return u


def laplacian(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Apply the 3/5-point Dirichlet stencil ``Delta_h``."""
    return grid.laplacian_matrix @ u


def inv_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Solve ``-Delta_h u = f``."""
    return grid.solve_negative_laplacian(f)


def gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    return grid.gradient_matrix @ u


def divergence_adjoint(grid: Grid, g: np.ndarray) -> np.ndarray:
    """``-div_h g`` as a node vector, i.e. ``D.T @ g``."""
    return grid.gradient_matrix.T @ g


def lp_norm(values: np.ndarray, p: float, w: float) -> float:
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(values)
    if not np.any(a):
        return 0.0
    # scale first so large p does not overflow
    m = a.max()
    return float(m * (np.sum((a / m) ** p) * w) ** (1.0 / p))


def norm(grid: Grid, u: np.ndarray, space: str, p: float | None = None) -> float:
    """Discrete norm of a field.

    ``space`` is one of ``"Lp"``, ``"L2"``, ``"Hminus1"``, ``"W1p"``.
    """
    if space == "L2":
        return lp_norm(u, 2.0, grid.w)
    if space == "Lp":
        if p is None:
            raise ValueError("Lp norm needs p")
        return lp_norm(u, p, grid.w)
    if space == "W1p":
        if p is None:
            raise ValueError("W1p norm needs p")
        return lp_norm(gradient(grid, u), p, grid.w)
    if space == "Hminus1":
        v = inv_laplacian(grid, u)
        return float(np.sqrt(max(float(u @ v) * grid.w, 0.0)))
    raise ValueError(f"unknown space {space!r}")


@dataclass(frozen=True)
class Dual:
    """An element of ``V*`` stored in one of the representations listed in the module doc."""

    kind: Literal["density", "grad", "node"]
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("density", "grad", "node"):
            raise ValueError(f"unknown dual representation {self.kind!r}")

    def __add__(self, other: "Dual") -> "Dual":
        if not isinstance(other, Dual) or other.kind != self.kind:
            raise TypeError("can only add duals with the same representation")
        return Dual(self.kind, self.values + other.values)

    def __sub__(self, other: "Dual") -> "Dual":
        if not isinstance(other, Dual) or other.kind != self.kind:
            raise TypeError("can only subtract duals with the same representation")
        return Dual(self.kind, self.values - other.values)

    def __mul__(self, c: float) -> "Dual":
        return Dual(self.kind, c * self.values)

    __rmul__ = __mul__


class RepresentationError(TypeError):
    """A dual element was paired with the wrong Gelfand triple."""


TripleKind = Literal["porous_media", "phi_laplace"]


@dataclass(frozen=True)
class GelfandTriple:
    """The discrete ``V ⊂ H ⊂ V*`` realization.

    porous_media: ``V = L^p``, ``H = H^{-1}``, duals stored as ``L^{p'}`` densities.
    phi_laplace:  ``V = W^{1,p}_0``, ``H = L^2``, duals stored as gradient densities
    (or as ``L^2`` node functionals).
    """

    grid: Grid
    kind: TripleKind
    p: float
    alpha: float | None = None
    _alpha: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("porous_media", "phi_laplace"):
            raise ValueError(f"unknown triple kind {self.kind!r}")
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        d = self.grid.d
        if self.kind == "porous_media" and d >= 3 and not self.p > 2 * d / (d + 2):
            raise ValueError(f"porous media triple needs p > 2d/(d+2) = {2 * d / (d + 2)}")
        a = self.p if self.alpha is None else float(self.alpha)
        if not a > 1:
            raise ValueError(f"gauge exponent alpha must exceed 1, got {a}")
        object.__setattr__(self, "_alpha", a)

    @property
    def gauge(self) -> float:
        """The coercivity gauge ``alpha`` (defaults to ``p``)."""
        return self._alpha

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    def norm_V(self, u: np.ndarray) -> float:
        space = "Lp" if self.kind == "porous_media" else "W1p"
        return norm(self.grid, u, space, self.p)

    def norm_H(self, u: np.ndarray) -> float:
        return norm(self.grid, u, "Hminus1" if self.kind == "porous_media" else "L2")

    def pairing(self, v: Dual, u: np.ndarray) -> float:
        """Duality pairing ``<v, u>_{V*, V}``."""
        w = self.grid.w
        if self.kind == "porous_media":
            if v.kind != "density":
                raise RepresentationError(f"porous-media triple cannot pair a {v.kind!r} dual")
            return float(v.values @ u) * w
        if v.kind == "grad":
            return float(v.values @ gradient(self.grid, u)) * w
        if v.kind == "node":
            return float(v.values @ u) * w
        raise RepresentationError(f"phi-Laplace triple cannot pair a {v.kind!r} dual")

    def density_norm(self, v: Dual) -> float:
        """``L^{p'}`` norm of the stored density.

        Exact dual norm for the porous-media triple (isometry); an upper bound
        for gradient densities on the Phi-Laplace triple.
        """
        if v.kind == "node":
            if self.kind == "porous_media":
                raise RepresentationError("porous-media duals are densities")
            return lp_norm(self.gradient_representative(v), self.conjugate, self.grid.w)
        self._check(v)
        return lp_norm(v.values, self.conjugate, self.grid.w)

    def _check(self, v: Dual):
        ok = ("density",) if self.kind == "porous_media" else ("grad", "node")
        if v.kind not in ok:
            raise RepresentationError(f"{self.kind} triple cannot hold a {v.kind!r} dual")

    def to_node(self, v: Dual) -> np.ndarray:
        """Node functional ``f`` with ``<v, u> = sum(f u) h^d`` (the ``H``-side image for phi_laplace)."""
        self._check(v)
        if v.kind == "grad":
            return divergence_adjoint(self.grid, v.values)
        return v.values

    def to_H(self, v: Dual) -> np.ndarray:
        """The ``H``-representative of a dual element that lies in ``H``.

        porous_media: ``-Delta_h w`` for a density ``w``; phi_laplace: the node
        functional itself (``H = L^2``).
        """
        self._check(v)
        if self.kind == "porous_media":
            return -laplacian(self.grid, v.values)
        return self.to_node(v)

    def gradient_representative(self, v: Dual) -> np.ndarray:
        """The gradient density ``D (-Delta_h)^{-1} f`` representing the same functional."""
        f = self.to_node(v)
        return gradient(self.grid, inv_laplacian(self.grid, f))

    def dual_norm_bracket(self, v: Dual, *, directions: int = 64, seed: int = 0) -> tuple[float, float]:
        """``(lower, upper)`` bracket on ``||v||_{V*}``.

        porous_media: exact (both ends equal). phi_laplace: the lower end is the
        sup of ``|<v,u>| / ||u||_V`` over a fixed dictionary of random
        directions, all coordinate directions and the two gradient-aligned
        directions; the upper end is the ``L^{p'}`` norm of the best stored
        representative.
        """
        if self.kind == "porous_media":
            self._check(v)
            val = self.density_norm(v)
            return val, val
        self._check(v)
        grid = self.grid
        f = self.to_node(v)
        upper_candidates = [lp_norm(self.gradient_representative(v), self.conjugate, grid.w)]
        if v.kind == "grad":
            upper_candidates.append(lp_norm(v.values, self.conjugate, grid.w))
        upper = min(upper_candidates)
        if self.p == 2.0:
            exact = float(np.sqrt(max(f @ inv_laplacian(grid, f) * grid.w, 0.0)))
            return exact, exact
        rng = np.random.default_rng(seed)
        dirs = [rng.standard_normal(grid.size) for _ in range(directions)]
        dirs.extend(np.eye(grid.size))
        # the maximizer direction for the stored representative: J^{-1}-type candidate
        q = self.gradient_representative(v)
        cand = np.abs(q) ** (self.conjugate - 1) * np.sign(q)
        dirs.append(inv_laplacian(grid, divergence_adjoint(grid, cand)))
        dirs.append(inv_laplacian(grid, f))
        lower = 0.0
        for u in dirs:
            nv = self.norm_V(u)
            if nv > 0:
                lower = max(lower, abs(float(f @ u) * grid.w) / nv)
        return min(lower, upper), upper

    def dual_norm(self, v: Dual) -> float:
        """Dual norm in the density convention.

        Exact for the porous-media triple and for ``p = 2``; otherwise the
        upper end of :meth:`dual_norm_bracket` for node functionals and the
        stored density norm for gradient densities.
        """
        if self.kind == "porous_media" or v.kind == "grad":
            return self.density_norm(v)
        if self.p != 2.0:
            return lp_norm(self.gradient_representative(v), self.conjugate, self.grid.w)
        f = self.to_node(v)
        return float(np.sqrt(max(f @ inv_laplacian(self.grid, f) * self.grid.w, 0.0)))


def pairing(v: Dual, u: np.ndarray, triple: GelfandTriple) -> float:
    return triple.pairing(v, u)


def _log_ratio_and_grad(u: np.ndarray, triple: GelfandTriple):
    grid, p, w = triple.grid, triple.p, triple.grid.w
    if triple.kind == "porous_media":
        a = np.abs(u)
        sv = np.sum(a**p) * w
        gv = (a ** (p - 1) * np.sign(u)) * w / sv  # d/du of (1/p) log sum|u|^p w
        Linv_u = inv_laplacian(grid, u)
        sh = float(u @ Linv_u) * w
        gh = Linv_u * w / sh  # d/du of (1/2) log(u^T L^{-1} u w)
        val = np.log(sv) / p - 0.5 * np.log(sh)
    else:
        g = gradient(grid, u)
        a = np.abs(g)
        sv = np.sum(a**p) * w
        gv = divergence_adjoint(grid, a ** (p - 1) * np.sign(g)) * w / sv
        sh = float(u @ u) * w
        gh = u * w / sh
        val = np.log(sv) / p - 0.5 * np.log(sh)
    return float(val), gv - gh


def embedding_ratio(triple: GelfandTriple, u: np.ndarray) -> float:
    """``||u||_V / ||u||_H``."""
    return triple.norm_V(u) / triple.norm_H(u)


def smallest_eigen_ratio(triple: GelfandTriple) -> float:
    """Exact ``min ||u||_V / ||u||_H`` for ``p = 2`` via the generalized eigenproblem."""
    if triple.p != 2.0:
        raise ValueError("closed form only for p = 2")
    L = -triple.grid.laplacian_matrix.toarray()
    # both triples reduce to min u^T L u / u^T u (porous media after substituting u = L v)
    evals = np.linalg.eigvalsh(L)
    return float(np.sqrt(evals[0]))


@dataclass(frozen=True)
class EmbeddingResult:
    c0: float
    minimizer: np.ndarray
    ratios: tuple[float, ...]
    eigen_check: float | None


def embedding_constant(triple: GelfandTriple, *, restarts: int = 8, seed: int = 0,
                       maxiter: int = 2000) -> EmbeddingResult:
    """Discrete embedding constant ``c0 = min_{u != 0} ||u||_V / ||u||_H``.

    Minimizes the 0-homogeneous log-ratio with L-BFGS from the first sine mode
    plus ``restarts`` random starts, then re-evaluates the ratio at the best
    point. For ``p = 2`` the result is cross-checked against the smallest
    eigenvalue of ``-Delta_h``.
    """
    if restarts < 8:
        raise ValueError("need at least 8 random restarts")
    grid = triple.grid
    rng = np.random.default_rng(seed)
    starts = [grid.sine_mode()]
    starts += [rng.standard_normal(grid.size) for _ in range(restarts)]
    best_u, best = None, np.inf
    ratios = []
    stagnated = 0
    for x0 in starts:
        res = optimize.minimize(_log_ratio_and_grad, x0 / np.max(np.abs(x0)), args=(triple,),
                                jac=True, method="L-BFGS-B",
                                options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12})
        u = res.x / np.max(np.abs(res.x))
        r = embedding_ratio(triple, u)
        ratios.append(r)
        if not res.success and res.nit >= maxiter:
            stagnated += 1
        if r < best:
            best, best_u = r, u
    if stagnated == len(starts):
        warnings.warn(f"embedding_constant: optimizer stagnated on every start; best ratio {best:.6g}")
    eig = None
    if triple.p == 2.0:
        eig = smallest_eigen_ratio(triple)
        if abs(eig - best) > 1e-6 * eig:
            logger.warning("embedding constant %.12g disagrees with eigenvalue %.12g", best, eig)
    return EmbeddingResult(float(best), best_u, tuple(ratios), eig)
