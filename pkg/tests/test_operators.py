import numpy as np
import pytest

from oracles import bisect_resolvent, dense_laplacian, fista_l1, porous_media_resolvent
from yosida_sei import graphs as G
from yosida_sei import operators as O
from yosida_sei.graphs import YosidaParams
from yosida_sei.spaces import Dual, GelfandTriple, Grid


def psi(p):
    """``sign(s) (1 + |s|^(p-1))``: a jump at zero on top of a power law."""
    return G.power(p, 1.0)


def pm(p, d=2, n=8, alpha=None, g=None):
    t = GelfandTriple(Grid(d, n), "porous_media", p, alpha)
    return O.porous_media(g or psi(p), t)


@pytest.mark.parametrize("kind", ["porous_media", "phi_laplace"])
@pytest.mark.parametrize("p", [1.5, 3.0])
def test_duality_identities(kind, p, rng):
    for alpha in (p, 1.5, 2.0):
        t = GelfandTriple(Grid(2, 6), kind, p, alpha)
        for _ in range(100):
            u = rng.standard_normal(t.grid.size) * rng.uniform(0.01, 10)
            J = O.duality_map(u, t)
            nv = t.norm_V(u)
            assert t.pairing(J, u) == pytest.approx(nv**alpha, rel=1e-9)
            assert t.density_norm(J) == pytest.approx(nv ** (alpha - 1), rel=1e-9)
    assert not np.any(O.duality_map(np.zeros(36), t).values)


def test_operator_needs_matching_triple():
    with pytest.raises(ValueError):
        O.phi_laplace(G.sign(), GelfandTriple(Grid(1, 4), "porous_media", 1.5))
    with pytest.raises(ValueError):
        O.subdifferential(G.sign(), GelfandTriple(Grid(1, 4), "phi_laplace", 3.0))
    with pytest.raises(ValueError):
        O.MultiValuedOperator("heat", G.sign(), GelfandTriple(Grid(1, 4), "phi_laplace", 2.0))


def test_assumption_constants():
    op = pm(1.5, d=1, n=10)
    a = op.assumptions
    assert (a.delta, a.alpha, a.beta) == (1.0, 1.5, 0.0)
    # growth constant 2^(p'-1) c^p' with c = max(1, nu) and p' = 3
    assert a.C == pytest.approx(4.0)
    assert a.f == pytest.approx(4.0 * op.grid.measure)
    assert pm(1.5, g=G.sign()).assumptions is None
    with pytest.raises(ValueError):
        O.OperatorAssumptions(delta=0.0, alpha=1.5)


@pytest.mark.parametrize("p,alpha", [(1.5, 1.5), (1.5, 2.5), (3.0, 1.5), (3.0, 3.0), (2.0, 1.2)])
def test_porous_media_resolvent_matches_oracle(p, alpha, rng):
    op = pm(p, alpha=alpha)
    for lam in (0.05, 1.0):
        x = rng.standard_normal(op.grid.size) * rng.uniform(0.2, 3)
        res = O.resolvent_solution(op, x, YosidaParams(lam, alpha))
        ref = porous_media_resolvent(op.graph.bounds, x, lam, p, alpha, op.grid.w, rng)
        np.testing.assert_allclose(res.y, ref, atol=1e-9 * (1 + np.abs(x).max()))
        assert res.relative_residual <= 1e-10


@pytest.mark.parametrize("p,alpha", [(1.5, 2.0), (3.0, 1.5)])
def test_porous_media_newton_path_agrees(p, alpha, rng):
    op = pm(p, d=1, n=12, alpha=alpha)
    x = rng.standard_normal(12)
    a = O.vector_resolvent(op, x, YosidaParams(0.3, alpha))
    res = O.resolvent_solution(op, x, YosidaParams(0.3, alpha), O.SolverOpts(method="newton"))
    assert res.polished
    np.testing.assert_allclose(res.y, a, atol=1e-9)


@pytest.mark.parametrize("alpha", [1.3, 2.0, 2.7])
def test_single_node_reduces_to_scalar(alpha, rng):
    # on one node the norm factor is a power of the weight and the gauge becomes alpha
    for kind, p in (("porous_media", 1.5), ("porous_media", 3.0)):
        t = GelfandTriple(Grid(1, 1), kind, p, alpha)
        g = psi(p)
        op = O.porous_media(g, t)
        for _ in range(20):
            x = rng.uniform(-4, 4, 1)
            lam = rng.uniform(0.05, 2.0)
            y = O.vector_resolvent(op, x, YosidaParams(lam, alpha))
            lam_eff = lam * t.grid.w ** ((p - alpha) / p)
            np.testing.assert_allclose(y, bisect_resolvent(g.bounds, x, lam_eff, alpha, rng), atol=1e-10)


def test_linear_graph_dense_oracles(rng):
    c, lam = 0.7, 0.4
    g = G.linear(c)
    for d, n in ((1, 15), (2, 6)):
        grid = Grid(d, n)
        L = -dense_laplacian(d, n)
        x = rng.standard_normal(grid.size)
        p2 = YosidaParams(lam, 2.0)
        y = O.vector_resolvent(O.porous_media(g, GelfandTriple(grid, "porous_media", 2.0)), x, p2)
        np.testing.assert_allclose(y, x / (1 + lam * c), atol=1e-11)
        y = O.vector_resolvent(O.phi_laplace(g, GelfandTriple(grid, "phi_laplace", 2.0)), x, p2)
        np.testing.assert_allclose(y, x / (1 + lam * c), atol=1e-9)
        y = O.vector_resolvent(O.subdifferential(g, GelfandTriple(grid, "phi_laplace", 2.0)), x, p2)
        ref = np.linalg.solve((1 + lam) * L + lam * c * np.eye(grid.size), L @ x)
        np.testing.assert_allclose(y, ref, atol=1e-9)


def test_subdifferential_sign_matches_proximal_gradient(rng):
    grid = Grid(1, 16)
    L = -dense_laplacian(1, 16)
    rho, lam = 0.8, 0.3
    op = O.subdifferential(G.sign(rho), GelfandTriple(grid, "phi_laplace", 2.0))
    for scale in (0.05, 1.0, 5.0):
        x = scale * rng.standard_normal(16)
        res = O.resolvent_solution(op, x, YosidaParams(lam, 2.0))
        ref = fista_l1((1 + lam) * L, L @ x, lam * rho, x)
        np.testing.assert_allclose(res.y, ref, atol=1e-8 * (1 + np.abs(x).max()))
        assert res.relative_residual <= 1e-9


def test_phi_laplace_smooth_graph_is_polished(rng):
    op = O.phi_laplace(G.non_newtonian(3.0), GelfandTriple(Grid(1, 12), "phi_laplace", 3.0))
    x = rng.standard_normal(12)
    res = O.resolvent_solution(op, x, YosidaParams(0.2, 3.0))
    assert res.polished and res.relative_residual <= 1e-9


def test_phi_laplace_jump_graph_residual_is_smoothing_limited(rng):
    op = O.phi_laplace(G.sign(), GelfandTriple(Grid(1, 12), "phi_laplace", 2.0))
    x = rng.standard_normal(12)
    res = O.resolvent_solution(op, x, YosidaParams(0.2, 2.0))
    assert res.relative_residual <= 1e-5


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_vector_yosida_properties(p, rng):
    op = pm(p)
    t = op.triple
    for _ in range(10):
        x = rng.standard_normal(op.grid.size) * rng.uniform(0.1, 3)
        a0 = O.apply_minimal(op, x)
        gaps = []
        for lam in (1.0, 0.1, 0.01):
            prm = YosidaParams(lam, p)
            y = O.vector_resolvent(op, x, prm)
            a = O.vector_yosida(op, x, prm)
            assert t.dual_norm(a) <= t.dual_norm(a0) * (1 + 1e-6)
            lo, hi = op.selection_bounds(y)
            slack = 1e-6 * (1 + np.abs(a.values))
            assert np.all((a.values >= lo - slack) & (a.values <= hi + slack))
            gaps.append(t.dual_norm(a - a0))
        assert gaps[0] >= gaps[1] >= gaps[2]


def test_vector_coercivity_bound(rng):
    for p in (1.5, 3.0):
        op = pm(p)
        g, t = op.graph, op.triple
        for lam in (0.05, 0.5, 0.99):
            for _ in range(10):
                x = rng.standard_normal(op.grid.size) * rng.uniform(0.1, 5)
                a = O.vector_yosida(op, x, YosidaParams(lam, p))
                bound = g.delta * 2.0 ** (-p) * t.norm_V(x) ** p + g.C * op.grid.measure
                assert t.pairing(a, x) >= bound - 1e-8


def test_subdifferential_minimal_section_is_kkt_point(rng):
    grid = Grid(1, 20)
    op = O.subdifferential(G.sign(0.5), GelfandTriple(grid, "phi_laplace", 2.0))
    u = rng.standard_normal(20) * (rng.random(20) < 0.5)
    a = O.apply_minimal(op, u)
    z = grid.solve_negative_laplacian(a.values)
    sigma = a.values + grid.laplacian_matrix @ u
    zero = u == 0
    assert np.all(np.abs(sigma[zero]) <= 0.5 + 1e-12)
    interior = zero & (np.abs(sigma) < 0.5 - 1e-6)
    np.testing.assert_allclose(z[interior], 0.0, atol=1e-6)
    # pushing any jump value toward the bound it touches cannot lower the norm
    for i in np.flatnonzero(zero & (np.abs(sigma) >= 0.5 - 1e-6)):
        assert z[i] * np.sign(sigma[i]) <= 1e-6


def test_regularized_drift():
    op = pm(1.5, d=1, n=10, g=G.power(1.5, 0.0))
    u = np.linspace(-1, 1, 10)
    v = O.yosida_regularized_drift(op, u, 0.1)
    np.testing.assert_allclose(v.values, G.yosida_section(op.graph, u, 0.1, 1.5)[0])
    with pytest.raises(ValueError):
        O.yosida_regularized_drift(op, u, 1.0)
    sd = O.subdifferential(G.sign(), GelfandTriple(Grid(1, 10), "phi_laplace", 2.0))
    v = O.yosida_regularized_drift(sd, u, 0.5)
    assert v.kind == "node"


def test_reaction_diffusion_drift(rng):
    grid = Grid(2, 7)
    u = rng.standard_normal(grid.size)
    adv = O.SingleValuedDrift("reaction_diffusion", coeffs=(0.0, 0.0), advection=1.0)
    # the centered advection term is skew, so only the diffusion survives in <B(u), u>
    val = float(O.drift_B(adv, 0.0, u, grid).values @ u) * grid.w
    assert val == pytest.approx(float(-(grid.laplacian_matrix @ u) @ u) * grid.w, rel=1e-12)
    d = O.SingleValuedDrift("reaction_diffusion", coeffs=(0.5, -1.0, 0.0, 2.0))
    assert d.coercivity_f(1.0) == pytest.approx(0.5 + 2.0)
    assert O.SingleValuedDrift("reaction_diffusion", coeffs=(0, 0, 1.0)).coercivity_f(1.0) is None
    assert O.SingleValuedDrift("reaction_diffusion", coeffs=(0, 0, 0, -1.0)).coercivity_f(1.0) is None
    assert not np.any(O.drift_B(O.SingleValuedDrift(), 0.0, u, grid).values)
    with pytest.raises(ValueError):
        O.SingleValuedDrift("zero", coeffs=(1.0,))


class _Noise:
    def __init__(self, h):
        self._h = h
        self.horizon = 1.0

    def h(self, t):
        return self._h


def test_validate_assumptions():
    op = pm(1.5, d=1, n=12)
    rep = O.validate_assumptions(op, noise=_Noise(0.02), samples=40)
    assert rep["H_A1_monotone"].passed
    assert rep["H_A2_coercive"].passed
    assert rep["H_A3_growth"].passed
    assert rep["H_sigma_star"].passed
    assert rep.passed
    bad = O.validate_assumptions(pm(1.5, d=1, n=12, g=G.sign()), samples=20)
    assert not bad["H_A2_coercive"].passed and not bad.passed
    sd = O.subdifferential(G.sign(), GelfandTriple(Grid(1, 12), "phi_laplace", 2.0))
    drift = O.SingleValuedDrift("reaction_diffusion", coeffs=(0.0, -1.0), C=10.0, f=2.0)
    rep = O.validate_assumptions(sd, drift, noise=_Noise(0.5), samples=30)
    assert rep["H_B1_weak_coercive"].passed
    assert not rep["H_sigma_star"].passed  # (alpha - 1) h = 0.5 < f = 2
    assert set(rep.to_dict()) >= {"H_A1_monotone", "H_B2_growth", "H_sigma"}
