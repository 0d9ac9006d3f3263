import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dense_laplacian
from yosida_sei.spaces import (
    Dual, GelfandTriple, Grid, RepresentationError, embedding_constant, embedding_ratio,
    gradient, inv_laplacian, laplacian, norm, pairing,
)


def test_grid_basics():
    g = Grid(2, 4)
    assert g.h == pytest.approx(0.2)
    assert g.w == pytest.approx(0.04)
    assert g.size == 16
    with pytest.raises(ValueError):
        Grid(3, 4)
    with pytest.raises(ValueError):
        g.field(np.array([np.nan] * 16))
    with pytest.raises(ValueError):
        g.field(np.zeros(15))


def test_laplacian_stencil_values():
    g = Grid(1, 3)
    np.testing.assert_allclose(laplacian(g, np.array([0.0, 1.0, 0.0])), [16.0, -32.0, 16.0])
    assert not np.any(laplacian(g, np.zeros(3)))


@pytest.mark.parametrize("d,n", [(1, 7), (2, 5)])
def test_laplacian_matches_dense(d, n, rng):
    g = Grid(d, n)
    u = rng.standard_normal(g.size)
    np.testing.assert_allclose(laplacian(g, u), dense_laplacian(d, n) @ u, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("d,n", [(1, 16), (2, 8)])
def test_first_sine_mode_is_eigenvector(d, n):
    g = Grid(d, n)
    u = g.sine_mode()
    mu1 = d * (2 / g.h**2) * (1 - np.cos(np.pi * g.h))
    np.testing.assert_allclose(laplacian(g, u), -mu1 * u, atol=1e-9 * mu1)
    np.testing.assert_allclose(inv_laplacian(g, u), u / mu1, atol=1e-14)


def test_gradient_factorizes_laplacian():
    for g in (Grid(1, 6), Grid(2, 5)):
        D = g.gradient_matrix.toarray()
        np.testing.assert_allclose(D.T @ D, -dense_laplacian(g.d, g.n), atol=1e-9)


def test_inv_laplacian_round_trip(rng):
    g = Grid(2, 12)
    u = rng.standard_normal(g.size)
    f = -laplacian(g, u)
    np.testing.assert_allclose(inv_laplacian(g, f), u, rtol=1e-10, atol=1e-10)
    assert not np.any(inv_laplacian(g, np.zeros(g.size)))


def test_inv_laplacian_iterative_path(rng):
    g = Grid(2, 101)  # N > 10^4 takes the conjugate-gradient route
    f = rng.standard_normal(g.size)
    u = inv_laplacian(g, f)
    res = np.linalg.norm(-laplacian(g, u) - f)
    assert res <= 1e-11 * np.linalg.norm(f)


def test_norm_values(rng):
    g = Grid(1, 3)
    one = np.ones(3)
    assert norm(g, one, "L2") == pytest.approx(np.sqrt(0.75))
    for space, p in [("Lp", 3.0), ("L2", None), ("Hminus1", None), ("W1p", 1.5)]:
        assert norm(g, np.zeros(3), space, p) == 0.0
    with pytest.raises(ValueError):
        norm(g, one, "Lp", 0.5)
    with pytest.raises(ValueError):
        norm(g, one, "Linf")

    g = Grid(1, 20)
    u = rng.standard_normal(g.size)
    L = dense_laplacian(1, 20)
    expected = np.sqrt(u @ np.linalg.solve(-L, u) * g.w)
    assert norm(g, u, "Hminus1") == pytest.approx(expected, rel=1e-12)


def test_pairing_values():
    g = Grid(1, 3)
    pm = GelfandTriple(g, "porous_media", 1.5)
    assert pairing(Dual("density", np.ones(3)), np.ones(3), pm) == pytest.approx(0.75)
    assert pairing(Dual("density", np.zeros(3)), np.ones(3), pm) == 0.0
    with pytest.raises(RepresentationError):
        pm.pairing(Dual("grad", np.ones(4)), np.ones(3))

    pl = GelfandTriple(g, "phi_laplace", 2.0)
    u = np.array([0.3, -1.0, 2.0])
    v = Dual("grad", gradient(g, u))
    assert pairing(v, u, pl) == pytest.approx(norm(g, u, "W1p", 2.0) ** 2, rel=1e-14)
    with pytest.raises(RepresentationError):
        pl.pairing(Dual("density", u), u)


def test_dual_arithmetic_checks_tags():
    a = Dual("density", np.ones(2))
    with pytest.raises(TypeError):
        a + Dual("grad", np.ones(2))
    np.testing.assert_allclose((2 * a - a).values, np.ones(2))


def test_triple_construction_checks():
    with pytest.raises(ValueError):
        GelfandTriple(Grid(1, 4), "porous_media", 1.0)
    with pytest.raises(ValueError):
        GelfandTriple(Grid(1, 4), "porous_media", 1.5, alpha=0.9)
    assert GelfandTriple(Grid(1, 4), "phi_laplace", 3.0).gauge == 3.0


@pytest.mark.parametrize("d,n", [(1, 16), (2, 6)])
def test_symmetry_and_negative_definiteness(d, n, rng):
    g = Grid(d, n)
    for _ in range(20):
        u, v = rng.standard_normal((2, g.size))
        lhs = laplacian(g, u) @ v * g.w
        rhs = u @ laplacian(g, v) * g.w
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
        assert laplacian(g, u) @ u < 0


def test_riesz_identity(rng):
    g = Grid(2, 7)
    for _ in range(20):
        u = rng.standard_normal(g.size)
        sq = inv_laplacian(g, u) @ u * g.w
        assert sq >= 0
        assert norm(g, u, "Hminus1") ** 2 == pytest.approx(sq, rel=1e-14)


@pytest.mark.parametrize("kind", ["phi_laplace", "porous_media"])
def test_embedding_constant_p2_matches_eigenvalue(kind):
    g = Grid(1, 16)
    res = embedding_constant(GelfandTriple(g, kind, 2.0), seed=1)
    mu1 = g.mode_eigenvalue(1)
    assert res.c0**2 == pytest.approx(mu1, rel=1e-6)
    assert res.eigen_check**2 == pytest.approx(mu1, rel=1e-12)


def test_embedding_ratio_is_zero_homogeneous(rng):
    t = GelfandTriple(Grid(1, 10), "porous_media", 1.5)
    u = rng.standard_normal(10)
    assert embedding_ratio(t, 2 * u) == pytest.approx(embedding_ratio(t, u), rel=1e-13)


def test_embedding_needs_restarts():
    with pytest.raises(ValueError):
        embedding_constant(GelfandTriple(Grid(1, 4), "porous_media", 1.5), restarts=3)


@pytest.mark.parametrize("kind,p,d,n", [("porous_media", 1.5, 1, 16), ("phi_laplace", 1.5, 1, 12),
                                        ("phi_laplace", 3.0, 2, 5), ("porous_media", 3.0, 2, 5)])
def test_embedding_bound_on_random_fields(kind, p, d, n, rng):
    t = GelfandTriple(Grid(d, n), kind, p)
    c0 = embedding_constant(t, seed=3).c0
    for _ in range(500):
        u = rng.standard_normal(t.grid.size) * rng.uniform(0.01, 10)
        assert t.norm_V(u) >= c0 * t.norm_H(u) - 1e-9


@settings(max_examples=60, deadline=None)
@given(arrays(float, 9, elements=st.floats(-100, 100)),
       st.floats(1.0, 6.0), st.floats(1.0, 6.0))
def test_normalized_power_means_nondecreasing_in_p(u, p, q):
    g = Grid(2, 3)
    lo, hi = sorted((p, q))
    m = g.measure
    a = norm(g, u, "Lp", lo) / m ** (1 / lo)
    b = norm(g, u, "Lp", hi) / m ** (1 / hi)
    direct_a = np.mean(np.abs(u) ** lo) ** (1 / lo)
    assert a == pytest.approx(direct_a, rel=1e-10, abs=1e-300)
    assert a <= b * (1 + 1e-12) + 1e-300


def test_phi_laplace_dual_norm_bracket(rng):
    g = Grid(1, 10)
    t = GelfandTriple(g, "phi_laplace", 1.5)
    v = Dual("grad", rng.standard_normal(g.edge_count))
    lo, hi = t.dual_norm_bracket(v)
    assert 0 < lo <= hi
    assert hi <= t.density_norm(v) * (1 + 1e-12)
    # p = 2 bracket collapses to the exact H^{-1} norm
    t2 = GelfandTriple(g, "phi_laplace", 2.0)
    lo2, hi2 = t2.dual_norm_bracket(v)
    assert lo2 == pytest.approx(hi2, rel=1e-10)
    assert lo2 == pytest.approx(norm(g, t2.to_node(v), "Hminus1"), rel=1e-12)
