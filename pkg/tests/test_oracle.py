import numpy as np
import pytest

from lapnet.graphs import WeightedGraph, laplacian
from lapnet.oracle import (KernelMismatch, effective_resistance, exact_solve,
                           generalized_eig_range, kernels_match,
                           leverage_scores_exact, loewner_sandwich_check,
                           mahalanobis_norm, pseudo_inverse, schur_complement,
                           solve_error, spectral_approx_check)
from conftest import cycle, path, rand_connected


def test_pinv_unit_edge(unit_edge):
    L = laplacian(unit_edge)
    assert np.allclose(pseudo_inverse(L), 0.25 * np.array([[1, -1], [-1, 1]]))


def test_pinv_properties():
    g = rand_connected(9, 6, seed=3)
    L = laplacian(g)
    Lp = pseudo_inverse(L)
    assert np.allclose(L @ Lp @ L, L, atol=1e-8)
    assert np.allclose(Lp @ L @ Lp, Lp, atol=1e-8)
    assert np.allclose(Lp, Lp.T, atol=1e-10)
    assert np.allclose(Lp @ np.ones(9), 0.0, atol=1e-9)


def test_exact_solve_unit_edge(unit_edge):
    L = laplacian(unit_edge)
    x = exact_solve(L, np.array([1.0, -1.0]))
    assert np.allclose(x, [0.5, -0.5])
    assert solve_error(L, x, np.array([1.0, -1.0])) < 1e-12


def test_exact_solve_recovers_planted():
    g = rand_connected(12, 8, seed=4)
    L = laplacian(g)
    rng = np.random.default_rng(0)
    y = rng.normal(size=12)
    y -= y.mean()
    b = L @ y
    x = exact_solve(L, b)
    assert np.allclose(x, y, atol=1e-8)


def test_exact_solve_rejects_offkernel():
    L = laplacian(WeightedGraph(2, [(0, 1, 1)]))
    with pytest.raises(ValueError):
        exact_solve(L, np.array([1.0, 1.0]))


def test_schur_complement_path_onto_endpoints():
    g = path(3)   # u - m - v, unit weights
    L = laplacian(g)
    S = schur_complement(L, [0, 2])
    assert np.allclose(S, [[0.5, -0.5], [-0.5, 0.5]])


def test_schur_complement_star_onto_leaves():
    g = WeightedGraph(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
    S = schur_complement(laplacian(g), [1, 2, 3])
    # eliminating the hub spreads it into a uniform triangle of weight 1/3
    off = S - np.diag(np.diag(S))
    assert np.allclose(off, -(1 / 3) * (1 - np.eye(3)))
    assert np.allclose(S.sum(axis=1), 0.0, atol=1e-12)


def test_schur_complement_keep_order():
    g = path(4, [1, 2, 3])
    L = laplacian(g)
    S = schur_complement(L, [3, 0])
    S2 = schur_complement(L, [0, 3])
    assert np.allclose(S, S2[::-1, ::-1].T)


def test_schur_complement_transitivity():
    g = rand_connected(10, 7, seed=8)
    L = laplacian(g)
    a = schur_complement(L, [0, 1, 2, 3])
    b = schur_complement(schur_complement(L, [0, 1, 2, 3, 4, 5]), [0, 1, 2, 3])
    assert np.allclose(a, b, atol=1e-9)


def test_generalized_eig_range_scaled():
    g = rand_connected(8, 5, seed=1)
    L = laplacian(g)
    lo, hi = generalized_eig_range(L, 3.0 * L)
    assert lo == pytest.approx(3.0, rel=1e-9)
    assert hi == pytest.approx(3.0, rel=1e-9)


def test_generalized_eig_range_kernel_mismatch():
    L1 = laplacian(WeightedGraph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)]))
    L2 = laplacian(WeightedGraph(4, [(0, 1, 1), (2, 3, 1)]))
    assert not kernels_match(L1, L2)
    with pytest.raises(KernelMismatch):
        generalized_eig_range(L1, L2)


def test_sandwich_and_approx_checks():
    g = rand_connected(10, 6, seed=2)
    L = laplacian(g)
    assert loewner_sandwich_check(L, 1.05 * L, 1.0, 1.1)
    assert not loewner_sandwich_check(L, 1.2 * L, 1.0, 1.1)
    assert spectral_approx_check(L, 1.05 * L, 0.1)
    assert not spectral_approx_check(L, 1.2 * L, 0.1)


def test_leverage_scores():
    tree = path(4)
    assert np.allclose(leverage_scores_exact(tree), 1.0)
    tri = WeightedGraph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)])
    assert np.allclose(leverage_scores_exact(tri), 2 / 3)
    c4 = cycle(4)
    assert np.allclose(leverage_scores_exact(c4), 3 / 4)


def test_leverage_scores_sum_to_rank():
    g = rand_connected(11, 9, seed=6)
    lev = leverage_scores_exact(g)
    assert lev.sum() == pytest.approx(g.n - 1, abs=1e-8)
    assert np.all(lev > 0) and np.all(lev <= 1 + 1e-12)


def test_effective_resistance_series():
    g = path(3, [1, 2])
    assert effective_resistance(g, 0, 2) == pytest.approx(1 + 0.5)
    tri = WeightedGraph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)])
    assert effective_resistance(tri, 0, 1) == pytest.approx(2 / 3)


def test_mahalanobis_norm():
    A = np.diag([4.0, 9.0])
    assert mahalanobis_norm(A, np.array([1.0, 0.0])) == pytest.approx(2.0)
    assert mahalanobis_norm(A, np.array([1.0, 1.0])) == pytest.approx(np.sqrt(13))
    L = laplacian(WeightedGraph(2, [(0, 1, 1)]))
    assert mahalanobis_norm(L, np.array([1.0, -1.0])) == pytest.approx(np.sqrt(2))
