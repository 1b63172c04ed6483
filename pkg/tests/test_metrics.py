"""Mixture-weighted functional metrics: Gram soundness, Monte-Carlo parity."""

import numpy as np
import pytest

from taan.apl import BasisGrid
from taan.metrics import (
    DegenerateFunctionError,
    GaussianMixture,
    GramCache,
    build_gram,
    cosine_similarity,
    distance_matrix,
    distance_sq,
    inner_product,
    mc_inner_and_distance,
    norm,
)


def random_instance(rng, max_m=8):
    m = int(rng.integers(1, max_m + 1))
    grid = BasisGrid(np.sort(rng.uniform(-2.5, 2.5, m)))
    k = int(rng.integers(1, 4))
    weights = rng.uniform(0.2, 1.0, k)
    weights /= weights.sum()
    mixture = GaussianMixture(
        weights, rng.uniform(-2.0, 2.0, k), rng.uniform(0.3, 2.0, k)
    )
    return grid, mixture


def full_gram(cache: GramCache):
    """Gram of the full basis (relu, hinge_1..hinge_M)."""
    m = cache.basis_count
    g = np.empty((m + 1, m + 1))
    g[0, 0] = cache.relu_relu
    g[0, 1:] = cache.relu_hinge
    g[1:, 0] = cache.relu_hinge
    g[1:, 1:] = cache.hinge_hinge
    return g


def test_standard_normal_single_breakpoint_cache():
    # One breakpoint at 0: E[relu^2] = 1/2, cross term 0, E[hinge^2] = 1/2.
    cache = build_gram(
        BasisGrid(np.array([0.0])), GaussianMixture.standard_normal()
    )
    assert abs(cache.relu_relu - 0.5) < 1e-14
    assert abs(cache.relu_hinge[0]) < 1e-14
    assert abs(cache.hinge_hinge[0, 0] - 0.5) < 1e-14


def test_two_task_distance_matrix_example():
    grid = BasisGrid(np.array([0.0]))
    cache = build_gram(grid, GaussianMixture.standard_normal())
    alpha = np.array([[1.0], [0.0]])
    dist = distance_matrix(alpha, cache)
    assert np.allclose(dist, [[0.0, 0.5], [0.5, 0.0]], atol=1e-14)


def test_gram_psd_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        grid, mixture = random_instance(rng)
        eig = np.linalg.eigvalsh(full_gram(build_gram(grid, mixture)))
        assert eig.min() >= -1e-10


def test_cauchy_schwarz_and_polarization():
    rng = np.random.default_rng(1)
    for _ in range(100):
        grid, mixture = random_instance(rng)
        cache = build_gram(grid, mixture)
        c1 = rng.uniform(-2.0, 2.0, len(grid))
        c2 = rng.uniform(-2.0, 2.0, len(grid))
        ip = inner_product(c1, c2, cache)
        n1, n2 = norm(c1, cache), norm(c2, cache)
        assert abs(ip) <= n1 * n2 * (1.0 + 1e-10) + 1e-12
        polarized = n1**2 + n2**2 - 2.0 * ip
        assert abs(distance_sq(c1, c2, cache) - polarized) < 1e-10 * max(
            1.0, abs(polarized)
        )


def test_triangle_inequality_on_sqrt_distance():
    rng = np.random.default_rng(2)
    for _ in range(100):
        grid, mixture = random_instance(rng)
        cache = build_gram(grid, mixture)
        c = [rng.uniform(-2.0, 2.0, len(grid)) for _ in range(3)]
        d01 = np.sqrt(distance_sq(c[0], c[1], cache))
        d12 = np.sqrt(distance_sq(c[1], c[2], cache))
        d02 = np.sqrt(distance_sq(c[0], c[2], cache))
        assert d02 <= d01 + d12 + 1e-10


def test_distance_matrix_exact_properties():
    rng = np.random.default_rng(3)
    grid, mixture = random_instance(rng)
    cache = build_gram(grid, mixture)
    alpha = rng.uniform(-1.5, 1.5, (6, len(grid)))
    dist = distance_matrix(alpha, cache)
    assert np.array_equal(dist, dist.T)
    assert np.all(np.diag(dist) == 0.0)
    assert dist.min() >= 0.0
    # Entries agree with the pairwise scalar route.
    for i in range(6):
        for j in range(6):
            expected = distance_sq(alpha[i], alpha[j], cache)
            assert abs(dist[i, j] - expected) < 1e-10


def test_identical_coordinates_have_zero_distance_unit_cosine():
    rng = np.random.default_rng(4)
    grid, mixture = random_instance(rng)
    cache = build_gram(grid, mixture)
    c = rng.uniform(-1.0, 1.0, len(grid))
    assert distance_sq(c, c, cache) == 0.0
    assert abs(cosine_similarity(c, c, cache) - 1.0) < 1e-12
    assert abs(norm(c, cache) ** 2 - inner_product(c, c, cache)) < 1e-12


def test_monte_carlo_agrees_with_closed_form():
    rng = np.random.default_rng(5)
    for trial in range(3):
        grid, mixture = random_instance(rng, max_m=4)
        cache = build_gram(grid, mixture)
        c1 = rng.uniform(-1.5, 1.5, len(grid))
        c2 = rng.uniform(-1.5, 1.5, len(grid))
        (ip_mc, ip_se), (d_mc, d_se) = mc_inner_and_distance(
            c1, c2, grid, mixture, 200_000, np.random.default_rng(100 + trial)
        )
        assert abs(ip_mc - inner_product(c1, c2, cache)) <= 4.0 * ip_se
        assert abs(d_mc - distance_sq(c1, c2, cache)) <= 4.0 * d_se


def test_degenerate_cosine_raises():
    # A mixture far to the left of both the origin and the breakpoint makes
    # every basis function vanish on essentially all of the mass, so the
    # norm underflows to zero and the cosine is undefined.
    left = GaussianMixture(np.array([1.0]), np.array([-40.0]), np.array([0.5]))
    lcache = build_gram(BasisGrid(np.array([-41.0])), left)
    zero = np.zeros(1)
    with pytest.raises(DegenerateFunctionError):
        cosine_similarity(zero, zero, lcache)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GaussianMixture(np.array([0.5, 0.4]), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        GaussianMixture(np.array([1.0]), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        GaussianMixture(np.array([-0.5, 1.5]), np.zeros(2), np.ones(2))
    mix = GaussianMixture.standard_normal()
    assert mix.weights.sum() == 1.0
    comps = mix.components()
    assert len(comps) == 1 and comps[0][0] == 1.0


def test_mixture_cache_is_weighted_combination():
    grid = BasisGrid(np.array([-0.5, 1.0]))
    g1 = GaussianMixture(np.array([1.0]), np.array([-1.0]), np.array([0.8]))
    g2 = GaussianMixture(np.array([1.0]), np.array([1.5]), np.array([1.2]))
    mix = GaussianMixture(
        np.array([0.3, 0.7]), np.array([-1.0, 1.5]), np.array([0.8, 1.2])
    )
    c1, c2, cm = (build_gram(grid, g) for g in (g1, g2, mix))
    assert np.allclose(
        cm.hinge_hinge, 0.3 * c1.hinge_hinge + 0.7 * c2.hinge_hinge, atol=1e-14
    )
    assert abs(cm.relu_relu - (0.3 * c1.relu_relu + 0.7 * c2.relu_relu)) < 1e-14
