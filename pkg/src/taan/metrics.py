"""Function-space geometry of hinge activations under a Gaussian mixture.

The plain L2 inner product of two activations diverges (both grow linearly),
so all metrics here weight the integrals by a Gaussian mixture density G.
With basis moments

    s   = sum_k pi_k E_k[relu^2]
    v_i = sum_k pi_k E_k[relu * hinge_{b_i}]
    G_ij = sum_k pi_k E_k[hinge_{b_i} * hinge_{b_j}]

cached once per (grid, mixture) pair, the metrics reduce to quadratic forms
in the coordinate vectors:

    <F1, F2>  = s + (c1 + c2)' v + c1' G c2          (= E[F1(X) F2(X)])
    d2(F1,F2) = (c1 - c2)' G (c1 - c2)               (= E[(F1(X) - F2(X))^2])
    ||F||     = sqrt(<F, F>)

The hinge-moment matrix is a Gram matrix of functions in the weighted L2
space, hence symmetric positive semidefinite.
"""

import math
from dataclasses import dataclass

import numpy as np

from taan import _backend
from taan.apl import BasisGrid, validate_coordinates
from taan.moments import GaussianParams, moment_b0_sq, moment_b0b, moment_bb

DEGENERATE_NORM_EPS = 1e-12


class NumericError(ArithmeticError):
    """A metric invariant failed badly enough to indicate a broken cache."""


class DegenerateFunctionError(ValueError):
    """Cosine similarity requested for a function with near-zero norm."""


@dataclass(frozen=True)
class GaussianMixture:
    """Weights, means and deviations of the weighting measure."""

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        s = np.asarray(self.sigmas, dtype=np.float64)
        if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size < 1:
            raise ValueError("weights, means, sigmas must be equal-length 1-D")
        if not (
            np.all(np.isfinite(w))
            and np.all(np.isfinite(m))
            and np.all(np.isfinite(s))
        ):
            raise ValueError("mixture parameters must be finite")
        if np.any(w < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        if np.any(s <= 0.0):
            raise ValueError("mixture sigmas must be positive")
        for name, arr in (("weights", w), ("means", m), ("sigmas", s)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def standard_normal(cls):
        return cls(np.array([1.0]), np.array([0.0]), np.array([1.0]))

    @classmethod
    def from_components(cls, components):
        """Build from an iterable of (weight, mean, sigma) triples."""
        comps = [(float(p), float(m), float(s)) for p, m, s in components]
        return cls(
            np.array([c[0] for c in comps]),
            np.array([c[1] for c in comps]),
            np.array([c[2] for c in comps]),
        )

    def components(self):
        return [
            (float(p), GaussianParams(float(m), float(s)))
            for p, m, s in zip(self.weights, self.means, self.sigmas)
        ]


@dataclass(frozen=True)
class GramCache:
    """Mixture-weighted second moments of the basis functions.

    relu_relu is E[relu^2], relu_hinge[i] is E[relu * hinge_{b_i}], and
    hinge_hinge[i, j] is E[hinge_{b_i} * hinge_{b_j}], each averaged over the
    mixture components.
    """

    relu_relu: float
    relu_hinge: np.ndarray
    hinge_hinge: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.relu_hinge, dtype=np.float64)
        g = np.ascontiguousarray(self.hinge_hinge, dtype=np.float64)
        if v.ndim != 1 or g.shape != (v.size, v.size):
            raise ValueError(
                f"inconsistent cache shapes {v.shape} and {g.shape}"
            )
        v.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "relu_hinge", v)
        object.__setattr__(self, "hinge_hinge", g)

    @property
    def basis_count(self):
        return self.relu_hinge.size


def build_gram(grid: BasisGrid, mixture: GaussianMixture) -> GramCache:
    """Accumulate the moment cache for one (grid, mixture) pair.

    Breakpoints are fixed, so the cache is constant during training; build it
    once and share it across layers that use the same grid and mixture.
    """
    bps = grid.breakpoints
    m = bps.size
    s = 0.0
    v = np.zeros(m)
    g = np.zeros((m, m))
    for pi, comp in mixture.components():
        s += pi * moment_b0_sq(comp)
        for i in range(m):
            v[i] += pi * moment_b0b(bps[i], comp)
            for j in range(i, m):
                mij = pi * moment_bb(bps[i], bps[j], comp)
                g[i, j] += mij
                if j != i:
                    g[j, i] += mij
    return GramCache(s, v, g)


def _pair(c1, c2, cache):
    m = cache.basis_count
    c1 = np.ascontiguousarray(c1, dtype=np.float64)
    c2 = np.ascontiguousarray(c2, dtype=np.float64)
    if c1.shape != (m,) or c2.shape != (m,):
        raise ValueError(
            f"coordinate vectors must have shape ({m},), got "
            f"{c1.shape} and {c2.shape}"
        )
    return c1, c2


def inner_product(c1, c2, cache: GramCache):
    """<F1, F2> under the mixture; symmetric in the two coordinate vectors."""
    c1, c2 = _pair(c1, c2, cache)
    return float(
        cache.relu_relu
        + (c1 + c2) @ cache.relu_hinge
        + c1 @ cache.hinge_hinge @ c2
    )


def distance_sq(c1, c2, cache: GramCache):
    """E[(F1(X) - F2(X))^2]: the Gram quadratic form of the difference."""
    c1, c2 = _pair(c1, c2, cache)
    d = c1 - c2
    return float(d @ cache.hinge_hinge @ d)


def norm(c, cache: GramCache):
    """sqrt(<F, F>); the self inner product is E[F^2] and cannot be negative
    beyond rounding."""
    ip = inner_product(c, c, cache)
    if ip < -1e-10:
        raise NumericError(
            f"self inner product {ip!r} is negative; Gram cache is broken"
        )
    return math.sqrt(max(ip, 0.0))


def cosine_similarity(c1, c2, cache: GramCache):
    """<F1, F2> / (||F1|| ||F2||), in [-1, 1] up to rounding."""
    n1 = norm(c1, cache)
    n2 = norm(c2, cache)
    if n1 <= DEGENERATE_NORM_EPS or n2 <= DEGENERATE_NORM_EPS:
        raise DegenerateFunctionError(
            f"cosine similarity undefined for near-zero norms ({n1}, {n2})"
        )
    return inner_product(c1, c2, cache) / (n1 * n2)


def distance_matrix(alpha, cache: GramCache):
    """All pairwise squared distances between the rows of a coordinate
    matrix.

    Exactly symmetric with an exactly zero diagonal by construction; tiny
    negative rounding residue is clipped to zero.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[1] != cache.basis_count:
        raise ValueError(
            f"coordinate matrix has shape {alpha.shape}, expected "
            f"(tasks, {cache.basis_count})"
        )
    p = alpha @ cache.hinge_hinge @ alpha.T
    q = np.diag(p)
    d = q[:, None] + q[None, :] - (p + p.T)
    return np.maximum(d, 0.0)


def sample_mixture(mixture: GaussianMixture, n, rng):
    """Draw n samples from the mixture density (used by Monte-Carlo checks)."""
    comps = rng.choice(mixture.weights.size, size=n, p=mixture.weights)
    return mixture.means[comps] + mixture.sigmas[comps] * rng.standard_normal(n)


def mc_inner_and_distance(c1, c2, grid, mixture, n_samples, rng, chunk=1_000_000):
    """Monte-Carlo estimates of <F1, F2> and d2(F1, F2) under the mixture.

    Returns ((ip_mean, ip_stderr), (d2_mean, d2_stderr)).  This is the
    independent sampling route against the closed-form Gram route; it shares
    no moment code with build_gram.
    """
    c1, c2 = np.asarray(c1, np.float64), np.asarray(c2, np.float64)
    bps = grid.breakpoints
    s_p = s_p2 = s_d = s_d2 = 0.0
    done = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        x = sample_mixture(mixture, take, rng)
        f1 = _backend.apl_forward(x, np.ascontiguousarray(c1), bps)
        f2 = _backend.apl_forward(x, np.ascontiguousarray(c2), bps)
        prod = f1 * f2
        diff2 = (f1 - f2) ** 2
        s_p += prod.sum()
        s_p2 += (prod * prod).sum()
        s_d += diff2.sum()
        s_d2 += (diff2 * diff2).sum()
        done += take
    n = float(n_samples)
    ip_mean = s_p / n
    d2_mean = s_d / n
    ip_var = max(s_p2 / n - ip_mean**2, 0.0)
    d2_var = max(s_d2 / n - d2_mean**2, 0.0)
    return (
        (ip_mean, math.sqrt(ip_var / n)),
        (d2_mean, math.sqrt(d2_var / n)),
    )
