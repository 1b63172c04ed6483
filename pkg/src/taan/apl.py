"""Adaptive piecewise-linear activation functions over a fixed hinge grid.

An activation is F(x) = max(0, x) + sum_i coords[i] * max(0, -x + b_i) for a
grid of breakpoints {b_i}.  The breakpoints are fixed (not trained), so every
Gram structure built on them stays constant; only the coordinates are
task-specific and learned.
"""

from dataclasses import dataclass

import numpy as np

from taan import _backend


@dataclass(frozen=True)
class BasisGrid:
    """Strictly increasing, finite hinge locations shared by activations."""

    breakpoints: np.ndarray

    def __post_init__(self):
        bps = np.asarray(self.breakpoints, dtype=np.float64)
        if bps.ndim != 1 or bps.size < 1:
            raise ValueError("breakpoints must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(bps)):
            raise ValueError("breakpoints must all be finite")
        if bps.size > 1 and not np.all(np.diff(bps) > 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        bps = np.ascontiguousarray(bps)
        bps.flags.writeable = False
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def even(cls, basis_count, lo=-2.0, hi=2.0):
        """Evenly spaced grid of ``basis_count`` breakpoints on [lo, hi]."""
        if basis_count < 1:
            raise ValueError(f"basis_count must be >= 1, got {basis_count}")
        if basis_count == 1:
            return cls(np.array([0.5 * (lo + hi)]))
        return cls(np.linspace(lo, hi, basis_count))

    def __len__(self):
        return self.breakpoints.size


def _as_coords(coords, grid):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.shape != (len(grid),):
        raise ValueError(
            f"coords has shape {coords.shape}, expected ({len(grid)},)"
        )
    return coords


def validate_coordinates(alpha, grid, task_count=None):
    """Check a task-by-basis coordinate matrix against a grid; returns it as
    a float64 array."""
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[1] != len(grid):
        raise ValueError(
            f"coordinate matrix has shape {alpha.shape}, expected "
            f"(tasks, {len(grid)})"
        )
    if task_count is not None and alpha.shape[0] != task_count:
        raise ValueError(
            f"coordinate matrix has {alpha.shape[0]} rows, expected "
            f"{task_count}"
        )
    if not np.all(np.isfinite(alpha)):
        raise ValueError("coordinate matrix contains non-finite entries")
    return alpha


def apl_eval(x, coords, grid):
    """F(x) = max(0, x) + sum_i coords[i] * max(0, -x + b_i), scalar x."""
    coords = _as_coords(coords, grid)
    acc = x if x > 0.0 else 0.0
    for ci, bi in zip(coords, grid.breakpoints):
        d = bi - x
        if d > 0.0:
            acc += ci * d
    return float(acc)


def apl_eval_batch(pre_activation, coords, grid):
    """Elementwise apl_eval; preserves the input's shape."""
    coords = _as_coords(coords, grid)
    x = np.ascontiguousarray(pre_activation, dtype=np.float64)
    out = _backend.apl_forward(x.ravel(), coords, grid.breakpoints)
    return out.reshape(x.shape)


def apl_grad_x(x, coords, grid):
    """dF/dx at scalar x.

    Uses the right-derivative at x = 0 (slope 1) and treats a hinge as
    inactive at x = b_i, so the subgradient choice is deterministic.
    """
    coords = _as_coords(coords, grid)
    slope = 1.0 if x >= 0.0 else 0.0
    for ci, bi in zip(coords, grid.breakpoints):
        if x < bi:
            slope -= ci
    return float(slope)


def apl_grad_coords(x, grid):
    """dF/dcoords at scalar x: entry i is max(0, -x + b_i).

    F is linear in the coordinates, so this is exact and independent of the
    current coordinate values.
    """
    if not np.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    return np.maximum(grid.breakpoints - x, 0.0)
