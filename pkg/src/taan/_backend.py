"""Hot activation kernels: numba-jitted loops with a pure-numpy fallback.

The active path is chosen at import time from the ``TAAN_BACKEND`` environment
variable ("numba" or "numpy").  Default is numba when importable; set
``TAAN_BACKEND=numpy`` to force the fallback.  Both paths implement the same
contract on 1-D float64 arrays; ``benchmarks/bench_kernels.py`` compares their
throughput.
"""

import os

import numpy as np


def numpy_apl_forward(x, coords, bps):
    """max(0, x) + sum_i coords[i] * max(0, bps[i] - x), elementwise over x."""
    hinge = np.maximum(bps[None, :] - x[:, None], 0.0)
    return np.maximum(x, 0.0) + hinge @ coords


def numpy_apl_backward(x, coords, bps, gout):
    """Backward pass of the forward kernel.

    Returns (gx, gcoords) where gx[k] = gout[k] * dF/dx at x[k] and
    gcoords[i] = sum_k gout[k] * max(0, bps[i] - x[k]).  The slope uses the
    right-derivative at x = 0 and treats a hinge as inactive at x = bps[i].
    """
    hinge = np.maximum(bps[None, :] - x[:, None], 0.0)
    active = hinge > 0.0
    gx = gout * ((x >= 0.0).astype(np.float64) - active @ coords)
    gcoords = gout @ hinge
    return gx, gcoords


_requested = os.environ.get("TAAN_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"TAAN_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    BACKEND = "numpy"
else:
    try:
        from numba import njit

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        BACKEND = "numpy"

if BACKEND == "numba":

    @njit(cache=True)
    def numba_apl_forward(x, coords, bps):
        n = x.shape[0]
        m = bps.shape[0]
        out = np.empty(n)
        for k in range(n):
            xv = x[k]
            acc = xv if xv > 0.0 else 0.0
            for i in range(m):
                d = bps[i] - xv
                if d > 0.0:
                    acc += coords[i] * d
            out[k] = acc
        return out

    @njit(cache=True)
    def numba_apl_backward(x, coords, bps, gout):
        n = x.shape[0]
        m = bps.shape[0]
        gx = np.empty(n)
        gcoords = np.zeros(m)
        for k in range(n):
            xv = x[k]
            g = gout[k]
            slope = 1.0 if xv >= 0.0 else 0.0
            for i in range(m):
                d = bps[i] - xv
                if d > 0.0:
                    slope -= coords[i]
                    gcoords[i] += g * d
            gx[k] = g * slope
        return gx, gcoords

    apl_forward = numba_apl_forward
    apl_backward = numba_apl_backward
else:
    apl_forward = numpy_apl_forward
    apl_backward = numpy_apl_backward
