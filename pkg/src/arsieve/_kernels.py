"""Compiled inner loops.

Only the time recursion lives here; it is the one loop that cannot be
vectorised across time and is executed tens of millions of times by the
Monte Carlo harness.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def var_recursion(coeffs: np.ndarray, innov: np.ndarray, out: np.ndarray) -> None:
    """Run out[:, t] = sum_l coeffs[l-1] @ out[:, t-l] + innov[:, t].

    coeffs has shape (p, r, r), innov and out shape (r, n).  Lags reaching
    before t = 0 contribute zero (zero initial state).
    """
    p = coeffs.shape[0]
    r = coeffs.shape[1]
    n = innov.shape[1]
    for t in range(n):
        lmax = min(p, t)
        for i in range(r):
            acc = innov[i, t]
            for l in range(1, lmax + 1):
                for j in range(r):
                    acc += coeffs[l - 1, i, j] * out[j, t - l]
            out[i, t] = acc
