"""Pure numpy Wigner kernel (fallback when the compiled extension is absent)."""

from __future__ import annotations

import numpy as np


def wigner_grid(rho: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Evaluate ``(2/pi) Tr[rho D(alpha) P D(-alpha)]`` at every grid point.

    ``w[n]`` holds the Fock matrix element ``<m|D P D^dag|n>`` scaled by
    ``1/pi`` for the current row ``m``; rows are advanced with the
    Laguerre three-term recurrence.
    """
    n_max = rho.shape[0]
    a2 = 2.0 * alpha
    a2c = a2.conj()
    w = [None] * n_max
    w[0] = np.exp(-2.0 * np.abs(alpha) ** 2) / np.pi
    out = rho[0, 0].real * w[0]
    for n in range(1, n_max):
        w[n] = a2 * w[n - 1] / np.sqrt(n)
        out = out + 2.0 * np.real(rho[0, n] * w[n])
    for m in range(1, n_max):
        prev = w[m]
        w[m] = (a2c * prev - np.sqrt(m) * w[m - 1]) / np.sqrt(m)
        out = out + np.real(rho[m, m]) * np.real(w[m])
        for n in range(m + 1, n_max):
            nxt = (a2 * w[n - 1] - np.sqrt(m) * prev) / np.sqrt(n)
            prev = w[n]
            w[n] = nxt
            out = out + 2.0 * np.real(rho[m, n] * w[n])
    return np.asarray(out, dtype=float)
