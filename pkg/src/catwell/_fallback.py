"""Pure NumPy/SciPy versions of the compiled kernels (same signatures)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def cn_steps(psi, base, drive, off, lams, dtau):
    """Advance ``psi`` in place by ``len(lams)`` Cayley steps of size ``dtau``."""
    n = psi.shape[0]
    if base.shape[0] != n or drive.shape[0] != n:
        raise ValueError("base/drive length must match psi")
    if n < 2:
        raise ValueError("need at least two grid points")
    ih = 0.5j * dtau
    b = ih * off
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, 1:] = b
    ab[0, 0] = 0.0
    ab[2, :-1] = b
    ab[2, -1] = 0.0
    rhs = np.empty(n, dtype=np.complex128)
    for lam in lams:
        d = base + lam * drive
        rhs[:] = (1.0 - ih * d) * psi
        rhs[1:] -= b * psi[:-1]
        rhs[:-1] -= b * psi[1:]
        ab[1] = 1.0 + ih * d
        psi[:] = solve_banded((1, 1), ab, rhs, overwrite_ab=False, overwrite_b=True, check_finite=False)
    return psi
