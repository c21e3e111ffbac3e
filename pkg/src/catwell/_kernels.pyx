# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Crank-Nicolson stepping for the mirror wavefunction.

The Hamiltonian on the grid is tridiagonal with a constant off-diagonal and a
diagonal that is affine in the drive: d_j(lam) = base_j + lam * drive_j.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def cn_steps(double complex[::1] psi, const double[::1] base, const double[::1] drive,
             double off, const double[::1] lams, double dtau):
    """Advance ``psi`` in place by ``len(lams)`` Cayley steps of size ``dtau``.

    ``lams[k]`` is the drive used for step k (midpoint value).  Solves
    (1 + i dtau/2 H) psi' = (1 - i dtau/2 H) psi by the Thomas algorithm,
    written out in real arithmetic (the off-diagonal factor is purely imaginary).
    """
    cdef Py_ssize_t n = psi.shape[0]
    cdef Py_ssize_t nsteps = lams.shape[0]
    if base.shape[0] != n or drive.shape[0] != n:
        raise ValueError("base/drive length must match psi")
    if n < 2:
        raise ValueError("need at least two grid points")

    cdef double[::1] cr = np.empty(n)
    cdef double[::1] ci = np.empty(n)
    cdef double[::1] dr = np.empty(n)
    cdef double[::1] di = np.empty(n)
    cdef double[::1] pr = np.empty(n)
    cdef double[::1] pi = np.empty(n)
    cdef double half = 0.5 * dtau
    cdef double beta = half * off
    cdef double lam, alpha, sr, si, rr, ri, den_r, den_i, m, inv_r, inv_i, c_r, c_i, d_r, d_i
    cdef Py_ssize_t j, k

    for j in range(n):
        pr[j] = psi[j].real
        pi[j] = psi[j].imag

    with nogil:
        for k in range(nsteps):
            lam = lams[k]
            c_r = 0.0
            c_i = 0.0
            d_r = 0.0
            d_i = 0.0
            for j in range(n):
                alpha = half * (base[j] + lam * drive[j])
                sr = 0.0
                si = 0.0
                if j > 0:
                    sr = pr[j - 1]
                    si = pi[j - 1]
                if j + 1 < n:
                    sr = sr + pr[j + 1]
                    si = si + pi[j + 1]
                # rhs = (1 - i alpha) psi_j - i beta (psi_{j-1} + psi_{j+1}) - i beta d_{j-1}
                rr = pr[j] + alpha * pi[j] + beta * (si + d_i)
                ri = pi[j] - alpha * pr[j] - beta * (sr + d_r)
                # denom = 1 + i alpha - i beta c_{j-1}
                den_r = 1.0 + beta * c_i
                den_i = alpha - beta * c_r
                m = den_r * den_r + den_i * den_i
                inv_r = den_r / m
                inv_i = -den_i / m
                # c_j = i beta / denom, d_j = rhs / denom
                c_r = -beta * inv_i
                c_i = beta * inv_r
                d_r = rr * inv_r - ri * inv_i
                d_i = rr * inv_i + ri * inv_r
                cr[j] = c_r
                ci[j] = c_i
                dr[j] = d_r
                di[j] = d_i
            pr[n - 1] = dr[n - 1]
            pi[n - 1] = di[n - 1]
            for j in range(n - 2, -1, -1):
                sr = pr[j + 1]
                si = pi[j + 1]
                pr[j] = dr[j] - (cr[j] * sr - ci[j] * si)
                pi[j] = di[j] - (cr[j] * si + ci[j] * sr)

    for j in range(n):
        psi[j] = pr[j] + 1j * pi[j]
    return np.asarray(psi)
