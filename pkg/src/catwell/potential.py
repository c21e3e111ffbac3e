"""Radiation-pressure double-well potential of the central mirror.

In units of hbar*Omega, with r = g/kappa, delta = Delta/kappa and
lam = n/n_c, the Born-Oppenheimer potential (offset so that v(0) = 0) is

    v(q) = q^2/2 + lam * C * [atan(2(delta + r q)) + atan(2(delta - r q)) - 2 atan(2 delta)]

with C = (1 + 4 delta^2)^2 / (32 r^2 delta).  The bracket is a difference of
O(1) arctangents that nearly cancel for r*q << 1 (r ~ 1e-6 in practice), so
it is evaluated through the exact closed form

    bracket = -atan2(16 delta r^2 q^2, s^2 + 4 (1 - 4 delta^2) r^2 q^2),  s = 1 + 4 delta^2

which has no cancellation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import RegimeError
from .params import DimensionlessSystem, PhysicalParams, derive_optical


@dataclass(frozen=True)
class PotentialCurve:
    q: np.ndarray
    v: np.ndarray
    lam: float
    r: float
    delta: float


@dataclass(frozen=True)
class MinimaReport:
    minima: list  # [(q_min, v_min), ...]
    curvature_origin: float
    count: int

    @property
    def q_min(self) -> float:
        return max(q for q, _ in self.minima)


def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")


def arctan_prefactor(r: float, delta: float) -> float:
    """C = (1 + 4 delta^2)^2 / (32 r^2 delta)."""
    s = 1.0 + 4.0 * delta * delta
    return s * s / (32.0 * r * r * delta)


def drive_profile(q, r: float, delta: float):
    """dv/dlam: the lam-independent optical part of the potential (hbar*Omega units)."""
    _check_delta(delta)
    q = np.asarray(q, dtype=float)
    s = 1.0 + 4.0 * delta * delta
    rq2 = (r * q) ** 2
    bracket = -np.arctan2(16.0 * delta * rq2, s * s + 4.0 * (1.0 - 4.0 * delta * delta) * rq2)
    return arctan_prefactor(r, delta) * bracket


def v_dimensionless(q, sys: DimensionlessSystem):
    """Potential in units of hbar*Omega relative to v(0); scalar or array ``q``."""
    q_arr = np.asarray(q, dtype=float)
    v = 0.5 * q_arr ** 2 + sys.lam * drive_profile(q_arr, sys.r, sys.delta)
    return float(v) if np.ndim(q) == 0 else v


def v_prime(q, sys: DimensionlessSystem):
    """dv/dq = q * (1 - lam s^4 / (a^2 + b^2)), a, b the atan2 arguments."""
    q = np.asarray(q, dtype=float)
    r, d = sys.r, sys.delta
    s = 1.0 + 4.0 * d * d
    rq2 = (r * q) ** 2
    a = 16.0 * d * rq2
    b = s * s + 4.0 * (1.0 - 4.0 * d * d) * rq2
    return q * (1.0 - sys.lam * s ** 4 / (a * a + b * b))


def potential_curve(sys: DimensionlessSystem, q) -> PotentialCurve:
    q = np.asarray(q, dtype=float)
    return PotentialCurve(q=q, v=v_dimensionless(q, sys), lam=sys.lam, r=sys.r, delta=sys.delta)


def v_physical(q, p: PhysicalParams, n: float):
    """V(q; n) / (hbar Omega) - V(0; n) / (hbar Omega) straight from the arctan formula.

    Loses precision when g*q << kappa; kept for cross-checks and plotting in
    physical units. Use :func:`v_dimensionless` for numerics.
    """
    g = derive_optical(p).g
    half = p.kappa / 2.0
    q = np.asarray(q, dtype=float)
    pref = n * (p.Delta ** 2 + half ** 2) / half / p.Omega

    def arcs(x):
        return np.arctan((p.Delta + g * x) / half) + np.arctan((p.Delta - g * x) / half)

    return 0.5 * q ** 2 + pref * (arcs(q) - arcs(0.0))


def critical_photon_number(p: PhysicalParams) -> float:
    """n_c = (4 Delta^2 + kappa^2) Omega / (16 g^2 Delta)."""
    if p.Delta <= 0:
        raise ValueError("Delta must be > 0 for a finite critical photon number")
    g = derive_optical(p).g
    return (4.0 * p.Delta ** 2 + p.kappa ** 2) * p.Omega / (16.0 * g ** 2 * p.Delta)


def is_second_order(p: PhysicalParams) -> bool:
    return p.Delta <= p.kappa / 2.0


def _require_second_order(delta: float) -> None:
    if delta > 0.5:
        raise RegimeError(
            f"Delta/kappa = {delta:g} > 1/2: first-order regime (up to three minima) is not supported"
        )


def find_minima(sys: DimensionlessSystem, tol: float = 1e-10) -> MinimaReport:
    """Locate the potential minima by bracketing sign changes of v'(q).

    Below the critical drive (lam <= 1) the only minimum is the origin.
    """
    _require_second_order(sys.delta)
    curvature = 1.0 - sys.lam
    if sys.lam <= 1.0:
        return MinimaReport(minima=[(0.0, 0.0)], curvature_origin=curvature, count=1)

    def slope_factor(q):
        return float(v_prime(q, sys)) / q

    # log-spaced bracket search; the wells can sit at q ~ 1e3-1e4
    q_hi = 0.3 / sys.r
    grid = np.geomspace(1e-6 / sys.r, q_hi, 200)
    factors = np.array([slope_factor(q) for q in grid])
    while factors[-1] <= 0:
        q_hi *= 4.0
        grid = np.geomspace(grid[-1], q_hi, 50)
        factors = np.array([slope_factor(q) for q in grid])
    idx = int(np.argmax(factors > 0))
    if idx == 0:
        # root below the first sample: extend towards the origin
        lo = grid[0]
        while slope_factor(lo) > 0:
            lo /= 10.0
        a, b = lo, grid[0]
    else:
        a, b = grid[idx - 1], grid[idx]
    q_star = brentq(slope_factor, a, b, xtol=1e-14 * b, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(float(v_prime(q_star, sys))) > tol:
        # polish with plain bisection on v' directly
        lo, hi = a, b
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if v_prime(mid, sys) < 0:
                lo = mid
            else:
                hi = mid
            if abs(float(v_prime(mid, sys))) < tol or hi - lo <= 4 * np.finfo(float).eps * hi:
                break
        q_star = 0.5 * (lo + hi)
    v_min = v_dimensionless(q_star, sys)
    return MinimaReport(minima=[(-q_star, v_min), (q_star, v_min)], curvature_origin=curvature, count=2)


def q_min_exact(sys: DimensionlessSystem) -> float:
    """Closed-form well position from v'(q) = 0 (valid for delta < 1/2)."""
    _require_second_order(sys.delta)
    if sys.lam <= 1.0:
        return 0.0
    s = 1.0 + 4.0 * sys.delta ** 2
    c = 1.0 - 4.0 * sys.delta ** 2
    x = (sys.lam - 1.0) * s * s
    u = x / (4.0 * (c + math.sqrt(c * c + x)))
    return math.sqrt(u) / sys.r


def _qmin_factor(sys: DimensionlessSystem) -> float:
    if sys.delta >= 0.5:
        raise RegimeError("Delta/kappa >= 1/2: the small-displacement relation does not apply")
    s = 1.0 + 4.0 * sys.delta ** 2
    return s * s / (8.0 * sys.r ** 2 * (1.0 - 4.0 * sys.delta ** 2))


def dn_to_qmin(sys: DimensionlessSystem, dn_rel: float) -> float:
    """Well position for a relative photon-number excess dn/n_c (quadratic regime)."""
    if dn_rel <= 0:
        raise ValueError("dn_rel must be > 0")
    q = math.sqrt(dn_rel * _qmin_factor(sys))
    if q >= 0.05 / sys.r:
        warnings.warn(
            f"q_min = {q:.4g} is outside the small-displacement regime (q_min < 0.05/r = {0.05 / sys.r:.4g})",
            stacklevel=2,
        )
    return q


def qmin_to_dn(sys: DimensionlessSystem, q_min: float) -> float:
    if q_min <= 0:
        raise ValueError("q_min must be > 0")
    return q_min * q_min / _qmin_factor(sys)


def damping_rate(p: PhysicalParams, n: float) -> float:
    """Mechanical damping including the radiation back-action shift (rad/s)."""
    if n < 0:
        raise ValueError("photon number must be non-negative")
    g = derive_optical(p).g
    return p.gamma_m + n * 4.0 * g ** 2 * p.Omega * p.kappa * p.Delta / (p.Delta ** 2 + p.kappa ** 2 / 4.0) ** 2
