"""Adiabatic ramp-rate bound, ramp schedules and the feasibility chain.

Rates are d(lambda)/dt in 1/s with lambda = n/n_c.  The feasibility
quantities can be evaluated with the published power-law constants
(``REFERENCE_FIT``) or with constants fitted from live eigendata
(:func:`catwell.spectrum.scaling_fit`).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BudgetExceededError
from .params import (
    TWO_PI,
    DimensionlessSystem,
    PhysicalParams,
    ScaledCoords,
    derive_optical,
    power_from_photon_number,
)
from .potential import critical_photon_number, dn_to_qmin, find_minima
from .spectrum import (
    EVEN_COUPLED,
    GridSpec,
    MAX_POINTS,
    auto_grid,
    build_hamiltonian,
    couplings,
    eigenpairs,
    transition_scale,
)

LAMBDA_START = 0.98
ACCURACY_UNIT = 1e-3  # dn/n_c = a0 * 1e-3


@dataclass(frozen=True)
class FitConstants:
    """Power laws min gap = A (g0/k0)^x [hbar Omega], max coupling = B (k0/g0)^y."""

    x: float
    y: float
    A: float
    B: float


REFERENCE_FIT = FitConstants(x=0.672, y=1.36, A=9.78e-4, B=5.65e5)
REFERENCE_SEPARATION_COEFF = 73.0  # compact form 2 q_min ~ 73 a0^(1/2)


def max_rate(rows, Omega: float) -> float:
    """Largest d(lambda)/dt (1/s) with gap_i * Omega > lambda_dot * |<psi_i|d psi_0>| for all even i."""
    rows = [row for row in rows if row.parity == "even" and row.i > 0]
    if not rows:
        raise ValueError("no even-parity coupling rows")
    return min(row.gap * Omega / row.dcoupling for row in rows)


def fitted_rate_coefficient(sc: ScaledCoords, fit=REFERENCE_FIT) -> float:
    """(A/B) * 2pi Omega0 * (g0/kappa0)^(x+y)
    = (A/B) 2pi * Omega0^(1-(x+y)/2) (kappa0 L0 m0^(1/2))^-(x+y)   [1/s]."""
    p = fit.x + fit.y
    return fit.A / fit.B * TWO_PI * sc.Omega0 * (sc.g0 / sc.kappa0) ** p


def coherence_time(p: PhysicalParams) -> float:
    """1/t_coh = gamma_m + 4 Omega^2/kappa (seconds)."""
    return 1.0 / (p.gamma_m + 4.0 * p.Omega ** 2 / p.kappa)


def delta_n_budget(sc: ScaledCoords, fit, t_coh: float) -> float:
    if t_coh <= 0:
        raise ValueError("t_coh must be > 0")
    return fitted_rate_coefficient(sc, fit) * t_coh


def backaction_term_hz(sc: ScaledCoords) -> float:
    """4 Omega^2 / kappa expressed in Hz: 4e-6 Omega0^2 / kappa0."""
    Omega = TWO_PI * sc.Omega0
    kappa = TWO_PI * 1e6 * sc.kappa0
    return 4.0 * Omega ** 2 / kappa / TWO_PI


def gamma_bound(sc: ScaledCoords, fit=REFERENCE_FIT) -> float:
    """Largest gamma_m/2pi (Hz) keeping the ramp budget above a0 * 1e-3; negative = infeasible."""
    if sc.a0 <= 0:
        raise ValueError("a0 must be > 0")
    first = fitted_rate_coefficient(sc, fit) / (TWO_PI * sc.a0 * ACCURACY_UNIT)
    return first - backaction_term_hz(sc)


def omega0_bound_constant(fit=REFERENCE_FIT) -> float:
    """The constant K in Omega0^(1+(x+y)/2) < K kappa0 / (a0 (kappa0 L0 m0^(1/2))^(x+y)); 0.433 for the reference fit."""
    return fit.A / fit.B / ACCURACY_UNIT / 4e-6


def omega0_bound(sc: ScaledCoords, fit=REFERENCE_FIT) -> float:
    """Largest Omega0 for which :func:`gamma_bound` is positive."""
    if sc.a0 <= 0:
        raise ValueError("a0 must be > 0")
    p = fit.x + fit.y
    K = omega0_bound_constant(fit)
    base = K / (sc.a0 * (sc.L0 * math.sqrt(sc.m0)) ** p * sc.kappa0 ** (p - 1.0))
    return base ** (2.0 / (p + 2.0))


# ----------------------------------------------------------------- schedules


@dataclass
class RampSchedule:
    times: np.ndarray  # s
    lambdas: np.ndarray
    rate_bound: np.ndarray  # live bound at each node, 1/s
    safety: float
    Omega: float
    meta: dict

    @property
    def total_time(self) -> float:
        return float(self.times[-1] - self.times[0])

    def lam_at(self, t):
        return np.interp(t, self.times, self.lambdas)

    def truncated(self, t_end: float) -> "RampSchedule":
        keep = self.times <= t_end
        times = list(self.times[keep])
        lams = list(self.lambdas[keep])
        rates = list(self.rate_bound[keep])
        if times[-1] < t_end:
            times.append(t_end)
            lams.append(float(self.lam_at(t_end)))
            rates.append(float(np.interp(t_end, self.times, self.rate_bound)))
        return RampSchedule(np.array(times), np.array(lams), np.array(rates), self.safety, self.Omega, dict(self.meta))


def common_grid(sys: DimensionlessSystem, lams, k: int) -> GridSpec:
    """One grid adequate at every lambda in ``lams`` (widest extent, finest spacing)."""
    grids = [auto_grid(sys.at(lam), k) for lam in lams]
    q_max = max(g.q_max for g in grids)
    h = min(g.h for g in grids)
    n = 2 * int(math.ceil(q_max / h)) + 1
    if n > MAX_POINTS:
        from .errors import NonConvergenceError

        raise NonConvergenceError(f"common grid needs {n} points (> {MAX_POINTS})")
    return GridSpec(q_max, n)


def live_rate_function(sys: DimensionlessSystem, Omega: float, grid: GridSpec, k: int = 10):
    """lambda -> max_rate from eigendata on a fixed grid."""
    op = build_hamiltonian(sys, grid)
    indices = tuple(i for i in EVEN_COUPLED if i < k)

    def rate(lam: float) -> float:
        es = eigenpairs(op.with_lambda(lam), k)
        return max_rate(couplings(es, indices), Omega)

    return rate


def _lambda_nodes(lam_start, lam_target, scale, n=65):
    u0 = math.asinh((lam_start - 1.0) / scale)
    u1 = math.asinh((lam_target - 1.0) / scale)
    return list(np.linspace(u0, u1, n)), (lambda u: 1.0 + scale * math.sinh(u))


def synthesize_schedule(
    sys: DimensionlessSystem,
    lam_target: float,
    safety: float = 1.0,
    Omega: float | None = None,
    t_coh: float = math.inf,
    lam_start: float = LAMBDA_START,
    rate_fn=None,
    k: int = 10,
    grid: GridSpec | None = None,
    rel_tol: float = 0.05,
    max_nodes: int = 4000,
) -> RampSchedule:
    """Greedy bound-saturating ramp: d(lambda)/dt = safety * max_rate(lambda).

    Nodes are placed uniformly in asinh((lambda-1)/scale), which concentrates
    them in the critical window, then bisected wherever neighbouring rates
    differ by more than ``rel_tol``.  Each step moves at ``safety`` times the
    smaller of its two endpoint bounds.
    """
    if not lam_target > 1.0:
        raise ValueError("lam_target must exceed 1")
    if not 0 < safety <= 1:
        raise ValueError("safety must be in (0, 1]")
    if not lam_start < lam_target:
        raise ValueError("lam_start must be below lam_target")
    Omega = sys.Omega_ref if Omega is None else Omega
    if rate_fn is None:
        if grid is None:
            grid = common_grid(sys, (lam_start, 1.0, lam_target), k)
        rate_fn = live_rate_function(sys, Omega, grid, k)
    scale = transition_scale(sys)
    us, to_lam = _lambda_nodes(lam_start, lam_target, scale)
    cache = {}

    def rate_at(u):
        if u not in cache:
            cache[u] = float(rate_fn(to_lam(u)))
        return cache[u]

    nodes = list(us)
    for _ in range(40):
        rates = [rate_at(u) for u in nodes]
        new = []
        for a, b, ra, rb in zip(nodes[:-1], nodes[1:], rates[:-1], rates[1:]):
            new.append(a)
            if max(ra, rb) > (1.0 + rel_tol) * min(ra, rb) and b - a > 1e-12 * (abs(a) + 1.0):
                new.append(0.5 * (a + b))
        new.append(nodes[-1])
        if len(new) == len(nodes) or len(new) > max_nodes:
            break
        nodes = new
    lams = np.array([to_lam(u) for u in nodes])
    lams[0], lams[-1] = lam_start, lam_target
    rates = np.array([rate_at(u) for u in nodes])
    steps = np.diff(lams) / (safety * np.minimum(rates[:-1], rates[1:]))
    times = np.concatenate([[0.0], np.cumsum(steps)])
    sched = RampSchedule(
        times=times,
        lambdas=lams,
        rate_bound=rates,
        safety=safety,
        Omega=Omega,
        meta={"r": sys.r, "delta": sys.delta, "omega_rad_s": Omega, "safety": safety, "t_coh_s": t_coh},
    )
    if sched.total_time > t_coh:
        part = sched.truncated(t_coh)
        lam_reached = float(part.lambdas[-1])
        q_reached = find_minima(sys.at(lam_reached)).q_min if lam_reached > 1.0 else 0.0
        raise BudgetExceededError(
            f"ramp needs {sched.total_time:.4g} s > t_coh = {t_coh:.4g} s; "
            f"reachable lambda = {lam_reached:.10g}, q_min = {q_reached:.4g}",
            schedule=part,
            lambda_reached=lam_reached,
            q_min_reached=q_reached,
        )
    return sched


def live_min_rate(sys: DimensionlessSystem, Omega: float, k: int = 10, mu_range=(-5.0, 40.0), n_scan: int = 46):
    """min over lambda of max_rate in the critical window; returns (rate, lambda)."""
    scale = transition_scale(sys)
    grid = common_grid(sys, (1.0, 1.0 + mu_range[1] * scale), k)
    rate = live_rate_function(sys, Omega, grid, k)
    mus = np.linspace(mu_range[0], mu_range[1], n_scan)
    vals = np.array([rate(1.0 + m * scale) for m in mus])
    j = int(np.argmin(vals))
    lo, hi = mus[max(j - 1, 0)], mus[min(j + 1, n_scan - 1)]
    res = minimize_scalar(lambda m: rate(1.0 + m * scale), bounds=(lo, hi), method="bounded")
    return float(res.fun), 1.0 + float(res.x) * scale


# -------------------------------------------------------------- feasibility


@dataclass
class FeasibilityReport:
    mode: str
    Omega0: float
    Delta0: float
    kappa0: float
    L0: float
    m0: float
    g0: float
    a0: float
    x: float
    y: float
    A: float
    B: float
    n_c: float
    input_power_W: float
    rate_coeff: float
    omega0_bound: float
    omega0_bound_constant: float
    gamma_bound_hz: float
    feasible: bool
    t_coh_s: float | None
    t_coh_full_s: float | None
    delta_n_budget: float | None
    delta_n_budget_gamma_only: float | None
    dn_target: float
    q_min: float
    separation_2qmin: float
    separation_coeff: float
    separation_compact_expr: float
    poisson_rel: float
    poisson_coeff: float
    finesse: float
    length_m: float

    def to_dict(self) -> dict:
        return asdict(self)


def feasibility_report(sc: ScaledCoords, fit=REFERENCE_FIT, mode: str = "reference") -> FeasibilityReport:
    """Assemble the feasibility chain for the scaled point ``sc`` (including its Delta0 and a0)."""
    p = sc.to_params()
    n_c = critical_photon_number(p)
    power = power_from_photon_number(p, n_c)
    rate = fitted_rate_coefficient(sc, fit)
    gb = gamma_bound(sc, fit)
    feasible = gb > 0
    if feasible:
        t_gamma = 1.0 / (TWO_PI * gb)
        t_full = coherence_time(PhysicalParams.from_scaled(sc.Omega0, sc.Delta0, sc.kappa0, sc.L0, sc.m0, gamma_m_hz=gb))
        budget = rate * t_full
        budget_gamma = rate * t_gamma
    else:
        t_gamma = t_full = budget = budget_gamma = None
    g = derive_optical(p).g
    sys = DimensionlessSystem(r=g / p.kappa, delta=p.Delta / p.kappa, lam=1.0, Omega_ref=p.Omega)
    dn = sc.a0 * ACCURACY_UNIT
    q_min = dn_to_qmin(sys, dn)
    return FeasibilityReport(
        mode=mode,
        Omega0=sc.Omega0,
        Delta0=sc.Delta0,
        kappa0=sc.kappa0,
        L0=sc.L0,
        m0=sc.m0,
        g0=sc.g0,
        a0=sc.a0,
        x=fit.x,
        y=fit.y,
        A=fit.A,
        B=fit.B,
        n_c=n_c,
        input_power_W=power,
        rate_coeff=rate,
        omega0_bound=omega0_bound(sc, fit),
        omega0_bound_constant=omega0_bound_constant(fit),
        gamma_bound_hz=gb,
        feasible=feasible,
        t_coh_s=t_gamma,
        t_coh_full_s=t_full,
        delta_n_budget=budget,
        delta_n_budget_gamma_only=budget_gamma,
        dn_target=dn,
        q_min=q_min,
        separation_2qmin=2.0 * q_min,
        separation_coeff=2.0 * q_min / math.sqrt(sc.a0),
        separation_compact_expr=REFERENCE_SEPARATION_COEFF * math.sqrt(sc.a0),
        poisson_rel=1.0 / math.sqrt(n_c),
        poisson_coeff=1.0 / math.sqrt(n_c * sc.Delta0),
        finesse=derive_optical(p).finesse,
        length_m=p.L,
    )
