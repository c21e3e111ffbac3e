"""Mirror spectrum on a finite-difference grid, derivative couplings and scaling fits.

The mirror Hamiltonian in units of hbar*Omega is h = p^2/2 + v(q; lam) with
p = -i d/dq.  On a symmetric grid with a node at q = 0 the three-point
Laplacian commutes with reflection, so even and odd states are computed
from two independent half-grid tridiagonal problems.  Parity is then exact,
which keeps the near-degenerate tunnelling doublets of a deep double well
apart without any energy-ordering heuristics.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize_scalar

from .errors import DegenerateGapError, NonConvergenceError
from .params import DimensionlessSystem, reference_coupling_ratio
from .potential import drive_profile, q_min_exact, v_prime

log = logging.getLogger(__name__)

MAX_POINTS = 2 ** 21
ENERGY_TOL = 1e-7
BOUNDARY_TOL = 1e-8
RESIDUAL_TOL = 1e-8
EVEN_COUPLED = (2, 4, 6, 8)


@dataclass(frozen=True)
class GridSpec:
    q_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 5 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 5, got {self.n_points}")
        if not self.q_max > 0:
            raise ValueError("q_max must be > 0")

    @property
    def h(self) -> float:
        return 2.0 * self.q_max / (self.n_points - 1)

    @property
    def half(self) -> int:
        """Index of the q = 0 node."""
        return (self.n_points - 1) // 2

    @property
    def q(self) -> np.ndarray:
        return np.linspace(-self.q_max, self.q_max, self.n_points)

    def refined(self) -> "GridSpec":
        return GridSpec(self.q_max, 2 * (self.n_points - 1) + 1)


@dataclass
class TridiagonalOperator:
    """h(lam) = T + diag(base + lam * drive) with constant off-diagonal ``off``."""

    grid: GridSpec
    base: np.ndarray
    drive: np.ndarray
    lam: float
    off: float
    sys: DimensionlessSystem

    @property
    def diag(self) -> np.ndarray:
        return self.base + self.lam * self.drive

    @property
    def offdiag(self) -> np.ndarray:
        return np.full(self.grid.n_points - 1, self.off)

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        out = self.diag * psi
        out[1:] += self.off * psi[:-1]
        out[:-1] += self.off * psi[1:]
        return out

    def with_lambda(self, lam: float) -> "TridiagonalOperator":
        return TridiagonalOperator(self.grid, self.base, self.drive, float(lam), self.off, self.sys.at(lam))

    def sector(self, parity: str) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric tridiagonal (diag, offdiag) of the even or odd half-grid problem.

        Even: unknowns w_0 = psi(0)/sqrt(2), w_j = psi(q_j); odd: psi(q_j), j >= 1.
        """
        M = self.grid.half
        d = self.diag[M:]
        if parity == "even":
            e = np.full(M, self.off)
            e[0] = math.sqrt(2.0) * self.off
            return d.copy(), e
        if parity == "odd":
            return d[1:].copy(), np.full(M - 1, self.off)
        raise ValueError(parity)


def build_hamiltonian(sys: DimensionlessSystem, grid: GridSpec) -> TridiagonalOperator:
    """Three-point finite-difference Hamiltonian with Dirichlet walls beyond +-q_max."""
    q = grid.q
    h2 = grid.h ** 2
    base = 1.0 / h2 + 0.5 * q * q
    drive = drive_profile(q, sys.r, sys.delta)
    # exact reflection symmetry regardless of linspace rounding
    drive = 0.5 * (drive + drive[::-1])
    base = 0.5 * (base + base[::-1])
    return TridiagonalOperator(grid, base, drive, sys.lam, -0.5 / h2, sys)


@dataclass
class EigenSystem:
    grid: GridSpec
    energies: np.ndarray
    states: np.ndarray  # shape (k, n_points), sum |psi|^2 h = 1
    parities: list
    lam: float
    r: float
    delta: float
    operator: TridiagonalOperator
    converged: bool = True
    boundary_amplitude: float = 0.0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def k(self) -> int:
        return len(self.energies)

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return np.vdot(a, b) * self.grid.h

    def reflection_overlaps(self) -> np.ndarray:
        """<psi_i(-q)|psi_i(q)>: +1 for even, -1 for odd states."""
        return np.array([np.dot(s[::-1], s) * self.grid.h for s in self.states])


def _fix_sign(psi: np.ndarray, M: int, parity: str) -> np.ndarray:
    """Even: psi just right of the origin >= 0 (psi(0) when not negligible); odd: psi'(0) >= 0."""
    start = M if parity == "even" else M + 1
    thresh = 1e-12 * np.max(np.abs(psi))
    tail = psi[start:]
    idx = int(np.argmax(np.abs(tail) > thresh))
    return -psi if tail[idx] < 0 else psi


def _sector_eigs(op: TridiagonalOperator, parity: str, k: int):
    d, e = op.sector(parity)
    k = min(k, len(d))
    w, V = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1), lapack_driver="stebz")
    # Rayleigh-Ritz clean-up inside the computed subspace
    HV = d[:, None] * V
    HV[1:] += e[:, None] * V[:-1]
    HV[:-1] += e[:, None] * V[1:]
    small = V.T @ HV
    small = 0.5 * (small + small.T)
    w, R = np.linalg.eigh(small)
    V = V @ R
    V, _ = np.linalg.qr(V)
    return w, V


def _expand(v: np.ndarray, M: int, parity: str, h: float) -> np.ndarray:
    full = np.zeros(2 * M + 1)
    if parity == "even":
        full[M] = math.sqrt(2.0) * v[0]
        full[M + 1:] = v[1:]
        full[:M] = v[1:][::-1]
    else:
        full[M + 1:] = v
        full[:M] = -v[::-1]
    return full / math.sqrt(2.0 * h)


def residual_tolerance(h_op: TridiagonalOperator, energies) -> np.ndarray:
    """1e-8 max(1, |E|), floored at the rounding level 64 eps ||h|| of a stored eigenvector."""
    norm = float(np.max(np.abs(h_op.diag))) + 2.0 * abs(h_op.off)
    floor = 64.0 * np.finfo(float).eps * norm
    return np.maximum(RESIDUAL_TOL * np.maximum(1.0, np.abs(energies)), floor)


def eigenpairs(h_op: TridiagonalOperator, k: int = 10) -> EigenSystem:
    """Lowest ``k`` eigenpairs (bisection + inverse iteration per parity sector)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    grid = h_op.grid
    M = grid.half
    h = grid.h
    candidates = []
    for parity in ("even", "odd"):
        kk = k // 2 + 1
        w, V = _sector_eigs(h_op, parity, kk)
        for j in range(len(w)):
            candidates.append((w[j], parity, V[:, j]))
    candidates.sort(key=lambda c: (c[0], c[1] != "even"))
    # deep-well doublets are degenerate to rounding; keep even before odd in a tie
    for j in range(len(candidates) - 1):
        a, b = candidates[j], candidates[j + 1]
        if a[1] == "odd" and b[1] == "even" and b[0] - a[0] <= 1e-12 * max(1.0, abs(a[0])):
            candidates[j], candidates[j + 1] = b, a
    candidates = candidates[:k]
    energies = np.array([c[0] for c in candidates])
    parities = [c[1] for c in candidates]
    states = np.array([_fix_sign(_expand(c[2], M, c[1], h), M, c[1]) for c in candidates])

    residuals = np.array(
        [np.linalg.norm(h_op.matvec(s) - E * s) * math.sqrt(h) for s, E in zip(states, energies)]
    )
    boundary = float(np.max(np.abs(states[:, [0, -1]])))
    converged = boundary < BOUNDARY_TOL and bool(np.all(residuals <= residual_tolerance(h_op, energies)))
    return EigenSystem(
        grid=grid,
        energies=energies,
        states=states,
        parities=parities,
        lam=h_op.lam,
        r=h_op.sys.r,
        delta=h_op.sys.delta,
        operator=h_op,
        converged=converged,
        boundary_amplitude=boundary,
        residuals=residuals,
    )


def quartic_coefficient(sys: DimensionlessSystem) -> float:
    """q^4 coefficient of v at the origin: 2 lam r^2 (1 - 4 delta^2) / (1 + 4 delta^2)^2."""
    s = 1.0 + 4.0 * sys.delta ** 2
    return 2.0 * max(sys.lam, 1e-300) * sys.r ** 2 * (1.0 - 4.0 * sys.delta ** 2) / (s * s)


def width_estimate(sys: DimensionlessSystem) -> tuple[float, float]:
    """(q_min, w): well position and local ground-state width estimate."""
    c4 = abs(quartic_coefficient(sys))
    w_quartic = (1.0 / (4.0 * c4)) ** (1.0 / 6.0) if c4 > 0 else math.inf
    if sys.lam <= 1.0 or sys.delta >= 0.5:
        q_min = 0.0
        curv = 1.0 - sys.lam
    else:
        q_min = q_min_exact(sys)
        eps = 1e-4 * q_min
        curv = float(v_prime(q_min + eps, sys) - v_prime(q_min - eps, sys)) / (2 * eps)
    w_harm = abs(curv) ** -0.25 if curv != 0 else math.inf
    return q_min, min(w_harm, w_quartic)


def _initial_grid(sys: DimensionlessSystem) -> GridSpec:
    q_min, w = width_estimate(sys)
    q_max = max(12.0, 2.0 * q_min + 6.0 * w)
    h0 = min(w / 8.0, 0.25 * q_max)
    n = 2 * int(math.ceil(q_max / h0)) + 1
    return GridSpec(q_max, max(n, 65))


def solve(sys: DimensionlessSystem, k: int = 10, grid: GridSpec | None = None) -> EigenSystem:
    """Eigenpairs on a given grid, or on the converged :func:`auto_grid` when omitted."""
    if grid is None:
        return _auto(sys, k)[1]
    return eigenpairs(build_hamiltonian(sys, grid), k)


def _auto(sys: DimensionlessSystem, k: int, energy_tol: float = ENERGY_TOL):
    grid = _initial_grid(sys)
    es = eigenpairs(build_hamiltonian(sys, grid), k)
    # widen until the k-th state has decayed at the walls
    for _ in range(30):
        if es.boundary_amplitude < BOUNDARY_TOL:
            break
        q_max = 1.5 * grid.q_max
        n = 2 * int(math.ceil(q_max / grid.h)) + 1
        grid = GridSpec(q_max, n)
        if n > MAX_POINTS:
            raise NonConvergenceError("grid extent refinement exceeded the point cap", best=es)
        es = eigenpairs(build_hamiltonian(sys, grid), k)
    while True:
        finer = grid.refined()
        if finer.n_points > MAX_POINTS:
            raise NonConvergenceError(
                f"spectrum not converged to {energy_tol:g} below {MAX_POINTS} points", best=es
            )
        es_f = eigenpairs(build_hamiltonian(sys, finer), k)
        change = float(np.max(np.abs(es_f.energies - es.energies)))
        grid, es = finer, es_f
        if change < energy_tol:
            break
    if es.boundary_amplitude >= BOUNDARY_TOL:
        es.converged = False
    return grid, es


def auto_grid(sys: DimensionlessSystem, k: int = 10, energy_tol: float = ENERGY_TOL) -> GridSpec:
    """Grid wide enough for the wells and fine enough that the k energies move < energy_tol."""
    return _auto(sys, k, energy_tol)[0]


@dataclass(frozen=True)
class CouplingRow:
    i: int
    gap: float
    me: float
    dcoupling: float
    parity: str = "even"


def couplings(es: EigenSystem, indices=EVEN_COUPLED) -> list:
    """|<psi_i| dh/dlam |psi_0>| and the derivative coupling |<psi_i|d psi_0/dlam>|.

    Index i = 2m names the m-th even excited state, so rows stay even-parity
    even where deep-well doublets are degenerate and their order is arbitrary.
    """
    drive = es.operator.drive
    even = [j for j, p in enumerate(es.parities) if p == "even"]
    e0 = even[0]
    psi0 = es.states[e0]
    rows = []
    for i in indices:
        if i % 2 or i == 0 or i // 2 >= len(even):
            continue
        j = even[i // 2]
        gap = float(es.energies[j] - es.energies[e0])
        if abs(gap) < 1e-12:
            raise DegenerateGapError(f"gap E_{i} - E_0 = {gap:.3e} is degenerate")
        me = abs(float(np.dot(es.states[j] * drive, psi0) * es.grid.h))
        rows.append(CouplingRow(i=i, gap=gap, me=me, dcoupling=me / gap, parity="even"))
    return rows


def coupling_matrix(es: EigenSystem) -> np.ndarray:
    """A_ij = <psi_i|d psi_j/dlam> = <psi_i|dh/dlam|psi_j>/(E_j - E_i); zero across parity."""
    S = es.states
    W = (S * es.operator.drive) @ S.T * es.grid.h
    E = es.energies
    A = np.zeros_like(W)
    for i in range(es.k):
        for j in range(es.k):
            if i == j or es.parities[i] != es.parities[j]:
                continue
            A[i, j] = W[i, j] / (E[j] - E[i])
    return A


def align_signs(es: EigenSystem, reference: EigenSystem) -> EigenSystem:
    """Flip states so each has positive overlap with its match in ``reference``.

    Grids must coincide; matching is by parity and maximal overlap.
    """
    h = es.grid.h
    overlaps = es.states @ reference.states.T * h
    for i in range(es.k):
        row = np.abs(overlaps[i])
        for j in range(reference.k):
            if reference.parities[j] != es.parities[i]:
                row[j] = 0.0
        j = int(np.argmax(row))
        if overlaps[i, j] < 0:
            es.states[i] = -es.states[i]
    return es


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CATWELL_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """Map ``fn`` over ``items``; results come back in input order."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class SpectrumTable:
    lambdas: np.ndarray
    energies: np.ndarray  # (len(lambdas), k), NaN for failed rows
    dcouplings: dict  # i -> array over lambdas
    converged: np.ndarray
    errors: list
    k: int


def _sweep_row(sys, lam, k, grid):
    s = sys.at(lam)
    try:
        es = solve(s, k, grid)
        rows = {row.i: row.dcoupling for row in couplings(es, EVEN_COUPLED)}
        return es.energies, rows, es.converged, ""
    except (NonConvergenceError, DegenerateGapError) as exc:
        return np.full(k, np.nan), {}, False, str(exc)


def sweep_lambda(sys: DimensionlessSystem, lam_grid, k: int = 10, grid: GridSpec | None = None) -> SpectrumTable:
    """Energies and even-state derivative couplings along a sorted lambda grid."""
    lams = np.asarray(lam_grid, dtype=float)
    if np.any(np.diff(lams) < 0):
        raise ValueError("lambda grid must be sorted")
    results = parallel_map(lambda lam: _sweep_row(sys, lam, k, grid), lams)
    energies = np.full((len(lams), k), np.nan)
    dc = {i: np.full(len(lams), np.nan) for i in EVEN_COUPLED if i < k}
    conv = np.zeros(len(lams), dtype=bool)
    errors = []
    for n, (E, rows, ok, err) in enumerate(results):
        energies[n, : len(E)] = E
        for i, val in rows.items():
            dc[i][n] = val
        conv[n] = ok
        errors.append(err)
    return SpectrumTable(lambdas=lams, energies=energies, dcouplings=dc, converged=conv, errors=errors, k=k)


def transition_scale(sys: DimensionlessSystem) -> float:
    """Width in lambda of the critical region: (c4 at lam=1)^(2/3)."""
    return quartic_coefficient(sys.at(1.0)) ** (2.0 / 3.0)


@dataclass(frozen=True)
class CriticalPoint:
    g_ratio: float
    d_ratio: float
    r: float
    delta: float
    min_gap: float
    lam_min_gap: float
    max_dcoupling: float
    lam_max_dcoupling: float
    converged: bool


def critical_extrema(sys: DimensionlessSystem, mu_range=(-5.0, 40.0), n_scan: int = 46) -> tuple:
    """min over lambda of E_2 - E_0 and max over lambda of |<psi_2|d psi_0>|.

    lambda = 1 + mu * transition_scale; a coarse scan in mu is polished with
    Brent's method on one fixed grid so the objective is smooth.
    """
    scale = transition_scale(sys)
    grid_lo = auto_grid(sys.at(1.0), 3)
    grid_hi = auto_grid(sys.at(1.0 + mu_range[1] * scale), 3)
    h = min(grid_lo.h, grid_hi.h)
    q_max = max(grid_lo.q_max, grid_hi.q_max)
    grid = GridSpec(q_max, 2 * int(math.ceil(q_max / h)) + 1)
    if grid.n_points > MAX_POINTS:
        raise NonConvergenceError("critical-region grid exceeds the point cap")
    op = build_hamiltonian(sys.at(1.0), grid)
    converged = True

    def evaluate(mu):
        nonlocal converged
        es = eigenpairs(op.with_lambda(1.0 + mu * scale), 3)
        converged = converged and es.converged
        row = couplings(es, (2,))[0]
        return row.gap, row.dcoupling

    mus = np.linspace(mu_range[0], mu_range[1], n_scan)
    vals = np.array([evaluate(m) for m in mus])

    def polish(f, idx):
        lo = mus[max(idx - 1, 0)]
        hi = mus[min(idx + 1, len(mus) - 1)]
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6 * (hi - lo)})
        return res.x, res.fun

    mu_g, g_min = polish(lambda m: evaluate(m)[0], int(np.argmin(vals[:, 0])))
    mu_d, neg_d = polish(lambda m: -evaluate(m)[1], int(np.argmax(vals[:, 1])))
    return (g_min, 1.0 + mu_g * scale, -neg_d, 1.0 + mu_d * scale, converged)


def fit_power_law(xs, ys) -> tuple:
    """Least squares on logs: y = A * x^p.  Returns (p, A, rms log-residual)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    p, logA = np.polyfit(lx, ly, 1)
    resid = ly - (p * lx + logA)
    return float(p), float(math.exp(logA)), float(np.sqrt(np.mean(resid ** 2)))


@dataclass
class ScalingFit:
    x: float
    y: float
    A: float
    B: float
    residual_gap: float
    residual_coupling: float
    flatness_gap: float
    flatness_coupling: float
    points: list

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "A": self.A,
            "B": self.B,
            "residuals": {"gap_rms_log": self.residual_gap, "coupling_rms_log": self.residual_coupling},
            "flatness": {"gap_rel_spread": self.flatness_gap, "coupling_rel_spread": self.flatness_coupling},
            "points": [p.__dict__ for p in self.points],
        }


DEFAULT_G_RATIOS = tuple(np.geomspace(0.25, 4.0, 9))
DEFAULT_D_RATIOS = (0.5, 1.0, 2.0)


def scaling_fit(gk_ratios=DEFAULT_G_RATIOS, dk_ratios=DEFAULT_D_RATIOS, r_ref: float | None = None) -> ScalingFit:
    """Power-law fits of the critical gap and coupling against g0/kappa0.

    The g0/kappa0 sweep runs at Delta0/kappa0 = 1; the Delta0/kappa0 sweep runs
    at g0/kappa0 = 1 and measures how flat both quantities are along it.
    """
    r_ref = reference_coupling_ratio() if r_ref is None else r_ref
    jobs = [(float(g), 1.0) for g in gk_ratios]
    jobs += [(1.0, float(d)) for d in dk_ratios if not math.isclose(d, 1.0)]

    def run(job):
        g, d = job
        sys = DimensionlessSystem(r=r_ref * g, delta=0.01 * d, lam=1.0)
        try:
            gmin, lg, dmax, ld, ok = critical_extrema(sys)
        except NonConvergenceError as exc:
            log.warning("scaling point g0/k0=%g D0/k0=%g failed: %s", g, d, exc)
            return CriticalPoint(g, d, sys.r, sys.delta, math.nan, math.nan, math.nan, math.nan, False)
        return CriticalPoint(g, d, sys.r, sys.delta, gmin, lg, dmax, ld, ok)

    points = parallel_map(run, jobs)
    fit_pts = [p for p in points if p.d_ratio == 1.0 and p.converged]
    if len(fit_pts) < 4:
        raise NonConvergenceError(f"only {len(fit_pts)} converged scaling points; need >= 4")
    if len(fit_pts) < 6:
        log.warning("scaling fit uses only %d points", len(fit_pts))
    gs = [p.g_ratio for p in fit_pts]
    x, A, res_g = fit_power_law(gs, [p.min_gap for p in fit_pts])
    neg_y, B, res_c = fit_power_law(gs, [p.max_dcoupling for p in fit_pts])

    flat = [p for p in points if p.g_ratio == 1.0 and p.converged]
    if len(flat) > 1:
        gaps = np.array([p.min_gap for p in flat])
        dcs = np.array([p.max_dcoupling for p in flat])
        flat_g = float(gaps.max() / gaps.min() - 1.0)
        flat_c = float(dcs.max() / dcs.min() - 1.0)
    else:
        flat_g = flat_c = math.nan
    return ScalingFit(
        x=x,
        y=-neg_y,
        A=A,
        B=B,
        residual_gap=res_g,
        residual_coupling=res_c,
        flatness_gap=flat_g,
        flatness_coupling=flat_c,
        points=sorted(points, key=lambda p: (p.d_ratio, p.g_ratio)),
    )
