"""Ramp dynamics by two independent routes.

``propagate_grid`` integrates the Schrodinger equation on the position grid
with the Cayley (Crank-Nicolson) form, which is exactly unitary.
``propagate_modal`` integrates the coefficient equations in the
instantaneous eigenbasis,

    dc_i/dtau = -i E_i c_i - lambda'(tau) sum_j <psi_i|d psi_j/dlambda> c_j,

with tau = Omega t.  Agreement between the two is the dynamics cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from .errors import NonConvergenceError
from .params import DimensionlessSystem
from .ramp import RampSchedule, common_grid
from .spectrum import (
    EigenSystem,
    GridSpec,
    align_signs,
    build_hamiltonian,
    coupling_matrix,
    eigenpairs,
)
from .potential import find_minima

NORM_DRIFT_MAX = 1e-9
BOUNDARY_MAX = 1e-6
MODAL_NORM_TOL = 1e-6
DEGENERACY_TOL = 1e-10


@dataclass
class WaveState:
    grid: GridSpec
    psi: np.ndarray
    t: float = 0.0
    lam: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.grid.h))


@dataclass(frozen=True)
class CatMetrics:
    fidelity_gs: float
    separation: float
    parity_overlap: float
    excited_pop: float


def cat_metrics(state: WaveState, es_final: EigenSystem) -> CatMetrics:
    """Overlap with the final ground state and how cat-like the state is.

    ``separation`` is 4 * min(int_{q>0} q|psi|^2, int_{q<0} |q||psi|^2): 2 q_min
    for an even superposition of wells at +-q_min, ~0 for a one-sided packet.
    """
    h = state.grid.h
    psi = state.psi
    q = state.grid.q
    rho = np.abs(psi) ** 2 * h
    norm2 = float(rho.sum())
    f0 = abs(np.vdot(es_final.states[0], psi) * h) ** 2 / norm2
    f1 = abs(np.vdot(es_final.states[1], psi) * h) ** 2 / norm2 if es_final.k > 1 else 0.0
    right = float(np.sum(q[q > 0] * rho[q > 0])) / norm2
    left = float(np.sum(-q[q < 0] * rho[q < 0])) / norm2
    parity = abs(np.vdot(psi[::-1], psi) * h) / norm2
    return CatMetrics(
        fidelity_gs=min(float(f0), 1.0),
        separation=4.0 * min(left, right),
        parity_overlap=min(float(parity), 1.0),
        excited_pop=max(0.0, 1.0 - f0 - f1),
    )


def odd_population(state: WaveState) -> float:
    """Weight of the reflection-odd component."""
    odd = 0.5 * (state.psi - state.psi[::-1])
    return float(np.sum(np.abs(odd) ** 2) * state.grid.h) / state.norm ** 2


@dataclass
class GridTrajectory:
    t: np.ndarray
    lam: np.ndarray
    norm: np.ndarray
    fidelity_gs: np.ndarray
    parity_overlap: np.ndarray
    separation: np.ndarray
    odd_population: np.ndarray
    final: WaveState
    final_basis: EigenSystem
    dtau: float
    max_step_drift: float

    @property
    def final_metrics(self) -> CatMetrics:
        return cat_metrics(self.final, self.final_basis)


def ramp_grid(sys: DimensionlessSystem, sched: RampSchedule, k: int = 6) -> GridSpec:
    """Grid covering the initial well and the final double well."""
    return common_grid(sys, (float(sched.lambdas[0]), float(sched.lambdas[-1])), k)


def propagate_grid(
    sched: RampSchedule,
    sys: DimensionlessSystem,
    psi0: WaveState | None = None,
    grid: GridSpec | None = None,
    dtau: float = 0.01,
    n_records: int = 100,
    backend: str | None = None,
) -> GridTrajectory:
    """Cayley-form propagation through the schedule in tau = Omega t.

    The drive of each step is the schedule's lambda at the step midpoint.
    """
    cn_steps = kernels.get_backend(backend).cn_steps
    Omega = sched.Omega
    grid = grid or (psi0.grid if psi0 is not None else ramp_grid(sys, sched))
    op = build_hamiltonian(sys.at(float(sched.lambdas[0])), grid)
    if psi0 is None:
        es0 = eigenpairs(op, 2)
        psi = es0.states[0].astype(np.complex128)
    else:
        if psi0.grid != grid:
            raise ValueError("initial state lives on a different grid")
        psi = np.array(psi0.psi, dtype=np.complex128)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.h)

    tau_total = Omega * sched.total_time
    n_steps = max(1, int(math.ceil(tau_total / dtau)))
    dt = tau_total / n_steps
    t0 = float(sched.times[0])
    mid_t = t0 + (np.arange(n_steps) + 0.5) * dt / Omega
    mid_lams = np.ascontiguousarray(sched.lam_at(mid_t), dtype=float)

    n_records = max(1, min(n_records, n_steps))
    marks = np.unique(np.linspace(0, n_steps, n_records + 1).round().astype(int))
    base = np.ascontiguousarray(op.base)
    drive = np.ascontiguousarray(op.drive)

    rec = {key: [] for key in ("t", "lam", "norm", "fid", "par", "sep", "odd")}
    max_drift = 0.0
    prev_norm = 1.0
    es_final = None

    def record(step):
        nonlocal es_final
        t = t0 + step * dt / Omega
        lam = float(sched.lam_at(t))
        state = WaveState(grid, psi, t, lam)
        es = eigenpairs(op.with_lambda(lam), 2)
        m = cat_metrics(state, es)
        rec["t"].append(t)
        rec["lam"].append(lam)
        rec["norm"].append(state.norm)
        rec["fid"].append(m.fidelity_gs)
        rec["par"].append(m.parity_overlap)
        rec["sep"].append(m.separation)
        rec["odd"].append(odd_population(state))
        es_final = es

    record(0)
    for a, b in zip(marks[:-1], marks[1:]):
        cn_steps(psi, base, drive, op.off, mid_lams[a:b], dt)
        norm = math.sqrt(float(np.sum(np.abs(psi) ** 2)) * grid.h)
        max_drift = max(max_drift, abs(norm - prev_norm) / (b - a))
        prev_norm = norm
        if abs(norm - 1.0) > NORM_DRIFT_MAX:
            raise NonConvergenceError(f"cumulative norm drift {abs(norm - 1.0):.3e} exceeds {NORM_DRIFT_MAX:g}")
        edge = float(max(abs(psi[0]), abs(psi[-1])))
        if edge > BOUNDARY_MAX:
            raise NonConvergenceError(f"wavefunction reached the grid edge (|psi| = {edge:.3e}); enlarge q_max")
        record(b)

    t_end = t0 + n_steps * dt / Omega
    final = WaveState(grid, psi.copy(), t_end, float(sched.lambdas[-1]))
    final_basis = eigenpairs(op.with_lambda(final.lam), 6)
    return GridTrajectory(
        t=np.array(rec["t"]),
        lam=np.array(rec["lam"]),
        norm=np.array(rec["norm"]),
        fidelity_gs=np.array(rec["fid"]),
        parity_overlap=np.array(rec["par"]),
        separation=np.array(rec["sep"]),
        odd_population=np.array(rec["odd"]),
        final=final,
        final_basis=final_basis,
        dtau=dt,
        max_step_drift=max_drift,
    )


# --------------------------------------------------------------------- modal


@dataclass
class ModalBasis:
    """Eigen-data on a lambda grid with sign-continuous states."""

    lambdas: np.ndarray
    energies: np.ndarray  # (n, k)
    couplings: np.ndarray  # (n, k, k)
    systems: list = field(repr=False)

    def at(self, lam: float):
        j = int(np.clip(np.searchsorted(self.lambdas, lam) - 1, 0, len(self.lambdas) - 2))
        l0, l1 = self.lambdas[j], self.lambdas[j + 1]
        w = 0.0 if l1 == l0 else (lam - l0) / (l1 - l0)
        E = (1 - w) * self.energies[j] + w * self.energies[j + 1]
        A = (1 - w) * self.couplings[j] + w * self.couplings[j + 1]
        return E, A

    def nearest(self, lam: float) -> EigenSystem:
        return self.systems[int(np.argmin(np.abs(self.lambdas - lam)))]


def build_modal_basis(
    sys: DimensionlessSystem,
    lam_nodes,
    grid: GridSpec,
    k: int = 10,
    dlam_max: float = 1e-4,
    coupling_tol: float = 1e-6,
    max_nodes: int = 20000,
) -> ModalBasis:
    """Eigen-data refreshed at most every ``dlam_max`` in lambda, refined until the
    linear-interpolation error of A_ij * dlambda is below ``coupling_tol``."""
    op = build_hamiltonian(sys, grid)
    nodes = np.unique(np.asarray(lam_nodes, dtype=float))
    fine = [nodes[0]]
    for a, b in zip(nodes[:-1], nodes[1:]):
        n_sub = max(1, int(math.ceil((b - a) / dlam_max)))
        fine.extend(np.linspace(a, b, n_sub + 1)[1:])
    lams = np.array(fine)
    cache = {}

    def solve_at(lam):
        if lam not in cache:
            es = eigenpairs(op.with_lambda(lam), k)
            even = [E for E, p in zip(es.energies, es.parities) if p == "even"]
            if len(even) > 1 and np.min(np.diff(even)) < DEGENERACY_TOL:
                raise NonConvergenceError(
                    f"near-degenerate even states at lambda = {lam:.12g}: modal method outside its validity"
                )
            cache[lam] = es
        return cache[lam]

    for _ in range(20):
        systems = [solve_at(lam) for lam in lams]
        A = np.array([coupling_matrix(es) for es in systems])
        if len(lams) < 3:
            break
        dl = np.diff(lams)
        curvature = np.abs(A[2:] - 2 * A[1:-1] + A[:-2]).max(axis=(1, 2))
        err = curvature / 8.0 * np.maximum(dl[1:], dl[:-1])
        bad = np.nonzero(err > coupling_tol)[0]
        if len(bad) == 0 or len(lams) >= max_nodes:
            break
        extra = set()
        for j in bad:
            extra.add(0.5 * (lams[j] + lams[j + 1]))
            extra.add(0.5 * (lams[j + 1] + lams[j + 2]))
        lams = np.unique(np.concatenate([lams, sorted(extra)]))
    systems = [solve_at(lam) for lam in lams]
    for prev, cur in zip(systems[:-1], systems[1:]):
        align_signs(cur, prev)
    E = np.array([es.energies for es in systems])
    A = np.array([coupling_matrix(es) for es in systems])
    return ModalBasis(lambdas=lams, energies=E, couplings=A, systems=systems)


@dataclass
class ModalState:
    c: np.ndarray
    basis: EigenSystem

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.c))


@dataclass
class ModalTrajectory:
    t: np.ndarray
    lam: np.ndarray
    c: np.ndarray  # (n_records, k), phases relative to the ground energy
    basis: ModalBasis
    grid: GridSpec

    @property
    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.c) ** 2, axis=1))

    @property
    def fidelity_gs(self) -> np.ndarray:
        return np.abs(self.c[:, 0]) ** 2

    def state(self, j: int) -> ModalState:
        return ModalState(self.c[j].copy(), self.basis.nearest(float(self.lam[j])))

    def wave_state(self, j: int) -> WaveState:
        """Reconstruct psi = sum_i c_i psi_i(lambda) on the grid for record ``j``."""
        lam = float(self.lam[j])
        ref = self.basis.nearest(lam)
        es = eigenpairs(ref.operator.with_lambda(lam), ref.k)
        align_signs(es, ref)
        psi = self.c[j] @ es.states
        return WaveState(self.grid, psi.astype(np.complex128), float(self.t[j]), lam)


def propagate_modal(
    sched: RampSchedule,
    sys: DimensionlessSystem,
    k: int = 10,
    grid: GridSpec | None = None,
    n_records: int = 100,
    rtol: float = 1e-9,
    atol: float = 1e-11,
) -> ModalTrajectory:
    """Integrate the instantaneous-eigenbasis equations from c = (1, 0, ..., 0)."""
    if k < 6:
        raise ValueError("k must be >= 6")
    Omega = sched.Omega
    grid = grid or ramp_grid(sys, sched)
    basis = build_modal_basis(sys, sched.lambdas, grid, k)

    taus = Omega * (np.asarray(sched.times) - sched.times[0])
    lams = np.asarray(sched.lambdas)
    tau_total = float(taus[-1])
    rec_taus = np.linspace(0.0, tau_total, max(2, n_records + 1))

    def rhs(tau, c, slope, lam0, tau0):
        lam = lam0 + slope * (tau - tau0)
        E, A = basis.at(lam)
        return -1j * (E - E[0]) * c - slope * (A @ c)

    c = np.zeros(k, dtype=np.complex128)
    c[0] = 1.0
    out = []
    rec_idx = 0
    for j in range(len(taus) - 1):
        ta, tb = taus[j], taus[j + 1]
        while rec_idx < len(rec_taus) and rec_taus[rec_idx] <= ta:
            out.append((rec_taus[rec_idx], c.copy()))
            rec_idx += 1
        if tb <= ta:
            continue
        slope = (lams[j + 1] - lams[j]) / (tb - ta)
        inside = rec_taus[(rec_taus > ta) & (rec_taus < tb)]
        sol = solve_ivp(
            rhs,
            (ta, tb),
            c,
            method="DOP853",
            rtol=rtol,
            atol=atol,
            t_eval=np.concatenate([inside, [tb]]),
            args=(slope, lams[j], ta),
        )
        if not sol.success:
            raise NonConvergenceError(f"modal integration failed: {sol.message}")
        for n, tau in enumerate(inside):
            out.append((tau, sol.y[:, n].copy()))
            rec_idx += 1
        c = sol.y[:, -1].copy()
        if abs(np.linalg.norm(c) - 1.0) > MODAL_NORM_TOL:
            raise NonConvergenceError(f"modal norm drifted to {np.linalg.norm(c):.8f}")
    while rec_idx < len(rec_taus):
        out.append((rec_taus[rec_idx], c.copy()))
        rec_idx += 1
    t = np.array([tau for tau, _ in out]) / Omega + sched.times[0]
    return ModalTrajectory(
        t=t,
        lam=sched.lam_at(t),
        c=np.array([cc for _, cc in out]),
        basis=basis,
        grid=grid,
    )


def quench_schedule(lam_start: float, lam_target: float, Omega: float, duration_tau: float = 1e-6) -> RampSchedule:
    """Near-instantaneous jump lam_start -> lam_target (the diabatic reference)."""
    t = duration_tau / Omega
    return RampSchedule(
        times=np.array([0.0, t]),
        lambdas=np.array([lam_start, lam_target]),
        rate_bound=np.full(2, np.inf),
        safety=1.0,
        Omega=Omega,
        meta={"quench": True},
    )


def modal_cat_metrics(traj: ModalTrajectory, j: int = -1) -> CatMetrics:
    j = j % len(traj.t)
    state = traj.wave_state(j)
    es = traj.basis.nearest(float(traj.lam[j]))
    es_now = eigenpairs(es.operator.with_lambda(float(traj.lam[j])), 2)
    return cat_metrics(state, es_now)


def final_separation_target(sys: DimensionlessSystem, lam: float) -> float:
    """2 q_min of the potential at ``lam`` (the separation a perfect cat reaches)."""
    return 2.0 * find_minima(sys.at(lam)).q_min
