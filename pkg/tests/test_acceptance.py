"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python tests/test_acceptance.py``).
Two sub-checks are known to miss their targets and are marked strict xfail;
they still run at the stated tolerance and print FAIL with the measured value.
"""

import functools
import math
import time

import numpy as np
import pytest

from catwell.evolve import propagate_grid, propagate_modal, quench_schedule
from catwell.params import (
    TWO_PI,
    DimensionlessSystem,
    PhysicalParams,
    ScaledCoords,
    derive_optical,
    photon_number_from_power,
    power_from_photon_number,
    to_dimensionless,
)
from catwell.potential import critical_photon_number, damping_rate, dn_to_qmin, find_minima, v_dimensionless
from catwell.ramp import (
    common_grid,
    feasibility_report,
    gamma_bound,
    live_rate_function,
    omega0_bound,
    synthesize_schedule,
)
from catwell.spectrum import build_hamiltonian, couplings, eigenpairs, scaling_fit, solve

pytestmark = pytest.mark.slow

TABLE1 = PhysicalParams()
WORKED = ScaledCoords(Omega0=80.0, Delta0=0.01, kappa0=0.1, L0=0.05, m0=0.1, a0=2.0)
DESK = DimensionlessSystem(r=1e-2, delta=0.1)
LAM0, LAM1 = 0.98, 1.002


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE [{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        return ok

    return emit


def rel(a, b):
    return abs(a / b - 1.0)


def test_c01_derived_constants(report):
    d = derive_optical(TABLE1)
    n = 2000
    t0 = time.perf_counter()
    for _ in range(n):
        derive_optical(TABLE1)
    per_call = (time.perf_counter() - t0) / n
    G, g = d.G / TWO_PI, d.g / TWO_PI
    ok = rel(G, 4.72e15) < 0.01 and rel(g, 6.10) < 0.01 and per_call < 1e-3
    report("1 derived constants", ok, f"G/2pi={G:.4e} Hz/m, g/2pi={g:.4f} Hz, {per_call * 1e6:.1f} us/call")
    assert ok


def test_c02_critical_photon_number(report):
    nc = critical_photon_number(TABLE1)
    ncw = critical_photon_number(WORKED.to_params()) * WORKED.Delta0
    ok = rel(nc, 167965) < 0.01 and rel(ncw, 2687) < 0.01
    report("2 critical photon number", ok, f"n_c={nc:.0f} ({rel(nc, 167965):.2%}), n_c*Delta0={ncw:.1f} ({rel(ncw, 2687):.2%})")
    assert ok


def test_c03_power_chain(report):
    nc = critical_photon_number(TABLE1)
    P1 = power_from_photon_number(TABLE1, nc)
    n1 = photon_number_from_power(TABLE1, 49.4e-9)
    pw = WORKED.to_params()
    P2 = power_from_photon_number(pw, critical_photon_number(pw))
    ok = rel(P1, 49.4e-9) < 0.02 and rel(n1, nc) < 0.02 and rel(P2, 7.9e-9) < 0.02
    report("3 power chain", ok, f"P(n_c)={P1 * 1e9:.3f} nW, n(49.4 nW)/n_c={n1 / nc:.4f}, worked P={P2 * 1e9:.3f} nW")
    assert ok


def test_c04_criticality(report):
    worst = 0.0
    for r, delta in ((6.08e-6, 0.01), (1e-2, 0.1), (0.2, 0.45)):
        h = 1e-4
        for lam in (0.0, 0.5, 1.0, 1.5):
            s = DimensionlessSystem(r, delta, lam)
            fd = (v_dimensionless(h, s) - 2 * v_dimensionless(0.0, s) + v_dimensionless(-h, s)) / h ** 2
            worst = max(worst, abs(fd - (1 - lam)))
    ok = worst < 1e-6
    report("4 curvature at origin = 1 - lambda", ok, f"max |v''(0) - (1-lambda)| = {worst:.2e}")
    assert ok


def test_c05_harmonic_limit(report):
    t0 = time.perf_counter()
    es = solve(DimensionlessSystem(6.08e-6, 0.01, 0.0), 10)
    dt = time.perf_counter() - t0
    err = float(np.max(np.abs(es.energies - (np.arange(10) + 0.5))))
    ok = err < 1e-5 and dt < 10.0 and es.converged
    report("5 harmonic limit", ok, f"max |E_i - (i+1/2)| = {err:.2e} on {es.grid.n_points} points, {dt:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def live_fit():
    t0 = time.perf_counter()
    fit = scaling_fit()
    return fit, time.perf_counter() - t0


def test_c06_scaling_exponents_and_gap(report, live_fit):
    fit, dt = live_fit
    ok = rel(fit.x, 0.672) < 0.10 and rel(fit.y, 1.36) < 0.20 and rel(fit.A, 9.78e-4) < 0.20
    report("6 scaling fit x, y, A", ok,
           f"x={fit.x:.4f} ({rel(fit.x, 0.672):.1%}), y={fit.y:.4f} ({rel(fit.y, 1.36):.1%}), "
           f"A={fit.A:.4e} ({rel(fit.A, 9.78e-4):.1%}), {dt:.1f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="live max coupling is ~1.8x the reference B; analysis in README")
def test_c06_scaling_coupling_prefactor(report, live_fit):
    fit, _ = live_fit
    ok = rel(fit.B, 5.65e5) < 0.30
    report("6 scaling fit B", ok, f"B={fit.B:.4e} vs 5.65e5 ({fit.B / 5.65e5 - 1:+.1%}, tolerance 30%)")
    assert ok


def test_c07_feasibility_chain(report):
    rep = feasibility_report(WORKED)
    checks = {
        "omega0_bound": (rep.omega0_bound, 99.4, 0.02),
        "gamma_bound_hz": (rep.gamma_bound_hz, 0.141, 0.03),
        "t_coh_s": (rep.t_coh_s, 1.13, 0.02),
        "poisson_coeff": (rep.poisson_rel / math.sqrt(WORKED.Delta0), 1.93e-2, 0.01),
    }
    ok = all(rel(v, ref) < tol for v, ref, tol in checks.values())
    detail = ", ".join(f"{k}={v:.5g} ({rel(v, ref):.2%})" for k, (v, ref, _) in checks.items())
    report("7 feasibility chain", ok, detail)
    assert ok


def test_c08_separation(report):
    p = WORKED.to_params()
    sys = to_dimensionless(p, critical_photon_number(p))
    dn = WORKED.a0 * 1e-3
    small = 2 * dn_to_qmin(sys, dn)
    direct = 2 * find_minima(sys.at(1 + dn)).q_min
    compact = 73.0 * math.sqrt(WORKED.a0)
    ok = rel(small, direct) < 0.05 and rel(direct, 73.0) < 0.05
    report("8 separation", ok,
           f"2 q_min small-displacement={small:.3f}, direct={direct:.3f}, "
           f"73*a0^(1/2)={compact:.2f} (ratio to direct {compact / direct:.4f}, sqrt(2)={math.sqrt(2):.4f})")
    assert ok


@pytest.fixture(scope="module")
def dynamics():
    grid = common_grid(DESK, (LAM0, 1.0, LAM1), 10)
    rate = functools.lru_cache(maxsize=None)(live_rate_function(DESK, TWO_PI, grid, 10))
    out = {"grid": grid}
    for sf in (1.0, 0.3, 0.1):
        sched = synthesize_schedule(DESK, LAM1, safety=sf, rate_fn=rate, lam_start=LAM0)
        out[sf] = (sched, propagate_grid(sched, DESK, grid=grid))
    out["quench"] = propagate_grid(quench_schedule(LAM0, LAM1, TWO_PI), DESK, grid=grid)
    out["modal"] = propagate_modal(out[0.1][0], DESK, k=10, grid=grid)
    return out


def test_c09a_norm_conservation(report, dynamics):
    drift = max(dynamics[sf][1].max_step_drift for sf in (1.0, 0.3, 0.1))
    ok = drift < 1e-12
    report("9a norm conservation", ok, f"max per-step norm drift {drift:.2e} on {dynamics['grid'].n_points} points")
    assert ok


def test_c09b_parity_leakage(report, dynamics):
    leak = max(float(dynamics[sf][1].odd_population.max()) for sf in (1.0, 0.3, 0.1))
    leak = max(leak, float(dynamics["quench"].odd_population.max()))
    ok = leak < 1e-10
    report("9b parity leakage", ok, f"max odd-sector population {leak:.2e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="greedy schedule at safety 0.1 leaves ~3% excitation; analysis in README")
def test_c09c_slow_ramp_fidelity(report, dynamics):
    f = dynamics[0.1][1].final_metrics.fidelity_gs
    ok = f >= 0.99
    report("9c slow-ramp fidelity (safety 0.1)", ok, f"fidelity_gs={f:.5f} (target >= 0.99)")
    assert ok


def test_c09c_quench_lower(report, dynamics):
    slow = dynamics[0.1][1].final_metrics.fidelity_gs
    q = dynamics["quench"].final_metrics.fidelity_gs
    fs = [dynamics[sf][1].final_metrics.fidelity_gs for sf in (1.0, 0.3, 0.1)]
    ok = q < slow and fs[0] <= fs[1] <= fs[2]
    report("9c quench strictly lower", ok,
           f"quench={q:.5f} < slow={slow:.5f}; safety 1/0.3/0.1 -> {fs[0]:.5f}/{fs[1]:.5f}/{fs[2]:.5f}")
    assert ok


def test_c09d_method_agreement(report, dynamics):
    fg = dynamics[0.1][1].final_metrics.fidelity_gs
    fm = float(dynamics["modal"].fidelity_gs[-1])
    ok = abs(fg - fm) < 0.01
    report("9d grid vs modal", ok, f"grid={fg:.7f}, modal={fm:.7f}, |diff|={abs(fg - fm):.1e}")
    assert ok


def test_c10_identities(report):
    # coupling identity on live eigendata
    grid = common_grid(DESK, (1.0005,), 10)
    es = eigenpairs(build_hamiltonian(DESK.at(1.0005), grid), 10)
    worst_c = max(abs(r.dcoupling * r.gap / r.me - 1) for r in couplings(es))
    # back-action identity at n_c
    worst_d = 0.0
    for kw in ({}, {"delta_hz": 2e5}, {"omega_hz": 30.0, "kappa_hz": 3e5}):
        p = PhysicalParams.from_hz(**kw)
        lhs = damping_rate(p, critical_photon_number(p)) - p.gamma_m
        rhs = p.Omega ** 2 * p.kappa / (p.Delta ** 2 + p.kappa ** 2 / 4)
        worst_d = max(worst_d, abs(lhs / rhs - 1))
    # feasibility duality on a random scaled grid
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        sc = ScaledCoords(10 ** rng.uniform(-1, 3), 10 ** rng.uniform(-3, 0), 10 ** rng.uniform(-2, 1),
                          10 ** rng.uniform(-2, 1), 10 ** rng.uniform(-2, 1), a0=10 ** rng.uniform(-1, 1))
        mismatches += (gamma_bound(sc) > 0) != (sc.Omega0 < omega0_bound(sc))
    ok = worst_c < 1e-8 and worst_d < 1e-10 and mismatches == 0
    report("10 cross-formula identities", ok,
           f"coupling rel err {worst_c:.1e}, back-action rel err {worst_d:.1e}, duality mismatches {mismatches}/100")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-rxX"]))
