import numpy as np
import pytest

from catwell.errors import NonConvergenceError
from catwell.params import DimensionlessSystem
from catwell.spectrum import (
    GridSpec,
    align_signs,
    auto_grid,
    build_hamiltonian,
    coupling_matrix,
    couplings,
    critical_extrema,
    eigenpairs,
    fit_power_law,
    parallel_map,
    quartic_coefficient,
    solve,
    sweep_lambda,
    transition_scale,
)

HARM = GridSpec(14.0, 4001)


def test_grid_spec():
    g = GridSpec(10.0, 201)
    assert g.h == pytest.approx(0.1)
    assert g.q[g.half] == 0.0
    assert g.refined().n_points == 401 and g.refined().h == pytest.approx(0.05)
    with pytest.raises(ValueError):
        GridSpec(10.0, 200)
    with pytest.raises(ValueError):
        GridSpec(-1.0, 201)


def test_operator_is_reflection_symmetric(desk):
    grid = GridSpec(20.0, 201)
    op = build_hamiltonian(desk.at(1.3), grid)
    assert np.array_equal(op.diag, op.diag[::-1])
    psi = np.random.default_rng(0).normal(size=grid.n_points)
    dense = np.diag(op.diag) + np.diag(op.offdiag, 1) + np.diag(op.offdiag, -1)
    assert np.allclose(op.matvec(psi), dense @ psi)


def test_harmonic_spectrum_coarse():
    es = eigenpairs(build_hamiltonian(DimensionlessSystem(1e-2, 0.1, 0.0), HARM), 10)
    assert np.allclose(es.energies, np.arange(10) + 0.5, atol=2e-4)
    assert es.parities == ["even", "odd"] * 5
    assert es.converged


def test_states_are_orthonormal_and_signed(desk, desk_grid):
    es = eigenpairs(build_hamiltonian(desk.at(1.002), desk_grid), 8)
    gram = es.states @ es.states.T * desk_grid.h
    assert np.allclose(gram, np.eye(8), atol=1e-10)
    assert np.allclose(es.reflection_overlaps(), [1 if p == "even" else -1 for p in es.parities], atol=1e-12)
    M = desk_grid.half
    for s, p in zip(es.states, es.parities):
        tail = s[M:] if p == "even" else s[M + 1 :]
        first = tail[np.argmax(np.abs(tail) > 1e-8 * np.abs(tail).max())]
        assert first > 0
    assert np.all(es.residuals < 1e-8)


def test_eigenpairs_k_validation(desk, desk_grid):
    with pytest.raises(ValueError):
        eigenpairs(build_hamiltonian(desk, desk_grid), 0)
    es = eigenpairs(build_hamiltonian(desk, desk_grid), 3)
    assert es.k == 3


def test_deep_wells_keep_even_ground_and_even_rows(desk):
    grid = GridSpec(40.0, 8001)
    es = eigenpairs(build_hamiltonian(desk.at(1.2), grid), 10)
    assert es.energies[1] - es.energies[0] < 1e-9  # doublet degenerate to rounding
    assert es.parities[0] == "even"
    assert np.all(np.diff(es.energies) >= -1e-12 * np.abs(es.energies).max())
    rows = couplings(es)
    assert [r.i for r in rows] == [2, 4, 6, 8]
    assert all(r.parity == "even" and r.gap > 0 for r in rows)


def test_coupling_row_identity(desk, desk_grid):
    es = eigenpairs(build_hamiltonian(desk.at(1.0005), desk_grid), 10)
    for row in couplings(es):
        assert row.dcoupling * row.gap == pytest.approx(row.me, rel=1e-8)


def test_derivative_coupling_matches_finite_difference(desk, desk_grid):
    lam, eps = 1.0005, 1e-6
    op = build_hamiltonian(desk, desk_grid)
    es = eigenpairs(op.with_lambda(lam), 6)
    lo = align_signs(eigenpairs(op.with_lambda(lam - eps), 6), es)
    hi = align_signs(eigenpairs(op.with_lambda(lam + eps), 6), es)
    dpsi0 = (hi.states[0] - lo.states[0]) / (2 * eps)
    A = coupling_matrix(es)
    for i in (2, 4):
        fd = np.dot(es.states[i], dpsi0) * desk_grid.h
        assert A[i, 0] == pytest.approx(fd, rel=1e-5)
        assert abs(A[i, 0]) == pytest.approx(couplings(es, (i,))[0].dcoupling, rel=1e-12)


def test_coupling_matrix_structure(desk, desk_grid):
    es = eigenpairs(build_hamiltonian(desk.at(1.001), desk_grid), 8)
    A = coupling_matrix(es)
    assert np.allclose(A, -A.T, atol=1e-12 * np.abs(A).max())
    assert np.all(np.diag(A) == 0)
    for i in range(8):
        for j in range(8):
            if es.parities[i] != es.parities[j]:
                assert A[i, j] == 0.0


def test_align_signs_restores_flips(desk, desk_grid):
    op = build_hamiltonian(desk.at(1.0), desk_grid)
    ref = eigenpairs(op, 6)
    other = eigenpairs(op, 6)
    other.states[[1, 2]] *= -1
    align_signs(other, ref)
    assert np.array_equal(other.states, ref.states)


def test_auto_grid_converges_harmonic():
    s = DimensionlessSystem(1e-2, 0.1, 0.0)
    g = auto_grid(s, 4, energy_tol=1e-6)
    es = solve(s, 4, g)
    assert np.allclose(es.energies, np.arange(4) + 0.5, atol=1e-5)
    assert es.boundary_amplitude < 1e-8


def test_auto_grid_point_cap(monkeypatch):
    import catwell.spectrum as spectrum

    monkeypatch.setattr(spectrum, "MAX_POINTS", 300)
    with pytest.raises(NonConvergenceError) as info:
        solve(DimensionlessSystem(1e-2, 0.1, 0.0), 6)
    assert info.value.best is not None


def test_sweep_table_rows_and_threads(desk, desk_grid, monkeypatch):
    lams = np.linspace(0.99, 1.01, 5)
    serial = sweep_lambda(desk, lams, k=10, grid=desk_grid)
    monkeypatch.setenv("CATWELL_THREADS", "3")
    threaded = sweep_lambda(desk, lams, k=10, grid=desk_grid)
    assert serial.energies.shape == (5, 10)
    assert np.array_equal(serial.energies, threaded.energies)
    assert set(serial.dcouplings) == {2, 4, 6, 8}
    assert serial.converged.all() and not any(serial.errors)
    with pytest.raises(ValueError):
        sweep_lambda(desk, lams[::-1], grid=desk_grid)


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv("CATWELL_THREADS", "4")
    assert parallel_map(lambda x: x * x, range(20)) == [x * x for x in range(20)]
    monkeypatch.setenv("CATWELL_THREADS", "junk")
    assert parallel_map(str, [1, 2]) == ["1", "2"]


def test_higher_rows_are_weaker(desk, desk_grid):
    # the i = 2 row sets the rate bound across the critical window
    op = build_hamiltonian(desk, desk_grid)
    for lam in np.linspace(0.99, 1.01, 6):
        rows = couplings(eigenpairs(op.with_lambda(lam), 10))
        ratios = [r.gap / r.dcoupling for r in rows]
        assert np.argmin(ratios) == 0


def test_fit_power_law_exact():
    x = np.geomspace(0.1, 10, 7)
    p, A, rms = fit_power_law(x, 3.5 * x ** -1.25)
    assert p == pytest.approx(-1.25) and A == pytest.approx(3.5) and rms < 1e-12


def test_quartic_scale(desk):
    assert quartic_coefficient(desk.at(1.0)) == pytest.approx(2e-4 * 0.96 / 1.04 ** 2)
    assert transition_scale(desk) == pytest.approx(quartic_coefficient(desk.at(1.0)) ** (2 / 3))


def test_critical_extrema_universal_scaling():
    # near criticality h ~ -mu c4^(2/3) q^2/2 + c4 q^4: gap ~ c4^(1/3), coupling ~ c4^(-2/3)
    out = []
    for r in (2e-4, 8e-4):
        gmin, lg, dmax, ld, ok = critical_extrema(DimensionlessSystem(r, 0.01, 1.0))
        assert ok and lg > 1.0 and ld > 1.0
        out.append((gmin, dmax))
    (g1, d1), (g2, d2) = out
    assert np.log(g2 / g1) / np.log(4) == pytest.approx(2 / 3, abs=2e-3)
    assert np.log(d1 / d2) / np.log(4) == pytest.approx(4 / 3, abs=2e-3)
