import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catwell.errors import ConfigError
from catwell.params import (
    TWO_PI,
    HierarchyWarning,
    PhysicalParams,
    ScaledCoords,
    derive_optical,
    load_config,
    parse_config_text,
    photon_number_from_power,
    power_from_photon_number,
    read_config,
    scaled_coords,
    to_dimensionless,
)
from catwell.potential import critical_photon_number


def write(tmp_path, text):
    path = tmp_path / "p.cfg"
    path.write_text(text)
    return path


def test_empty_config_gives_defaults(tmp_path):
    p = load_config(write(tmp_path, "# nothing\n"))
    assert p == PhysicalParams()
    hz = p.as_hz_dict()
    assert hz["mass_kg"] == 1e-5
    assert hz["omega_hz"] == pytest.approx(1.0)
    assert hz["kappa_hz"] == pytest.approx(1e6)
    assert hz["delta_hz"] == pytest.approx(1e4)
    assert hz["length_m"] == 0.06
    assert hz["gamma_m_hz"] == pytest.approx(0.1)


def test_default_override_is_identical(tmp_path):
    assert load_config(write(tmp_path, "mass_kg = 1e-5\n")) == PhysicalParams()


def test_kappa_sum_mismatch(tmp_path):
    with pytest.raises(ConfigError, match="kappa"):
        load_config(write(tmp_path, "kappa_hz=1e6\nkappa_e_hz=9e5\nkappa_i_hz=2e5\n"))


def test_kappa_components_resolve(tmp_path):
    p = load_config(write(tmp_path, "kappa_e_hz=9e5\nkappa_i_hz=1e5\n"))
    assert p.kappa == pytest.approx(TWO_PI * 1e6)
    p = load_config(write(tmp_path, "kappa_hz=2e6\nkappa_i_hz=5e5\n"))
    assert p.kappa_e == pytest.approx(TWO_PI * 1.5e6)


@pytest.mark.parametrize(
    "text, match",
    [
        ("colour = 3\n", "unknown key"),
        ("mass_kg = heavy\n", "cannot parse"),
        ("length_m = -1\n", "non-negative"),
        ("just words\n", "expected"),
        ("omega_hz = 0\n", "strictly positive"),
        ("a0 = 0\n", "a0"),
    ],
)
def test_config_errors(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        read_config(write(tmp_path, text))


def test_missing_config(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg")


def test_a0_is_read(tmp_path):
    _, a0 = read_config(write(tmp_path, "a0 = 3.5  # accuracy multiplier\n"))
    assert a0 == 3.5


def test_comments_and_blank_lines():
    assert parse_config_text("\n  # c\nomega_hz = 2 # two\n") == {"omega_hz": 2.0}


def test_derived_optical_reference_point():
    d = derive_optical(PhysicalParams())
    assert d.G / TWO_PI == pytest.approx(4.72e15, rel=0.01)
    assert d.g / TWO_PI == pytest.approx(6.10, rel=0.01)
    assert d.g == d.G * d.x_zpf
    assert d.G == d.omega_c / PhysicalParams().L


def test_finesse_short_cavity():
    d = derive_optical(PhysicalParams.from_hz(length_m=3e-3, kappa_hz=1e5))
    assert d.finesse == pytest.approx(2.5e5, rel=0.01)
    assert d.finesse_full_linewidth == pytest.approx(2 * d.finesse)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_finesse_inverse_in_length_and_loss(fl, fk):
    base = derive_optical(PhysicalParams()).finesse
    p = PhysicalParams.from_hz(length_m=0.06 * fl, kappa_hz=1e6 * fk)
    assert derive_optical(p).finesse * fl * fk == pytest.approx(base, rel=1e-12)


def test_coupling_halves_with_four_times_mass():
    g1 = derive_optical(PhysicalParams()).g
    g4 = derive_optical(PhysicalParams.from_hz(mass_kg=4e-5)).g
    assert g4 == pytest.approx(g1 / 2, rel=1e-14)


def test_to_dimensionless():
    p = PhysicalParams()
    nc = critical_photon_number(p)
    s = to_dimensionless(p, nc)
    assert s.r == pytest.approx(6.10e-6, rel=0.01)
    assert s.delta == pytest.approx(0.01)
    assert s.lam == pytest.approx(1.0)
    assert to_dimensionless(p, 0).lam == 0
    assert to_dimensionless(p, 2 * nc).lam == pytest.approx(2.0)
    with pytest.raises(ValueError, match="Delta"):
        to_dimensionless(PhysicalParams(Delta=0.0), 1.0)


def test_power_to_photons():
    p = PhysicalParams()
    assert photon_number_from_power(p, 49.4e-9) == pytest.approx(167965, rel=0.01)
    assert photon_number_from_power(p, 0.0) == 0.0
    worked = PhysicalParams.from_scaled(80, 0.01, 0.1, 0.05, 0.1)
    assert power_from_photon_number(worked, critical_photon_number(worked)) == pytest.approx(7.9e-9, rel=0.02)
    with pytest.raises(ValueError):
        photon_number_from_power(p, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-15, 1e-3), st.floats(0.05, 1.0))
def test_power_round_trip(P, frac_e):
    p = PhysicalParams.from_hz(kappa_e_hz=1e6 * frac_e, kappa_i_hz=1e6 * (1 - frac_e))
    assert power_from_photon_number(p, photon_number_from_power(p, P)) == pytest.approx(P, rel=1e-12)


def test_scaled_coords():
    sc = scaled_coords(PhysicalParams())
    for v in (sc.Omega0, sc.Delta0, sc.kappa0, sc.L0, sc.m0, sc.g0):
        assert v == pytest.approx(1.0)
    sc = scaled_coords(PhysicalParams.from_hz(omega_hz=80, kappa_hz=1e5, length_m=3e-3, mass_kg=1e-6))
    assert (sc.Omega0, sc.kappa0, sc.L0, sc.m0) == pytest.approx((80, 0.1, 0.05, 0.1))
    assert sc.g0 == pytest.approx(80 ** -0.5 * 20 * 10 ** 0.5)
    assert sc.g0 == pytest.approx(7.07, rel=1e-3)
    assert ScaledCoords(1, 1, 1, 1, 4).g0 == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 100), st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 10))
def test_coupling_from_multipliers(O0, k0, L0, m0):
    p = PhysicalParams.from_scaled(O0, 1.0, k0, L0, m0)
    g = derive_optical(p).g
    assert g == pytest.approx(TWO_PI * 6.10 * scaled_coords(p).g0, rel=0.005)


def test_hierarchy_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert PhysicalParams().check_hierarchy()
    with pytest.warns(HierarchyWarning):
        assert not PhysicalParams.from_scaled(80, 0.01, 0.1, 0.05, 0.1).check_hierarchy()


def test_rejects_nonfinite():
    with pytest.raises(ConfigError):
        PhysicalParams(m=math.nan)
    with pytest.raises(ConfigError):
        PhysicalParams(gamma_m=-1.0)
    assert np.isfinite(derive_optical(PhysicalParams(gamma_m=0.0)).g)
