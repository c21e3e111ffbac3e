"""Experiment parameters, unit conventions and the dimensionless reduction.

Conventions: every frequency stored on :class:`PhysicalParams` is an angular
rate in rad/s. Configuration files and human-facing output use cyclic
frequencies in Hz (value = angular / 2pi).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

from scipy import constants

from .errors import ConfigError

TWO_PI = 2.0 * math.pi

# Reference point for the scaled multipliers (Omega0, Delta0, kappa0, L0, m0).
REF_OMEGA_HZ = 1.0
REF_DELTA_HZ = 1.0e4
REF_KAPPA_HZ = 1.0e6
REF_LENGTH_M = 0.06
REF_MASS_KG = 1.0e-5

DEFAULT_WAVELENGTH_M = 1064e-9
DEFAULT_A0 = 2.0

HIERARCHY_RATIO = 1e-2


class HierarchyWarning(UserWarning):
    """Mechanical rates are not well separated from the optical ones."""


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionful parameters of the symmetric dual-cavity setup.

    Defaults are the typical values of the reference experiment
    (10 mg mirror, 1 Hz pendulum, 6 cm cavities, 1 MHz loss, 10 kHz detuning).
    """

    m: float = REF_MASS_KG
    Omega: float = TWO_PI * REF_OMEGA_HZ
    gamma_m: float = TWO_PI * 0.1
    L: float = REF_LENGTH_M
    kappa: float = TWO_PI * REF_KAPPA_HZ
    kappa_e: float | None = None
    kappa_i: float = 0.0
    Delta: float = TWO_PI * REF_DELTA_HZ
    lambda_laser: float = DEFAULT_WAVELENGTH_M
    hbar: float = constants.hbar
    c: float = constants.c

    def __post_init__(self):
        if self.kappa_e is None:
            object.__setattr__(self, "kappa_e", self.kappa - self.kappa_i)
        for name in ("m", "Omega", "L", "kappa", "kappa_e", "lambda_laser", "hbar", "c"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and strictly positive, got {value!r}")
        for name in ("gamma_m", "kappa_i", "Delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"{name} must be finite and non-negative, got {value!r}")
        if abs(self.kappa_e + self.kappa_i - self.kappa) > 1e-12 * self.kappa:
            raise ConfigError(
                "kappa must equal kappa_e + kappa_i "
                f"({self.kappa / TWO_PI:g} Hz != {self.kappa_e / TWO_PI:g} + {self.kappa_i / TWO_PI:g} Hz)"
            )

    @classmethod
    def from_hz(
        cls,
        *,
        mass_kg: float = REF_MASS_KG,
        omega_hz: float = REF_OMEGA_HZ,
        gamma_m_hz: float = 0.1,
        length_m: float = REF_LENGTH_M,
        kappa_hz: float = REF_KAPPA_HZ,
        kappa_e_hz: float | None = None,
        kappa_i_hz: float = 0.0,
        delta_hz: float = REF_DELTA_HZ,
        wavelength_m: float = DEFAULT_WAVELENGTH_M,
    ) -> "PhysicalParams":
        return cls(
            m=mass_kg,
            Omega=TWO_PI * omega_hz,
            gamma_m=TWO_PI * gamma_m_hz,
            L=length_m,
            kappa=TWO_PI * kappa_hz,
            kappa_e=None if kappa_e_hz is None else TWO_PI * kappa_e_hz,
            kappa_i=TWO_PI * kappa_i_hz,
            Delta=TWO_PI * delta_hz,
            lambda_laser=wavelength_m,
        )

    @classmethod
    def from_scaled(
        cls,
        Omega0: float = 1.0,
        Delta0: float = 1.0,
        kappa0: float = 1.0,
        L0: float = 1.0,
        m0: float = 1.0,
        gamma_m_hz: float = 0.1,
    ) -> "PhysicalParams":
        """Build parameters from multipliers of the reference point."""
        return cls.from_hz(
            mass_kg=m0 * REF_MASS_KG,
            omega_hz=Omega0 * REF_OMEGA_HZ,
            gamma_m_hz=gamma_m_hz,
            length_m=L0 * REF_LENGTH_M,
            kappa_hz=kappa0 * REF_KAPPA_HZ,
            delta_hz=Delta0 * REF_DELTA_HZ,
        )

    def as_hz_dict(self) -> dict:
        """Resolved parameters in config-file units (for output metadata)."""
        return {
            "mass_kg": self.m,
            "omega_hz": self.Omega / TWO_PI,
            "gamma_m_hz": self.gamma_m / TWO_PI,
            "length_m": self.L,
            "kappa_hz": self.kappa / TWO_PI,
            "kappa_e_hz": self.kappa_e / TWO_PI,
            "kappa_i_hz": self.kappa_i / TWO_PI,
            "delta_hz": self.Delta / TWO_PI,
            "wavelength_m": self.lambda_laser,
        }

    def check_hierarchy(self) -> bool:
        """Warn (never raise) when Omega, gamma_m are not << Delta, kappa."""
        slow = max(self.Omega, self.gamma_m)
        fast = min(self.Delta, self.kappa) if self.Delta > 0 else self.kappa
        ok = slow / fast < HIERARCHY_RATIO
        if not ok:
            warnings.warn(
                f"frequency hierarchy violated: max(Omega, gamma_m)/min(Delta, kappa) = {slow / fast:.3g}",
                HierarchyWarning,
                stacklevel=2,
            )
        return ok


@dataclass(frozen=True)
class DerivedOptical:
    omega_c: float
    G: float
    g: float
    finesse: float
    x_zpf: float
    # kappa read as the full linewidth instead of the half width
    finesse_full_linewidth: float


@dataclass(frozen=True)
class DimensionlessSystem:
    """The triple (r = g/kappa, delta = Delta/kappa, lam = n/n_c).

    ``Omega_ref`` (rad/s) is only used to restore units of time.
    """

    r: float
    delta: float
    lam: float = 0.0
    Omega_ref: float = TWO_PI

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    def at(self, lam: float) -> "DimensionlessSystem":
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class ScaledCoords:
    Omega0: float
    Delta0: float
    kappa0: float
    L0: float
    m0: float
    a0: float = DEFAULT_A0
    g0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "g0", self.Omega0 ** -0.5 / self.L0 * self.m0 ** -0.5)

    def to_params(self, gamma_m_hz: float = 0.1) -> PhysicalParams:
        return PhysicalParams.from_scaled(
            self.Omega0, self.Delta0, self.kappa0, self.L0, self.m0, gamma_m_hz=gamma_m_hz
        )


CONFIG_KEYS = (
    "mass_kg",
    "omega_hz",
    "gamma_m_hz",
    "length_m",
    "kappa_hz",
    "kappa_e_hz",
    "kappa_i_hz",
    "delta_hz",
    "wavelength_m",
    "a0",
)


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            number = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse number {value!r} for {key}") from None
        if not math.isfinite(number):
            raise ConfigError(f"line {lineno}: {key} must be finite")
        if number < 0:
            raise ConfigError(f"line {lineno}: {key} must be non-negative, got {number}")
        values[key] = number
    return values


def params_from_mapping(values: dict) -> tuple[PhysicalParams, float]:
    """Resolve a key/value mapping (config units) into parameters and a0."""
    values = dict(values)
    a0 = values.pop("a0", DEFAULT_A0)
    if a0 <= 0:
        raise ConfigError("a0 must be strictly positive")
    kappa = values.pop("kappa_hz", None)
    kappa_e = values.pop("kappa_e_hz", None)
    kappa_i = values.pop("kappa_i_hz", None)
    if kappa is None:
        if kappa_e is not None or kappa_i is not None:
            kappa = (kappa_e or 0.0) + (kappa_i or 0.0)
        else:
            kappa = REF_KAPPA_HZ
    if kappa_i is None:
        kappa_i = kappa - kappa_e if kappa_e is not None else 0.0
    if kappa_e is None:
        kappa_e = kappa - kappa_i
    params = PhysicalParams.from_hz(kappa_hz=kappa, kappa_e_hz=kappa_e, kappa_i_hz=kappa_i, **values)
    return params, a0


def read_config(path) -> tuple[PhysicalParams, float]:
    """Read a ``key = value`` config file, returning parameters and a0."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return params_from_mapping(parse_config_text(text))


def load_config(path) -> PhysicalParams:
    """Load :class:`PhysicalParams` from a config file; omitted keys take defaults."""
    return read_config(path)[0]


def derive_optical(p: PhysicalParams) -> DerivedOptical:
    omega_c = TWO_PI * p.c / p.lambda_laser
    G = omega_c / p.L
    x_zpf = math.sqrt(p.hbar / (p.m * p.Omega))
    fsr_hz = p.c / (2.0 * p.L)
    kappa_hz = p.kappa / TWO_PI
    return DerivedOptical(
        omega_c=omega_c,
        G=G,
        g=G * x_zpf,
        finesse=fsr_hz / (2.0 * kappa_hz),
        x_zpf=x_zpf,
        finesse_full_linewidth=fsr_hz / kappa_hz,
    )


def to_dimensionless(p: PhysicalParams, n: float) -> DimensionlessSystem:
    from .potential import critical_photon_number

    if n < 0:
        raise ValueError("photon number must be non-negative")
    if p.Delta == 0:
        raise ValueError("Delta = 0: the critical photon number diverges")
    g = derive_optical(p).g
    return DimensionlessSystem(
        r=g / p.kappa,
        delta=p.Delta / p.kappa,
        lam=n / critical_photon_number(p),
        Omega_ref=p.Omega,
    )


def _photon_energy(p: PhysicalParams) -> float:
    return p.hbar * TWO_PI * p.c / p.lambda_laser


def photon_number_from_power(p: PhysicalParams, P: float) -> float:
    """Intracavity photons per cavity for input power ``P`` (W) on each side.

    Uses F^2 = kappa_e P / (hbar omega_l) and n = F^2 / (Delta^2 + kappa^2/4).
    """
    if P < 0:
        raise ValueError("power must be non-negative")
    F2 = p.kappa_e * P / _photon_energy(p)
    return F2 / (p.Delta ** 2 + p.kappa ** 2 / 4.0)


def power_from_photon_number(p: PhysicalParams, n: float) -> float:
    if n < 0:
        raise ValueError("photon number must be non-negative")
    return n * (p.Delta ** 2 + p.kappa ** 2 / 4.0) * _photon_energy(p) / p.kappa_e


def scaled_coords(p: PhysicalParams, a0: float = DEFAULT_A0) -> ScaledCoords:
    return ScaledCoords(
        Omega0=p.Omega / TWO_PI / REF_OMEGA_HZ,
        Delta0=p.Delta / TWO_PI / REF_DELTA_HZ,
        kappa0=p.kappa / TWO_PI / REF_KAPPA_HZ,
        L0=p.L / REF_LENGTH_M,
        m0=p.m / REF_MASS_KG,
        a0=a0,
    )


def reference_coupling_ratio() -> float:
    """g/kappa at the reference point; r = reference_coupling_ratio() * g0/kappa0."""
    p = PhysicalParams()
    return derive_optical(p).g / p.kappa
