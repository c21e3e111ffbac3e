"""Adiabatic preparation of a spatial cat state of a suspended mirror.

Dual-cavity radiation pressure turns the mirror's harmonic well into a
symmetric double well above a critical photon number.  The subpackages
compute that potential, the mirror spectrum and derivative couplings, the
adiabatic ramp-rate bound, the feasibility chain, and the ramp dynamics.
"""

from .kernels import BACKEND as KERNEL_BACKEND
from .params import (
    DerivedOptical,
    DimensionlessSystem,
    PhysicalParams,
    ScaledCoords,
    derive_optical,
    load_config,
    photon_number_from_power,
    power_from_photon_number,
    scaled_coords,
    to_dimensionless,
)
from .potential import critical_photon_number, damping_rate, find_minima, v_dimensionless

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "DerivedOptical",
    "DimensionlessSystem",
    "PhysicalParams",
    "ScaledCoords",
    "critical_photon_number",
    "damping_rate",
    "derive_optical",
    "find_minima",
    "load_config",
    "photon_number_from_power",
    "power_from_photon_number",
    "scaled_coords",
    "to_dimensionless",
    "v_dimensionless",
]
