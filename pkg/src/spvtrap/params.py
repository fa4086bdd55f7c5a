"""Material, illumination and geometry records plus derived equilibrium quantities.

Units follow the semiconductor literature: densities in cm^-3 (cm^-2 for
surfaces), cross sections in cm^2, energies in eV relative to mid-gap,
mobilities in cm^2/(V s). Conversion to SI happens only inside the
electrostatic helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .constants import CONST, HC_EV_NM

__all__ = [
    "BulkMaterial",
    "BulkTrap",
    "Illumination",
    "SlabGeometry",
    "InterfaceState",
    "FixedSurfaceCharge",
    "MaterialSystem",
    "thermal_voltage",
    "equilibrium_densities",
    "debye_length",
    "poisson_factor",
]

_EXP_CLAMP = 60.0


def _table(pairs) -> tuple[tuple[float, float], ...]:
    """Normalise a mapping or pair sequence into a sorted, hashable table."""
    if isinstance(pairs, Mapping):
        pairs = pairs.items()
    return tuple(sorted((float(k), float(v)) for k, v in pairs))


def _lookup(table, wavelength_nm: float, what: str) -> float:
    for lam, value in table:
        if abs(lam - wavelength_nm) < 1e-6:
            return value
    known = ", ".join(f"{lam:g}" for lam, _ in table) or "none"
    raise KeyError(f"no tabulated {what} at {wavelength_nm:g} nm (known: {known})")


def thermal_voltage(T: float) -> float:
    """Return kT/e in volts.

    Parameters
    ----------
    T : float
        Temperature in kelvin, must be positive.
    """
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    return CONST.boltzmann * T / CONST.elementary_charge


@dataclass(frozen=True)
class BulkMaterial:
    """Uniform bulk semiconductor.

    ``doping`` is signed: negative values are acceptor (p-type)
    concentrations, positive values donor (n-type) concentrations.
    ``absorption`` maps wavelength in nm to the bulk absorption
    coefficient alpha_b in cm^-1.
    """

    intrinsic_density: float = 1.0e10
    doping: float = -1.0e15
    electron_mobility: float = 1340.0
    hole_mobility: float = 284.0
    dielectric_constant: float = 11.7
    temperature: float = 300.0
    thermal_velocity: float = 1.0e7
    absorption: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "absorption", _table(self.absorption))
        for name in ("intrinsic_density", "electron_mobility", "hole_mobility",
                     "dielectric_constant", "temperature", "thermal_velocity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if any(a < 0 for _, a in self.absorption):
            raise ValueError("absorption coefficients must be non-negative")

    def alpha_b(self, wavelength_nm: float) -> float:
        """Bulk absorption coefficient [cm^-1] at a tabulated wavelength."""
        return _lookup(self.absorption, wavelength_nm, "bulk absorption")

    @property
    def vt(self) -> float:
        return thermal_voltage(self.temperature)

    @property
    def diffusivities(self) -> tuple[float, float]:
        """Einstein relation D = mu kT/e for electrons and holes [cm^2/s]."""
        return self.electron_mobility * self.vt, self.hole_mobility * self.vt


@dataclass(frozen=True)
class BulkTrap:
    """Bulk SRH recombination centre."""

    density: float = 1.0e13
    sigma_n: float = 1.0e-15
    sigma_p: float = 1.0e-15
    energy: float = 0.0  # eV from mid-gap

    def __post_init__(self):
        if not (self.density > 0 and self.sigma_n > 0 and self.sigma_p > 0):
            raise ValueError("trap density and cross sections must be positive")
        if abs(self.energy) >= 0.56:
            raise ValueError("trap level must lie inside the gap")

    def lifetimes(self, v_th: float) -> tuple[float, float]:
        """tau_n0, tau_p0 = 1/(sigma N_b v)."""
        return (1.0 / (self.sigma_n * self.density * v_th),
                1.0 / (self.sigma_p * self.density * v_th))


@dataclass(frozen=True)
class Illumination:
    photon_flux: float  # cm^-2 s^-1
    wavelength_nm: float

    def __post_init__(self):
        if self.photon_flux < 0:
            raise ValueError("photon flux must be non-negative")
        if not self.wavelength_nm > 0:
            raise ValueError("wavelength must be positive")

    @property
    def photon_energy(self) -> float:
        """Photon energy in eV."""
        return HC_EV_NM / self.wavelength_nm


@dataclass(frozen=True)
class SlabGeometry:
    """Slab of thickness ``thickness_um`` with optional explicit nodes in cm."""

    thickness_um: float = 500.0
    nodes: tuple | None = None

    def __post_init__(self):
        if not self.thickness_um > 0:
            raise ValueError("thickness must be positive")
        if self.nodes is not None:
            x = np.asarray(self.nodes, dtype=float)
            if x[0] != 0.0 or not np.isclose(x[-1], self.thickness_cm, rtol=0, atol=1e-15):
                raise ValueError("nodes must start at 0 and end at the slab thickness")
            if np.any(np.diff(x) <= 0):
                raise ValueError("nodes must be strictly increasing")
            object.__setattr__(self, "nodes", tuple(x))

    @property
    def thickness_cm(self) -> float:
        return self.thickness_um * 1e-4


@dataclass(frozen=True)
class InterfaceState:
    """Discrete interface (fast surface) state.

    ``energy`` is in eV relative to mid-gap (negative = below). Optical cross
    sections are wavelength tables in cm^2; missing hole entries read as 0.
    """

    density: float = 2.7e11
    sigma_n_capture: float = 6.48e-24
    sigma_p_capture: float = 6.48e-24
    energy: float = -0.39
    polarity: str = "donor"
    optical_n: tuple = ()
    optical_p: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "optical_n", _table(self.optical_n))
        object.__setattr__(self, "optical_p", _table(self.optical_p))
        if self.polarity not in ("donor", "acceptor"):
            raise ValueError("polarity must be 'donor' or 'acceptor'")
        if self.density < 0 or self.sigma_n_capture < 0 or self.sigma_p_capture < 0:
            raise ValueError("densities and cross sections must be non-negative")

    def sigma_n_optical(self, wavelength_nm: float) -> float:
        return _lookup(self.optical_n, wavelength_nm, "electron optical cross section")

    def sigma_p_optical(self, wavelength_nm: float) -> float:
        try:
            return _lookup(self.optical_p, wavelength_nm, "hole optical cross section")
        except KeyError:
            return 0.0

    def with_density(self, density: float) -> "InterfaceState":
        return replace(self, density=density)


@dataclass(frozen=True)
class FixedSurfaceCharge:
    density: float = 1.0e11  # signed cm^-2, positive = positive oxide charge


@dataclass(frozen=True)
class MaterialSystem:
    """Everything the steady-state solver needs about the sample."""

    bulk: BulkMaterial = field(default_factory=BulkMaterial)
    trap: BulkTrap = field(default_factory=BulkTrap)
    interface: InterfaceState = field(default_factory=InterfaceState)
    fixed: FixedSurfaceCharge = field(default_factory=FixedSurfaceCharge)
    slab: SlabGeometry = field(default_factory=SlabGeometry)

    def replace(self, **changes) -> "MaterialSystem":
        return replace(self, **changes)


def equilibrium_densities(mat: BulkMaterial) -> tuple[float, float, float]:
    """Equilibrium bulk densities for full ionisation.

    Returns
    -------
    n_b, p_b : float
        Electron and hole densities [cm^-3], with n_b p_b = n_i^2.
    u_F : float
        Dimensionless Fermi potential, positive for p-type.
    """
    ni = mat.intrinsic_density
    if mat.doping == 0:
        return ni, ni, 0.0
    if abs(mat.doping) < 100 * ni:
        raise ValueError("doping must be zero or much larger than n_i (full ionisation)")
    if mat.doping < 0:
        p_b = -mat.doping
        n_b = ni * ni / p_b
        u_F = math.log(p_b / ni)
    else:
        n_b = mat.doping
        p_b = ni * ni / n_b
        u_F = -math.log(n_b / ni)
    return n_b, p_b, u_F


def poisson_factor(mat: BulkMaterial) -> float:
    """beta e / (eps0 eps) in cm (so that factor * density[cm^-3] is cm^-2)."""
    eps = CONST.vacuum_permittivity * mat.dielectric_constant  # F/m
    beta = 1.0 / mat.vt
    # density in cm^-3 -> m^-3 is *1e6; d2u/dx2 in m^-2 -> cm^-2 is *1e-4
    return beta * CONST.elementary_charge / eps * 1e6 * 1e-4


def debye_length(mat: BulkMaterial, reference_density: float) -> float:
    """Debye length (eps0 eps / (beta e n_X))^1/2 in cm."""
    if not reference_density > 0:
        raise ValueError("reference density must be positive")
    return 1.0 / math.sqrt(poisson_factor(mat) * reference_density)


def clamp_exp(x: float) -> float:
    """exp with the argument clamped to +-60, used for trap level factors."""
    return math.exp(max(-_EXP_CLAMP, min(_EXP_CLAMP, x)))
