"""Physical constants shared by every module (SI units)."""

from dataclasses import dataclass

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA values in SI units. Instantiated once as :data:`CONST`."""

    elementary_charge: float = _sc.e  # C
    boltzmann: float = _sc.k  # J/K
    vacuum_permittivity: float = _sc.epsilon_0  # F/m
    reduced_planck: float = _sc.hbar  # J s
    electron_mass: float = _sc.m_e  # kg
    fine_structure: float = _sc.alpha
    atomic_mass_unit: float = _sc.atomic_mass  # kg
    speed_of_light: float = _sc.c  # m/s

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"constant {name} must be positive")


CONST = PhysicalConstants()

# photon energy [eV] * wavelength [nm]
HC_EV_NM = _sc.h * _sc.c / _sc.e * 1e9
