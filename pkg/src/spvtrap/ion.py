"""From surface photovoltage to stray field, compensation voltage and ion motion."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import CONST

__all__ = [
    "ElectrostaticMap",
    "TrapMechanics",
    "spv_to_field",
    "field_to_compensation_voltage",
    "compensation_to_spv",
    "field_to_displacement",
    "doppler_shift",
    "velocity_from_shift",
    "lamb_dicke",
    "counterpropagating_wavevector",
    "perpendicular_wavevector",
]


@dataclass(frozen=True)
class ElectrostaticMap:
    """Field at the ion per volt on the silicon surface and per volt on the inner dc pair."""

    field_per_surface_volt: float = 1055.0  # V/m per V
    field_per_dc_volt: float = 2880.0  # V/m per V

    def __post_init__(self):
        if not (self.field_per_surface_volt > 0 and self.field_per_dc_volt > 0):
            raise ValueError("field ratios must be positive")

    @property
    def ratio(self) -> float:
        return self.field_per_dc_volt / self.field_per_surface_volt


@dataclass(frozen=True)
class TrapMechanics:
    ion_mass_amu: float = 171.0
    secular_frequency: float = 2 * math.pi * 1.6e6  # rad/s
    delta_k: float = 2 * 2 * math.pi / 355e-9  # 1/m

    def __post_init__(self):
        if not (self.ion_mass_amu > 0 and self.secular_frequency > 0 and self.delta_k >= 0):
            raise ValueError("mass and frequency must be positive, delta_k non-negative")

    @property
    def mass(self) -> float:
        return self.ion_mass_amu * CONST.atomic_mass_unit

    @property
    def x0(self) -> float:
        """Zero-point width (hbar / 2 M w)^1/2 [m]."""
        return math.sqrt(CONST.reduced_planck / (2 * self.mass * self.secular_frequency))


def spv_to_field(spv, emap: ElectrostaticMap = ElectrostaticMap()):
    """Stray field at the ion [V/m] for a surface photovoltage [V]."""
    return emap.field_per_surface_volt * spv


def field_to_compensation_voltage(field, emap: ElectrostaticMap = ElectrostaticMap()):
    """Inner dc voltage that cancels ``field``; opposite sign to the field."""
    return -field / emap.field_per_dc_volt


def compensation_to_spv(dv_dc, emap: ElectrostaticMap = ElectrostaticMap()):
    """Surface photovoltage implied by a measured compensation voltage (signed)."""
    return -dv_dc * emap.ratio


def field_to_displacement(field, mech: TrapMechanics = TrapMechanics()):
    """Static displacement e E / (M w^2) [m] in the pseudopotential approximation."""
    return CONST.elementary_charge * field / (mech.mass * mech.secular_frequency ** 2)


def doppler_shift(delta_k: float, velocity):
    """Frequency shift delta_k v / 2 pi [Hz] for a velocity along delta_k [m/s]."""
    return delta_k * velocity / (2 * math.pi)


def velocity_from_shift(delta_k: float, shift_hz):
    if delta_k <= 0:
        raise ValueError("delta_k must be positive")
    return 2 * math.pi * shift_hz / delta_k


def lamb_dicke(mech: TrapMechanics = TrapMechanics()) -> float:
    return mech.delta_k * mech.x0


def counterpropagating_wavevector(wavelength_m: float) -> float:
    return 2 * 2 * math.pi / wavelength_m


def perpendicular_wavevector(wavelength_m: float) -> float:
    """|k1 - k2| for two beams at right angles: sqrt(2) k."""
    return math.sqrt(2) * 2 * math.pi / wavelength_m
