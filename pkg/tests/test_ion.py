import math

import pytest
from hypothesis import given, strategies as st

from spvtrap.ion import (ElectrostaticMap, TrapMechanics, compensation_to_spv,
                         counterpropagating_wavevector, doppler_shift,
                         field_to_compensation_voltage, field_to_displacement, lamb_dicke,
                         perpendicular_wavevector, spv_to_field, velocity_from_shift)


def test_chain_reference_numbers():
    E = spv_to_field(0.273)
    assert E == pytest.approx(288, rel=0.01)
    assert field_to_compensation_voltage(E) == pytest.approx(-0.100, rel=0.01)
    assert field_to_displacement(E) == pytest.approx(1.6e-6, rel=0.05)


@given(st.floats(-5, 5))
def test_compensation_inverse(spv):
    back = compensation_to_spv(field_to_compensation_voltage(spv_to_field(spv)))
    assert back == pytest.approx(spv, rel=1e-12, abs=1e-300)


def test_doppler_and_lamb_dicke():
    dk = perpendicular_wavevector(355e-9)
    assert 2 * math.pi / dk == pytest.approx(251e-9, rel=2e-3)
    assert doppler_shift(dk, 3.3e-3) == pytest.approx(13.0e3, abs=0.5e3)
    assert velocity_from_shift(dk, doppler_shift(dk, 1.7e-3)) == pytest.approx(1.7e-3)
    mech = TrapMechanics()
    assert mech.delta_k == counterpropagating_wavevector(355e-9)
    assert lamb_dicke(mech) == pytest.approx(0.152, abs=0.002)
    assert mech.x0 == pytest.approx(4.3e-9, abs=0.1e-9)


def test_validation():
    with pytest.raises(ValueError):
        ElectrostaticMap(field_per_surface_volt=0)
    with pytest.raises(ValueError):
        TrapMechanics(ion_mass_amu=-1)
    with pytest.raises(ValueError):
        velocity_from_shift(0.0, 1.0)
