import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants as sc

from spvtrap.config import material_from_config, material_to_config, table2
from spvtrap.params import (BulkMaterial, Illumination, InterfaceState, SlabGeometry,
                            debye_length, equilibrium_densities, poisson_factor, thermal_voltage)


def test_thermal_voltage():
    assert thermal_voltage(300) == pytest.approx(0.025852, abs=5e-7)
    assert thermal_voltage(600) == pytest.approx(2 * thermal_voltage(300), rel=1e-15)
    with pytest.raises(ValueError):
        thermal_voltage(0)


def test_p_type_densities():
    n_b, p_b, u_F = equilibrium_densities(BulkMaterial())
    assert p_b == 1e15
    assert n_b == pytest.approx(1e5, rel=1e-14)
    assert u_F == pytest.approx(math.log(1e5), rel=1e-14)
    assert u_F * thermal_voltage(300) == pytest.approx(0.2976, abs=2e-4)


def test_intrinsic_densities():
    n_b, p_b, u_F = equilibrium_densities(BulkMaterial(doping=0.0))
    assert n_b == p_b == 1e10
    assert u_F == 0


@given(st.floats(-1e19, 1e19).filter(lambda d: d == 0 or abs(d) > 1e12))
def test_mass_action(doping):
    n_b, p_b, _ = equilibrium_densities(BulkMaterial(doping=doping))
    assert n_b * p_b / 1e20 == pytest.approx(1.0, rel=1e-12)


def test_debye_length_reference():
    # independent SI evaluation of sqrt(eps0 eps kT / (e^2 n))
    lam = math.sqrt(sc.epsilon_0 * 11.7 * sc.k * 300 / (sc.e ** 2 * 1e21))  # m, n = 1e15 cm^-3
    mat = BulkMaterial()
    assert debye_length(mat, 1e15) == pytest.approx(lam * 100, rel=1e-12)
    assert debye_length(mat, 1e15) * 1e4 == pytest.approx(0.129, abs=1e-3)
    assert debye_length(mat, 1e10) * 1e4 == pytest.approx(40.9, abs=0.1)
    assert debye_length(mat, 4e15) == pytest.approx(debye_length(mat, 1e15) / 2, rel=1e-14)


@given(st.floats(1e5, 1e20))
def test_debye_scaling(n):
    mat = BulkMaterial()
    c = debye_length(mat, 1e15) * math.sqrt(1e15)
    assert debye_length(mat, n) * math.sqrt(n) == pytest.approx(c, rel=1e-12)


def test_poisson_factor_units():
    # beta e^2 / (eps0 eps): m^3 -> cm^3 (1e6), then m^-2 -> cm^-2 (1e-4)
    pf = poisson_factor(BulkMaterial())
    ref = sc.e / (sc.k * 300) * sc.e / (sc.epsilon_0 * 11.7) * 1e6 * 1e-4
    assert pf == pytest.approx(ref, rel=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        Illumination(-1.0, 1055)
    with pytest.raises(ValueError):
        InterfaceState(polarity="neutral")
    with pytest.raises(ValueError):
        SlabGeometry(thickness_um=0)
    with pytest.raises(KeyError):
        BulkMaterial().alpha_b(1055)


def test_table2_round_trip():
    ms = table2()
    again = material_from_config(material_to_config(ms))
    assert again == ms
    assert ms.interface.density == 2.7e11
    assert ms.interface.sigma_n_optical(1055) == 3.24e-15
    assert ms.bulk.alpha_b(1055) == 16.3
    assert ms.fixed.density == 1e11
