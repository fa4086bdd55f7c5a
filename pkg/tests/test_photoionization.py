import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants as sc
from scipy.integrate import quad

from spvtrap.photoionization import (HulthenParams, cross_section, ground_state,
                                     hulthen_potential, normalized_spectrum, peak_energy,
                                     surface_absorption)


def test_coulomb_limit():
    x = 1e-7
    p = HulthenParams(a=1e-6, lam=1e-8)
    coulomb = -sc.e / (4 * math.pi * sc.epsilon_0 * 11.7 * x * 1e-2)
    assert hulthen_potential(x, p) == pytest.approx(coulomb, rel=1e-2)
    with pytest.raises(ValueError):
        hulthen_potential(0.0, p)


def test_potential_screened_tail():
    p = HulthenParams()
    x = np.array([10, 20]) * p.screening_length
    v = hulthen_potential(x, p)
    assert v[1] / v[0] == pytest.approx(math.exp(-10), rel=1e-3)


@pytest.mark.parametrize("lam", [0.1, 0.64, 1.5])
def test_ground_state_normalised(lam):
    p = HulthenParams(lam=lam)
    psi = ground_state(p)
    # integrate in units of a up to where the tail is below 1e-30
    norm = quad(lambda y: 4 * math.pi * (y * p.a) ** 2 * psi(y * p.a) ** 2 * p.a,
                0, 80 / (1 - lam / 2), limit=200, epsabs=0, epsrel=1e-12)[0]
    assert norm == pytest.approx(1.0, rel=1e-8)
    assert math.isfinite(psi(0.0))
    assert psi(1e-14) == pytest.approx(psi(0.0), rel=1e-5)


def test_ground_state_log_slope():
    p = HulthenParams(lam=0.64)
    psi = ground_state(p)
    x = np.linspace(40, 60, 21) * p.a
    slope = np.polyfit(x, np.log(psi(x) * x), 1)[0]
    assert slope == pytest.approx(-(1 - p.lam / 2) / p.a, rel=1e-6)


def test_threshold():
    p = HulthenParams()
    assert cross_section(p.E_io, p) == 0.0
    assert np.all(cross_section(np.linspace(0.1, p.E_io, 50), p) == 0.0)
    # t^{3/2} onset just above threshold
    s1, s2 = cross_section(p.E_io * (1 + 1e-6), p), cross_section(p.E_io * (1 + 4e-6), p)
    assert s2 / s1 == pytest.approx(8.0, rel=1e-3)
    with pytest.raises(ValueError):
        cross_section(0.0, p)
    with pytest.raises(ValueError):
        HulthenParams(lam=2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-8, 5e-7), st.floats(0.05, 1.9), st.floats(0.5, 1.5))
def test_normalised_spectrum_peak(a, lam, E_io):
    p = HulthenParams(a=a, lam=lam, E_io=E_io)
    tab = normalized_spectrum(p, np.linspace(0.3, 6.0, 300))
    assert np.all(tab[:, 2] <= 1 + 1e-12)
    assert np.all(tab[:, 1] >= 0)
    assert np.all(tab[tab[:, 0] <= E_io, 1] == 0)


def test_peak_energy_is_maximum():
    p = HulthenParams()
    e = peak_energy(p)
    s = cross_section(e, p)
    assert s >= cross_section(e * 1.001, p) and s >= cross_section(e * 0.999, p)
    assert e > p.E_io


def test_surface_absorption():
    assert surface_absorption(3.24e-15, 2.7e11) == pytest.approx(8.75e-4, rel=1e-3)
    assert surface_absorption(3.24e-15, 0.0) == 0.0
    with pytest.raises(ValueError):
        surface_absorption(-1.0, 1.0)
