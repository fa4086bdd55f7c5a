"""Interface-state occupation, surface rates and the potential gradients they impose.

Gradients are in dimensionless potential u = phi/(kT/e) per cm, with x
pointing from the illuminated surface (x = 0) into the slab.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .params import BulkMaterial, InterfaceState, clamp_exp, poisson_factor

__all__ = [
    "OccupationState",
    "recombination_velocities",
    "level_densities",
    "steady_occupation",
    "fermi_occupation",
    "rate_equation_residual",
    "equilibrium_boundary_gradient",
    "excess_boundary_gradient",
    "neutrality_gradient_profile",
]


@dataclass(frozen=True)
class OccupationState:
    f_s_equilibrium: float
    f_s_steady: float
    U_s: float  # cm^-2 s^-1, positive = net capture

    @property
    def delta_f(self) -> float:
        return self.f_s_steady - self.f_s_equilibrium


def recombination_velocities(ifs: InterfaceState, v_n: float, v_p: float | None = None):
    """Surface recombination velocities s_n0 = sigma_n Sigma_fs v_n and s_p0 [cm/s]."""
    v_p = v_n if v_p is None else v_p
    if v_n <= 0 or v_p <= 0:
        raise ValueError("thermal velocities must be positive")
    return ifs.sigma_n_capture * ifs.density * v_n, ifs.sigma_p_capture * ifs.density * v_p


def level_densities(ifs: InterfaceState, mat: BulkMaterial) -> tuple[float, float]:
    """n_1 = n_i exp(E_fs/kT) and p_1 = n_i exp(-E_fs/kT), exponent clamped at 60."""
    x = ifs.energy / mat.vt
    return mat.intrinsic_density * clamp_exp(x), mat.intrinsic_density * clamp_exp(-x)


def _starred(ifs, mat, N0, wavelength_nm, s_n0, s_p0):
    n1, p1 = level_densities(ifs, mat)
    if N0 > 0:
        n_o = ifs.sigma_n_optical(wavelength_nm) * ifs.density * N0
        p_o = ifs.sigma_p_optical(wavelength_nm) * ifs.density * N0
    else:
        n_o = p_o = 0.0
    n1s = n1 + (n_o / s_n0 if n_o else 0.0)
    p1s = p1 + (p_o / s_p0 if p_o else 0.0)
    return n1s, p1s


def _occupation_and_rate(n, p, n1s, p1s, s_n0, s_p0):
    # denominators use 1/s; written multiplied through by s_n0 s_p0 to survive s -> 0 in one channel
    num_f = s_n0 * n + s_p0 * p1s
    den = s_n0 * (n + n1s) + s_p0 * (p + p1s)
    f = num_f / den
    U = s_n0 * s_p0 * (n * p - n1s * p1s) / den
    return f, U


def steady_occupation(ifs: InterfaceState, mat: BulkMaterial, n_surface, p_surface,
                      N0: float = 0.0, wavelength_nm: float | None = None,
                      n_eq=None, p_eq=None) -> OccupationState:
    """Steady occupation of the interface state and the net surface rate.

    Parameters
    ----------
    ifs, mat
        Interface state and bulk material (for n_i, kT, v_th).
    n_surface, p_surface : float
        Carrier densities at x = 0 [cm^-3].
    N0 : float
        Photon flux [cm^-2 s^-1]; requires ``wavelength_nm`` when positive.
    n_eq, p_eq : float, optional
        Equilibrium surface densities for f_s_equilibrium. Default: the
        same n, p without illumination.

    Returns
    -------
    OccupationState
    """
    if n_surface < 0 or p_surface < 0:
        raise ValueError("carrier densities must be non-negative")
    s_n0, s_p0 = recombination_velocities(ifs, mat.thermal_velocity)
    if s_n0 == 0 and s_p0 == 0:
        raise ValueError("occupation undefined when both recombination velocities vanish")
    if N0 > 0 and wavelength_nm is None:
        raise ValueError("wavelength needed for a non-zero photon flux")
    n1s, p1s = _starred(ifs, mat, N0, wavelength_nm, s_n0, s_p0)
    f, U = _occupation_and_rate(n_surface, p_surface, n1s, p1s, s_n0, s_p0)
    n1, p1 = level_densities(ifs, mat)
    n0 = n_surface if n_eq is None else n_eq
    p0 = p_surface if p_eq is None else p_eq
    f0, _ = _occupation_and_rate(n0, p0, n1, p1, s_n0, s_p0)
    return OccupationState(float(f0), float(f), float(U))


def fermi_occupation(ifs: InterfaceState, mat: BulkMaterial, u_surface: float, u_F: float) -> float:
    """Detailed-balance Fermi factor of the level for a surface potential u(0).

    The electron Fermi level sits at -u_F (energy, units of kT) and the level
    at E_fs/kT - u(0), so f = 1/(1 + exp(E_fs/kT - u(0) + u_F)).
    """
    arg = ifs.energy / mat.vt - u_surface + u_F
    return 1.0 / (1.0 + clamp_exp(arg))


def rate_equation_residual(ifs: InterfaceState, mat: BulkMaterial, f, n, p,
                           N0=0.0, wavelength_nm=None) -> float:
    """df_s/dt from the capture/emission balance, divided by Sigma_fs.

    Each rate R, G carries dimensions of a flux per area; dividing by the
    state density makes it a probability rate. Returns (U_n - U_p)/Sigma_fs
    where U_n = R_n - G_n, U_p = R_p - G_p; zero at the steady occupation.
    """
    s_n0, s_p0 = recombination_velocities(ifs, mat.thermal_velocity)
    n1, p1 = level_densities(ifs, mat)
    n_o = ifs.sigma_n_optical(wavelength_nm) * ifs.density * N0 if N0 > 0 else 0.0
    p_o = ifs.sigma_p_optical(wavelength_nm) * ifs.density * N0 if N0 > 0 else 0.0
    R_n = s_n0 * n * (1 - f)
    G_n = (s_n0 * n1 + n_o) * f
    R_p = s_p0 * p * f
    G_p = (s_p0 * p1 + p_o) * (1 - f)
    scale = max(abs(R_n), abs(G_n), abs(R_p), abs(G_p), 1e-300)
    return ((R_n - G_n) - (R_p - G_p)) / scale


def _charge_sign(ifs: InterfaceState, f):
    """Interface charge per state in units of e: +(1-f) donor, -f acceptor."""
    return (1.0 - f) if ifs.polarity == "donor" else -f


def equilibrium_boundary_gradient(mat: BulkMaterial, sigma_ss: float,
                                  ifs: InterfaceState | None, f_s_eq: float = 1.0) -> float:
    """du0/dx at x = 0 [cm^-1] from fixed and interface charge (Gauss law).

    A positive surface sheet charge Q bends the potential down into the bulk:
    du/dx = -beta Q / (eps0 eps).
    """
    if not 0.0 <= f_s_eq <= 1.0:
        raise ValueError("occupation must lie in [0, 1]")
    q = sigma_ss
    if ifs is not None:
        q += ifs.density * _charge_sign(ifs, f_s_eq)
    return -poisson_factor(mat) * q


def excess_boundary_gradient(mat: BulkMaterial, ifs: InterfaceState, delta_f: float) -> float:
    """d(delta u)/dx at x = 0 = beta e Sigma_fs delta_f / (eps0 eps) [cm^-1]."""
    if not -1.0 <= delta_f <= 1.0:
        raise ValueError("delta_f must lie in [-1, 1]")
    return poisson_factor(mat) * ifs.density * delta_f


def neutrality_gradient_profile(mat: BulkMaterial, x, dn, dp, ifs: InterfaceState | None,
                                delta_f: float, x_eval=None):
    """Excess field implied by the interface charge minus the enclosed space charge.

    Returns d(delta u)/dx at ``x_eval`` (default: every node) using trapezoid
    quadrature of dp - dn from 0. At x = l this vanishes for a globally
    neutral solution.
    """
    x = np.asarray(x, float)
    rho = np.asarray(dp, float) - np.asarray(dn, float)
    enclosed = cumulative_trapezoid(rho, x, initial=0.0)
    sheet = (ifs.density * delta_f) if ifs is not None else 0.0
    g = poisson_factor(mat) * (sheet - enclosed)
    if x_eval is None:
        return g
    return np.interp(x_eval, x, g)
