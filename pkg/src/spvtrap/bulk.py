"""Closed-form low-excitation solutions for a uniform slab without surface charge.

The excess densities obey the coupled pair

    dn'' - dn/S_n^2 + dp/K_n^2 = -G/D_n
    dp'' - dp/S_p^2 + dn/K_p^2 = -G/D_p

(Poisson absorbed into the continuity equations). These routines give the
length parameters, spatial and temporal eigenmodes, and the stationary
profile for Beer-Lambert generation with zero-flux boundaries. They double
as the oracle for the numerical drift-diffusion solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import BulkMaterial, debye_length, equilibrium_densities

__all__ = [
    "LengthParams",
    "SpatialModes",
    "TemporalModes",
    "StationaryProfile",
    "length_params",
    "spatial_eigenmodes",
    "stationary_profile",
    "temporal_eigenvalues",
    "general_modes",
    "relaxation_curves",
    "dielectric_relaxation_time",
    "srh_equivalent_tau",
]

_KINDS = ("intrinsic", "p", "n", "general")


@dataclass(frozen=True)
class LengthParams:
    """Inverse squared lengths of the coupled excess-carrier equations [cm^-2]."""

    inv_Sn2: float
    inv_Kn2: float
    inv_Sp2: float
    inv_Kp2: float
    kind: str
    tau_eff: float
    l_n: float
    l_p: float
    l_n_ext: float
    l_p_ext: float
    lambda_Dn: float
    lambda_Dp: float
    chi_n: float
    chi_p: float

    def matrix(self) -> np.ndarray:
        """M such that d2/dx2 [dn, dp] = M [dn, dp] for G = 0."""
        return np.array([[self.inv_Sn2, -self.inv_Kn2], [-self.inv_Kp2, self.inv_Sp2]])

    @property
    def S_n(self):
        return _len(self.inv_Sn2)

    @property
    def S_p(self):
        return _len(self.inv_Sp2)

    @property
    def K_n(self):
        return _len(self.inv_Kn2)

    @property
    def K_p(self):
        return _len(self.inv_Kp2)


def _len(inv2):
    return math.inf if inv2 == 0 else math.copysign(1.0 / math.sqrt(abs(inv2)), inv2)


def srh_equivalent_tau(mat: BulkMaterial, trap) -> float:
    """tau_eff such that (n_i tau_eff)^-1 (n_b dp + p_b dn) is the linearised SRH rate."""
    n_b, p_b, _ = equilibrium_densities(mat)
    tn, tp = trap.lifetimes(mat.thermal_velocity)
    n1 = mat.intrinsic_density * math.exp(trap.energy / mat.vt)
    p1 = mat.intrinsic_density * math.exp(-trap.energy / mat.vt)
    return (tn * (p_b + p1) + tp * (n_b + n1)) / mat.intrinsic_density


def length_params(mat: BulkMaterial, tau_eff: float, kind: str = "general") -> LengthParams:
    """Length parameters for one semiconductor type.

    The general column keeps every term. The intrinsic, p and n columns drop
    the terms that are negligible in that regime. Extrinsic diffusion lengths
    weight tau_eff with the density ratio of the opposite carrier:
    l_n' = (D_n chi_p tau_eff)^1/2 and l_p' = (D_p chi_n tau_eff)^1/2, which
    makes l_n' the minority diffusion length in p-type material.
    """
    if not tau_eff > 0:
        raise ValueError("tau_eff must be positive")
    if kind not in _KINDS:
        raise ValueError(f"unknown semiconductor type {kind!r}; expected one of {_KINDS}")
    D_n, D_p = mat.diffusivities
    ni = mat.intrinsic_density
    if kind == "intrinsic":
        n_b = p_b = ni
    else:
        n_b, p_b, _ = equilibrium_densities(mat)
    chi_n, chi_p = ni / n_b, ni / p_b
    lam_n, lam_p = debye_length(mat, n_b), debye_length(mat, p_b)
    l_n, l_p = math.sqrt(D_n * tau_eff), math.sqrt(D_p * tau_eff)
    l_n_ext, l_p_ext = math.sqrt(D_n * chi_p * tau_eff), math.sqrt(D_p * chi_n * tau_eff)

    inv_Sn2 = lam_n ** -2 + 1.0 / (chi_p * l_n ** 2)
    inv_Kn2 = lam_n ** -2 - 1.0 / (chi_n * l_n ** 2)
    inv_Sp2 = lam_p ** -2 + 1.0 / (chi_n * l_p ** 2)
    inv_Kp2 = lam_p ** -2 - 1.0 / (chi_p * l_p ** 2)
    if kind == "p":
        inv_Sn2, inv_Kn2, inv_Sp2 = l_n_ext ** -2, 0.0, lam_p ** -2
    elif kind == "n":
        inv_Sn2, inv_Sp2, inv_Kp2 = lam_n ** -2, l_p_ext ** -2, 0.0
    return LengthParams(inv_Sn2, inv_Kn2, inv_Sp2, inv_Kp2, kind, tau_eff, l_n, l_p,
                        l_n_ext, l_p_ext, lam_n, lam_p, chi_n, chi_p)


def _eig2(a, b, c, d):
    """Ordered eigenvalues of [[a, b], [c, d]] with real spectrum.

    The smaller root comes from det / larger to avoid cancellation.
    """
    half_tr = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc < 0:
        if disc > -1e-12 * half_tr ** 2:
            disc = 0.0
        else:
            raise ValueError("negative discriminant: complex modes for these parameters")
    big = half_tr + math.sqrt(disc)
    det = a * d - b * c
    small = det / big if big != 0 else half_tr - math.sqrt(disc)
    return big, small


def _eigvec(a, b, c, d, lam):
    """Eigenvector of [[a, b], [c, d]] for ``lam``, first component 1 when possible."""
    # rows: (a - lam) v1 + b v2 = 0 ; c v1 + (d - lam) v2 = 0
    r1 = abs(a - lam) + abs(b)
    r2 = abs(c) + abs(d - lam)
    if r1 >= r2:
        v = np.array([b, lam - a]) if r1 > 0 else np.array([1.0, 0.0])
    else:
        v = np.array([lam - d, c]) if r2 > 0 else np.array([1.0, 0.0])
    scale = np.max(np.abs(v))
    v = v / scale
    if abs(v[0]) > 1e-14:
        return v / v[0]
    return v / v[1]


@dataclass(frozen=True)
class SpatialModes:
    xi_plus: float
    xi_minus: float
    v: np.ndarray  # eigenvector of xi_plus
    u: np.ndarray  # eigenvector of xi_minus

    @property
    def r_plus(self) -> float:
        return 1.0 / math.sqrt(self.xi_plus)

    @property
    def r_minus(self) -> float:
        return 1.0 / math.sqrt(self.xi_minus)


def spatial_eigenmodes(lp: LengthParams) -> SpatialModes:
    """Spatial decay constants xi_+ >= xi_- [cm^-2] and their eigenvectors."""
    a, b, c, d = lp.inv_Sn2, -lp.inv_Kn2, -lp.inv_Kp2, lp.inv_Sp2
    xp, xm = _eig2(a, b, c, d)
    return SpatialModes(xp, xm, _eigvec(a, b, c, d, xp), _eigvec(a, b, c, d, xm))


@dataclass(frozen=True)
class StationaryProfile:
    """Stationary excess densities under Beer-Lambert generation.

    Each mode k is written as ``a_k exp(-x/r_k) + b_k exp(-(l-x)/r_k)`` which
    never overflows. ``A``/``B`` hold the equivalent cosh/sinh coefficients.
    """

    modes: SpatialModes
    N0: float
    alpha_b: float
    l: float
    D_n: float
    D_p: float
    C_n: float
    C_p: float
    W: float
    Y: float
    a: np.ndarray  # (2,) coefficients of exp(-x/r) for (+, -)
    b: np.ndarray  # (2,) coefficients of exp(-(l-x)/r)
    A: np.ndarray  # (2,) cosh coefficients (A+, A-)
    B: np.ndarray  # (2,) sinh coefficients (B+, B-)
    lp: LengthParams

    def _basis(self, x):
        x = np.asarray(x, float)
        r = np.array([self.modes.r_plus, self.modes.r_minus])
        e0 = np.exp(-x[..., None] / r)
        e1 = np.exp(-(self.l - x[..., None]) / r)
        return x, r, e0, e1

    def densities(self, x):
        """(dn, dp) at positions x [cm]."""
        x, r, e0, e1 = self._basis(x)
        amp = self.a * e0 + self.b * e1  # (..., 2)
        g = np.exp(-self.alpha_b * x)
        dn = amp[..., 0] * self.modes.v[0] + amp[..., 1] * self.modes.u[0] + self.C_n * g
        dp = amp[..., 0] * self.modes.v[1] + amp[..., 1] * self.modes.u[1] + self.C_p * g
        return dn, dp

    def dn(self, x):
        return self.densities(x)[0]

    def dp(self, x):
        return self.densities(x)[1]

    def derivatives(self, x, order: int = 1):
        """order-th spatial derivative of (dn, dp)."""
        x, r, e0, e1 = self._basis(x)
        amp = self.a * e0 * (-1.0 / r) ** order + self.b * e1 * (1.0 / r) ** order
        g = (-self.alpha_b) ** order * np.exp(-self.alpha_b * x)
        dn = amp[..., 0] * self.modes.v[0] + amp[..., 1] * self.modes.u[0] + self.C_n * g
        dp = amp[..., 0] * self.modes.v[1] + amp[..., 1] * self.modes.u[1] + self.C_p * g
        return dn, dp

    def residual(self, x):
        """Residuals of both ODEs and the generation scale G/D_n at x."""
        dn, dp = self.densities(x)
        dn2, dp2 = self.derivatives(x, 2)
        G = self.N0 * self.alpha_b * np.exp(-self.alpha_b * np.asarray(x, float))
        lp = self.lp
        rn = dn2 - dn * lp.inv_Sn2 + dp * lp.inv_Kn2 + G / self.D_n
        rp = dp2 - dp * lp.inv_Sp2 + dn * lp.inv_Kp2 + G / self.D_p
        return rn, rp


def stationary_profile(lp: LengthParams, modes: SpatialModes, N0: float, alpha_b: float,
                       l: float, D_n: float, D_p: float) -> StationaryProfile:
    """Stationary solution with dn' = dp' = 0 at x = 0 and x = l.

    Parameters
    ----------
    lp, modes
        From :func:`length_params` and :func:`spatial_eigenmodes`.
    N0 : float
        Photon flux [cm^-2 s^-1].
    alpha_b : float
        Bulk absorption coefficient [cm^-1], must be positive.
    l : float
        Slab thickness [cm].
    D_n, D_p : float
        Diffusion coefficients [cm^2/s].
    """
    if not alpha_b > 0:
        raise ValueError("alpha_b must be positive")
    if not l > 0:
        raise ValueError("slab thickness must be positive")
    a2 = alpha_b ** 2
    for xi in (modes.xi_plus, modes.xi_minus):
        if abs(a2 - xi) <= 1e-12 * max(a2, xi):
            raise ValueError("alpha_b^2 coincides with a spatial eigenvalue (resonant particular solution)")
    sn, sp = lp.inv_Sn2 - a2, lp.inv_Sp2 - a2
    det = sn * sp - lp.inv_Kn2 * lp.inv_Kp2
    Y = N0 * alpha_b / det
    C_n = Y / (D_n * D_p) * (lp.inv_Kn2 * D_n + sp * D_p)
    C_p = Y / (D_n * D_p) * (sn * D_n + lp.inv_Kp2 * D_p)

    v, u = modes.v, modes.u
    W = v[0] * u[1] - v[1] * u[0]
    # project the particular amplitude onto the eigenbasis: [C_n, C_p] = c+ v + c- u
    c_plus = (u[1] * C_n - u[0] * C_p) / W
    c_minus = (v[0] * C_p - v[1] * C_n) / W
    r = np.array([modes.r_plus, modes.r_minus])
    c = np.array([c_plus, c_minus])
    E = np.exp(-l / r)
    ea = math.exp(-alpha_b * l)
    a = -alpha_b * r * c * (1.0 - E * ea) / (1.0 - E * E)
    b = alpha_b * r * c * ea + a * E
    A = a + b * E
    B = -a + b * E
    return StationaryProfile(modes, N0, alpha_b, l, D_n, D_p, C_n, C_p, W, Y, a, b, A, B, lp)


@dataclass(frozen=True)
class TemporalModes:
    gamma_plus: float
    gamma_minus: float
    eta: np.ndarray  # eigenvector of gamma_plus
    sigma: np.ndarray  # eigenvector of gamma_minus

    @property
    def tau_plus(self) -> float:
        return 1.0 / self.gamma_plus

    @property
    def tau_minus(self) -> float:
        return math.inf if self.gamma_minus == 0 else 1.0 / self.gamma_minus


def _rate_matrix(lp: LengthParams, D_n, D_p, k2=0.0):
    return (D_n * (lp.inv_Sn2 + k2), -D_n * lp.inv_Kn2,
            -D_p * lp.inv_Kp2, D_p * (lp.inv_Sp2 + k2))


def temporal_eigenvalues(lp: LengthParams, D_n: float, D_p: float) -> TemporalModes:
    """Decay rates of a spatially flat excess: gamma_+ (dielectric) >= gamma_- (lifetime)."""
    if not (D_n > 0 and D_p > 0):
        raise ValueError("diffusion coefficients must be positive")
    a, b, c, d = _rate_matrix(lp, D_n, D_p)
    gp, gm = _eig2(a, b, c, d)
    return TemporalModes(gp, gm, _eigvec(a, b, c, d, gp), _eigvec(a, b, c, d, gm))


def general_modes(lp: LengthParams, D_n: float, D_p: float, l: float, m_plus, m_minus):
    """Rates gamma_+(m_+) and gamma_-(m_-) of the cosine modes with wavenumber m pi / l.

    Accepts scalars or integer arrays; m = 0 reproduces
    :func:`temporal_eigenvalues` exactly.
    """
    mp = np.asarray(m_plus)
    mm = np.asarray(m_minus)
    if np.any(mp < 0) or np.any(mm < 0):
        raise ValueError("mode indices must be non-negative")

    def rates(m, which):
        out = np.empty(m.shape)
        for idx, mi in np.ndenumerate(m):
            k2 = (float(mi) * math.pi / l) ** 2
            out[idx] = _eig2(*_rate_matrix(lp, D_n, D_p, k2))[which]
        return out

    gp, gm = rates(mp, 0), rates(mm, 1)
    if gp.ndim == 0:
        gp = float(gp)
    if gm.ndim == 0:
        gm = float(gm)
    return gp, gm


def relaxation_curves(n_i_values, tau_eff: float, mu_n: float, mu_p: float,
                      dielectric_constant: float = 11.7, temperature: float = 300.0):
    """tau_+ and tau_- of an intrinsic material as n_i is swept.

    Returns an array with columns (n_i, tau_plus, tau_minus).
    """
    rows = []
    for ni in np.asarray(n_i_values, float):
        if not ni > 0:
            raise ValueError("n_i values must be positive")
        mat = BulkMaterial(intrinsic_density=ni, doping=0.0, electron_mobility=mu_n,
                           hole_mobility=mu_p, dielectric_constant=dielectric_constant,
                           temperature=temperature)
        lp = length_params(mat, tau_eff, "intrinsic")
        tm = temporal_eigenvalues(lp, *mat.diffusivities)
        rows.append((ni, tm.tau_plus, tm.tau_minus))
    return np.array(rows)


def dielectric_relaxation_time(mat: BulkMaterial) -> float:
    """Ohmic estimate eps0 eps / sigma with sigma = e (n mu_n + p mu_p) [s]."""
    from .constants import CONST

    n_b, p_b, _ = equilibrium_densities(mat)
    sigma = CONST.elementary_charge * (n_b * mat.electron_mobility + p_b * mat.hole_mobility) * 1e2  # S/m
    return CONST.vacuum_permittivity * mat.dielectric_constant / sigma
