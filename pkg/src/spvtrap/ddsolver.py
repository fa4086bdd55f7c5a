"""Steady-state drift-diffusion solver for an illuminated slab with surface states.

The slab spans 0 <= x <= l with the illuminated, charged surface at x = 0
and a grounded back surface. Carrier densities are written through the
quasi-Fermi potentials, n = n_i e^{u - u_Fn} and p = n_i e^{u_Fp - u}, so
they stay positive at every Newton iterate. Edge fluxes use the
Scharfetter-Gummel (exponentially fitted) form

    j_n = -(D_n/h) B(-du) n_left expm1(-du_Fn)

which vanishes exactly in equilibrium and keeps full precision for tiny
excitations.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from . import kernels
from .params import (Illumination, MaterialSystem, clamp_exp, debye_length,
                     equilibrium_densities, poisson_factor)
from .surface import (fermi_occupation, level_densities, neutrality_gradient_profile,
                      recombination_velocities)

log = logging.getLogger(__name__)

__all__ = [
    "Mesh",
    "FieldState",
    "SolverConfig",
    "SteadyResult",
    "ConvergenceError",
    "make_mesh",
    "solve_equilibrium",
    "solve_steady_illuminated",
    "spectral_sweep",
    "flux_sweep",
    "validate_against_analytic",
]


class ConvergenceError(RuntimeError):
    """Newton iteration failed; ``history`` holds the scaled residual norms."""

    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


@dataclass(frozen=True)
class Mesh:
    x: np.ndarray  # node positions [cm]

    def __post_init__(self):
        x = np.asarray(self.x, float)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("mesh needs at least three nodes")
        if x[0] != 0.0 or np.any(np.diff(x) <= 0):
            raise ValueError("mesh must start at 0 and be strictly increasing")
        object.__setattr__(self, "x", x)

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.x)

    @property
    def volumes(self) -> np.ndarray:
        """Control-volume widths (half cells at the ends)."""
        h = self.h
        vol = np.zeros_like(self.x)
        vol[:-1] += h / 2
        vol[1:] += h / 2
        return vol

    @property
    def faces(self) -> np.ndarray:
        """Control-volume boundaries, length N + 1."""
        x = self.x
        return np.concatenate([[x[0]], 0.5 * (x[1:] + x[:-1]), [x[-1]]])

    @property
    def length(self) -> float:
        return float(self.x[-1])

    def refined(self) -> "Mesh":
        """Mesh with every spacing halved."""
        mid = 0.5 * (self.x[1:] + self.x[:-1])
        out = np.empty(2 * self.x.size - 1)
        out[0::2] = self.x
        out[1::2] = mid
        return Mesh(out)


def make_mesh(length_cm: float, first_cell: float, nodes: int = 400) -> Mesh:
    """Geometrically graded mesh, ``first_cell`` wide at x = 0.

    Falls back to a uniform mesh when the requested first cell is not
    smaller than the uniform spacing.
    """
    if not (length_cm > 0 and first_cell > 0):
        raise ValueError("length and first cell must be positive")
    if nodes < 3:
        raise ValueError("need at least three nodes")
    cells = nodes - 1
    if first_cell * cells >= length_cm:
        return Mesh(np.linspace(0.0, length_cm, nodes))

    def total(r):
        z = cells * math.log(r)
        if z > 700:
            return math.inf
        return first_cell * math.expm1(z) / (r - 1.0) - length_cm

    r = brentq(total, 1.0 + 1e-12, 2.0, xtol=1e-15, maxiter=500)
    steps = first_cell * r ** np.arange(cells)
    x = np.concatenate([[0.0], np.cumsum(steps)])
    x *= length_cm / x[-1]
    x[0] = 0.0
    return Mesh(x)


def default_mesh(ms: MaterialSystem, nodes: int = 400, first_cell_fraction: float = 1 / 20) -> Mesh:
    """Mesh whose first spacing is a fraction of the majority-carrier Debye length."""
    n_b, p_b, _ = equilibrium_densities(ms.bulk)
    lam = debye_length(ms.bulk, max(n_b, p_b))
    return make_mesh(ms.slab.thickness_cm, lam * first_cell_fraction, nodes)


@dataclass(frozen=True)
class SolverConfig:
    newton_tolerance: float = 1e-10  # scaled residual
    step_tolerance: float = 1e-11  # max |update| in units of kT/e
    max_iterations: int = 80
    max_step: float = 4.0  # update cap per iteration [kT/e]
    line_search_halvings: int = 12
    decade_step: float = 10.0
    min_ratio: float = 1.02
    start_flux: float = 1e6
    use_numba: bool | None = None

    def __post_init__(self):
        if not (self.newton_tolerance > 0 and self.step_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.decade_step > 1:
            raise ValueError("decade_step must exceed 1")


@dataclass
class FieldState:
    """Equilibrium profiles on a mesh."""

    mesh: Mesh
    u: np.ndarray
    n: np.ndarray
    p: np.ndarray
    u_F: float
    vt: float
    f_s: float
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def phi0(self) -> float:
        """Equilibrium surface potential [V]."""
        return float(self.u[0] * self.vt)


@dataclass
class SteadyResult:
    """Illuminated steady state and its diagnostics."""

    mesh: Mesh
    equilibrium: FieldState
    illumination: Illumination
    u: np.ndarray
    u_Fn: np.ndarray
    u_Fp: np.ndarray
    n: np.ndarray
    p: np.ndarray
    f_s: float
    f_s_equilibrium: float
    U_s: float
    iterations: int
    flux_path: list
    residual: float
    neutrality: float

    @property
    def spv(self) -> float:
        """delta phi(0) in volts."""
        return float((self.u[0] - self.equilibrium.u[0]) * self.equilibrium.vt)

    @property
    def delta_u(self):
        return self.u - self.equilibrium.u

    @property
    def delta_n(self):
        return self.n - self.equilibrium.n

    @property
    def delta_p(self):
        return self.p - self.equilibrium.p

    @property
    def delta_f(self) -> float:
        return self.f_s - self.f_s_equilibrium


# ---------------------------------------------------------------- setup

@dataclass(frozen=True)
class _Problem:
    ms: MaterialSystem
    mesh: Mesh
    prm: np.ndarray
    gvol: np.ndarray
    # surface data
    has_states: bool
    s_n0: float
    s_p0: float
    n1s: float
    p1s: float
    excess_n1p1: float  # n1* p1* - n_i^2
    sigma_ss: float
    sigma_fs: float
    donor: bool
    vt: float
    u_F: float


def _generation_per_volume(mesh: Mesh, N0: float, alpha_b: float) -> np.ndarray:
    """Exact integral of N0 alpha e^{-alpha x} over each control volume."""
    if N0 == 0 or alpha_b == 0:
        return np.zeros_like(mesh.x)
    f = mesh.faces
    return N0 * (np.exp(-alpha_b * f[:-1]) - np.exp(-alpha_b * f[1:]))


def _problem(ms: MaterialSystem, mesh: Mesh, illum: Illumination | None) -> _Problem:
    b = ms.bulk
    n_b, p_b, u_F = equilibrium_densities(b)
    tn, tp = ms.trap.lifetimes(b.thermal_velocity)
    n1b = b.intrinsic_density * clamp_exp(ms.trap.energy / b.vt)
    p1b = b.intrinsic_density * clamp_exp(-ms.trap.energy / b.vt)
    D_n, D_p = b.diffusivities
    prm = np.array([b.intrinsic_density, n_b, p_b, u_F, poisson_factor(b), D_n, D_p,
                    tn, tp, n1b, p1b])
    N0 = illum.photon_flux if illum is not None else 0.0
    if N0 > 0:
        alpha = b.alpha_b(illum.wavelength_nm)
        gvol = _generation_per_volume(mesh, N0, alpha)
    else:
        gvol = np.zeros_like(mesh.x)
    ifs = ms.interface
    has_states = ifs.density > 0
    s_n0 = s_p0 = 0.0
    n1s = p1s = excess = 0.0
    if has_states:
        s_n0, s_p0 = recombination_velocities(ifs, b.thermal_velocity)
        if s_n0 == 0 and s_p0 == 0:
            raise ValueError("interface states need a non-zero capture cross section")
        n1, p1 = level_densities(ifs, b)
        n_o = ifs.sigma_n_optical(illum.wavelength_nm) * ifs.density * N0 if N0 > 0 else 0.0
        p_o = ifs.sigma_p_optical(illum.wavelength_nm) * ifs.density * N0 if N0 > 0 else 0.0
        dn1 = n_o / s_n0 if n_o else 0.0
        dp1 = p_o / s_p0 if p_o else 0.0
        n1s, p1s = n1 + dn1, p1 + dp1
        excess = n1 * dp1 + p1 * dn1 + dn1 * dp1 + (n1 * p1 - b.intrinsic_density ** 2)
    return _Problem(ms, mesh, prm, gvol, has_states, s_n0, s_p0, n1s, p1s, excess,
                    ms.fixed.density, ifs.density, ifs.polarity == "donor", b.vt, u_F)


def _surface_terms(pb: _Problem, u0, v0, w0):
    """Boundary gradient g0, net surface rate U_s, their (u, v, w) derivatives and f_s."""
    prm = pb.prm
    ni, pf = prm[kernels.P_NI], prm[kernels.P_PF]
    surf = np.zeros(8)
    q_fixed = pb.sigma_ss
    if not pb.has_states:
        surf[kernels.S_G] = -pf * q_fixed
        return surf, math.nan
    n = ni * math.exp(u0 - v0)
    p = ni * math.exp(w0 - u0)
    sn, sp = pb.s_n0, pb.s_p0
    den = sn * (n + pb.n1s) + sp * (p + pb.p1s)
    num = sn * n + sp * pb.p1s
    f = num / den
    df_dn = sn * (den - num) / den ** 2
    df_dp = -num * sp / den ** 2
    X = ni * ni * math.expm1(w0 - v0) - pb.excess_n1p1
    U = sn * sp * X / den
    dU_dn = sn * sp * (p * den - X * sn) / den ** 2
    dU_dp = sn * sp * (n * den - X * sp) / den ** 2
    # n = ni e^{u-v}, p = ni e^{w-u}
    dn = np.array([n, -n, 0.0])
    dp = np.array([-p, 0.0, p])
    df = df_dn * dn + df_dp * dp
    q_fs = pb.sigma_fs * ((1.0 - f) if pb.donor else -f)
    surf[kernels.S_G] = -pf * (q_fixed + q_fs)
    surf[kernels.S_GU:kernels.S_GW + 1] = pf * pb.sigma_fs * df
    surf[kernels.S_U] = U
    surf[kernels.S_UU:kernels.S_UW + 1] = dU_dn * dn + dU_dp * dp
    return surf, f


# ---------------------------------------------------------------- equilibrium

def _equilibrium_residual(pb: _Problem, u):
    prm = pb.prm
    nb, pbk, pf = prm[kernels.P_NB], prm[kernels.P_PB], prm[kernels.P_PF]
    mesh = pb.mesh
    h, vol = mesh.h, mesh.volumes
    ifs = pb.ms.interface
    mat = pb.ms.bulk
    E = np.diff(u) / h
    rho = pbk * np.expm1(-u) - nb * np.expm1(u)
    drho = -pbk * np.exp(-u) - nb * np.exp(u)
    res = pf * rho * vol
    res[:-1] += E
    res[1:] -= E
    diag = pf * drho * vol
    diag[:-1] -= 1 / h
    diag[1:] -= 1 / h
    off = 1 / h
    # surface charge
    if pb.has_states:
        f = fermi_occupation(ifs, mat, u[0], pb.u_F)
        q = pb.sigma_fs * ((1 - f) if pb.donor else -f)
        dfdu = f * (1 - f)  # d/du0 of 1/(1+exp(E - u0 + uF))
        dq = -pb.sigma_fs * dfdu
    else:
        f, q, dq = math.nan, 0.0, 0.0
    g0 = -pf * (pb.sigma_ss + q)
    res[0] -= g0
    diag[0] -= -pf * dq
    scale = pf * (pbk * np.exp(-u) + nb * np.exp(u) + pbk + nb) * vol
    scale[:-1] += np.abs(E)
    scale[1:] += np.abs(E)
    scale[0] += abs(g0)
    # grounded back surface
    res[-1] = u[-1]
    diag[-1] = 1.0
    scale[-1] = 1.0
    return res, scale, diag, off, f


def solve_equilibrium(ms: MaterialSystem, mesh: Mesh | None = None,
                      config: SolverConfig = SolverConfig()) -> FieldState:
    """Equilibrium potential from the nonlinear Poisson equation.

    The occupation of the interface state follows the Fermi factor at the
    surface potential and is updated inside every Newton step.
    """
    mesh = mesh or default_mesh(ms)
    pb = _problem(ms, mesh, None)
    N = mesh.x.size
    u = np.zeros(N)
    history = []
    for it in range(1, config.max_iterations + 1):
        res, scale, diag, off, f = _equilibrium_residual(pb, u)
        norm = float(np.max(np.abs(res) / scale))
        history.append(norm)
        ab = np.zeros((3, N))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        ab[0, -1] = 0.0  # last row Dirichlet: no coupling to u[N-2]
        ab[2, -2] = 0.0
        du = solve_banded((1, 1), ab, -res)
        big = np.max(np.abs(du))
        if big > config.max_step:
            du *= config.max_step / big
        u = u + du
        if big < config.step_tolerance:
            break
    else:
        raise ConvergenceError(f"equilibrium Newton did not converge (last residual {history[-1]:.3e})",
                               history)
    res, scale, diag, off, f = _equilibrium_residual(pb, u)
    b = ms.bulk
    n = b.intrinsic_density * np.exp(u - pb.u_F)
    p = b.intrinsic_density * np.exp(pb.u_F - u)
    return FieldState(mesh, u, n, p, pb.u_F, b.vt, f, it, history)


# ---------------------------------------------------------------- illuminated

def _unpack(x):
    return x[0::3], x[1::3], x[2::3]


def _newton(pb: _Problem, x0: np.ndarray, config: SolverConfig):
    """Damped Newton with backtracking on the scaled residual. Returns (x, iterations, history)."""
    x = x0.copy()
    mesh = pb.mesh
    h, vol = mesh.h, mesh.volumes
    history = []

    def evaluate(xx):
        u, v, w = _unpack(xx)
        surf, _ = _surface_terms(pb, u[0], v[0], w[0])
        res, scale, ab = kernels.dd_assemble(u, v, w, h, vol, pb.gvol, pb.prm, surf,
                                            use_numba=config.use_numba)
        return res, scale, ab

    res, scale, ab = evaluate(x)
    norm = float(np.linalg.norm(res / scale))
    history.append(norm)
    small_steps = 0
    for it in range(1, config.max_iterations + 1):
        # row equilibration before the banded LU
        rs = 1.0 / scale
        ab_s = ab.copy()
        U = kernels.DD_UPPER
        ncol = ab.shape[1]
        for k in range(ab.shape[0]):
            r = np.arange(ncol) + (k - U)
            ok = (r >= 0) & (r < ncol)
            ab_s[k, ok] *= rs[r[ok]]
        try:
            dx = solve_banded((kernels.DD_LOWER, kernels.DD_UPPER), ab_s, -res * rs,
                              check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", history) from exc
        big = float(np.max(np.abs(dx)))
        if not np.isfinite(big):
            raise ConvergenceError("non-finite Newton update", history)
        if big > config.max_step:
            dx *= config.max_step / big
        lam = 1.0
        for _ in range(config.line_search_halvings + 1):
            xt = x + lam * dx
            with np.errstate(over="ignore", invalid="ignore"):
                rt, st, abt = evaluate(xt)
            nt = float(np.linalg.norm(rt / st))
            if np.isfinite(nt) and (nt < norm or lam * big < 1e-8):
                break
            lam *= 0.5
        else:
            if not np.isfinite(nt):
                raise ConvergenceError("line search produced non-finite residual", history)
        x, res, scale, ab, norm = xt, rt, st, abt, nt
        history.append(norm)
        step = lam * min(big, config.max_step)
        if lam == 1.0 and step < config.step_tolerance:
            small_steps += 1
            if small_steps >= 2 or norm < config.newton_tolerance:
                return x, it, history
        elif norm < config.newton_tolerance * 1e-3:
            return x, it, history
    raise ConvergenceError(f"Newton did not converge in {config.max_iterations} iterations "
                           f"(residual {history[-1]:.3e})", history)


def _initial_vector(eq: FieldState) -> np.ndarray:
    N = eq.u.size
    x = np.empty(3 * N)
    x[0::3] = eq.u
    x[1::3] = eq.u_F
    x[2::3] = eq.u_F
    return x


def _result(pb: _Problem, eq: FieldState, illum: Illumination, x, iterations, path, history):
    u, v, w = _unpack(x)
    ni = pb.prm[kernels.P_NI]
    n = ni * np.exp(u - v)
    p = ni * np.exp(w - u)
    surf, f = _surface_terms(pb, u[0], v[0], w[0])
    f0 = eq.f_s
    mesh = pb.mesh
    # neutrality with the lumped (control-volume) quadrature that matches the discretisation
    dn = n - eq.n
    dp = p - eq.p
    sheet = pb.sigma_fs * ((f - f0) if pb.has_states else 0.0)
    enclosed = float(np.sum((dp - dn) * mesh.volumes))
    ref = abs(sheet) + float(np.sum(np.abs(dp - dn) * mesh.volumes)) + 1e-300
    neutrality = abs(sheet - enclosed) / ref
    return SteadyResult(mesh, eq, illum, u, v, w, n, p,
                        f if pb.has_states else math.nan,
                        f0, float(surf[kernels.S_U]), iterations, path,
                        history[-1] if history else 0.0, neutrality)


def solve_steady_illuminated(eq: FieldState, ms: MaterialSystem, illumination: Illumination,
                             config: SolverConfig = SolverConfig(),
                             initial: SteadyResult | None = None) -> SteadyResult:
    """Illuminated steady state starting from a converged equilibrium.

    Newton is tried directly at the target flux (from ``initial`` when
    given, else from equilibrium). On failure the flux is ramped up in
    ``decade_step`` factors from ``start_flux``, with the factor square-rooted
    after each failure.
    """
    mesh = eq.mesh
    target = illumination.photon_flux
    if target == 0:
        pb = _problem(ms, mesh, illumination)
        x = _initial_vector(eq)
        return _result(pb, eq, illumination, x, 0, [0.0], [0.0])

    x_start = _initial_vector(eq) if initial is None else np.concatenate(
        [np.column_stack([initial.u, initial.u_Fn, initial.u_Fp]).ravel()])
    flux_done = 0.0 if initial is None else initial.illumination.photon_flux
    path = []
    total_iter = 0

    def attempt(N0, xs):
        pb = _problem(ms, mesh, replace(illumination, photon_flux=N0))
        return pb, _newton(pb, xs, config)

    try:
        pb, (x, it, hist) = attempt(target, x_start)
        path.append(target)
        return _result(pb, eq, illumination, x, it, path, hist)
    except ConvergenceError as exc:
        log.debug("direct solve at N0=%g failed (%s); ramping", target, exc)

    x = x_start
    current = flux_done
    ratio = config.decade_step
    nxt = max(config.start_flux, current * ratio) if current > 0 else min(config.start_flux, target)
    hist = []
    while True:
        nxt = min(nxt, target)
        try:
            pb, (xn, it, hist) = attempt(nxt, x)
        except ConvergenceError:
            if current == 0:
                nxt = nxt / config.decade_step
                if nxt < 1e-3:
                    raise
                continue
            ratio = math.sqrt(ratio)
            if ratio < config.min_ratio:
                raise ConvergenceError(f"continuation stalled at N0={current:g}", hist)
            nxt = current * ratio
            continue
        x, current = xn, nxt
        total_iter += it
        path.append(current)
        if current >= target:
            return _result(pb, eq, illumination, x, total_iter, path, hist)
        ratio = min(config.decade_step, ratio * ratio)
        nxt = current * ratio


def flux_sweep(ms: MaterialSystem, wavelength_nm: float, fluxes, mesh: Mesh | None = None,
               config: SolverConfig = SolverConfig(), eq: FieldState | None = None):
    """SPV for increasing photon fluxes, each solve warm-started from the previous one.

    Returns a list of (N0, SteadyResult or exception).
    """
    eq = eq or solve_equilibrium(ms, mesh, config)
    out = []
    prev = None
    for N0 in sorted(float(f) for f in fluxes):
        illum = Illumination(N0, wavelength_nm)
        try:
            r = solve_steady_illuminated(eq, ms, illum, config, initial=prev)
            prev = r if N0 > 0 else None
        except ConvergenceError as exc:
            r = exc
        out.append((N0, r))
    return out


def spectral_sweep(ms: MaterialSystem, wavelengths, fluxes, mesh: Mesh | None = None,
                   config: SolverConfig = SolverConfig()) -> list[tuple]:
    """Rows (wavelength_nm, N0, SPV [V], status) over a wavelength x flux grid."""
    eq = solve_equilibrium(ms, mesh, config)
    rows = []
    for lam in wavelengths:
        for N0, r in flux_sweep(ms, lam, fluxes, eq.mesh, config, eq):
            if isinstance(r, Exception):
                rows.append((float(lam), N0, math.nan, f"failed: {r}"))
            else:
                rows.append((float(lam), N0, r.spv, "ok"))
    return rows


def validate_against_analytic(ms: MaterialSystem, illumination: Illumination,
                              mesh: Mesh | None = None, config: SolverConfig = SolverConfig(),
                              max_injection: float = 1e-2):
    """Compare the numerical solution without surface charge to the closed form.

    Surface charges are removed from ``ms``. Returns a dict with the maximum
    pointwise relative deviation of delta n and delta p and both profiles.

    Raises
    ------
    ValueError
        If the excitation is not low: max(dn, dp) >= max_injection * majority density.
    """
    from .bulk import length_params, spatial_eigenmodes, srh_equivalent_tau, stationary_profile
    from .params import FixedSurfaceCharge

    flat = ms.replace(fixed=FixedSurfaceCharge(0.0), interface=ms.interface.with_density(0.0))
    b = flat.bulk
    n_b, p_b, _ = equilibrium_densities(b)
    tau = srh_equivalent_tau(b, flat.trap)
    lp = length_params(b, tau, "general")
    modes = spatial_eigenmodes(lp)
    alpha = b.alpha_b(illumination.wavelength_nm)
    prof = stationary_profile(lp, modes, illumination.photon_flux, alpha,
                              flat.slab.thickness_cm, *b.diffusivities)
    mesh = mesh or default_mesh(flat)
    dn_a, dp_a = prof.densities(mesh.x)
    if max(np.max(np.abs(dn_a)), np.max(np.abs(dp_a))) >= max_injection * max(n_b, p_b):
        raise ValueError("excitation too strong for the linearised comparison")
    eq = solve_equilibrium(flat, mesh, config)
    res = solve_steady_illuminated(eq, flat, illumination, config)
    dn, dp = res.delta_n, res.delta_p
    dev_n = float(np.max(np.abs(dn - dn_a) / np.abs(dn_a)))
    dev_p = float(np.max(np.abs(dp - dp_a) / np.abs(dp_a)))
    return {"max_rel_dn": dev_n, "max_rel_dp": dev_p, "x": mesh.x, "dn": dn, "dp": dp,
            "dn_analytic": dn_a, "dp_analytic": dp_a, "result": res}
