"""Recover surface and optical parameters from compensation-voltage data.

Two estimators:

* :func:`fit_spv` matches steady-state drift-diffusion SPVs, converted to
  compensation voltages, to a measured (wavelength, flux, dV) dataset with a
  bounded Nelder-Mead search and seeded restarts. Every loss evaluation is a
  full equilibrium + flux sweep, so the search is derivative-free.
* :func:`fit_ocs` fits the Hulthen cross-section shape to normalised
  spectral points by least squares in log space, with the overall scale
  profiled out.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .constants import HC_EV_NM
from .ddsolver import ConvergenceError, Mesh, SolverConfig, default_mesh, flux_sweep, solve_equilibrium
from .ion import ElectrostaticMap, field_to_compensation_voltage, spv_to_field
from .params import MaterialSystem
from .photoionization import HulthenParams, cross_section

log = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "FitProblem",
    "FitResult",
    "OcsFit",
    "SPV_PARAMETERS",
    "OCS_PARAMETERS",
    "fit_spv",
    "fit_ocs",
    "model_compensation",
    "synthetic_dataset",
    "sensitivity_ratio",
    "apply_parameters",
    "table_ratio_points",
]

# Loss contributed by a data point whose model solve failed (in units of chi^2).
FAILURE_PENALTY = 1.0e6

SPV_PARAMETERS = ("sigma_fs", "sigma_capture", "E_fs", "sigma_o_scale")
OCS_PARAMETERS = ("a", "lam", "E_io")
_LOG_SCALED = {"sigma_fs", "sigma_capture", "sigma_o_scale", "a"}


@dataclass(frozen=True)
class Dataset:
    """Compensation voltages measured against photon flux.

    Columns are parallel arrays: wavelength [nm], photon flux [cm^-2 s^-1],
    compensation voltage [V] and its one-sigma uncertainty [V].
    """

    wavelength_nm: np.ndarray
    photon_flux: np.ndarray
    compensation_voltage: np.ndarray
    uncertainty: np.ndarray

    def __post_init__(self):
        cols = [np.atleast_1d(np.asarray(c, float)) for c in
                (self.wavelength_nm, self.photon_flux, self.compensation_voltage, self.uncertainty)]
        if len({len(c) for c in cols}) != 1:
            raise ValueError("dataset columns differ in length")
        if len(cols[0]) == 0:
            raise ValueError("dataset is empty")
        if np.any(cols[1] <= 0):
            raise ValueError("photon fluxes must be positive")
        if np.any(cols[3] <= 0):
            raise ValueError("uncertainties must be positive")
        for name, c in zip(("wavelength_nm", "photon_flux", "compensation_voltage", "uncertainty"),
                           cols):
            object.__setattr__(self, name, c)

    def __len__(self):
        return len(self.photon_flux)

    @classmethod
    def from_records(cls, records):
        arr = np.asarray(list(records), float).reshape(-1, 4)
        return cls(*arr.T)

    def records(self):
        return list(zip(self.wavelength_nm.tolist(), self.photon_flux.tolist(),
                        self.compensation_voltage.tolist(), self.uncertainty.tolist()))


@dataclass(frozen=True)
class FitProblem:
    """Free parameters, bounds and the fixed remainder of the model.

    ``bounds`` and ``initial`` are keyed by parameter name in natural units;
    missing initial values are read from ``material`` / ``hulthen``.
    """

    free: tuple = ("sigma_fs",)
    bounds: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    material: MaterialSystem = field(default_factory=MaterialSystem)
    hulthen: HulthenParams = field(default_factory=HulthenParams)
    restarts: int = 5
    seed: int = 0
    floor_volts: float = 5e-3
    max_evaluations: int = 200
    emap: ElectrostaticMap = field(default_factory=ElectrostaticMap)

    def __post_init__(self):
        known = set(SPV_PARAMETERS) | set(OCS_PARAMETERS)
        unknown = set(self.free) - known
        if unknown:
            raise ValueError(f"unknown fit parameters {sorted(unknown)}")
        if len(set(self.free)) != len(self.free) or not self.free:
            raise ValueError("free parameters must be a non-empty set")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValueError(f"empty bounds for {name}")
            if name in _LOG_SCALED and lo <= 0:
                raise ValueError(f"{name} must have a positive lower bound")
            if name == "lam" and not (0 < lo and hi < 2):
                raise ValueError("lam bounds must lie inside (0, 2)")
        if self.restarts < 1:
            raise ValueError("at least one start is required")


@dataclass
class FitResult:
    params: dict
    loss: float
    residuals: np.ndarray
    model: np.ndarray
    evaluations: int
    restart_losses: list
    history: list
    converged: bool
    message: str = ""

    def report(self) -> str:
        """Structured plain-text summary, one ``key: value`` per line."""
        lines = [f"converged: {self.converged}", f"loss: {self.loss:.6g}",
                 f"evaluations: {self.evaluations}"]
        lines += [f"param.{k}: {v:.6g}" for k, v in self.params.items()]
        lines += [f"restart.{i}.loss: {l:.6g}" for i, l in enumerate(self.restart_losses)]
        lines += [f"residual.{i}: {r:.6g}" for i, r in enumerate(self.residuals)]
        if self.message:
            lines.append(f"message: {self.message}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------- parameters

def _default_bounds(name):
    return {
        "sigma_fs": (1e9, 1e13),
        "sigma_capture": (1e-27, 1e-20),
        "E_fs": (-0.55, 0.55),
        "sigma_o_scale": (1e-2, 1e2),
        "a": (1e-8, 1e-6),
        "lam": (0.05, 1.95),
        "E_io": (0.5, 1.5),
    }[name]


def _current_value(problem: FitProblem, name):
    if name in problem.initial:
        return float(problem.initial[name])
    ifs = problem.material.interface
    return {
        "sigma_fs": ifs.density,
        "sigma_capture": ifs.sigma_n_capture,
        "E_fs": ifs.energy,
        "sigma_o_scale": 1.0,
        "a": problem.hulthen.a,
        "lam": problem.hulthen.lam,
        "E_io": problem.hulthen.E_io,
    }[name]


def _to_internal(name, value):
    return math.log10(value) if name in _LOG_SCALED else value


def _to_natural(name, value):
    return 10.0 ** value if name in _LOG_SCALED else value


def _internal_bounds(problem: FitProblem):
    out = []
    for name in problem.free:
        lo, hi = problem.bounds.get(name, _default_bounds(name))
        out.append((_to_internal(name, lo), _to_internal(name, hi)))
    return out


def apply_parameters(ms: MaterialSystem, params: dict) -> MaterialSystem:
    """Material system with the SPV fit parameters substituted."""
    ifs = ms.interface
    changes = {}
    if "sigma_fs" in params:
        changes["density"] = params["sigma_fs"]
    if "sigma_capture" in params:
        changes["sigma_n_capture"] = params["sigma_capture"]
        changes["sigma_p_capture"] = params["sigma_capture"]
    if "E_fs" in params:
        changes["energy"] = params["E_fs"]
    if "sigma_o_scale" in params:
        s = params["sigma_o_scale"]
        changes["optical_n"] = tuple((w, s * v) for w, v in ifs.optical_n)
        changes["optical_p"] = tuple((w, s * v) for w, v in ifs.optical_p)
    return ms.replace(interface=replace(ifs, **changes)) if changes else ms


def sensitivity_ratio(ms: MaterialSystem, wavelength_nm: float = 1055.0) -> float:
    """sigma_o(lambda) / (sigma_capture v_th) [s/cm]: optical over capture strength."""
    ifs = ms.interface
    return ifs.sigma_n_optical(wavelength_nm) / (ifs.sigma_n_capture * ms.bulk.thermal_velocity)


# ---------------------------------------------------------------- SPV model

def model_compensation(ms: MaterialSystem, dataset: Dataset, mesh: Mesh | None = None,
                       config: SolverConfig = SolverConfig(),
                       emap: ElectrostaticMap = ElectrostaticMap()) -> np.ndarray:
    """Predicted compensation voltage for every dataset row (NaN where a solve failed)."""
    out = np.full(len(dataset), np.nan)
    try:
        eq = solve_equilibrium(ms, mesh, config)
    except ConvergenceError as exc:
        log.debug("equilibrium failed: %s", exc)
        return out
    for lam in np.unique(dataset.wavelength_nm):
        rows = np.flatnonzero(dataset.wavelength_nm == lam)
        fluxes = np.unique(dataset.photon_flux[rows])
        spv = {}
        for N0, r in flux_sweep(ms, float(lam), fluxes, eq.mesh, config, eq):
            spv[N0] = math.nan if isinstance(r, Exception) else r.spv
        for i in rows:
            s = spv[float(dataset.photon_flux[i])]
            out[i] = field_to_compensation_voltage(spv_to_field(s, emap), emap)
    return out


def _censor(model, floor):
    # the instrument cannot resolve |dV| below the floor: compare such points at the floor
    small = np.abs(model) < floor
    return np.where(small, np.where(model < 0, -floor, floor), model)


def _weighted_residuals(model, dataset: Dataset, floor):
    res = (_censor(model, floor) - dataset.compensation_voltage) / dataset.uncertainty
    return np.where(np.isfinite(res), res, math.sqrt(FAILURE_PENALTY))


def synthetic_dataset(ms: MaterialSystem, wavelength_nm: float, fluxes, noise: float = 0.05,
                      seed: int = 0, floor_volts: float = 5e-3, mesh: Mesh | None = None,
                      config: SolverConfig = SolverConfig(),
                      emap: ElectrostaticMap = ElectrostaticMap()) -> Dataset:
    """Model compensation voltages with multiplicative Gaussian noise.

    Uncertainties are ``noise * |dV|``, never below a fifth of the floor.
    """
    fluxes = np.asarray(fluxes, float)
    lam = np.full(len(fluxes), float(wavelength_nm))
    probe = Dataset(lam, fluxes, np.zeros(len(fluxes)), np.ones(len(fluxes)))
    dv = model_compensation(ms, probe, mesh, config, emap)
    if not np.all(np.isfinite(dv)):
        raise ConvergenceError("model failed while synthesising data", [])
    rng = np.random.default_rng(seed)
    noisy = dv * (1 + noise * rng.standard_normal(len(dv))) if noise > 0 else dv.copy()
    sigma = np.maximum(noise * np.abs(dv), 0.2 * floor_volts) if noise > 0 \
        else np.maximum(1e-3 * np.abs(dv), 1e-6)
    return Dataset(lam, fluxes, noisy, sigma)


def _nelder_mead(loss, x0, bounds, max_evaluations, history):
    best = [math.inf]

    def cb(xk):
        # record the best vertex after each accepted simplex update
        v = loss(xk)
        best[0] = min(best[0], v)
        history.append(best[0])

    return minimize(loss, x0, method="Nelder-Mead", bounds=bounds, callback=cb,
                    options={"maxfev": max_evaluations, "xatol": 1e-4, "fatol": 1e-8,
                             "adaptive": len(x0) > 2})


def fit_spv(dataset: Dataset, problem: FitProblem, solver=None, mesh: Mesh | None = None,
            config: SolverConfig = SolverConfig()) -> FitResult:
    """Best-fit SPV parameters by bounded simplex search with seeded restarts.

    ``solver(ms, dataset) -> model dV array`` replaces the drift-diffusion
    model when given (NaN marks a failed point). Failed points add
    ``FAILURE_PENALTY`` to the loss instead of aborting the fit.
    """
    bad = set(problem.free) - set(SPV_PARAMETERS)
    if bad:
        raise ValueError(f"{sorted(bad)} are not SPV fit parameters")
    ms0 = problem.material
    mesh = mesh or default_mesh(ms0)
    solver = solver or (lambda ms, ds: model_compensation(ms, ds, mesh, config, problem.emap))
    names = problem.free
    bounds = _internal_bounds(problem)
    cache = {}

    def natural(x):
        return {n: _to_natural(n, float(v)) for n, v in zip(names, x)}

    def evaluate(x):
        key = tuple(np.round(np.asarray(x, float), 12))
        if key not in cache:
            model = np.asarray(solver(apply_parameters(ms0, natural(x)), dataset), float)
            res = _weighted_residuals(model, dataset, problem.floor_volts)
            cache[key] = (float(np.sum(res ** 2)), res, model)
        return cache[key]

    def loss(x):
        return evaluate(x)[0]

    rng = np.random.default_rng(problem.seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [np.clip([_to_internal(n, _current_value(problem, n)) for n in names], lo, hi)]
    for _ in range(problem.restarts - 1):
        starts.append(lo + (hi - lo) * rng.random(len(names)))

    best = None
    restart_losses = []
    history = []
    for x0 in starts:
        res = _nelder_mead(loss, np.asarray(x0, float), bounds, problem.max_evaluations, history)
        restart_losses.append(float(res.fun))
        if best is None or res.fun < best.fun:
            best = res
    val, residuals, model = evaluate(best.x)
    return FitResult(natural(best.x), val, residuals, model, len(cache), restart_losses,
                     history, bool(best.success), str(best.message))


# ---------------------------------------------------------------- OCS model

@dataclass
class OcsFit:
    params: HulthenParams
    log_scale: float
    residuals: np.ndarray
    cost: float
    restart_costs: list


def _ocs_residuals(energies, log_data, hp: HulthenParams):
    model = cross_section(energies, hp)
    # below-threshold model points cannot match a non-zero measurement
    lm = np.log(np.maximum(model, 1e-300))
    diff = log_data - lm
    scale = float(np.mean(diff))
    return diff - scale, scale


def fit_ocs(points, problem: FitProblem | None = None) -> OcsFit:
    """Fit (a, lam, E_io) to normalised cross-section points (eV, sigma/sigma_ref).

    The normalisation is arbitrary: the log-scale offset is profiled out, so
    only the spectral shape constrains the parameters. The fit runs from the
    problem's starting values plus seeded random restarts and keeps the best.
    """
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of (eV, normalised sigma)")
    if len(np.unique(pts[:, 0])) < 3:
        raise ValueError("at least three distinct photon energies are required")
    if np.any(pts[:, 1] <= 0) or np.any(pts[:, 0] <= 0):
        raise ValueError("energies and cross sections must be positive")
    problem = problem or FitProblem(free=OCS_PARAMETERS)
    names = [n for n in OCS_PARAMETERS if n in problem.free]
    if not names or set(problem.free) - set(OCS_PARAMETERS):
        raise ValueError("OCS fits take a subset of (a, lam, E_io)")
    E = pts[:, 0]
    log_data = np.log(pts[:, 1])
    bounds = _internal_bounds(replace(problem, free=tuple(names)))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    base = problem.hulthen

    def params(x):
        vals = {n: _to_natural(n, float(v)) for n, v in zip(names, x)}
        return replace(base, **vals)

    def resid(x):
        return _ocs_residuals(E, log_data, params(x))[0]

    rng = np.random.default_rng(problem.seed)
    starts = [np.clip([_to_internal(n, _current_value(problem, n)) for n in names], lo, hi)]
    for _ in range(problem.restarts - 1):
        starts.append(lo + (hi - lo) * rng.random(len(names)))
    best = None
    costs = []
    for x0 in starts:
        r = least_squares(resid, np.asarray(x0, float), bounds=(lo, hi), x_scale="jac",
                          xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
        costs.append(float(r.cost))
        if best is None or r.cost < best.cost:
            best = r
    hp = params(best.x)
    res, scale = _ocs_residuals(E, log_data, hp)
    return OcsFit(hp, scale, res, float(best.cost), costs)


def table_ratio_points(ms: MaterialSystem) -> np.ndarray:
    """(eV, sigma/max sigma) for every tabulated non-zero optical cross section."""
    pairs = [(HC_EV_NM / w, v) for w, v in ms.interface.optical_n if v > 0]
    arr = np.array(sorted(pairs))
    arr[:, 1] /= arr[:, 1].max()
    return arr

