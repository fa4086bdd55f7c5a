"""Command-line entry point.

Errors end the process with a category-specific exit code and a single JSON
line on stderr, ``spvtrap-error: {"category": ..., "code": ..., "message": ...}``:

========  ====  ==============================================
category  code  raised by
========  ====  ==============================================
usage     2     unknown command, bad option value
config    3     unreadable or inconsistent configuration
solver    4     Newton / propagation failure
io        5     unreadable input, unwritable output
internal  1     anything else
========  ====  ==============================================
"""

from __future__ import annotations

import json
import logging
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, config_hash, load_material, material_to_config
from .ddsolver import ConvergenceError, flux_sweep, solve_equilibrium, solve_steady_illuminated, \
    spectral_sweep
from .io import DatasetError, write_csv, ingest_dataset, read_csv

EXIT_CODES = {"usage": 2, "config": 3, "solver": 4, "io": 5, "internal": 1}
TWO_PI = 2 * math.pi


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from exc


class State:
    def __init__(self, config, out, plot, seed, workers):
        self.config_path = config
        self.out = Path(out)
        self.plot = plot
        self.seed = seed
        self.workers = workers
        self._material = None

    @property
    def material(self):
        if self._material is None:
            try:
                self._material = load_material(self.config_path)
            except OSError as exc:
                raise CliError("config", f"cannot read configuration: {exc}") from exc
        return self._material

    def provenance(self, **extra):
        prov = {"config_hash": config_hash(material_to_config(self.material)), "seed": self.seed}
        prov.update(extra)
        return prov

    def context(self):
        from .reproduce import RunContext
        return RunContext(self.out, self.material, self.plot, self.seed, self.workers)


pass_state = click.make_pass_decorator(State)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="spvtrap")
@click.option("--config", type=click.Path(dir_okay=False), default=None,
              help="Material configuration file (default: bundled table2.cfg).")
@click.option("--out", type=click.Path(file_okay=False), default="spvtrap-out", show_default=True,
              help="Output directory.")
@click.option("--plot/--no-plot", default=False, help="Also write SVG plots.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for fit restarts.")
@click.option("--workers", type=click.IntRange(1), default=1, show_default=True,
              help="Processes for detuning sweeps.")
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug).")
@click.pass_context
def cli(ctx, config, out, plot, seed, workers, verbose):
    """Surface photovoltage of illuminated silicon and its effect on ion qubits."""
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if config is not None and not Path(config).is_file():
        raise CliError("config", f"configuration file {config} not found")
    ctx.obj = State(config, out, plot, seed, workers)


def _echo_summary(d: dict):
    for k, v in d.items():
        click.echo(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")


# ---------------------------------------------------------------- spv group

@cli.group()
def spv():
    """Drift-diffusion surface photovoltage solver."""


@spv.command("equilibrium")
@pass_state
def spv_equilibrium(st: State):
    """Equilibrium band bending; writes the potential and carrier profiles."""
    eq = solve_equilibrium(st.material)
    rows = zip(eq.mesh.x * 1e4, eq.u * eq.vt, eq.n, eq.p)
    path = write_csv(st.out / "equilibrium_profile.csv", ("x_um", "phi0_V", "n_cm3", "p_cm3"),
                     rows, st.provenance())
    _echo_summary({"phi0_V": eq.phi0, "f_s0": eq.f_s, "iterations": eq.iterations,
                   "output": str(path)})


@spv.command("steady")
@click.option("--wavelength", type=float, default=1055.0, show_default=True, help="nm")
@click.option("--flux", type=float, default=1e15, show_default=True, help="photons cm^-2 s^-1")
@pass_state
def spv_steady(st: State, wavelength, flux):
    """Illuminated steady state at one wavelength and flux."""
    from .params import Illumination

    try:
        illum = Illumination(flux, wavelength)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    eq = solve_equilibrium(st.material)
    r = solve_steady_illuminated(eq, st.material, illum)
    rows = zip(eq.mesh.x * 1e4, r.delta_u * eq.vt, eq.u * eq.vt, r.delta_n, r.delta_p, r.n, r.p)
    path = write_csv(st.out / "steady_profile.csv",
                     ("x_um", "dphi_V", "phi0_V", "dn_cm3", "dp_cm3", "n_cm3", "p_cm3"), rows,
                     st.provenance(wavelength_nm=wavelength, flux_cm2s=flux))
    _echo_summary({"spv_V": r.spv, "f_s": r.f_s, "f_s0": r.f_s_equilibrium,
                   "U_s_cm2s": r.U_s, "neutrality": r.neutrality, "output": str(path)})


def _flux_grid(fmin, fmax, points):
    if not (0 < fmin <= fmax) or points < 1:
        raise click.BadParameter("need 0 < flux-min <= flux-max and points >= 1")
    return np.logspace(math.log10(fmin), math.log10(fmax), points)


@spv.command("flux-sweep")
@click.option("--wavelength", type=float, default=1055.0, show_default=True)
@click.option("--flux-min", type=float, default=1e11, show_default=True)
@click.option("--flux-max", type=float, default=1e16, show_default=True)
@click.option("--points", type=int, default=11, show_default=True)
@pass_state
def spv_flux_sweep(st: State, wavelength, flux_min, flux_max, points):
    """SPV and compensation voltage against photon flux."""
    from .ion import field_to_compensation_voltage, spv_to_field

    rows = []
    for N0, r in flux_sweep(st.material, wavelength, _flux_grid(flux_min, flux_max, points)):
        if isinstance(r, Exception):
            rows.append((N0, math.nan, math.nan, math.nan, "failed"))
        else:
            rows.append((N0, r.spv, field_to_compensation_voltage(spv_to_field(r.spv)), r.f_s, "ok"))
    path = write_csv(st.out / "flux_sweep.csv", ("flux_cm2s", "spv_V", "dV_volts", "f_s", "status"),
                     rows, st.provenance(wavelength_nm=wavelength))
    for row in rows:
        click.echo(f"{row[0]:.4g} {row[1]:+.6f} V {row[4]}")
    click.echo(f"output: {path}")
    if any(r[4] != "ok" for r in rows):
        raise CliError("solver", "some flux points failed to converge")


@spv.command("spectral-sweep")
@click.option("--wavelengths", default="1300,1055,635,399,355", show_default=True)
@click.option("--flux-min", type=float, default=1e11, show_default=True)
@click.option("--flux-max", type=float, default=1e18, show_default=True)
@click.option("--points", type=int, default=8, show_default=True)
@pass_state
def spv_spectral_sweep(st: State, wavelengths, flux_min, flux_max, points):
    """SPV over a wavelength x flux grid."""
    rows = spectral_sweep(st.material, _floats(wavelengths), _flux_grid(flux_min, flux_max, points))
    path = write_csv(st.out / "spectral_sweep.csv", ("wavelength_nm", "flux_cm2s", "spv_V", "status"),
                     rows, st.provenance())
    click.echo(f"rows: {len(rows)}\noutput: {path}")


# ---------------------------------------------------------------- analytics

@cli.command("bulk-modes")
@click.option("--tau-eff", type=float, default=None, help="s; default from the bulk trap")
@click.option("--kind", type=click.Choice(["general", "intrinsic", "p", "n"]), default="general",
              show_default=True)
@pass_state
def bulk_modes(st: State, tau_eff, kind):
    """Length parameters and spatial/temporal eigenmodes of the bulk."""
    from .bulk import length_params, spatial_eigenmodes, srh_equivalent_tau, temporal_eigenvalues

    mat = st.material.bulk
    tau = tau_eff if tau_eff is not None else srh_equivalent_tau(mat, st.material.trap)
    lp = length_params(mat, tau, kind)
    modes = spatial_eigenmodes(lp)
    tm = temporal_eigenvalues(lp, *mat.diffusivities)
    out = {"tau_eff_s": tau, "kind": kind, "l_n_cm": lp.l_n, "l_p_cm": lp.l_p,
           "l_n_ext_cm": lp.l_n_ext, "l_p_ext_cm": lp.l_p_ext,
           "lambda_Dn_cm": lp.lambda_Dn, "lambda_Dp_cm": lp.lambda_Dp}
    for name in ("r_plus", "r_minus"):
        try:
            out[f"{name}_cm"] = float(getattr(modes, name))
        except ValueError:  # non-decaying mode (negative xi)
            out[f"{name}_cm"] = math.nan
    out.update({"tau_plus_s": tm.tau_plus, "tau_minus_s": tm.tau_minus})
    path = write_csv(st.out / "bulk_modes.csv", ("quantity", "value"),
                     [(k, v) for k, v in out.items()], st.provenance())
    _echo_summary(out)
    click.echo(f"output: {path}")


@cli.command("ocs")
@click.option("--a", "a_cm", type=float, default=6.4e-8, show_default=True, help="cm")
@click.option("--lam", type=float, default=0.64, show_default=True)
@click.option("--e-io", type=float, default=0.95, show_default=True, help="eV")
@click.option("--e-min", type=float, default=0.9, show_default=True)
@click.option("--e-max", type=float, default=3.6, show_default=True)
@click.option("--points", type=int, default=271, show_default=True)
@pass_state
def ocs(st: State, a_cm, lam, e_io, e_min, e_max, points):
    """Hulthen photoionization cross section over a photon-energy grid."""
    from .photoionization import HulthenParams, normalized_spectrum, peak_energy

    try:
        hp = HulthenParams(a=a_cm, lam=lam, E_io=e_io)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    spec = normalized_spectrum(hp, np.linspace(e_min, e_max, points))
    path = write_csv(st.out / "ocs.csv", ("photon_energy_eV", "sigma_cm2", "sigma_norm"), spec,
                     {"a_cm": a_cm, "lam": lam, "E_io_eV": e_io})
    _echo_summary({"peak_eV": peak_energy(hp), "output": str(path)})


@cli.command("ion")
@click.option("--spv", "spv_v", type=float, default=0.273, show_default=True, help="V")
@click.option("--velocity", type=float, default=3.3e-3, show_default=True, help="m/s")
@pass_state
def ion(st: State, spv_v, velocity):
    """Field, compensation voltage, displacement and Doppler shift for an SPV."""
    from .ion import (TrapMechanics, compensation_to_spv, doppler_shift, field_to_compensation_voltage,
                      field_to_displacement, lamb_dicke, perpendicular_wavevector, spv_to_field)

    mech = TrapMechanics()
    E = spv_to_field(spv_v)
    dv = field_to_compensation_voltage(E)
    out = {"field_V_per_m": E, "compensation_V": dv, "spv_check_V": compensation_to_spv(dv),
           "displacement_um": field_to_displacement(E, mech) * 1e6,
           "x0_nm": mech.x0 * 1e9, "lamb_dicke": lamb_dicke(mech),
           # Doppler shift along the 251 nm beat note of the perpendicular Raman beams
           "doppler_kHz": doppler_shift(perpendicular_wavevector(355e-9), velocity) / 1e3}
    path = write_csv(st.out / "ion_response.csv", ("quantity", "value"), list(out.items()),
                     {"spv_V": spv_v, "velocity_m_per_s": velocity})
    _echo_summary(out)
    click.echo(f"output: {path}")


# ---------------------------------------------------------------- qubit

def _scenario(name):
    from .scenario import load_scenario
    return load_scenario(name)


@cli.command("rabi")
@click.argument("scenario")
@click.option("--n0", type=float, default=None, help="Override the initial mean phonon number.")
@pass_state
def rabi(st: State, scenario, n0):
    """Rabi trace of a bundled scenario name or scenario file."""
    from dataclasses import replace

    from .reproduce import Output, plot_trajectories, run_rabi

    sc = _scenario(scenario)
    if n0 is not None:
        sc = replace(sc, config=sc.config.replace(n_initial=n0))
    res = Output()
    ctx = st.context()
    st.out.mkdir(parents=True, exist_ok=True)
    traj = run_rabi(ctx, sc, f"rabi_{sc.name}", res)
    if st.plot:
        plot_trajectories(ctx, res, [traj], [sc.name], f"rabi_{sc.name}.svg")
    _echo_summary(res.summary)
    for f in res.files:
        click.echo(f"output: {f}")


@cli.command("sideband")
@click.argument("scenario", default="sideband")
@pass_state
def sideband(st: State, scenario):
    """Transition probability against detuning for a fixed pulse."""
    from .reproduce import Output, run_spectrum

    sc = _scenario(scenario)
    res = Output()
    st.out.mkdir(parents=True, exist_ok=True)
    run_spectrum(st.context(), sc, f"sideband_{sc.name}", res)
    _echo_summary(res.summary)
    for f in res.files:
        click.echo(f"output: {f}")


@cli.command("preturnon")
@click.argument("scenario", default="preturnon")
@pass_state
def preturnon(st: State, scenario):
    """Resonance drift against the delay after the charging light is switched on."""
    from .reproduce import Output, run_preturnon

    sc = _scenario(scenario)
    res = Output()
    st.out.mkdir(parents=True, exist_ok=True)
    run_preturnon(st.context(), sc, f"preturnon_{sc.name}", res)
    _echo_summary(res.summary)
    for f in res.files:
        click.echo(f"output: {f}")


# ---------------------------------------------------------------- fits

@cli.group()
def fit():
    """Parameter estimation from measured data."""


@fit.command("spv")
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--free", default="sigma_fs", show_default=True,
              help="Comma-separated subset of sigma_fs, sigma_capture, E_fs, sigma_o_scale.")
@click.option("--restarts", type=click.IntRange(1), default=5, show_default=True)
@click.option("--max-evaluations", type=click.IntRange(1), default=200, show_default=True)
@pass_state
def fit_spv_cmd(st: State, dataset, free, restarts, max_evaluations):
    """Fit SPV model parameters to a compensation-voltage dataset (CSV)."""
    from .fit import FitProblem, fit_spv, sensitivity_ratio, apply_parameters

    ds = ingest_dataset(dataset)
    try:
        problem = FitProblem(free=tuple(s.strip() for s in free.split(",") if s.strip()),
                             material=st.material, restarts=restarts, seed=st.seed,
                             max_evaluations=max_evaluations)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    result = fit_spv(ds, problem)
    ratio = sensitivity_ratio(apply_parameters(st.material, result.params))
    report = result.report() + f"sensitivity_ratio_s_per_cm: {ratio:.6g}\n"
    st.out.mkdir(parents=True, exist_ok=True)
    path = st.out / "fit_spv_report.txt"
    path.write_text(f"# spvtrap {__version__} seed={st.seed}\n" + report, encoding="utf-8")
    click.echo(report, nl=False)
    click.echo(f"output: {path}")


@fit.command("ocs")
@click.argument("points", type=click.Path(dir_okay=False), required=False)
@click.option("--restarts", type=click.IntRange(1), default=5, show_default=True)
@pass_state
def fit_ocs_cmd(st: State, points, restarts):
    """Fit the Hulthen parameters to normalised cross-section points.

    POINTS is a CSV with columns photon_energy_eV, sigma_norm; without it the
    tabulated cross sections of the material configuration are used.
    """
    from .fit import FitProblem, OCS_PARAMETERS, fit_ocs, table_ratio_points

    if points is None:
        pts = table_ratio_points(st.material)
    else:
        header, arr = read_csv(points)
        try:
            pts = arr[:, [header.index("photon_energy_eV"), header.index("sigma_norm")]]
        except ValueError as exc:
            raise DatasetError([(1, "header needs photon_energy_eV and sigma_norm")]) from exc
    r = fit_ocs(pts, FitProblem(free=OCS_PARAMETERS, restarts=restarts, seed=st.seed))
    lines = [f"param.a_cm: {r.params.a:.6g}", f"param.lam: {r.params.lam:.6g}",
             f"param.E_io_eV: {r.params.E_io:.6g}", f"cost: {r.cost:.6g}",
             f"log_scale: {r.log_scale:.6g}"]
    lines += [f"residual.{i}: {v:.6g}" for i, v in enumerate(r.residuals)]
    report = "\n".join(lines) + "\n"
    st.out.mkdir(parents=True, exist_ok=True)
    path = st.out / "fit_ocs_report.txt"
    path.write_text(f"# spvtrap {__version__} seed={st.seed}\n" + report, encoding="utf-8")
    click.echo(report, nl=False)
    click.echo(f"output: {path}")


# ---------------------------------------------------------------- reproduce

@cli.command("reproduce")
@click.argument("figure_id", metavar="FIGURE")
@pass_state
def reproduce_cmd(st: State, figure_id):
    """Regenerate the data (and with --plot the SVG) of one figure.

    FIGURE is one of fig3, fig4c, fig4d, fig5b, fig6a ... fig6f, fig8.
    """
    from .reproduce import FIGURES, reproduce

    if figure_id not in FIGURES:
        raise click.BadParameter(f"unknown figure {figure_id!r}; choose from {', '.join(FIGURES)}",
                                 param_hint="FIGURE")
    res = reproduce(figure_id, st.context())
    _echo_summary(res.summary)
    for f in res.files:
        click.echo(f"output: {f}")


# ---------------------------------------------------------------- entry point

def _categorise(exc: BaseException) -> str:
    from .qubit import TraceDriftError

    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, click.exceptions.UsageError):
        return "usage"
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, (ConvergenceError, TraceDriftError)):
        return "solver"
    if isinstance(exc, (DatasetError, OSError)):
        return "io"
    if isinstance(exc, ValueError):
        return "config"
    return "internal"


def run(argv=None) -> int:
    """Run the CLI and return the exit code instead of exiting."""
    try:
        cli.main(args=argv, prog_name="spvtrap", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return _report("usage", exc.format_message())
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        logging.getLogger(__name__).debug("failure", exc_info=True)
        return _report(_categorise(exc), str(exc))
    return 0


def _report(category: str, message: str) -> int:
    code = EXIT_CODES[category]
    line = json.dumps({"category": category, "code": code, "message": message})
    click.echo(f"spvtrap-error: {line}", err=True)
    return code


def main():
    sys.exit(run())
