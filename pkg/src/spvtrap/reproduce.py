"""Drivers that regenerate the figure data sets as CSV tables and SVG plots.

Each ``figure_*`` function writes its files into ``out`` and returns a
:class:`Output` listing them plus a dict of headline numbers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bulk import relaxation_curves
from .config import config_hash, material_to_config
from .constants import HC_EV_NM
from .ddsolver import flux_sweep, solve_equilibrium, solve_steady_illuminated, spectral_sweep
from .fit import FitProblem, OCS_PARAMETERS, fit_ocs, table_ratio_points
from .io import save_svg, write_csv
from .ion import ElectrostaticMap, field_to_compensation_voltage, spv_to_field
from .params import Illumination, MaterialSystem
from .photoionization import HulthenParams, cross_section
from .qubit import (_x0, adiabatic_resonance, adiabatic_velocity, apparent_rabi_frequency,
                    preturnon_scan, resonance_position, sideband_spectrum, simulate_rabi,
                    spectrum_peaks)
from .scenario import Scenario, load_scenario

log = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
FIGURES = ("fig3", "fig4c", "fig4d", "fig5b", "fig6a", "fig6b", "fig6c", "fig6d", "fig6e",
           "fig6f", "fig8")

# interface-state densities for the Fig. 3 (a)-(c) family, units of 1e10 cm^-2
FIG3_SIGMA_FS = (0.0, 2.0, 4.0, 8.0, 16.0, 27.0)
FIG3_FLUXES = (1e11, 1e12, 1e13, 1e14, 1e15, 1e16)
FIG4C_WAVELENGTHS = (1300.0, 1055.0, 635.0, 399.0, 355.0)


@dataclass
class Output:
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


@dataclass
class RunContext:
    out: Path
    material: MaterialSystem
    plot: bool = False
    seed: int = 0
    workers: int = 1
    environ: dict | None = None

    def provenance(self, **extra) -> dict:
        prov = {"config_hash": config_hash(material_to_config(self.material)), "seed": self.seed}
        prov.update(extra)
        return prov


def _csv(ctx: RunContext, res: Output, name, header, rows, **prov):
    res.files.append(write_csv(ctx.out / name, header, rows, ctx.provenance(**prov)))


def _svg(ctx: RunContext, res: Output, fig, name, **prov):
    res.files.append(save_svg(fig, ctx.out / name, ctx.provenance(**prov)))


def _figure(nrows=1, ncols=1, size=(6.4, 4.8)):
    from matplotlib.figure import Figure

    fig = Figure(figsize=size, layout="constrained")
    axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def _summary_file(ctx: RunContext, res: Output, name):
    path = ctx.out / name
    lines = [f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}"
             for k, v in res.summary.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    res.files.append(path)


# ------------------------------------------------------------- charging model

def _profile_rows(tag, r):
    eq = r.equilibrium
    vt = eq.vt
    x_um = eq.mesh.x * 1e4
    return [(tag, x, du * vt, u * vt, dn, dp, n, p) for x, du, u, dn, dp, n, p in
            zip(x_um, r.delta_u, eq.u, r.delta_n, r.delta_p, r.n, r.p)]


def figure_fig3(ctx: RunContext) -> Output:
    """Profiles against interface-state density (fixed flux) and against flux."""
    res = Output()
    ms0 = ctx.material
    header = ("tag", "x_um", "dphi_V", "phi0_V", "dn_cm3", "dp_cm3", "n_cm3", "p_cm3")
    rows, inset = [], []
    for s in FIG3_SIGMA_FS:
        ms = ms0.replace(interface=ms0.interface.with_density(s * 1e10))
        eq = solve_equilibrium(ms)
        r = solve_steady_illuminated(eq, ms, Illumination(1e15, 1055.0))
        rows += _profile_rows(s * 1e10, r)
        inset.append((s * 1e10, r.spv, r.f_s, r.f_s_equilibrium))
    _csv(ctx, res, "fig3_sigma_profiles.csv", ("sigma_fs_cm2",) + header[1:], rows,
         flux_cm2s=1e15, wavelength_nm=1055)
    _csv(ctx, res, "fig3_sigma_inset.csv", ("sigma_fs_cm2", "spv_V", "f_s", "f_s0"), inset)

    ms = ms0.replace(interface=ms0.interface.with_density(8e10))
    frows, finset = [], []
    for N0, r in flux_sweep(ms, 1055.0, FIG3_FLUXES):
        if isinstance(r, Exception):
            finset.append((N0, math.nan, math.nan, math.nan))
            continue
        frows += _profile_rows(N0, r)
        finset.append((N0, r.spv, r.f_s, r.f_s_equilibrium))
    _csv(ctx, res, "fig3_flux_profiles.csv", ("flux_cm2s",) + header[1:], frows,
         sigma_fs_cm2=8e10, wavelength_nm=1055)
    _csv(ctx, res, "fig3_flux_inset.csv", ("flux_cm2s", "spv_V", "f_s", "f_s0"), finset)
    for s, spv, *_ in inset:
        res.summary[f"spv_V.sigma_fs={s:.3g}"] = spv
    for N0, spv, fs, _ in finset:
        res.summary[f"spv_V.flux={N0:.0e}"] = spv
        res.summary[f"f_s.flux={N0:.0e}"] = fs

    if ctx.plot:
        fig, ax = _figure(2, 3, (13, 7))
        for data, col, key in ((rows, 0, "sigma_fs"), (frows, 3, "flux")):
            arr = np.array(data, float)
            for tag in np.unique(arr[:, 0]):
                d = arr[(arr[:, 0] == tag) & (arr[:, 1] <= 3.0)]
                lab = f"{tag / 1e10:g}" if key == "sigma_fs" else f"{tag:.0e}"
                i, j = divmod(col, 3)
                ax[i, j].plot(d[:, 1], d[:, 2], label=lab)
                if col == 0:
                    ax[0, 1].semilogy(d[:, 1], np.abs(d[:, 4]), "b-", lw=0.8)
                    ax[0, 1].semilogy(d[:, 1], np.abs(d[:, 5]), "r-", lw=0.8)
                    ax[0, 2].semilogy(d[:, 1], d[:, 6], "b-", lw=0.8)
                    ax[0, 2].semilogy(d[:, 1], d[:, 7], "r-", lw=0.8)
                else:
                    ax[1, 2].semilogy(d[:, 1], d[:, 6], "b-", lw=0.8)
                    ax[1, 2].semilogy(d[:, 1], d[:, 7], "r-", lw=0.8)
        fi = np.array(finset, float)
        ax[1, 1].semilogx(fi[:, 0], fi[:, 2], "o")
        ax[1, 1].axhline(fi[0, 3], ls="--", c="k")
        ax[0, 0].set_title("dphi vs x, legend sigma_fs [1e10 cm^-2]")
        ax[0, 1].set_title("|dn| (blue), |dp| (red)")
        ax[0, 2].set_title("n (blue), p (red)")
        ax[1, 0].set_title("dphi vs x, legend N0")
        ax[1, 1].set_title("mean occupation f_s vs N0")
        ax[1, 2].set_title("n, p vs x")
        for a in ax.flat:
            a.set_xlabel("x [um]")
        ax[1, 1].set_xlabel("N0 [cm^-2 s^-1]")
        ax[0, 0].legend(fontsize=7)
        ax[1, 0].legend(fontsize=7)
        _svg(ctx, res, fig, "fig3.svg")
    _summary_file(ctx, res, "fig3_summary.txt")
    return res


def figure_fig4c(ctx: RunContext) -> Output:
    """Compensation voltage and SPV against flux for each wavelength."""
    res = Output()
    emap = ElectrostaticMap()
    fluxes = np.logspace(11, 18, 15)
    rows = []
    for lam, N0, spv, status in spectral_sweep(ctx.material, FIG4C_WAVELENGTHS, fluxes):
        dv = field_to_compensation_voltage(spv_to_field(spv, emap), emap)
        rows.append((lam, N0, spv, dv, status))
    _csv(ctx, res, "fig4c_spectral_response.csv",
         ("wavelength_nm", "flux_cm2s", "spv_V", "dV_volts", "status"), rows)
    for lam, N0, spv, dv, _ in rows:
        if N0 == fluxes[-1]:
            res.summary[f"dV_volts.{lam:g}nm.flux=1e18"] = dv
    if ctx.plot:
        fig, ax = _figure()
        arr = np.array([r[:4] for r in rows], float)
        for lam in FIG4C_WAVELENGTHS:
            d = arr[arr[:, 0] == lam]
            ax[0, 0].semilogx(d[:, 1], d[:, 3] * 1e3, "o-", label=f"{lam:g} nm")
        ax[0, 0].set_xlabel("photon flux [cm^-2 s^-1]")
        ax[0, 0].set_ylabel("compensation voltage [mV]")
        ax[0, 0].legend()
        _svg(ctx, res, fig, "fig4c.svg")
    _summary_file(ctx, res, "fig4c_summary.txt")
    return res


def figure_fig4d(ctx: RunContext) -> Output:
    """Normalised cross section: tabulated points, fitted and reference curves."""
    res = Output()
    pts = table_ratio_points(ctx.material)
    fit = fit_ocs(pts, FitProblem(free=OCS_PARAMETERS, seed=ctx.seed))
    ref = HulthenParams()
    E = np.linspace(0.9, 3.6, 271)
    s_ref = cross_section(E, ref)
    s_fit = cross_section(E, fit.params)
    # plotted on the scale of the data points
    s_fit_scaled = s_fit * math.exp(fit.log_scale)
    ref_scale = pts[np.argmax(pts[:, 1]), 1] / cross_section(pts[np.argmax(pts[:, 1]), 0], ref)
    _csv(ctx, res, "fig4d_curves.csv", ("photon_energy_eV", "reference_norm", "fitted_norm"),
         zip(E, s_ref * ref_scale, s_fit_scaled))
    _csv(ctx, res, "fig4d_points.csv", ("photon_energy_eV", "wavelength_nm", "sigma_norm"),
         [(e, HC_EV_NM / e, s) for e, s in pts])
    res.summary.update({"fit.a_cm": fit.params.a, "fit.lam": fit.params.lam,
                        "fit.E_io_eV": fit.params.E_io, "fit.cost": fit.cost})
    if ctx.plot:
        fig, ax = _figure()
        a = ax[0, 0]
        a.semilogy(E, np.maximum(s_ref * ref_scale, 1e-8), "k--", label="a=6.4e-8 cm, lam=0.64")
        a.semilogy(E, np.maximum(s_fit_scaled, 1e-8), "k-", label="fit")
        a.semilogy(pts[:, 0], pts[:, 1], "o", label="tabulated")
        a.set_ylim(1e-6, 10)
        a.set_xlabel("photon energy [eV]")
        a.set_ylabel("normalised cross section")
        a.legend()
        _svg(ctx, res, fig, "fig4d.svg")
    _summary_file(ctx, res, "fig4d_summary.txt")
    return res


def figure_fig8(ctx: RunContext) -> Output:
    res = Output()
    ni = np.logspace(2, 16, 57)
    curves = relaxation_curves(ni, 1.0, 1000.0, 300.0)
    _csv(ctx, res, "fig8_relaxation.csv", ("n_i_cm3", "tau_plus_s", "tau_minus_s"), curves,
         tau_eff_s=1.0, mu_n=1000, mu_p=300)
    k = int(np.argmin(np.abs(np.log(curves[:, 1] / curves[:, 2]))))
    res.summary.update({"tau_plus_s.lowest_ni": curves[0, 1], "tau_plus_s.highest_ni": curves[-1, 1],
                        "near_degenerate_ni_cm3": curves[k, 0]})
    if ctx.plot:
        fig, ax = _figure()
        ax[0, 0].loglog(curves[:, 0], curves[:, 1], label="tau_+")
        ax[0, 0].loglog(curves[:, 0], curves[:, 2], label="tau_-")
        ax[0, 0].axhline(1.0, ls="--", c="k")
        ax[0, 0].axvline(curves[k, 0], ls="--", c="grey")
        ax[0, 0].set_xlabel("n_i [cm^-3]")
        ax[0, 0].set_ylabel("time [s]")
        ax[0, 0].legend()
        _svg(ctx, res, fig, "fig8.svg")
    _summary_file(ctx, res, "fig8_summary.txt")
    return res


# ------------------------------------------------------------- qubit dynamics

TRAJECTORY_HEADER = ("t_us", "P1", "bloch_x", "bloch_y", "bloch_z", "purity", "re_alpha",
                     "im_alpha", "mean_phonons")


def trajectory_rows(traj):
    tab = traj.as_table()
    tab[:, 0] *= 1e6
    return np.column_stack([tab, traj.mean_phonons])


def plot_trajectories(ctx, res, trajs, labels, name):
    fig, ax = _figure(2, 3, (13, 7))
    for traj, lab in zip(trajs, labels):
        t = traj.times * 1e6
        ax[0, 0].plot(t, traj.p1, label=lab)
        ax[0, 1].plot(t, traj.purity, label=lab)
        ax[0, 2].plot(t, traj.alpha.real, label=lab)
        b = traj.bloch
        for j, (i1, i2, nm) in enumerate(((0, 2, "x-z"), (1, 2, "y-z"), (0, 1, "x-y"))):
            ax[1, j].plot(b[:, i1], b[:, i2], lw=0.6)
            ax[1, j].set_title(f"Bloch {nm} projection")
            ax[1, j].set_aspect("equal")
            ax[1, j].set_xlim(-1.05, 1.05)
            ax[1, j].set_ylim(-1.05, 1.05)
    ax[0, 0].set_ylabel("P1")
    ax[0, 1].set_ylabel("purity")
    ax[0, 2].set_ylabel("Re alpha")
    for a in ax[0]:
        a.set_xlabel("t [us]")
    ax[0, 0].legend(fontsize=7)
    _svg(ctx, res, fig, name)


def run_rabi(ctx: RunContext, sc: Scenario, prefix: str, res: Output, label="") -> object:
    traj = simulate_rabi(sc.config, sc.field, sc.drive)
    _csv(ctx, res, f"{prefix}_trajectory.csv", TRAJECTORY_HEADER, trajectory_rows(traj),
         scenario=sc.name, n0=sc.config.n_initial, fock_states=traj.n_states,
         coherence_band=traj.band)
    key = f"{label}." if label else ""
    res.summary[f"{key}apparent_rabi_kHz"] = apparent_rabi_frequency(traj.times, traj.p1) / 1e3
    res.summary[f"{key}final_purity"] = float(traj.purity[-1])
    res.summary[f"{key}min_purity"] = float(traj.purity.min())
    res.summary[f"{key}final_mean_phonons"] = float(traj.mean_phonons[-1])
    res.summary[f"{key}fock_states"] = traj.n_states
    return traj


def figure_fig6(ctx: RunContext, panel: str) -> Output:
    res = Output()
    sc = load_scenario(panel, ctx.environ)
    if panel == "fig6a":
        trajs, labels = [], []
        for n0 in (0, 10, 20):
            s = Scenario(**{**sc.__dict__, "config": sc.config.replace(n_initial=float(n0))})
            trajs.append(run_rabi(ctx, s, f"fig6a_n{n0}", res, f"n0={n0}"))
            labels.append(f"n0={n0}")
    else:
        trajs = [run_rabi(ctx, sc, panel, res)]
        labels = [panel]
    if ctx.plot:
        plot_trajectories(ctx, res, trajs, labels, f"{panel}.svg")
    _summary_file(ctx, res, f"{panel}_summary.txt")
    return res


def run_spectrum(ctx: RunContext, sc: Scenario, prefix: str, res: Output, label=""):
    if sc.detunings is None:
        raise ValueError(f"scenario {sc.name} has no [spectrum] detunings_kHz grid")
    spec = sideband_spectrum(sc.config, sc.field, sc.drive, sc.detunings, sc.pulse_time,
                             ctx.workers)
    _csv(ctx, res, f"{prefix}_spectrum.csv", ("detuning_kHz", "P1"),
         np.column_stack([spec[:, 0] / TWO_PI / 1e3, spec[:, 1]]), scenario=sc.name,
         pulse_time_us=sc.pulse_time * 1e6)
    pos, h = spectrum_peaks(spec)
    key = f"{label}." if label else ""
    res.summary[f"{key}peak_count"] = len(pos)
    res.summary[f"{key}peaks_kHz"] = " ".join(f"{p / TWO_PI / 1e3:.1f}" for p in pos)
    return spec


def figure_fig6f(ctx: RunContext) -> Output:
    res = Output()
    specs = []
    for name, label in (("sideband", "preturnon"), ("sideband_no_preturnon", "no_preturnon")):
        sc = load_scenario(name, ctx.environ)
        specs.append((label, run_spectrum(ctx, sc, f"fig6f_{label}", res, label)))
    if ctx.plot:
        fig, ax = _figure(2, 1, (8, 6))
        for a, (label, spec) in zip(ax[:, 0], specs):
            a.plot(spec[:, 0] / TWO_PI / 1e3, spec[:, 1], ".-", lw=0.7)
            a.axhline(0.05, ls=":", c="grey")
            a.set_title(label)
            a.set_ylabel("P1")
        ax[1, 0].set_xlabel("detuning [kHz]")
        _svg(ctx, res, fig, "fig6f.svg")
    _summary_file(ctx, res, "fig6f_summary.txt")
    return res


def run_preturnon(ctx: RunContext, sc: Scenario, prefix: str, res: Output):
    if sc.detunings is None or sc.delays is None:
        raise ValueError(f"scenario {sc.name} needs [spectrum] detunings_kHz and [scan] delays_us")
    pmap = preturnon_scan(sc.config, sc.field, sc.drive, sc.delays, sc.detunings, sc.pulse_time,
                          ctx.workers)
    det_khz = sc.detunings / TWO_PI / 1e3
    rows = [(d * 1e6, f, p) for d, line in zip(sc.delays, pmap) for f, p in zip(det_khz, line)]
    _csv(ctx, res, f"{prefix}_map.csv", ("delay_us", "detuning_kHz", "P1"), rows,
         scenario=sc.name)
    expected = adiabatic_resonance(sc.delays, sc.field, sc.drive, sc.config.eta, sc.pulse_time,
                                   sc.config.ion_mass_amu) / TWO_PI / 1e3
    peak_v = adiabatic_velocity(0.0, sc.field, sc.drive, sc.config.ion_mass_amu)
    res.summary["peak_velocity_nm_per_us"] = peak_v * 1e3
    res.summary["peak_shift_kHz"] = sc.config.eta / _x0(sc.config.ion_mass_amu, sc.drive.omega_x) \
        * peak_v / TWO_PI / 1e3
    trow = []
    for d, line, e in zip(sc.delays, pmap, expected):
        found = resonance_position(det_khz, line)
        trow.append((d * 1e6, found, e))
        res.summary[f"resonance_kHz.delay={d * 1e6:g}us"] = found
        res.summary[f"expected_kHz.delay={d * 1e6:g}us"] = float(e)
    _csv(ctx, res, f"{prefix}_resonance.csv", ("delay_us", "resonance_kHz", "expected_kHz"),
         trow, scenario=sc.name)
    return pmap


def figure_fig5b(ctx: RunContext) -> Output:
    res = Output()
    sc = load_scenario("preturnon", ctx.environ)
    pmap = run_preturnon(ctx, sc, "fig5b", res)
    if ctx.plot:
        fig, ax = _figure()
        det = sc.detunings / TWO_PI / 1e3
        m = ax[0, 0].pcolormesh(det, sc.delays * 1e6, pmap, shading="nearest")
        fig.colorbar(m, ax=ax[0, 0], label="P1")
        ax[0, 0].set_xlabel("detuning [kHz]")
        ax[0, 0].set_ylabel("delay [us]")
        _svg(ctx, res, fig, "fig5b.svg")
    _summary_file(ctx, res, "fig5b_summary.txt")
    return res


def reproduce(figure_id: str, ctx: RunContext) -> Output:
    if figure_id not in FIGURES:
        raise KeyError(figure_id)
    ctx.out.mkdir(parents=True, exist_ok=True)
    if figure_id.startswith("fig6") and figure_id != "fig6f":
        return figure_fig6(ctx, figure_id)
    return globals()[f"figure_{figure_id}"](ctx)
