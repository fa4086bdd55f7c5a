"""Qubit (x) motional-mode dynamics under a time-dependent stray field.

The ion's internal two-level system is driven by a Raman coupling whose
optical phase follows the ion position. The position operator carries the
quantum motion in a truncated Fock basis plus a classical displacement
alpha(t) that integrates the stray-field force, including the rf (Mathieu)
modulation. The composite state obeys a Lindblad equation with amplitude
damping and heating and is integrated with fixed-step RK4.

Fock coherences rho_mn are kept for |m - n| <= K only (``coherence_band``).
Thermal initial states are diagonal and the drive couples neighbouring
Fock states weakly, so far off-diagonal blocks stay negligible; the
``coherence_band=None`` setting keeps everything.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.signal import find_peaks
from scipy.special import eval_genlaguerre, gammaln

from .constants import CONST
from .kernels import band_to_dense, lindblad_propagate

__all__ = [
    "TrapDrive",
    "StrayFieldProfile",
    "SimConfig",
    "CompositeState",
    "Trajectory",
    "TraceDriftError",
    "bath_for_heating",
    "mathieu_factor",
    "force_profile",
    "equilibrium_alpha",
    "displacement_alpha",
    "displacement_matrix",
    "displacement_band",
    "carrier_coupling",
    "hamiltonian_matrix",
    "thermal_populations",
    "default_n_max",
    "lindblad_step",
    "simulate_rabi",
    "purity_bound",
    "apparent_rabi_frequency",
    "sideband_spectrum",
    "spectrum_peaks",
    "preturnon_scan",
    "adiabatic_velocity",
    "adiabatic_resonance",
    "resonance_position",
]

TWO_PI = 2 * math.pi


class TraceDriftError(RuntimeError):
    """Raised when the state trace leaves its tolerance; carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class TrapDrive:
    """rf drive of the linear Paul trap along the axis of interest.

    ``omega_x`` is the secular frequency, which equals the invariant of motion
    for the lowest-order Mathieu solution.
    """

    omega_rf: float = TWO_PI * 22.21e6
    omega_x: float = TWO_PI * 1.6e6
    q_x: float = 0.2
    a_x: float = 0.0

    def __post_init__(self):
        if not (self.omega_rf > 0 and self.omega_x > 0):
            raise ValueError("frequencies must be positive")
        if self.q_x < 0:
            raise ValueError("q_x must be non-negative")
        if self.q_x > 0.4:
            warnings.warn(f"q_x={self.q_x} is outside the lowest-order Mathieu regime",
                          RuntimeWarning, stacklevel=2)


@dataclass(frozen=True)
class StrayFieldProfile:
    """Exponentially rising stray field minus a static compensation field [V/m, s]."""

    E_str: float = 0.0
    E_com: float = 0.0
    tau_str: float = 10e-6
    t_pre: float = 0.0

    def __post_init__(self):
        if self.tau_str <= 0:
            raise ValueError("tau_str must be positive")
        if self.t_pre < 0:
            raise ValueError("t_pre must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    """Numerical and physical settings of one Rabi simulation.

    Attributes
    ----------
    rabi_frequency, detuning : float
        Omega and delta [rad/s].
    gamma : float
        Amplitude-damping rate of the motional mode [1/s]; <n> relaxes to
        ``n_bath`` at this rate. See :func:`bath_for_heating`.
    n_bath, n_initial : float
        Bath and initial thermal mean phonon numbers.
    duration : float
        Simulated time [s].
    eta : float
        Lamb-Dicke parameter.
    n_max : int or None
        Highest Fock state kept; ``None`` selects :func:`default_n_max`.
    dt : float or None
        RK4 step; ``None`` gives 2 pi / (40 omega_rf).
    coherence_band : int or None
        Largest |m - n| kept in the Fock blocks; ``None`` keeps all.
    initial_motion : {"equilibrium", "rest"}
        Classical displacement at t=0: settled in the force F(0), or at the
        trap centre (alpha(0) = 0).
    """

    rabi_frequency: float = TWO_PI * 78e3
    detuning: float = 0.0
    gamma: float = 0.0
    n_bath: float = 0.0
    n_initial: float = 0.0
    duration: float = 100e-6
    eta: float = 0.152
    n_max: int | None = None
    dt: float | None = None
    coherence_band: int | None = 8
    sample_interval: float = 0.1e-6
    initial_motion: str = "equilibrium"
    ion_mass_amu: float = 171.0

    def __post_init__(self):
        if self.duration <= 0 or self.rabi_frequency < 0:
            raise ValueError("duration must be positive and Omega non-negative")
        if self.gamma < 0 or self.n_bath < 0 or self.n_initial < 0:
            raise ValueError("rates and phonon numbers must be non-negative")
        if self.initial_motion not in ("equilibrium", "rest"):
            raise ValueError("initial_motion must be 'equilibrium' or 'rest'")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.coherence_band is not None and self.coherence_band < 1:
            raise ValueError("coherence_band must be at least 1")

    replace = replace


def bath_for_heating(heating_rate: float, omega_x: float, temperature: float = 300.0):
    """(gamma, n_bath) for a given heating rate [quanta/s] and bath temperature.

    With n_bath = 1/(e^{hbar w/kT} - 1) and up/down rates gamma n_bath and
    gamma (n_bath + 1), the net heating of a cold ion is gamma n_bath.
    """
    x = CONST.reduced_planck * omega_x / (CONST.boltzmann * temperature)
    n_bath = 1.0 / math.expm1(x)
    return heating_rate / n_bath, n_bath


def mathieu_factor(t, drive: TrapDrive):
    """(1 + (q/2) cos w_rf t) / (1 + q/2): lowest-order rf modulation of the mode function."""
    t = np.asarray(t, float)
    out = (1 + 0.5 * drive.q_x * np.cos(drive.omega_rf * t)) / (1 + 0.5 * drive.q_x)
    return out if out.ndim else float(out)


def force_profile(t, sfp: StrayFieldProfile):
    """F(t) = e (E_str (1 - e^{-(t_pre + t)/tau}) - E_com) [N]."""
    t = np.asarray(t, float)
    rise = -np.expm1(-(sfp.t_pre + t) / sfp.tau_str)
    out = CONST.elementary_charge * (sfp.E_str * rise - sfp.E_com)
    return out if out.ndim else float(out)


def _x0(mass_amu: float, omega_x: float) -> float:
    return math.sqrt(CONST.reduced_planck / (2 * mass_amu * CONST.atomic_mass_unit * omega_x))


def equilibrium_alpha(force: float, drive: TrapDrive, x0: float) -> complex:
    """Stationary alpha for a constant force, averaging the rf factor over a cycle."""
    return complex(x0 * force / (CONST.reduced_planck * drive.omega_x * (1 + 0.5 * drive.q_x)))


def displacement_alpha(t, sfp: StrayFieldProfile, drive: TrapDrive, x0: float,
                       alpha0: complex = 0.0):
    """Classical displacement alpha(t) on a uniform grid starting at t=0.

    alpha(t) = e^{-i w t} [alpha(0) + (i/hbar) int_0^t e^{i w t'} m(t') x0 F(t') dt']
    with m the Mathieu factor. The running integral is a cumulative Simpson
    sum over the same grid (fourth order in the spacing).
    """
    t = np.asarray(t, float)
    if t.ndim != 1 or len(t) < 2 or t[0] != 0.0:
        raise ValueError("time grid must be one-dimensional and start at 0")
    w = drive.omega_x
    g = np.exp(1j * w * t) * mathieu_factor(t, drive) * x0 * force_profile(t, sfp) \
        / CONST.reduced_planck
    integral = (cumulative_simpson(g.real, x=t, initial=0.0)
                + 1j * cumulative_simpson(g.imag, x=t, initial=0.0))
    return np.exp(-1j * w * t) * (alpha0 + 1j * integral)


def adiabatic_velocity(t, sfp: StrayFieldProfile, drive: TrapDrive, mass_amu: float = 171.0):
    """Velocity of an ion following the rising field adiabatically [m/s]."""
    t = np.asarray(t, float)
    dE = sfp.E_str * np.exp(-(sfp.t_pre + t) / sfp.tau_str) / sfp.tau_str
    m = mass_amu * CONST.atomic_mass_unit
    return CONST.elementary_charge * dE / (m * drive.omega_x ** 2 * (1 + 0.5 * drive.q_x))


def adiabatic_resonance(delays, sfp: StrayFieldProfile, drive: TrapDrive, eta: float,
                        pulse_time: float = 80e-6, mass_amu: float = 171.0) -> np.ndarray:
    """Expected resonance detuning [rad/s] of a pulse starting ``delay`` after turn-on.

    The adiabatic ion position moves by dx during the pulse; the line sits at
    the mean Doppler shift dk dx / T with dk = eta / x0, the wavevector the
    simulation itself uses.
    """
    delays = np.asarray(delays, float)
    m = mass_amu * CONST.atomic_mass_unit
    dk = eta / _x0(mass_amu, drive.omega_x)
    scale = CONST.elementary_charge * sfp.E_str / (m * drive.omega_x ** 2 * (1 + 0.5 * drive.q_x))
    t0 = sfp.t_pre + delays
    dx = scale * (np.exp(-t0 / sfp.tau_str) - np.exp(-(t0 + pulse_time) / sfp.tau_str))
    return dk * dx / pulse_time


def resonance_position(detunings, p1) -> float:
    """Line centre from a parabola through the highest sample and its neighbours."""
    d = np.asarray(detunings, float)
    p = np.asarray(p1, float)
    k = int(np.argmax(p))
    if 0 < k < len(p) - 1:
        a, b, c = p[k - 1:k + 2]
        den = a - 2 * b + c
        if den < 0:
            h = 0.5 * (d[k + 1] - d[k - 1])
            return float(d[k] + 0.5 * h * (a - c) / den)
    return float(d[k])


# ------------------------------------------------------------ Fock operators

def _displacement_elements(eta: float, m, n):
    lo = np.minimum(m, n)
    d = np.abs(m - n)
    x = eta * eta
    logmag = 0.5 * (gammaln(lo + 1.0) - gammaln(lo + d + 1.0)) - 0.5 * x
    with np.errstate(divide="ignore"):
        logmag = logmag + d * (math.log(eta) if eta > 0 else -np.inf)
    mag = np.where(d == 0, math.exp(-0.5 * x), np.exp(logmag))
    return mag * (1j ** (d % 4)) * eval_genlaguerre(lo, d, x)


def displacement_matrix(eta: float, n_states: int) -> np.ndarray:
    """<m| exp(i eta (a + a^dagger)) |n> from the associated-Laguerre closed form.

    The matrix is symmetric; its diagonal is exp(-eta^2/2) L_n(eta^2).
    """
    idx = np.arange(n_states)
    m, n = np.meshgrid(idx, idx, indexing="ij")
    return _displacement_elements(eta, m, n)


def displacement_band(eta: float, n_states: int, width: int) -> np.ndarray:
    """Diagonal-major band ``band[o, m] = D[m, m + o - width]`` (zero outside the matrix)."""
    m = np.arange(n_states)[None, :]
    n = m + np.arange(-width, width + 1)[:, None]
    inside = (n >= 0) & (n < n_states)
    out = np.zeros((2 * width + 1, n_states), complex)
    mm, nn = np.broadcast_arrays(m, n)
    out[inside] = _displacement_elements(eta, mm[inside], nn[inside])
    return out


def carrier_coupling(eta: float, n) -> np.ndarray:
    """Omega_nn / Omega = exp(-eta^2/2) L_n(eta^2)."""
    return math.exp(-0.5 * eta * eta) * eval_genlaguerre(np.asarray(n), 0, eta * eta)


def hamiltonian_matrix(t: float, alpha: complex, config: SimConfig, n_states: int,
                       drive: TrapDrive = TrapDrive()) -> np.ndarray:
    """H / hbar on qubit (x) Fock, ordered (|0>, |1>) (x) (|0>..|N-1>) [rad/s].

    Warns if the truncated displacement operator has weight at the edge.
    """
    d0 = displacement_matrix(config.eta, n_states)
    if abs(d0[-1, 0]) > 1e-8:
        warnings.warn("Fock truncation too small for this Lamb-Dicke parameter",
                      RuntimeWarning, stacklevel=2)
    e = np.exp(1j * drive.omega_x * t * np.arange(n_states))
    phase = np.exp(1j * (2 * config.eta * alpha.real - config.detuning * t))
    b = 0.5 * config.rabi_frequency * phase * d0 * np.outer(e, e.conj())
    h = np.zeros((2 * n_states, 2 * n_states), complex)
    h[n_states:, :n_states] = b
    h[:n_states, n_states:] = b.conj().T
    return h


def thermal_populations(nbar: float, n_states: int) -> np.ndarray:
    """P_n = nbar^n / (1 + nbar)^{n+1}, renormalised over the kept states."""
    if nbar == 0:
        p = np.zeros(n_states)
        p[0] = 1.0
        return p
    n = np.arange(n_states)
    p = np.exp(n * math.log(nbar / (1 + nbar))) / (1 + nbar)
    return p / p.sum()


def default_n_max(config: SimConfig, tail: float = 1e-4) -> int:
    """Fock cutoff covering both the rule of thumb and the thermal tail.

    The thermal tail is evaluated for the mean phonon number reached at the
    end of the run, n0 + gamma n_bath T (plus one for the heating spread).
    """
    n0 = config.n_initial
    rule = max(30, math.ceil(n0 + 10 * math.sqrt(n0 + 1)))
    nf = n0 + config.gamma * config.n_bath * config.duration + 1.0
    tail_cut = math.ceil(math.log(tail) / math.log(nf / (nf + 1)))
    return max(rule, tail_cut)


# ------------------------------------------------------------- state & steps

@dataclass
class CompositeState:
    """Banded Fock blocks of the qubit (x) oscillator density matrix at time ``t``.

    Each block is stored diagonal-major, ``r[j, m] = rho[m, m + j - K]``.
    """

    r00: np.ndarray
    r01: np.ndarray
    r11: np.ndarray
    t: float = 0.0

    @property
    def band(self) -> int:
        return (self.r00.shape[0] - 1) // 2

    @property
    def n_states(self) -> int:
        return self.r00.shape[1]

    @classmethod
    def thermal(cls, nbar: float, n_states: int, band: int | None = None):
        K = n_states - 1 if band is None else min(band, n_states - 1)
        z = np.zeros((2 * K + 1, n_states), complex)
        r00 = z.copy()
        r00[K] = thermal_populations(nbar, n_states)
        return cls(r00, z.copy(), z.copy())

    def dense(self) -> np.ndarray:
        K, N = self.band, self.n_states
        out = np.zeros((2 * N, 2 * N), complex)
        out[:N, :N] = band_to_dense(self.r00, K)
        out[:N, N:] = band_to_dense(self.r01, K)
        out[N:, :N] = out[:N, N:].conj().T
        out[N:, N:] = band_to_dense(self.r11, K)
        return out

    def qubit(self) -> np.ndarray:
        K = self.band
        c = self.r01[K].sum()
        return np.array([[self.r00[K].sum(), c], [np.conj(c), self.r11[K].sum()]])

    def trace(self) -> float:
        K = self.band
        return float((self.r00[K] + self.r11[K]).real.sum())


def lindblad_step(state: CompositeState, coupling, phase, gamma: float, n_bath: float,
                  dt: float, eta: float, use_numba=None) -> CompositeState:
    """One RK4 step of the block master equation.

    ``coupling`` and ``phase`` hold (Omega/2) e^{i(2 eta Re alpha - delta t)} and
    the oscillator phase w_x t at t, t + dt/2 and t + dt.
    """
    K = state.band
    new = CompositeState(state.r00.copy(), state.r01.copy(), state.r11.copy(), state.t + dt)
    dband = displacement_band(eta, state.n_states, 2 * K)
    _, abort = lindblad_propagate(new.r00, new.r01, new.r11, dband, np.asarray(coupling),
                                  np.asarray(phase), gamma * (n_bath + 1), gamma * n_bath,
                                  dt, 1, 1, trace_tol=1e-5, use_numba=use_numba)
    if abort >= 0:
        raise TraceDriftError(f"trace drift beyond 1e-5 at t={state.t:.3e} s")
    return new


@dataclass
class Trajectory:
    """Sampled observables of one run.

    ``bloch`` columns are (x, y, z) with z = rho_00 - rho_11 and
    x + i y = 2 rho_10; ``purity`` is Tr rho_qubit^2.
    """

    times: np.ndarray
    p1: np.ndarray
    bloch: np.ndarray
    purity: np.ndarray
    alpha: np.ndarray
    trace: np.ndarray
    mean_phonons: np.ndarray
    full_purity: np.ndarray
    n_states: int = 0
    band: int = 0
    dt: float = 0.0
    final_state: CompositeState | None = field(default=None, repr=False)

    def as_table(self) -> np.ndarray:
        """Columns t, P1, x, y, z, purity, Re alpha, Im alpha."""
        return np.column_stack([self.times, self.p1, self.bloch, self.purity,
                                self.alpha.real, self.alpha.imag])


def _time_grid(config: SimConfig, drive: TrapDrive, duration: float):
    dt_max = TWO_PI / (40 * drive.omega_rf)
    dt = dt_max if config.dt is None else config.dt
    if dt > dt_max * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3e} s exceeds 2 pi/(40 w_rf) = {dt_max:.3e} s")
    nsteps = max(1, math.ceil(duration / dt - 1e-9))
    return duration / nsteps, nsteps


def _drive_grids(config, sfp, drive, dt, nsteps):
    th = np.arange(2 * nsteps + 1) * (0.5 * dt)
    x0 = _x0(config.ion_mass_amu, drive.omega_x)
    a0 = 0.0
    if config.initial_motion == "equilibrium":
        a0 = equilibrium_alpha(force_profile(0.0, sfp), drive, x0)
    alpha = displacement_alpha(th, sfp, drive, x0, a0)
    phase = 2 * config.eta * alpha.real - config.detuning * th
    cgrid = 0.5 * config.rabi_frequency * np.exp(1j * phase)
    return cgrid, drive.omega_x * th, alpha


def _run(config: SimConfig, sfp: StrayFieldProfile, drive: TrapDrive, duration: float,
         sample_interval: float | None, use_numba=None) -> Trajectory:
    dt, nsteps = _time_grid(config, drive, duration)
    n_states = (config.n_max if config.n_max is not None else default_n_max(config)) + 1
    state = CompositeState.thermal(config.n_initial, n_states, config.coherence_band)
    K = state.band
    dband = displacement_band(config.eta, n_states, 2 * K)
    cgrid, thgrid, alpha = _drive_grids(config, sfp, drive, dt, nsteps)
    stride = nsteps if sample_interval is None else max(1, round(sample_interval / dt))
    obs, abort = lindblad_propagate(state.r00, state.r01, state.r11, dband, cgrid, thgrid,
                                    config.gamma * (config.n_bath + 1),
                                    config.gamma * config.n_bath, dt, nsteps, stride,
                                    trace_tol=1e-5, use_numba=use_numba)
    rows = len(obs) if abort < 0 else abort // stride + 1
    obs = obs[:rows]
    steps = np.arange(rows) * stride
    times = steps * dt
    tr = obs[:, 1]
    r01 = obs[:, 3] + 1j * obs[:, 4]
    p1 = obs[:, 0]
    z = (tr - p1) - p1
    bloch = np.column_stack([2 * r01.real, -2 * r01.imag, z])
    purity = (tr - p1) ** 2 + p1 ** 2 + 2 * np.abs(r01) ** 2
    state.t = times[-1]
    traj = Trajectory(times, p1, bloch, purity, alpha[2 * steps], tr, obs[:, 2], obs[:, 5],
                      n_states, K, dt, state)
    if abort >= 0:
        raise TraceDriftError(
            f"trace {tr[-1]:.8f} drifted beyond 1e-5 at t={times[-1]:.3e} s "
            f"(N={n_states}, <n>={obs[-1, 2]:.2f}); raise n_max or lower dt", traj)
    return traj


def simulate_rabi(config: SimConfig, sfp: StrayFieldProfile = StrayFieldProfile(),
                  drive: TrapDrive = TrapDrive(), use_numba=None) -> Trajectory:
    """Rabi evolution from |0><0| (x) thermal(n0), sampled every ``sample_interval``."""
    return _run(config, sfp, drive, config.duration, config.sample_interval, use_numba)


def purity_bound(theta):
    """Lowest purity 0.5 (1 + sin theta) of a thermally damped Rabi circle."""
    theta = np.asarray(theta, float)
    if np.any((theta < 0) | (theta > math.pi / 2 + 1e-12)):
        raise ValueError("theta must lie in [0, pi/2]")
    out = 0.5 * (1 + np.sin(theta))
    return out if out.ndim else float(out)


def apparent_rabi_frequency(times, p1, f_max: float | None = None) -> float:
    """Dominant oscillation frequency of P1(t) [Hz].

    Periodogram peak of the mean-removed, Hann-windowed trace with
    eight-fold zero padding, refined by a parabola through the top bin.
    """
    times = np.asarray(times, float)
    y = np.asarray(p1, float) - np.mean(p1)
    dt = times[1] - times[0]
    n = len(y)
    nfft = 8 * (1 << int(math.ceil(math.log2(n))))
    spec = np.abs(np.fft.rfft(y * np.hanning(n), nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    lo = int(np.searchsorted(freqs, 0.5 / (n * dt)))  # skip the dc lobe
    hi = len(freqs) if f_max is None else int(np.searchsorted(freqs, f_max))
    k = lo + int(np.argmax(spec[lo:hi]))
    if 0 < k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        shift = 0.5 * (a - c) / (a - 2 * b + c) if (a - 2 * b + c) != 0 else 0.0
        return float(freqs[k] + shift * (freqs[1] - freqs[0]))
    return float(freqs[k])


def sideband_spectrum(config: SimConfig, sfp: StrayFieldProfile, drive: TrapDrive,
                      detunings, pulse_time: float = 80e-6, workers: int = 1,
                      use_numba=None) -> np.ndarray:
    """Columns (delta [rad/s], P1 after a pulse of ``pulse_time``).

    Each detuning is an independent run; ``workers > 1`` spreads them over
    processes.
    """
    detunings = np.asarray(detunings, float)
    cfg = config.replace(duration=pulse_time)
    if cfg.n_max is None:
        cfg = cfg.replace(n_max=default_n_max(cfg))
    jobs = [(cfg.replace(detuning=float(d)), sfp, drive, use_numba) for d in detunings]
    p1 = _map(_final_p1, jobs, workers)
    return np.column_stack([detunings, p1])


def _final_p1(args):
    cfg, sfp, drive, use_numba = args
    traj = _run(cfg, sfp, drive, cfg.duration, None, use_numba)
    return float(traj.p1[-1])


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def spectrum_peaks(spectrum: np.ndarray, floor: float = 0.05, prominence: float = 0.02):
    """Detunings [rad/s] and heights of local maxima of P1 above ``floor``."""
    spectrum = np.asarray(spectrum, float)
    p = spectrum[:, 1]
    padded = np.concatenate([[0.0], p, [0.0]])  # edge maxima count as peaks
    idx, _ = find_peaks(padded, height=floor, prominence=prominence)
    idx = idx - 1
    return spectrum[idx, 0], p[idx]


def preturnon_scan(config: SimConfig, sfp: StrayFieldProfile, drive: TrapDrive, delays,
                   detunings, pulse_time: float = 80e-6, workers: int = 1,
                   use_numba=None) -> np.ndarray:
    """P1 map of shape (len(delays), len(detunings)).

    Row i uses the field profile shifted by ``t_pre = delays[i]`` (the time
    between switching on the charging light and starting the pulse).
    """
    delays = np.asarray(delays, float)
    rows = [sideband_spectrum(config, replace(sfp, t_pre=float(d)), drive, detunings,
                              pulse_time, workers, use_numba)[:, 1] for d in delays]
    return np.array(rows)
