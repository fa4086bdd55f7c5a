"""Qubit-simulation scenarios read from configuration files.

A scenario bundles the trap drive, the stray-field history, the simulation
settings and (optionally) detuning and delay grids. Keys carry their units:

.. code-block:: ini

    [trap]
    rf_frequency_MHz = 22.21
    secular_frequency_MHz = 1.6
    q_x = 0.2

    [qubit]
    rabi_frequency_kHz = 78
    heating_rate_quanta_per_s = 1e4

    [motion]
    initial_mean_phonons = 6

    [stray_field]
    E_str_V_per_m = 20
    E_com_V_per_m = 20
    t_pre_us = 1000

Grids are comma-separated numbers or inclusive ``start:stop:step`` ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, _float, _get, bundled_path, read_config
from .qubit import SimConfig, StrayFieldProfile, TrapDrive, bath_for_heating

__all__ = ["Scenario", "parse_grid", "scenario_from_config", "load_scenario",
           "bundled_scenarios"]

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class Scenario:
    name: str
    config: SimConfig
    field: StrayFieldProfile
    drive: TrapDrive
    heating_rate: float
    pulse_time: float = 80e-6
    detunings: np.ndarray | None = None  # rad/s
    delays: np.ndarray | None = None  # s


def parse_grid(text: str) -> np.ndarray:
    """Values of ``"1, 2, 10:20:5"`` -> [1, 2, 10, 15, 20]."""
    out = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        try:
            nums = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"bad grid item {item!r}") from exc
        if len(nums) == 1:
            out.append(nums[0])
        elif len(nums) == 3:
            start, stop, step = nums
            if step <= 0 or stop < start:
                raise ConfigError(f"bad range {item!r}: need start <= stop and step > 0")
            n = int(math.floor((stop - start) / step + 1e-9))
            out.extend(start + step * np.arange(n + 1))
        else:
            raise ConfigError(f"bad grid item {item!r}")
    if not out:
        raise ConfigError("empty grid")
    return np.unique(np.round(np.array(out, float), 9))


def scenario_from_config(cp, name: str = "scenario") -> Scenario:
    try:
        drive = TrapDrive(
            omega_rf=TWO_PI * 1e6 * _float(cp, "trap", "rf_frequency_MHz", 22.21),
            omega_x=TWO_PI * 1e6 * _float(cp, "trap", "secular_frequency_MHz", 1.6),
            q_x=_float(cp, "trap", "q_x", 0.2),
            a_x=_float(cp, "trap", "a_x", 0.0),
        )
        heating = _float(cp, "qubit", "heating_rate_quanta_per_s", 1e4)
        gamma, n_bath = bath_for_heating(heating, drive.omega_x,
                                         _float(cp, "qubit", "bath_temperature_K", 300.0))
        n_max = _get(cp, "motion", "max_fock_state", "").strip()
        band = _get(cp, "motion", "coherence_band", "8").strip()
        dt_ns = _get(cp, "run", "time_step_ns", "").strip()
        config = SimConfig(
            rabi_frequency=TWO_PI * 1e3 * _float(cp, "qubit", "rabi_frequency_kHz", 78.0),
            detuning=TWO_PI * 1e3 * _float(cp, "qubit", "detuning_kHz", 0.0),
            gamma=gamma,
            n_bath=n_bath,
            n_initial=_float(cp, "motion", "initial_mean_phonons", 0.0),
            duration=1e-6 * _float(cp, "run", "duration_us", 100.0),
            eta=_float(cp, "qubit", "lamb_dicke", 0.152),
            n_max=int(n_max) if n_max else None,
            dt=float(dt_ns) * 1e-9 if dt_ns else None,
            coherence_band=None if band.lower() == "all" else int(band),
            sample_interval=1e-6 * _float(cp, "run", "sample_interval_us", 0.1),
            initial_motion=_get(cp, "motion", "initial_motion", "equilibrium").strip(),
            ion_mass_amu=_float(cp, "qubit", "ion_mass_amu", 171.0),
        )
        sfp = StrayFieldProfile(
            E_str=_float(cp, "stray_field", "E_str_V_per_m", 0.0),
            E_com=_float(cp, "stray_field", "E_com_V_per_m", 0.0),
            tau_str=1e-6 * _float(cp, "stray_field", "tau_str_us", 10.0),
            t_pre=1e-6 * _float(cp, "stray_field", "t_pre_us", 0.0),
        )
        det = _get(cp, "spectrum", "detunings_kHz", "").strip()
        delays = _get(cp, "scan", "delays_us", "").strip()
        return Scenario(
            name=name,
            config=config,
            field=sfp,
            drive=drive,
            heating_rate=heating,
            pulse_time=1e-6 * _float(cp, "spectrum", "pulse_time_us", 80.0),
            detunings=TWO_PI * 1e3 * parse_grid(det) if det else None,
            delays=1e-6 * parse_grid(delays) if delays else None,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in bundled_path("scenarios").glob("*.cfg"))


def load_scenario(name_or_path, environ=None) -> Scenario:
    """Load a bundled scenario by name (``fig6b``) or a scenario file by path."""
    p = Path(str(name_or_path))
    if not p.suffix:
        cand = bundled_path("scenarios") / f"{p.name}.cfg"
        if not cand.exists():
            raise ConfigError(f"unknown scenario {name_or_path!r}; "
                              f"bundled: {', '.join(bundled_scenarios())}")
        p = cand
    if not p.exists():
        raise ConfigError(f"scenario file {p} not found")
    return scenario_from_config(read_config(p, environ=environ), p.stem)
