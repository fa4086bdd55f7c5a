"""Structured key-value configuration files.

Files are INI-style with nested sections written as ``[parent.child]`` and
units spelled out in every key name. Environment variables of the form
``SPVTRAP__<SECTION>__<KEY>`` override file values (section dots become
``_DOT_``), which lets CI tweak a run without editing files.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os
import re
from importlib import resources
from pathlib import Path

from .params import (BulkMaterial, BulkTrap, FixedSurfaceCharge, InterfaceState,
                     MaterialSystem, SlabGeometry)

ENV_PREFIX = "SPVTRAP__"
_AT_NM = re.compile(r"_at_(\d+(?:\.\d+)?)nm$")


class ConfigError(ValueError):
    """Raised for malformed or incomplete configuration files."""


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep unit capitalisation (temperature_K, energy_eV)
    return cp


def apply_env_overrides(cp: configparser.ConfigParser, environ=None) -> list[str]:
    """Apply ``SPVTRAP__SECTION__KEY=value`` overrides in place.

    Matching of section and key names is case-insensitive. Returns the list
    of overridden ``section.key`` names.
    """
    environ = os.environ if environ is None else environ
    applied = []
    for var, value in sorted(environ.items()):
        if not var.startswith(ENV_PREFIX):
            continue
        parts = var[len(ENV_PREFIX):].split("__")
        if len(parts) != 2:
            continue
        sec_name = parts[0].replace("_DOT_", ".").lower()
        key_name = parts[1].lower()
        section = next((s for s in cp.sections() if s.lower() == sec_name), None)
        if section is None:
            cp.add_section(sec_name)
            section = sec_name
        key = next((k for k in cp[section] if k.lower() == key_name), key_name)
        cp[section][key] = value
        applied.append(f"{section}.{key}")
    return applied


def read_config(path=None, text: str | None = None, environ=None) -> configparser.ConfigParser:
    """Read a configuration file (or string) and apply environment overrides."""
    cp = _parser()
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    apply_env_overrides(cp, environ)
    return cp


def bundled_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(str(resources.files("spvtrap") / "data" / name))


def config_text(cp: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cp: configparser.ConfigParser) -> str:
    """Short SHA-256 digest of the canonical configuration text."""
    canon = []
    for sec in sorted(cp.sections()):
        for key in sorted(cp[sec]):
            canon.append(f"{sec}.{key}={cp[sec][key].strip()}")
    return hashlib.sha256("\n".join(canon).encode()).hexdigest()[:16]


def _get(cp, section, key, fallback=None):
    """Option value with a case-insensitive key match (environment overrides are upper case)."""
    if not cp.has_section(section):
        return fallback
    if cp.has_option(section, key):
        return cp.get(section, key)
    low = key.lower()
    for k in cp[section]:
        if k.lower() == low:
            return cp.get(section, k)
    return fallback


def _float(cp, section, key, default=None):
    raw = _get(cp, section, key)
    if raw is not None:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: not a number: {raw!r}") from exc
    if default is None:
        raise ConfigError(f"missing [{section}] {key}")
    return default


def _wavelength_table(cp, section) -> dict[float, float]:
    out = {}
    if not cp.has_section(section):
        return out
    for key, raw in cp[section].items():
        m = _AT_NM.search(key)
        if not m:
            raise ConfigError(f"[{section}] {key}: expected a '*_at_<nm>nm' key")
        out[float(m.group(1))] = _float(cp, section, key)
    return out


def material_from_config(cp: configparser.ConfigParser) -> MaterialSystem:
    """Build a :class:`MaterialSystem`; missing sections fall back to defaults."""
    d = MaterialSystem()
    b, t, s, f, g = d.bulk, d.trap, d.interface, d.fixed, d.slab
    try:
        bulk = BulkMaterial(
            intrinsic_density=_float(cp, "bulk", "intrinsic_density_per_cm3", b.intrinsic_density),
            doping=_float(cp, "bulk", "doping_per_cm3", b.doping),
            electron_mobility=_float(cp, "bulk", "electron_mobility_cm2_per_Vs", b.electron_mobility),
            hole_mobility=_float(cp, "bulk", "hole_mobility_cm2_per_Vs", b.hole_mobility),
            dielectric_constant=_float(cp, "bulk", "dielectric_constant", b.dielectric_constant),
            temperature=_float(cp, "bulk", "temperature_K", b.temperature),
            thermal_velocity=_float(cp, "bulk", "thermal_velocity_cm_per_s", b.thermal_velocity),
            absorption=_wavelength_table(cp, "bulk.absorption"),
        )
        trap = BulkTrap(
            density=_float(cp, "bulk_trap", "density_per_cm3", t.density),
            sigma_n=_float(cp, "bulk_trap", "sigma_n_cm2", t.sigma_n),
            sigma_p=_float(cp, "bulk_trap", "sigma_p_cm2", t.sigma_p),
            energy=_float(cp, "bulk_trap", "energy_eV", t.energy),
        )
        polarity = _get(cp, "interface", "polarity", s.polarity).strip()
        interface = InterfaceState(
            density=_float(cp, "interface", "density_per_cm2", s.density),
            sigma_n_capture=_float(cp, "interface", "sigma_n_capture_cm2", s.sigma_n_capture),
            sigma_p_capture=_float(cp, "interface", "sigma_p_capture_cm2", s.sigma_p_capture),
            energy=_float(cp, "interface", "energy_eV", s.energy),
            polarity=polarity,
            optical_n=_wavelength_table(cp, "interface.optical_n"),
            optical_p=_wavelength_table(cp, "interface.optical_p"),
        )
        fixed = FixedSurfaceCharge(_float(cp, "fixed_charge", "density_per_cm2", f.density))
        slab = SlabGeometry(_float(cp, "slab", "thickness_um", g.thickness_um))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return MaterialSystem(bulk, trap, interface, fixed, slab)


def material_to_config(ms: MaterialSystem) -> configparser.ConfigParser:
    """Inverse of :func:`material_from_config` (round-trips exactly)."""
    cp = _parser()
    b = ms.bulk
    cp["bulk"] = {
        "intrinsic_density_per_cm3": repr(b.intrinsic_density),
        "doping_per_cm3": repr(b.doping),
        "electron_mobility_cm2_per_Vs": repr(b.electron_mobility),
        "hole_mobility_cm2_per_Vs": repr(b.hole_mobility),
        "dielectric_constant": repr(b.dielectric_constant),
        "temperature_K": repr(b.temperature),
        "thermal_velocity_cm_per_s": repr(b.thermal_velocity),
    }
    cp["bulk.absorption"] = {f"alpha_b_per_cm_at_{lam:g}nm": repr(v) for lam, v in b.absorption}
    t = ms.trap
    cp["bulk_trap"] = {"density_per_cm3": repr(t.density), "sigma_n_cm2": repr(t.sigma_n),
                       "sigma_p_cm2": repr(t.sigma_p), "energy_eV": repr(t.energy)}
    s = ms.interface
    cp["interface"] = {
        "density_per_cm2": repr(s.density),
        "sigma_n_capture_cm2": repr(s.sigma_n_capture),
        "sigma_p_capture_cm2": repr(s.sigma_p_capture),
        "energy_eV": repr(s.energy),
        "polarity": s.polarity,
    }
    cp["interface.optical_n"] = {f"sigma_o_cm2_at_{lam:g}nm": repr(v) for lam, v in s.optical_n}
    cp["interface.optical_p"] = {f"sigma_o_cm2_at_{lam:g}nm": repr(v) for lam, v in s.optical_p}
    cp["fixed_charge"] = {"density_per_cm2": repr(ms.fixed.density)}
    cp["slab"] = {"thickness_um": repr(ms.slab.thickness_um)}
    return cp


def load_material(path=None) -> MaterialSystem:
    """Load a material file; ``None`` loads the bundled ``table2.cfg``."""
    return material_from_config(read_config(path or bundled_path("table2.cfg")))


def table2() -> MaterialSystem:
    """Bundled reference parameter set (no environment overrides)."""
    return material_from_config(read_config(bundled_path("table2.cfg"), environ={}))
