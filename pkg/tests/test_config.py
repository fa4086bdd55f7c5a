import numpy as np
import pytest

from spvtrap.config import (ConfigError, config_hash, load_material, material_from_config,
                            material_to_config, read_config)
from spvtrap.scenario import bundled_scenarios, load_scenario, parse_grid


def test_bundled_material_is_reference_set(ms):
    assert load_material() == ms


def test_env_override():
    cp = read_config(text="[interface]\ndensity_per_cm2 = 2.7e11\n",
                     environ={"SPVTRAP__INTERFACE__DENSITY_PER_CM2": "1e10",
                              "SPVTRAP__SLAB__THICKNESS_UM": "300", "OTHER": "x"})
    assert cp["interface"]["density_per_cm2"] == "1e10"
    assert cp["slab"]["thickness_um"] == "300"


def test_hash_ignores_order_and_tracks_values():
    a = read_config(text="[a]\nx = 1\ny = 2\n")
    b = read_config(text="[a]\ny = 2\nx = 1\n")
    c = read_config(text="[a]\ny = 2\nx = 3\n")
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_malformed_config():
    with pytest.raises(ConfigError):
        read_config(text="no section header\n")
    cp = material_to_config(load_material())
    cp["interface"]["density_per_cm2"] = "lots"
    with pytest.raises(ConfigError):
        material_from_config(cp)


def test_grid_parsing():
    np.testing.assert_allclose(parse_grid("1, 2, 10:20:5"), [1, 2, 10, 15, 20])
    np.testing.assert_allclose(parse_grid("-20:20:2.5")[[0, -1]], [-20, 20])
    assert len(parse_grid("-20:20:2.5")) == 17
    for bad in ("", "a", "5:1:1", "1:2", "0:1:0"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_bundled_scenarios():
    names = bundled_scenarios()
    for n in ("fig6a", "fig6b", "fig6c", "fig6d", "fig6e", "sideband",
              "sideband_no_preturnon", "preturnon"):
        assert n in names
    sc = load_scenario("fig6b")
    assert sc.config.n_initial == 6
    assert sc.field.E_str == sc.field.E_com == 27
    assert sc.field.t_pre >= 50 * sc.field.tau_str
    assert load_scenario("fig6c").field.E_com - load_scenario("fig6c").field.E_str == 47
    with pytest.raises(ConfigError):
        load_scenario("nonexistent")


def test_scenario_env_override():
    sc = load_scenario("fig6b", environ={"SPVTRAP__MOTION__INITIAL_MEAN_PHONONS": "2"})
    assert sc.config.n_initial == 2
