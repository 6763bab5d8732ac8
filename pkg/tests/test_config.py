from pathlib import Path

import numpy as np
import pytest

from sqfilter.config import ScenarioConfig
from sqfilter.errors import ConfigError

CONFIG_DIR = Path(__file__).parent.parent / "configs"
CONFIGS = sorted(CONFIG_DIR.glob("*.toml"))
CUSTOM = CONFIG_DIR / "custom_two_channel.toml"

BASE = """
scenario = "mixed_cavity"
dim = 12
seed = 1
backend = "gaussian"

[physics]
kappa = 1.0

[squeezing]
n = 0.5
m_re = 0.3

[grid]
t_end = 0.1
dt = 1e-3
"""


def test_shipped_configs_load():
    assert CONFIGS
    for path in CONFIGS:
        cfg = ScenarioConfig.from_file(path)
        assert cfg.build_scenario().model.dim == cfg.dim


def test_defaults():
    cfg = ScenarioConfig.from_string(BASE)
    assert cfg.ensemble_size == 1
    assert cfg.scheme == "milstein"
    assert cfg.grid.n_steps == 100
    assert cfg.initial_mean() == 0


def test_unknown_top_level_key():
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_string("colour = 1\n" + BASE)
    assert err.value.field == "colour"


def test_unknown_table_key():
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_string(BASE.replace("dt = 1e-3", "dt = 1e-3\nsteps = 4"))
    assert err.value.field == "grid.steps"


@pytest.mark.parametrize("old, new, field", [
    ('scenario = "mixed_cavity"', 'scenario = "ring"', "scenario"),
    ("dim = 12", "dim = 1", "dim"),
    ("seed = 1", "seed = -1", "seed"),
    ('backend = "gaussian"', 'backend = "fast"', "backend"),
    ("kappa = 1.0", "kappa = 0.0", "physics.kappa"),
    ("dt = 1e-3", "dt = -1e-3", "grid.dt"),
    ("n = 0.5", "n = 0.05", "squeezing"),
])
def test_field_errors_name_the_key(old, new, field):
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_string(BASE.replace(old, new))
    assert err.value.field == field


def test_gaussian_mixed_backend_rejects_complex_m():
    text = BASE.replace("m_re = 0.3", "m_re = 0.3\nm_im = 0.1")
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_string(text)
    assert err.value.field == "squeezing.m_im"
    cfg = ScenarioConfig.from_string(text.replace('"gaussian"', '"general"'))
    assert cfg.squeeze.m == pytest.approx(0.3 + 0.1j)


def test_malformed_toml():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_string("dim = = 3")


def test_with_value_copies_and_validates():
    cfg = ScenarioConfig.from_string(BASE)
    sub = cfg.with_value("squeezing.n", 1.0)
    assert sub.squeeze.n == 1.0 and cfg.squeeze.n == 0.5
    with pytest.raises(ConfigError):
        cfg.with_value("squeezing.colour", 1.0)
    with pytest.raises(ConfigError):
        cfg.with_value("squeezing.n", 0.0)


def test_piecewise_means_table():
    text = BASE.replace('"gaussian"', '"general"') + "\n[means]\ntimes = [0.0, 0.05]\nalpha_re = [0.0, 0.4]\n"
    means = ScenarioConfig.from_string(text).build_scenario().means
    assert np.allclose(means.alpha(0.01), 0.0)
    assert np.allclose(means.alpha(0.07), 0.4)


def test_piecewise_lengths_must_match():
    text = BASE + "\n[means]\ntimes = [0.0, 0.05]\nalpha_re = [0.0]\n"
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_string(text)
    assert err.value.field == "means.alpha_re"


def test_custom_needs_general_backend():
    text = CUSTOM.read_text()
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_string(text.replace('backend = "general"', 'backend = "gaussian"'))
    assert err.value.field == "backend"


def test_custom_scenario_shapes():
    cfg = ScenarioConfig.from_file(CUSTOM)
    sc = cfg.build_scenario()
    assert sc.obs.n_obs == 2
    assert sc.model.dim == 16
