"""Test the run configuration."""
import json

import pytest

from rvm_lab.config import ConfigError, RunConfig, all_scenarios, DEFAULTS, OUTPUT_ENV


def test_defaults():
    config = RunConfig()
    assert config.scenario == "rvm"
    assert config.grid == DEFAULTS["grid"]
    assert config.dx == pytest.approx(2.0)
    assert config.dt == pytest.approx(0.5)
    assert not config.has_particles
    assert config.data_radius == 0
    assert config.t_final == pytest.approx(64.0)


def test_data_radius_and_horizon():
    config = RunConfig(
        particles={"n_particles": 16, "sigma_x": 2.0},
        field={"amplitude": 0.1, "sigma": 1.0},
        run={"scenario": "rvm"},
    )
    assert config.has_particles and config.has_pulse
    # 4 sigma_x beats 5 sigma
    assert config.data_radius == pytest.approx(8.0)
    assert config.horizon == pytest.approx((128.0 - 16.0) / 2.0)

    wave = RunConfig(run={"scenario": "free-wave"})
    assert wave.data_radius == pytest.approx(30.0)
    assert wave.horizon == pytest.approx(34.0)
    # the on-cone samples leave the half box after L/4
    assert wave.t_final == pytest.approx(32.0)


def test_unknown_keys():
    """Unknown keys are reported together."""
    with pytest.raises(ConfigError) as exception:
        RunConfig(grid={"m": 3}, run={"speed": 1})
    message = str(exception.value)
    assert "grid.m" in message and "run.speed" in message


def test_invalid_values():
    with pytest.raises(ConfigError, match="power of two"):
        RunConfig(grid={"n": 48})
    with pytest.raises(ConfigError, match="dt <= 0.5 dx"):
        RunConfig(run={"dt_factor": 0.75})
    with pytest.raises(ConfigError, match="not a supported scenario"):
        RunConfig(run={"scenario": "vlasov-poisson"})
    with pytest.raises(ConfigError, match="fit_window"):
        RunConfig(run={"fit_window": [5.0, 1.0]})
    with pytest.raises(ConfigError):
        RunConfig(run={"dt_factor": "fast"})


def test_horizon_violation():
    with pytest.raises(ConfigError, match="horizon"):
        RunConfig(run={"scenario": "free-wave", "t_final": 40.0})
    with pytest.raises(ConfigError, match="cannot hold"):
        RunConfig(grid={"box_length": 50.0}, run={"scenario": "free-wave"})
    # the identity suite has no horizon
    RunConfig(grid={"box_length": 50.0}, field={"amplitude": 1.0}, run={"scenario": "identities"})


def test_with_overrides():
    config = RunConfig().with_overrides(
        ["grid.n=32", "run.scenario=free-wave", "run.fit_window=[10, 20]", "identities.negative_controls=true"]
    )
    assert config.grid["n"] == 32
    assert config.scenario == "free-wave"
    assert config.run["fit_window"] == [10, 20]
    assert config.identities["negative_controls"] is True

    with pytest.raises(ConfigError, match="section.key=value"):
        RunConfig().with_overrides(["grid.n"])
    with pytest.raises(ConfigError, match="unknown section"):
        RunConfig().with_overrides(["mesh.n=3"])
    with pytest.raises(ConfigError, match="grid.size"):
        RunConfig().with_overrides(["grid.size=3"])


def test_save_and_load(tmp_path):
    config = RunConfig(grid={"n": 16, "box_length": 32.0}, run={"scenario": "free-wave", "t_final": 2.0})
    path = tmp_path / "config.json"
    config.save(path)
    assert RunConfig.load(path) == config
    assert json.loads(path.read_text())["grid"]["n"] == 16


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        RunConfig.load(bad)
    with pytest.raises(ConfigError, match="Could not read"):
        RunConfig.load(tmp_path / "missing.json")
    with pytest.raises(ConfigError, match="extras"):
        RunConfig.from_dict({"extras": {}})


def test_output_root(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert RunConfig().output_root == str(tmp_path)
    assert RunConfig(run={"output_dir": "elsewhere"}).output_root == "elsewhere"


def test_scenarios():
    for scenario in all_scenarios:
        assert RunConfig(run={"scenario": scenario}).scenario == scenario
