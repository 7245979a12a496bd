"""Test the simulation driver on small grids."""
import warnings

import numpy as np
import pytest

import rvm_lab.dumps as rd
import rvm_lab.outputs as ro
import rvm_lab.simulation as rs
from rvm_lab.config import ConfigError, RunConfig
from rvm_lab.presets import FreeWave


def _simu_config(scenario, **run):
    """Small box with a short run and an explicit fit window."""
    options = {"scenario": scenario, "snapshot_interval": 0.25, "profile_interval": 1.0}
    options.update(run)
    particles = {"n_particles": 2**12, "seed": 0} if scenario != "free-wave" else {}
    field = {"amplitude": 1.0 if scenario == "free-wave" else 0.1, "sigma": 2.0}
    if scenario == "free-transport":
        field = {}
    return RunConfig(grid={"n": 16, "box_length": 32.0}, particles=particles, field=field, run=options)


@pytest.fixture(scope="module")
def free_wave():
    return rs.run_simulation(_simu_config("free-wave", fit_window=[1.0, 6.0]))


def test_free_wave_run(free_wave):
    """Vacuum runs conserve energy to roundoff and record every observable."""
    record = free_wave
    assert record.ensemble is None
    assert record.fields.time == pytest.approx(6.0)
    assert {"field_on_cone", "field_half_cone", "field_max", "field_center"} <= set(record.observables["observable"])
    assert record.report_["energy_drift.check"] == "pass"
    assert record.report_["energy_drift"] < rs.FREE_ENERGY_DRIFT_MAX
    assert record.report_["divB_max"] < 1e-12
    assert "field_on_cone.exponent" in record.report_
    assert "off_cone_extra_exponent" in record.report_
    assert "huygens_ratio" in record.report_
    assert record.report_["note"] == rs.TOLERANCE_NOTE


def test_free_wave_decays(free_wave):
    """The pulse spreads: the grid maximum of the field goes down."""
    t, field_max = free_wave.values("field_max")
    assert t[0] == 0
    assert field_max[-1] < field_max[0]
    exponent, _ = free_wave.series("field_max").fit()
    assert exponent < 0


def test_free_transport_run():
    """Free streaming keeps Gauss's law and the charge exactly."""
    config = _simu_config("free-transport", fit_window=[1.0, 4.0], t_final=4.0, dt_factor=0.5)
    record = rs.run_simulation(config)
    report = record.report_
    assert record.ensemble.n_particles == 2**12
    assert report["gauss.check"] == "pass"
    assert report["charge_drift"] < 1e-12
    assert record.has("density_oracle")
    assert record.has("profile_variation_modified")
    assert "modified_profile_gain" in report
    t, oracle = record.values("density_oracle")
    assert np.all(oracle > 0)
    assert np.all(np.diff(oracle) < 0)


def test_rvm_run(tmp_path):
    """Coupled run: monitors, energy surrogates and the written outputs."""
    config = _simu_config("rvm", fit_window=[1.0, 3.0], t_final=3.0)
    record = rs.run_simulation(config)
    assert len(record.monitors) == int(round(3.0 / config.dt)) + 1
    assert record.report_["gauss.check"] == "pass"
    assert "energy_drift.check" in record.report_
    assert record.has("E_low_eb_trunc")
    assert record.has("weighted_L2_f")

    directory = rs.write_run(record, str(tmp_path / "rvm"))
    table = ro.load_run_table(directory)
    assert set(table["observable"]) == set(record.observables["observable"])
    assert RunConfig.load(f"{directory}/{ro.CONFIG_FILE}") == config
    fields = rd.read_fields(f"{directory}/{ro.FIELDS_FILE}")
    assert np.allclose(fields.E, record.fields.E, atol=1e-14)
    ensemble = rd.read_ensemble(f"{directory}/{ro.ENSEMBLE_FILE}", config.grid["box_length"])
    assert ensemble.n_particles == record.ensemble.n_particles
    text = open(f"{directory}/{ro.REPORT_FILE}").read()
    assert text.startswith("# rvm run")
    assert "gauss_max = " in text


def test_identities_scenario_is_rejected():
    with pytest.raises(ConfigError):
        rs.run_simulation(RunConfig(run={"scenario": "identities"}))


def test_run_directory(tmp_path):
    config = _simu_config("free-wave", output_dir=str(tmp_path))
    assert rs.run_directory(config) == str(tmp_path / "free-wave_n16_seed0")


def test_zero_series_is_not_fitted(free_wave):
    """All-zero observables are flagged instead of fitted."""
    observables = free_wave.observables.copy()
    observables.loc[observables["observable"] == "field_half_cone", "value"] = 0.0
    record = rs.RunRecord(free_wave.config, observables, free_wave.monitors, free_wave.fields, None, free_wave.window)
    report = rs.build_report(record)
    assert report["field_half_cone.fit"].startswith("n/a")
    assert "off_cone.check" not in report


def test_free_wave_preset_decay():
    """The standard free-wave run decays like 1/t on the cone and leaves the centre empty."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        record = rs.run_simulation(FreeWave())
    messages = [str(w.message) for w in caught]
    assert not [m for m in messages if "valid region" in m or "fit window" in m]

    report = record.report_
    assert record.window == pytest.approx((10.0, 0.9 * 34.0))
    assert report["field_on_cone.exponent"] == pytest.approx(-1.0, abs=0.1)
    assert report["field_on_cone.check"] == "pass"
    assert report["huygens_ratio"] < rs.HUYGENS_RATIO_MAX
    assert report["huygens.check"] == "pass"


def test_free_transport_modified_profile_gain():
    """The zeroth-order correction absorbs most of the profile drift of free streaming."""
    config = _simu_config("free-transport", fit_window=[1.0, 4.0], t_final=4.0, dt_factor=0.25)
    report = rs.run_simulation(config).report_
    assert report["modified_profile_gain"] >= rs.PROFILE_GAIN_MIN
    assert report["modified_profile.check"] == "pass"
