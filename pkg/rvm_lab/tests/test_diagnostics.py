"""Test decay fits, cone sampling and the monitors."""
import warnings

import numpy as np
import pandas as pd
import pytest

import rvm_lab.diagnostics as dg
import rvm_lab.maxwell as mx
import rvm_lab.particles as pt


def _simu_series(exponent=-1.5, count=40, noise=0.0, seed=0):
    """Power law c t^p on [1, 100], with optional multiplicative noise."""
    rng = np.random.RandomState(seed)
    t = np.geomspace(1.0, 100.0, count)
    values = 3.0 * t**exponent * np.exp(noise * rng.normal(size=count))
    return dg.DecaySeries(t, values, name="simulated")


def test_fit_exact_power_law():
    series = _simu_series()
    exponent, stderr = series.fit()
    assert exponent == pytest.approx(-1.5)
    assert stderr < 1e-10
    assert series.exponent == exponent


def test_fit_noisy_power_law():
    exponent, stderr = dg.fit_decay_exponent(_simu_series(-3.0, count=200, noise=0.05))
    assert abs(exponent + 3.0) < 5 * stderr + 1e-3
    assert stderr > 0


def test_fit_errors():
    series = _simu_series()
    with pytest.raises(dg.DecayFitError):
        dg.fit_decay_exponent(series, (50.0, 51.0))
    zero = dg.DecaySeries(np.arange(1.0, 11.0), np.zeros(10))
    assert zero.is_zero
    with pytest.raises(dg.DecayFitError):
        zero.fit()
    with pytest.raises(ValueError):
        dg.DecaySeries([1.0, 3.0, 2.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        dg.DecaySeries([1.0, 2.0], [1.0])


def test_window_robustness():
    report = dg.window_robustness(_simu_series(-1.0))
    assert report["robust"]
    assert report["exponent_left_shrunk"] == pytest.approx(-1.0)
    assert report["max_shift"] < 1e-10

    # a bent series is not a power law
    t = np.geomspace(0.1, 10.0, 60)
    bent = dg.DecaySeries(t, 1.0 / (t + t**3))
    assert not dg.window_robustness(bent)["robust"]


def test_default_fit_window():
    assert dg.default_fit_window(128.0, 5.0) == pytest.approx((10.0, 0.9 * 59.0))
    with pytest.warns(UserWarning):
        window = dg.default_fit_window(128.0, 30.0)
    assert window == pytest.approx((10.0, 0.9 * 34.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(dg.DecayFitError):
            dg.default_fit_window(20.0, 9.0)
    # on-cone samples start at 10 and the run length caps the end
    assert dg.default_fit_window(128.0, 30.0, near_field=False) == pytest.approx((10.0, 0.9 * 34.0))
    assert dg.default_fit_window(128.0, 5.0, t_max=32.0) == pytest.approx((10.0, 32.0))


def test_cone_offsets():
    assert dg.ConeOffset("on_cone").delta(7.0) == 0
    assert dg.ConeOffset("half", absolute=1.0, fraction=0.5).delta(4.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        dg.ConeOffset("bad", fraction=1.5)


def test_cone_sampler_points():
    sampler = dg.ConeSampler(32.0)
    assert sampler.directions.shape == (8, 3)
    assert np.allclose(np.linalg.norm(sampler.directions, axis=-1), 1.0)
    points, radius = sampler.points(6.0, sampler.offsets[1])
    assert radius == pytest.approx(3.0)
    assert np.allclose(np.linalg.norm(points - 16.0, axis=-1), 3.0)
    assert sampler.is_valid(6.0, 6.0)
    assert not sampler.is_valid(10.0, 10.0)
    assert sampler.is_valid(8.0, 8.0)
    with pytest.raises(ValueError):
        dg.ConeSampler(32.0, directions=[[0.0, 0.0, 0.0]])


def test_cone_sampler_sample():
    """Uniform fields are read back on every ray; late snapshots are skipped."""
    n, L = 8, 32.0
    E = np.zeros((3, n, n, n))
    E[1] = 0.25
    sampler = dg.ConeSampler(L)
    values = sampler.sample(mx.FieldState(E, np.zeros_like(E), L, time=4.0))
    assert values == pytest.approx({"on_cone": 0.25, "half_cone": 0.25})

    with pytest.warns(UserWarning):
        late = sampler.sample(mx.FieldState(E, np.zeros_like(E), L, time=9.0))
    assert "on_cone" not in late
    assert "half_cone" in late


def test_sample_field_decay():
    n, L = 8, 32.0
    snapshots = []
    for t in (1.0, 2.0, 3.0):
        E = np.zeros((3, n, n, n))
        E[0] = 1.0 / t
        snapshots.append(mx.FieldState(E, np.zeros_like(E), L, time=t))
    series = dg.sample_field_decay(snapshots, dg.ConeSampler(L))
    assert set(series) == {"on_cone", "half_cone"}
    assert series["on_cone"].name == "field_on_cone"
    assert np.allclose(series["on_cone"].values, [1.0, 0.5, 1.0 / 3.0])


def test_density_moment_value():
    grid = np.zeros((8, 8, 8))
    grid[3, 3, 3] = 4.0
    assert dg.density_moment_value(grid, 0, 1, 1.0) == pytest.approx(4.0)
    assert dg.density_moment_value(grid, 0, 2, 1.0) == pytest.approx(2.0)
    assert dg.density_moment_value(grid, 1, 1, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        dg.density_moment_value(grid, 2, 1, 1.0)
    with pytest.raises(ValueError):
        dg.density_moment_value(grid, 0, 3, 1.0)


def test_density_moment_series():
    grids = [np.full((4, 4, 4), value) for value in (1.0, 0.5, 0.25)]
    series = dg.density_moment_series([1.0, 2.0, 3.0], grids, 0, 1, 4.0)
    assert series.name == "density_a0_p1"
    assert np.allclose(series.values, [1.0, 0.5, 0.25])
    with pytest.raises(dg.DecayFitError):
        dg.density_moment_series([], [], 0, 1, 4.0)


def test_weighted_velocity_l2():
    assert dg.weighted_velocity_l2(None) == 0
    assert dg.weighted_velocity_l2(pt.ParticleEnsemble.empty(4.0)) == 0
    data = pt.GaussianInitialData(center=(8.0, 8.0, 8.0))
    ensemble = pt.sample_ensemble(data, 512, 16.0)
    value = dg.weighted_velocity_l2(ensemble, n_desk=1, bins=8)
    assert np.isfinite(value) and value > 0


def test_energy_surrogates():
    state = mx.gaussian_pulse_state(16, 16.0, amplitude=1.0, sigma=2.0)
    profile = mx.extract_profiles(state)
    record = dg.energy_surrogates(profile)
    assert set(record) == {"E_low_eb_trunc", "E_high_eb_trunc", "weighted_L2_f"}
    assert record["E_low_eb_trunc"] > 0
    assert record["E_high_eb_trunc"] > 0
    assert record["weighted_L2_f"] == 0

    rate = (np.zeros_like(profile.h1_hat), np.zeros_like(profile.h2_hat))
    with_rate = dg.energy_surrogates(profile, profile_rate=rate)
    assert with_rate["E_low_eb_trunc"] == pytest.approx(record["E_low_eb_trunc"])


def test_conservation_report():
    monitors = pd.DataFrame(
        {
            "t": [0.0, 1.0, 2.0],
            "charge": [2.0, 2.0, 2.0 + 1e-12],
            "energy": [10.0, 10.1, 9.8],
            "gauss": [1e-14, 2e-14, 1e-14],
            "div_b": [0.0, 1e-15, 0.0],
        }
    )
    report = dg.conservation_report(monitors)
    assert report["charge_drift"] == pytest.approx(5e-13, rel=1e-3)
    assert report["energy_drift"] == pytest.approx(0.02)
    assert report["gauss_max"] == 2e-14
    assert report["divB_max"] == 1e-15
    with pytest.raises(ValueError):
        dg.conservation_report(monitors.drop(columns="gauss"))


def test_series_table_and_report():
    table = dg.series_table({"a": _simu_series(count=10), "b": _simu_series(-2.0, count=10)})
    assert list(table.columns) == ["t", "observable", "value"]
    assert len(table) == 20
    assert dg.series_table({}).empty

    text = dg.format_report({"exponent": -1.0, "check": "pass"}, title="run")
    assert text.splitlines() == ["# run", "exponent = -1", "check = pass"]
