"""Test the spectral Maxwell solver and the half-wave profiles."""
import numpy as np
import pytest

import rvm_lab.maxwell as mx
from rvm_lab.geometry import psi_k


def _simu_pulse(n=32, box_length=32.0, sigma=3.0):
    return mx.gaussian_pulse_state(n, box_length, amplitude=1.0, sigma=sigma)


def _simu_source(n=16, box_length=16.0, width=2.0):
    """Gaussian charge blob at the box centre."""
    x = mx.grid_coordinates(n, box_length) - box_length / 2.0
    rho = np.exp(-np.sum(x * x, axis=0) / width**2)
    return mx.SourceDensity(rho, np.zeros((3, n, n, n)), box_length)


def test_frequency_grid():
    k, k_norm, keep = mx.frequency_grid(8, 2.0 * np.pi)
    assert k.shape == (3, 8, 8, 8)
    assert k_norm[0, 0, 0] == 0
    # Nyquist planes are dropped
    assert not keep[4].any()
    assert keep[1, 1, 1]
    assert np.count_nonzero(keep) == 7**3


def test_field_state_validation():
    with pytest.raises(ValueError):
        mx.FieldState(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)), 1.0)
    with pytest.raises(ValueError):
        mx.FieldState.vacuum(6, 1.0)


def test_plane_wave_is_exact():
    """A plane wave travels at speed one without error."""
    state = mx.plane_wave_state(16, 10.0, amplitude=0.5, mode=2)
    evolved = mx.propagate_free(state, 0.7)
    expected = mx.plane_wave_state(16, 10.0, amplitude=0.5, mode=2, time=0.7)
    assert evolved.time == pytest.approx(0.7)
    assert np.max(np.abs(evolved.E - expected.E)) < 1e-12
    assert np.max(np.abs(evolved.B - expected.B)) < 1e-12


def test_plane_wave_energy():
    state = mx.plane_wave_state(16, 10.0, amplitude=2.0)
    assert mx.field_energy(state) == pytest.approx(4.0 * 10.0**3 / (8.0 * np.pi))


def test_free_propagation_conserves():
    """Energy and the constraints are preserved by free evolution."""
    state = _simu_pulse()
    energy = mx.field_energy(state)
    for _ in range(5):
        state = mx.propagate_free(state, 0.5)
    assert abs(mx.field_energy(state) - energy) / energy < 1e-12
    assert mx.gauss_residual(state) < 1e-8
    assert mx.div_b_residual(state) < 1e-12


def test_coulomb_field():
    """The Coulomb field solves Gauss's law on every active mode."""
    src = _simu_source()
    state = mx.coulomb_field(src)
    assert mx.gauss_residual(state, src) < 1e-12
    assert np.allclose(state.B, 0)
    # static under free propagation
    moved = mx.propagate_free(state, 1.3)
    assert np.allclose(moved.E, state.E, atol=1e-12)


def test_correct_current():
    """After correction the discrete continuity equation holds."""
    n, L, dt = 16, 16.0, 0.25
    rng = np.random.RandomState(0)
    rho_old = mx.to_spectral(rng.normal(size=(n, n, n)), L)
    rho_new = mx.to_spectral(rng.normal(size=(n, n, n)), L)
    j_hat = mx.to_spectral(rng.normal(size=(3, n, n, n)), L)
    corrected = mx.correct_current(j_hat, rho_old, rho_new, dt, L)
    k, k_norm, _ = mx.frequency_grid(n, L)
    continuity = (rho_new - rho_old) / dt + 1j * np.sum(k * corrected, axis=0)
    assert np.max(np.abs(continuity[k_norm > 0])) < 1e-9 * np.max(np.abs(rho_new))
    # the transverse part is untouched
    transverse = np.cross(k, corrected - j_hat, axis=0)
    assert np.max(np.abs(transverse)) < 1e-9 * np.max(np.abs(j_hat))
    assert np.allclose(corrected[:, 0, 0, 0], j_hat[:, 0, 0, 0])


def test_apply_sources_cfl():
    state = mx.FieldState.vacuum(8, 8.0)
    src = mx.SourceDensity.empty(8, 8.0)
    with pytest.raises(mx.CFLViolation):
        mx.apply_sources(state, src, 1.5)


def test_apply_sources_kick():
    n, L = 8, 8.0
    j = np.zeros((3, n, n, n))
    j[2] = 1.0
    src = mx.SourceDensity(np.zeros((n, n, n)), j, L)
    kicked = mx.apply_sources(mx.FieldState.vacuum(n, L), src, 0.5)
    assert np.allclose(kicked.E[2], -0.5)
    assert np.allclose(kicked.B, 0)


def test_profiles_are_constant_in_vacuum():
    """Profiles of a transverse wave do not move under free evolution."""
    state = mx.plane_wave_state(16, 10.0, mode=1)
    before = mx.extract_profiles(state)
    after = mx.extract_profiles(mx.propagate_free(state, 2.3))
    assert np.max(np.abs(after.h1_hat - before.h1_hat)) < 1e-9
    assert np.max(np.abs(after.h2_hat - before.h2_hat)) < 1e-9


def test_reconstruct_fields():
    state = mx.propagate_free(_simu_pulse(n=16, box_length=16.0, sigma=2.0), 0.4)
    rebuilt = mx.reconstruct_fields(mx.extract_profiles(state))
    assert np.allclose(rebuilt.E, state.E, atol=1e-12)
    assert np.allclose(rebuilt.B, state.B, atol=1e-12)
    with pytest.raises(ValueError):
        mx.extract_profiles(state).component(3)


def test_thinned_lattice():
    mask = mx.thinned_lattice(16, 16.0, k_max=2)
    assert np.count_nonzero(mask) == 5**3 - 1
    assert not mask[0, 0, 0]


def test_modified_profile_without_particles():
    """An empty ensemble leaves the profile untouched."""
    from rvm_lab.particles import ParticleEnsemble

    profile = mx.extract_profiles(_simu_pulse(n=16, box_length=16.0, sigma=2.0))
    ensemble = ParticleEnsemble.empty(16.0)
    for component in (1, 2):
        modified = mx.modified_profile_correction_zero_order(profile, ensemble, component=component, k_max=2)
        assert np.array_equal(modified, profile.component(component))
    with pytest.raises(ValueError):
        mx.modified_profile_correction_zero_order(profile, ensemble, component=3)


def test_modified_profile_shapes_agree():
    """Point and cloud-in-cell kernels coincide for particles on grid nodes."""
    from rvm_lab.particles import ParticleEnsemble

    n, L = 16, 16.0
    profile = mx.extract_profiles(mx.FieldState.vacuum(n, L))
    x = np.array([[3.0, 5.0, 8.0], [10.0, 2.0, 7.0]])
    v = np.array([[0.2, -0.1, 0.4], [0.0, 0.3, 0.0]])
    ensemble = ParticleEnsemble(x, v, [1.0, 2.0], L)
    cic = mx.modified_profile_correction_zero_order(profile, ensemble, k_max=2, shape="cic")
    point = mx.modified_profile_correction_zero_order(profile, ensemble, k_max=2, shape="point")
    assert np.allclose(cic, point, atol=1e-12)
    assert np.any(np.abs(cic) > 0)


def test_xn_norm():
    n, L = 16, 16.0
    assert mx.xn_norm(np.zeros((3, n, n, n)), 0, L) == 0
    profile = mx.extract_profiles(_simu_pulse(n=n, box_length=L, sigma=2.0))
    value = mx.xn_norm(profile.h1_hat, 1, L)
    assert np.isfinite(value) and value > 0
    with pytest.raises(ValueError):
        mx.xn_norm(profile.h1_hat, 4, L)


def test_profile_l2():
    """A nonzero field has a nonzero profile norm."""
    state = _simu_pulse(n=16, box_length=16.0, sigma=2.0)
    profile = mx.extract_profiles(state)
    total = mx.profile_l2(profile.h1_hat, 16.0) ** 2
    assert total > 0
    assert mx.profile_l2(np.zeros(3), 16.0) == 0


def test_plane_wave_after_many_steps():
    """A hundred free steps translate the plane wave rigidly."""
    state = mx.plane_wave_state(16, 10.0, amplitude=0.5, mode=2)
    for _ in range(100):
        state = mx.propagate_free(state, 0.1)
    expected = mx.plane_wave_state(16, 10.0, amplitude=0.5, mode=2, time=10.0)
    assert state.time == pytest.approx(10.0)
    assert np.max(np.abs(state.E - expected.E)) < 1e-10
    assert np.max(np.abs(state.B - expected.B)) < 1e-10


def test_propagate_free_is_reversible():
    state = _simu_pulse(n=16, box_length=16.0, sigma=2.0)
    back = mx.propagate_free(mx.propagate_free(state, 0.7), -0.7)
    assert np.allclose(back.E, state.E, atol=1e-12)
    assert np.allclose(back.B, state.B, atol=1e-12)

    vacuum = mx.propagate_free(mx.FieldState.vacuum(16, 16.0), 1.0)
    assert not np.any(vacuum.E) and not np.any(vacuum.B)


def test_gauss_residual_relative_to_charge():
    """The residual is measured against the charge, whatever the divergence-free field."""
    src = _simu_source()
    coulomb = mx.coulomb_field(src)
    heavier = mx.SourceDensity(1.001 * src.rho, src.j, src.box_length)
    expected = 0.001 / 1.001
    assert mx.gauss_residual(coulomb, heavier) == pytest.approx(expected, rel=1e-6)

    pulse = mx.gaussian_pulse_state(16, 16.0, amplitude=50.0, sigma=2.0)
    loud = mx.FieldState(coulomb.E + pulse.E, pulse.B, src.box_length)
    assert mx.gauss_residual(loud, heavier) == pytest.approx(expected, rel=1e-6)

    # without charge the field sets the scale
    assert mx.gauss_residual(pulse, mx.SourceDensity.empty(16, 16.0)) < 1e-12
    assert mx.gauss_residual(mx.FieldState.vacuum(16, 16.0)) == 0


def test_xn_norm_of_a_shell_bump():
    """A profile equal to psi_0 peaks at 1 on shell 0 and nowhere weighs more."""
    n, L = 32, 16.0 * np.pi
    _, k_norm, _ = mx.frequency_grid(n, L)
    bump = psi_k(k_norm, 0)
    assert mx.xn_norm(bump, 0, L) == pytest.approx(1.0)
    assert mx.xn_norm(3.0 * bump, 0, L) == pytest.approx(3.0)
