"""Test particle ensembles, deposition, the pusher and the transport oracle."""
import warnings

import numpy as np
import pytest

import rvm_lab.diagnostics as dg
import rvm_lab.maxwell as mx
import rvm_lab.particles as pt


def _simu_ensemble(count=64, box_length=16.0, seed=0):
    """Random ensemble inside the box."""
    rng = np.random.RandomState(seed)
    x = rng.uniform(0.0, box_length, size=(count, 3))
    v = rng.normal(scale=0.5, size=(count, 3))
    w = rng.uniform(0.5, 1.5, size=count)
    return pt.ParticleEnsemble(x, v, w, box_length)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        pt.ParticleEnsemble(np.zeros((3, 3)), np.zeros((2, 3)), np.ones(3), 1.0)
    with pytest.raises(ValueError):
        pt.ParticleEnsemble(np.zeros((2, 3)), np.zeros((2, 3)), [1.0, -1.0], 1.0)
    assert pt.ParticleEnsemble.empty(4.0).n_particles == 0


def test_wrap():
    x = pt.wrap(np.array([-0.5, 4.0, 9.5, 1e-20]), 4.0)
    assert np.all((x >= 0) & (x < 4.0))
    assert x[0] == pytest.approx(3.5)
    assert x[1] == 0


def test_kinetic_energy():
    ensemble = pt.ParticleEnsemble([[0, 0, 0], [1, 1, 1]], [[0, 0, 0], [0, 0, 1]], [2.0, 1.0], 4.0)
    assert ensemble.kinetic_energy() == pytest.approx(2.0 + np.sqrt(2.0))
    assert ensemble.total_charge() == 3.0
    assert np.all(np.linalg.norm(ensemble.velocities(), axis=-1) < 1)


def test_deposit_grid_conserves_mass():
    """Trilinear shapes are a partition of unity."""
    ensemble = _simu_ensemble()
    n, L = 8, ensemble.box_length
    grid = pt.deposit_grid(ensemble.x, ensemble.w, n, L)
    assert grid.shape == (n, n, n)
    assert np.sum(grid) * (L / n) ** 3 == pytest.approx(np.sum(ensemble.w))
    columns = pt.deposit_grid(ensemble.x, np.ones((ensemble.n_particles, 2)), n, L)
    assert columns.shape == (2, n, n, n)


def test_deposit_grid_workers():
    """Threaded deposition agrees with the serial one."""
    ensemble = _simu_ensemble(1000)
    serial = pt.deposit_grid(ensemble.x, ensemble.w, 8, ensemble.box_length)
    threaded = pt.deposit_grid(ensemble.x, ensemble.w, 8, ensemble.box_length, workers=4)
    again = pt.deposit_grid(ensemble.x, ensemble.w, 8, ensemble.box_length, workers=4)
    assert np.allclose(serial, threaded, rtol=1e-12)
    assert np.array_equal(threaded, again)


def test_deposit_charge():
    ensemble = _simu_ensemble()
    src = pt.deposit(ensemble, 8)
    assert src.total_charge() == pytest.approx(4.0 * np.pi * ensemble.total_charge())


def test_charge_conserving_deposit():
    """Corrected currents satisfy discrete continuity."""
    n, dt = 8, 0.5
    before = _simu_ensemble()
    after = pt.push_position(before, dt)
    src = pt.deposit(after, n, previous_x=before.x, dt=dt)
    old = pt.deposit(before, n)
    k, k_norm, _ = mx.frequency_grid(n, before.box_length)
    continuity = (src.rho_hat - old.rho_hat) / dt + 1j * np.sum(k * src.j_hat, axis=0)
    assert np.max(np.abs(continuity[k_norm > 0])) < 1e-9 * np.max(np.abs(src.rho_hat))

    with pytest.raises(ValueError):
        pt.deposit(after, n, previous_x=before.x)


def test_deposition_scheme():
    with pytest.raises(ValueError):
        pt.DepositionScheme(order=2)
    ensemble = _simu_ensemble()
    plain = pt.deposit(ensemble, 8, pt.DepositionScheme(charge_conserving=False), previous_x=ensemble.x, dt=0.1)
    assert plain.rho.shape == (8, 8, 8)


def test_deposit_moment():
    ensemble = _simu_ensemble()
    with pytest.raises(ValueError):
        pt.deposit_moment(ensemble, 8, power=2)
    data = pt.GaussianInitialData(center=(8.0, 8.0, 8.0))
    sampled = pt.sample_ensemble(data, 256, 16.0)
    moment = pt.deposit_moment(sampled, 8, power=2)
    assert np.all(moment >= 0)
    assert np.sum(moment) > 0


def test_interpolate_uniform_fields():
    n, L = 8, 16.0
    E = np.zeros((3, n, n, n))
    B = np.zeros((3, n, n, n))
    E[0], B[2] = 0.3, -1.2
    state = mx.FieldState(E, B, L)
    E_p, B_p = pt.interpolate_fields(state, _simu_ensemble(box_length=L))
    assert np.allclose(E_p, [0.3, 0.0, 0.0])
    assert np.allclose(B_p, [0.0, 0.0, -1.2])


def test_push_momentum():
    """B rotates momenta without changing their size; E kicks them."""
    ensemble = _simu_ensemble()
    count = ensemble.n_particles
    B = np.tile([0.0, 0.0, 2.0], (count, 1))
    rotated = pt.push_momentum(ensemble, np.zeros((count, 3)), B, 0.1)
    assert np.allclose(np.linalg.norm(rotated.v, axis=-1), np.linalg.norm(ensemble.v, axis=-1))
    assert np.allclose(rotated.v[:, 2], ensemble.v[:, 2])

    E = np.tile([1.0, 0.0, 0.0], (count, 1))
    kicked = pt.push_momentum(ensemble, E, np.zeros((count, 3)), 0.1)
    assert np.allclose(kicked.v - ensemble.v, [0.1, 0.0, 0.0])


def test_push_momentum_direction():
    """The magnetic force is v^ x B."""
    ensemble = pt.ParticleEnsemble([[1.0, 1.0, 1.0]], [[1.0, 0.0, 0.0]], [1.0], 4.0)
    dt = 1e-4
    pushed = pt.push_momentum(ensemble, np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]), dt)
    force = np.cross(ensemble.velocities()[0], [0.0, 0.0, 1.0])
    assert np.allclose((pushed.v[0] - ensemble.v[0]) / dt, force, atol=1e-4)


def test_push_position():
    ensemble = _simu_ensemble()
    moved = pt.push_position(ensemble, 0.5)
    assert moved.time == pytest.approx(0.5)
    step = pt._minimal_image(moved.x - ensemble.x, ensemble.box_length)
    assert np.allclose(step, 0.5 * ensemble.velocities())


def test_gaussian_data():
    data = pt.GaussianInitialData(epsilon=2.0, sigma_x=1.5, sigma_v=0.5)
    assert data.mass() == pytest.approx(2.0 * np.pi**3 * 1.5**3 * 0.5**3)
    assert data.density_at_rest(np.zeros(3)) == pytest.approx(2.0 * (np.pi * 0.25) ** 1.5)
    with pytest.raises(ValueError):
        pt.GaussianInitialData(sigma_x=0.0)


def test_sample_ensemble():
    """Sobol samples are deterministic and carry the total mass."""
    data = pt.GaussianInitialData(center=(8.0, 8.0, 8.0))
    ensemble = pt.sample_ensemble(data, 2**12, 16.0, seed=3)
    again = pt.sample_ensemble(data, 2**12, 16.0, seed=3)
    assert np.array_equal(ensemble.x, again.x)
    assert ensemble.total_charge() == pytest.approx(data.mass())
    assert np.allclose(ensemble.x.mean(axis=0), data.center, atol=0.05)
    assert np.allclose(ensemble.f_value, data.value(ensemble.x, ensemble.v))
    assert abs(ensemble.v.std() - data.sigma_v / np.sqrt(2.0)) < 0.02

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pt.sample_ensemble(data, 1000, 16.0)
    assert any("power of two" in str(w.message) for w in caught)


def test_free_transport_density_at_rest():
    data = pt.GaussianInitialData(center=(0.0, 0.0, 0.0))
    x = np.array([0.3, -0.2, 0.1])
    assert pt.free_transport_density(0.0, x, data) == pytest.approx(float(data.density_at_rest(x)))
    gradient = pt.free_transport_density_gradient(0.0, x, data)
    assert np.allclose(gradient, -2.0 * x * data.density_at_rest(x))


def test_free_transport_density_short_time():
    """The quadrature recovers the density at rest as t goes to zero."""
    data = pt.GaussianInitialData(center=(0.0, 0.0, 0.0))
    x = np.array([0.2, 0.0, 0.0])
    value = pt.free_transport_density(1e-3, x, data, epsrel=1e-6)
    assert value == pytest.approx(float(data.density_at_rest(x)), rel=1e-4)


def test_free_transport_density_far_away():
    data = pt.GaussianInitialData(center=(0.0, 0.0, 0.0))
    assert pt.free_transport_density(0.5, np.array([20.0, 0.0, 0.0]), data) == 0.0
    assert pt.free_transport_moment(0.5, np.array([20.0, 0.0, 0.0]), data) == 0.0


def test_deposit_grid_node_and_cell_center():
    """A particle on a node keeps its full weight there; at a cell centre it splits 1/8 per corner."""
    n, L = 8, 16.0
    dx = L / n
    node = pt.deposit_grid(np.array([[2.0 * dx, 3.0 * dx, 1.0 * dx]]), np.array([2.0]), n, L)
    assert node[2, 3, 1] * dx**3 == pytest.approx(2.0)
    assert np.count_nonzero(node) == 1

    center = pt.deposit_grid(np.array([[2.5 * dx, 3.5 * dx, 1.5 * dx]]), np.array([2.0]), n, L)
    corners = center[2:4, 3:5, 1:3] * dx**3
    assert np.allclose(corners, 2.0 / 8.0)
    assert np.count_nonzero(center) == 8


def test_push_position_values():
    x = [[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]
    ensemble = pt.ParticleEnsemble(x, [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], [1.0, 1.0], 4.0)
    moved = pt.push_position(ensemble, np.sqrt(2.0))
    assert np.allclose(moved.x, [[2.0, 1.0, 1.0], [2.0, 2.0, 2.0]])


def test_gyration_frequency():
    """E = 0, B = B0 e3: |v| is kept and the momentum turns at B0 / gamma for 10^4 steps."""
    v0, B0, dt, steps = 1.5, 2.0, 0.01, 10**4
    ensemble = pt.ParticleEnsemble([[1.0, 1.0, 1.0]], [[v0, 0.0, 0.0]], [1.0], 4.0)
    E = np.zeros((1, 3))
    B = np.array([[0.0, 0.0, B0]])
    for _ in range(steps):
        ensemble = pt.push_momentum(ensemble, E, B, dt)
    assert np.linalg.norm(ensemble.v[0]) == pytest.approx(v0, rel=1e-12)
    phase = B0 / np.sqrt(1.0 + v0**2) * dt * steps
    assert np.allclose(ensemble.v[0], [v0 * np.cos(phase), -v0 * np.sin(phase), 0.0], atol=1e-9)


def test_free_transport_gradient_on_axis():
    """Components that vanish by symmetry converge to zero instead of failing."""
    data = pt.GaussianInitialData(center=(0.0, 0.0, 0.0))
    x = np.array([0.7, 0.0, 0.0])
    density = pt.free_transport_density(2.0, x, data)
    gradient = pt.free_transport_density_gradient(2.0, x, data)
    assert np.all(np.abs(gradient[1:]) < 1e-6 * density)

    # 4th-order centred differences of the density
    h = 0.05
    shift = h * np.eye(3)[0]
    values = [pt.free_transport_density(2.0, x + offset * shift, data) for offset in (-2, -1, 1, 2)]
    fd = (values[0] - 8.0 * values[1] + 8.0 * values[2] - values[3]) / (12.0 * h)
    assert gradient[0] == pytest.approx(fd, rel=1e-4)

    # even in t
    assert np.array_equal(pt.free_transport_density_gradient(-2.0, x, data), gradient)

    late = pt.free_transport_density_gradient(10.0, np.array([0.5, 0.0, 0.0]), data)
    assert np.all(np.isfinite(late))
    assert np.all(np.abs(late[1:]) < 1e-3 * abs(late[0]))


def test_free_transport_decay_along_a_ray():
    """Along x = u t the density decays like t^-3 and its gradient like t^-4."""
    data = pt.GaussianInitialData(center=(0.0, 0.0, 0.0), sigma_x=1.0, sigma_v=0.5)
    times = np.geomspace(20.0, 80.0, 8)
    u = np.array([0.3, 0.0, 0.0])
    density, gradient = [], []
    for t in times:
        density.append(pt.free_transport_density(t, u * t, data, epsrel=1e-6))
        gradient.append(pt.free_transport_density_gradient(t, u * t, data, epsrel=1e-6))
    gradient = np.array(gradient)
    assert np.all(np.abs(gradient[:, 1:]) < 1e-3 * np.abs(gradient[:, :1]))

    exponent, _ = dg.DecaySeries(times, density, name="density").fit()
    assert exponent == pytest.approx(-3.0, abs=0.2)
    exponent, _ = dg.DecaySeries(times, np.abs(gradient[:, 0]), name="gradient").fit()
    assert exponent == pytest.approx(-4.0, abs=0.2)
