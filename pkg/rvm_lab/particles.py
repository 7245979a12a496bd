"""Particle discretization of the relativistic Vlasov equation.

Momenta v are in units m = c = 1; particles move with v^ = v / sqrt(1 + |v|^2).

Authors: rvm_lab team
"""
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import integrate
from scipy.special import ndtri
from scipy.stats import qmc
from sklearn.utils import gen_even_slices

from . import maxwell


class QuadratureError(RuntimeError):
    """Raised when the free-transport quadrature does not converge."""


class ParticleEnsemble:
    """
    Weighted macro-particles sampling f(t, x, v).

    Parameters
    ----------
    x : array (N, 3)
        Positions, wrapped into [0, L)^3.

    v : array (N, 3)
        Momenta.

    w : array (N,)
        Non-negative statistical weights.

    box_length : float

    time : float

    f_value : array (N,), optional
        Phase-space density carried by each particle. f is constant along
        characteristics, so these values never change.
    """

    def __init__(self, x, v, w, box_length, time=0.0, f_value=None):
        """Default parameters."""
        x = np.asarray(x, dtype=float).reshape(-1, 3)
        v = np.asarray(v, dtype=float).reshape(-1, 3)
        w = np.asarray(w, dtype=float).reshape(-1)
        if not x.shape[0] == v.shape[0] == w.shape[0]:
            raise ValueError(
                f"x, v and w describe different particle counts: {x.shape[0]}, {v.shape[0]}, {w.shape[0]}"
            )
        if np.any(w < 0):
            raise ValueError("particle weights must be non-negative")
        self.box_length = float(box_length)
        self.x = wrap(x, self.box_length)
        self.v = v
        self.w = w
        self.time = float(time)
        self.f_value = None if f_value is None else np.asarray(f_value, dtype=float).reshape(-1)

    @classmethod
    def empty(cls, box_length):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), box_length, f_value=np.zeros(0))

    @property
    def n_particles(self):
        return self.w.shape[0]

    def total_charge(self):
        return float(np.sum(self.w))

    def kinetic_energy(self):
        """sum_p w_p sqrt(1 + |v_p|^2)."""
        return float(np.sum(self.w * np.sqrt(1.0 + np.sum(self.v**2, axis=-1))))

    def velocities(self):
        return self.v / np.sqrt(1.0 + np.sum(self.v**2, axis=-1))[:, None]

    def replace(self, x=None, v=None, time=None):
        """Copy with some of the arrays replaced."""
        return ParticleEnsemble(
            self.x if x is None else x,
            self.v if v is None else v,
            self.w,
            self.box_length,
            self.time if time is None else time,
            self.f_value,
        )


class DepositionScheme:
    """
    Shape function and current treatment of the deposition.

    Parameters
    ----------
    order : int
        Shape order; only 1 (cloud-in-cell) is available.

    charge_conserving : bool
        Correct the longitudinal current so discrete continuity holds.
    """

    def __init__(self, order=1, charge_conserving=True):
        """Default parameters."""
        if order != 1:
            raise ValueError(f"only cloud-in-cell (order 1) shapes are available, got order {order}")
        self.order = order
        self.charge_conserving = charge_conserving


def wrap(x, box_length):
    """Map positions into [0, L)."""
    x = np.mod(x, box_length)
    return np.where(x >= box_length, x - box_length, x)


def _minimal_image(d, box_length):
    return d - box_length * np.round(d / box_length)


def _cic_stencil(x, n, dx):
    """Flat node indices and trilinear weights of the 8 corners, shapes (8, N)."""
    u = x / dx
    base = np.floor(u)
    frac = u - base
    base = base.astype(np.int64) % n
    indices, weights = [], []
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                ix = (base[:, 0] + cx) % n
                iy = (base[:, 1] + cy) % n
                iz = (base[:, 2] + cz) % n
                indices.append((ix * n + iy) * n + iz)
                weights.append(
                    (frac[:, 0] if cx else 1.0 - frac[:, 0])
                    * (frac[:, 1] if cy else 1.0 - frac[:, 1])
                    * (frac[:, 2] if cz else 1.0 - frac[:, 2])
                )
    return np.stack(indices), np.stack(weights)


def _scatter(x, values, n, dx):
    """Sum of values times the trilinear shape, flattened grid (n^3,)."""
    indices, weights = _cic_stencil(x, n, dx)
    grid = np.zeros(n**3)
    for corner in range(8):
        grid += np.bincount(indices[corner], weights=values * weights[corner], minlength=n**3)
    return grid


def deposit_grid(x, values, n, box_length, workers=1):
    """
    Trilinear deposition of per-particle values onto the grid.

    Particle slices are deposited on private grids and summed in slice
    order, so the result only depends on the worker count.

    Parameters
    ----------
    values : array (N,) or (N, c)

    Returns
    -------
    grid : array (n, n, n) or (c, n, n, n)
        Deposited sums divided by the cell volume.
    """
    dx = box_length / n
    values = np.asarray(values, dtype=float)
    columns = values[:, None] if values.ndim == 1 else values
    slices = list(gen_even_slices(x.shape[0], max(1, workers))) if x.shape[0] else []

    def _job(part):
        return np.stack([_scatter(x[part], columns[part, c], n, dx) for c in range(columns.shape[1])])

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(_job, slices))
    else:
        partial = [_job(part) for part in slices]
    total = np.zeros((columns.shape[1], n**3))
    for grid in partial:
        total += grid
    total = total.reshape((columns.shape[1], n, n, n)) / dx**3
    return total[0] if values.ndim == 1 else total


def deposit(ensemble, n, scheme=None, previous_x=None, dt=None, workers=1):
    """
    Charge and current densities of the ensemble.

    Parameters
    ----------
    ensemble : ParticleEnsemble
        Particles at the new positions.

    n : int
        Grid points per axis.

    scheme : DepositionScheme, optional

    previous_x : array (N, 3), optional
        Positions one step earlier. With a charge-conserving scheme the
        current is deposited at the mid positions from the displacement and
        its longitudinal part is corrected so that
        (rho_new - rho_old) / dt + div j = 0 on the lattice.

    dt : float, optional
        Step between previous_x and the current positions.

    Returns
    -------
    src : SourceDensity
    """
    scheme = scheme or DepositionScheme()
    L = ensemble.box_length
    rho = 4.0 * np.pi * deposit_grid(ensemble.x, ensemble.w, n, L, workers)
    if previous_x is None or not scheme.charge_conserving:
        current = ensemble.w[:, None] * ensemble.velocities()
        j = 4.0 * np.pi * deposit_grid(ensemble.x, current, n, L, workers)
        return maxwell.SourceDensity(rho, j, L, workers)
    if dt is None or dt <= 0:
        raise ValueError("a positive dt is needed for charge-conserving deposition")
    displacement = _minimal_image(ensemble.x - previous_x, L)
    middle = wrap(previous_x + 0.5 * displacement, L)
    current = ensemble.w[:, None] * displacement / dt
    j = 4.0 * np.pi * deposit_grid(middle, current, n, L, workers)
    rho_old = 4.0 * np.pi * deposit_grid(previous_x, ensemble.w, n, L, workers)
    src = maxwell.SourceDensity(rho, j, L, workers)
    old_hat = maxwell.to_spectral(rho_old, L, workers)
    return src.with_current_hat(maxwell.correct_current(src.j_hat, old_hat, src.rho_hat, dt, L))


def deposit_moment(ensemble, n, power=1, workers=1):
    """Grid analogue of int f^power dv: deposit w f^(power - 1)."""
    if power == 1:
        values = ensemble.w
    elif ensemble.f_value is None:
        raise ValueError("moments with power > 1 need the particles' phase-space density values")
    else:
        values = ensemble.w * ensemble.f_value ** (power - 1)
    return deposit_grid(ensemble.x, values, n, ensemble.box_length, workers)


def interpolate_fields(state, ensemble):
    """Trilinear gather of E and B at the particle positions, shapes (N, 3)."""
    n = state.n
    indices, weights = _cic_stencil(ensemble.x, n, state.dx)
    E_flat = state.E.reshape(3, -1)
    B_flat = state.B.reshape(3, -1)
    E_p = np.zeros((ensemble.n_particles, 3))
    B_p = np.zeros((ensemble.n_particles, 3))
    for corner in range(8):
        E_p += (E_flat[:, indices[corner]] * weights[corner]).T
        B_p += (B_flat[:, indices[corner]] * weights[corner]).T
    return E_p, B_p


def push_momentum(ensemble, E_p, B_p, dt):
    """
    Half electric kick, magnetic rotation, half electric kick.

    The rotation is exact: v turns about -B by the angle dt |B| / gamma,
    with gamma taken after the first half kick, so |v| is untouched by B.
    """
    v_minus = ensemble.v + 0.5 * dt * E_p
    gamma = np.sqrt(1.0 + np.sum(v_minus**2, axis=-1))
    b_norm = np.sqrt(np.sum(B_p**2, axis=-1))
    has_field = b_norm > 0
    axis = np.where(has_field[:, None], -B_p / np.where(has_field, b_norm, 1.0)[:, None], 0.0)
    angle = dt * b_norm / gamma
    cos, sin = np.cos(angle)[:, None], np.sin(angle)[:, None]
    along = np.sum(axis * v_minus, axis=-1)[:, None] * axis
    v_plus = v_minus * cos + np.cross(axis, v_minus) * sin + along * (1.0 - cos)
    v_plus = np.where(has_field[:, None], v_plus, v_minus)
    return ensemble.replace(v=v_plus + 0.5 * dt * E_p)


def push_position(ensemble, dt):
    """x += v^ dt, wrapped into the box."""
    return ensemble.replace(x=ensemble.x + dt * ensemble.velocities(), time=ensemble.time + dt)


class GaussianInitialData:
    """
    Separable data f0(x, v) = epsilon exp(-|x - c|^2 / sigma_x^2 - |v|^2 / sigma_v^2).

    Parameters
    ----------
    epsilon : float
        Amplitude.

    center : array (3,)

    sigma_x, sigma_v : float
        Widths in position and momentum.
    """

    def __init__(self, epsilon=1e-3, center=(0.0, 0.0, 0.0), sigma_x=1.0, sigma_v=0.5):
        """Default parameters."""
        if sigma_x <= 0 or sigma_v <= 0:
            raise ValueError(f"widths must be positive, got sigma_x={sigma_x}, sigma_v={sigma_v}")
        self.epsilon = float(epsilon)
        self.center = np.asarray(center, dtype=float)
        self.sigma_x = float(sigma_x)
        self.sigma_v = float(sigma_v)

    def value(self, x, v):
        dx = np.asarray(x) - self.center
        return self.epsilon * np.exp(
            -np.sum(dx * dx, axis=-1) / self.sigma_x**2 - np.sum(np.asarray(v) ** 2, axis=-1) / self.sigma_v**2
        )

    def mass(self):
        """int f0 dx dv."""
        return self.epsilon * np.pi**3 * self.sigma_x**3 * self.sigma_v**3

    def density_at_rest(self, x, power=1):
        """int f0(x, v)^power dv in closed form."""
        dx = np.asarray(x, dtype=float) - self.center
        return (
            self.epsilon**power
            * np.exp(-power * np.sum(dx * dx, axis=-1) / self.sigma_x**2)
            * (np.pi * self.sigma_v**2 / power) ** 1.5
        )


def sample_ensemble(data, n_particles, box_length, seed=0):
    """
    Deterministic scrambled Sobol sample of the Gaussian data.

    Weights are equal and sum to the mass of f0; every particle carries
    its value of f0.
    """
    sampler = qmc.Sobol(d=6, scramble=True, seed=seed)
    exponent = int(np.log2(n_particles)) if n_particles > 0 else 0
    if n_particles > 0 and 2**exponent == n_particles:
        uniform = sampler.random_base2(exponent)
    else:
        warnings.warn(f"{n_particles} particles is not a power of two; the Sobol sample loses balance")
        uniform = sampler.random(n_particles)
    tiny = np.finfo(float).eps
    normal = ndtri(np.clip(uniform, tiny, 1.0 - tiny))
    x = data.center + data.sigma_x / np.sqrt(2.0) * normal[:, :3]
    v = data.sigma_v / np.sqrt(2.0) * normal[:, 3:]
    w = np.full(n_particles, data.mass() / max(n_particles, 1))
    return ParticleEnsemble(x, v, w, box_length, 0.0, f_value=data.value(x, v))


def _velocity_factor(s, sigma_v, power):
    """exp(-power |v|^2 / sigma_v^2) gamma^5 and its derivative in s = |v^|^2."""
    if s >= 1.0:
        return 0.0, 0.0
    q = 1.0 / (1.0 - s)
    value = math.exp(-power * (q - 1.0) / sigma_v**2) * q**2.5
    return value, value * q * q * (-power / sigma_v**2 + 2.5 / q)


def _transport_quadrature(t, x_query, data, power, component, epsrel, epsabs=0.0):
    """
    int over y of f0(y, v)^p gamma^5 t^-3 (or its x-derivative) with v^ = (x - y)/t.

    `epsabs` is in the units of the returned value.
    """
    x_query = np.asarray(x_query, dtype=float)
    reach = t * min(1.0, 8.0 * data.sigma_v / np.sqrt(power))
    spread = 8.0 * data.sigma_x / np.sqrt(power)
    lower = np.maximum(data.center - spread, x_query - reach)
    upper = np.minimum(data.center + spread, x_query + reach)
    if np.any(lower >= upper):
        return 0.0

    # nquad calls this once per point: plain floats
    q1, q2, q3 = (float(c) for c in x_query)
    c1, c2, c3 = (float(c) for c in data.center)
    spatial_rate = power / data.sigma_x**2
    sigma_v = data.sigma_v

    def integrand(y1, y2, y3):
        u = ((q1 - y1) / t, (q2 - y2) / t, (q3 - y3) / t)
        factor, d_ds = _velocity_factor(u[0] * u[0] + u[1] * u[1] + u[2] * u[2], sigma_v, power)
        spatial = math.exp(-spatial_rate * ((y1 - c1) ** 2 + (y2 - c2) ** 2 + (y3 - c3) ** 2))
        if component is None:
            return spatial * factor
        return spatial * 2.0 * u[component] * d_ds / t

    prefactor = data.epsilon**power / t**3
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            result, _ = integrate.nquad(
                integrand,
                list(zip(lower, upper)),
                opts={"epsrel": epsrel, "epsabs": epsabs / prefactor, "limit": 200},
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"free-transport quadrature did not converge at t={t:g}: {exc}")
    return prefactor * result


def free_transport_density(t, x_query, data, power=1, epsrel=1e-9):
    """
    Exact density int f0(x - v^ t, v)^power dv of free transport.

    For t > 0 the momentum integral is rewritten over the initial position
    y = x - v^ t, where dv = gamma^5 t^-3 dy, and evaluated by adaptive
    quadrature.

    Raises
    ------
    QuadratureError
        When the quadrature reports non-convergence.
    """
    if t == 0:
        return float(data.density_at_rest(x_query, power))
    return _transport_quadrature(abs(t), x_query, data, power, None, epsrel)


def free_transport_density_gradient(t, x_query, data, power=1, epsrel=1e-9):
    """
    Spatial gradient of `free_transport_density`, shape (3,).

    The density is even in t, and so is its gradient. Components are
    resolved to epsrel times the density over the cloud size
    max(sigma_x, |t| sigma_v), so components that vanish by symmetry
    converge to zero.
    """
    if t == 0:
        dx = np.asarray(x_query, dtype=float) - data.center
        return -2.0 * power * dx / data.sigma_x**2 * data.density_at_rest(x_query, power)
    t = abs(t)
    density = _transport_quadrature(t, x_query, data, power, None, epsrel)
    epsabs = epsrel * density / max(data.sigma_x, t * data.sigma_v)
    return np.array(
        [_transport_quadrature(t, x_query, data, power, axis, epsrel, epsabs) for axis in range(3)]
    )


def free_transport_moment(t, x_query, data, power=2, epsrel=1e-9):
    """(int f(t, x, v)^power dv)^(1/power) of free transport."""
    return free_transport_density(t, x_query, data, power, epsrel) ** (1.0 / power)
