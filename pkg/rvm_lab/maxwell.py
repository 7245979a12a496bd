"""Pseudo-spectral Maxwell solver in half-wave form on a periodic box.

Spectral arrays approximate the continuous Fourier transform:
F_hat(xi) = dV * sum_x F(x) exp(-i xi.x), with grid nodes at x = j dx.
Fields live on the lattice with the Nyquist planes removed, where the
half-wave split of a real field is exact.

Authors: rvm_lab team
"""
import functools
import warnings

import numpy as np
from scipy import fft

from .geometry import CUTOFF

_AXES = (-3, -2, -1)
_TINY = 1e-300


class CFLViolation(ValueError):
    """Raised when a source step is longer than the grid spacing."""


@functools.lru_cache(maxsize=16)
def frequency_grid(n, box_length):
    """
    Wavevectors of the discrete lattice.

    Returns
    -------
    k : array (3, n, n, n)
        xi in (2 pi / L) Z^3, FFT ordering.

    k_norm : array (n, n, n)
        |xi|.

    keep : bool array (n, n, n)
        False on the Nyquist planes.
    """
    freq = 2.0 * np.pi * fft.fftfreq(n, d=box_length / n)
    k = np.stack(np.meshgrid(freq, freq, freq, indexing="ij"))
    k_norm = np.sqrt(np.sum(k * k, axis=0))
    index = np.abs(np.arange(n) - n // 2) > 0 if n % 2 == 0 else np.ones(n, bool)
    keep = index[:, None, None] & index[None, :, None] & index[None, None, :]
    for array in (k, k_norm, keep):
        array.setflags(write=False)
    return k, k_norm, keep


def _unit_wavevectors(k, k_norm):
    safe = np.where(k_norm > 0, k_norm, 1.0)
    return np.where(k_norm > 0, k / safe, 0.0)


def _cross(a, b):
    return np.cross(a, b, axis=0)


def _dot(a, b):
    return np.sum(a * b, axis=0)


def conj_reflect(a_hat):
    """Spectrum of the complex conjugate: a_hat(xi) -> conj(a_hat(-xi))."""
    return np.conj(np.roll(np.flip(a_hat, axis=_AXES), 1, axis=_AXES))


def _check_grid(n):
    if n < 2 or n & (n - 1):
        raise ValueError(f"grid size must be a power of two, got {n}")


def to_spectral(a, box_length, workers=1):
    """dV * FFT over the last three axes."""
    return (box_length / a.shape[-1]) ** 3 * fft.fftn(a, axes=_AXES, workers=workers)


def to_real(a_hat, box_length, workers=1):
    """Inverse of `to_spectral`, real part."""
    n = a_hat.shape[-1]
    return fft.ifftn(a_hat, axes=_AXES, workers=workers).real / (box_length / n) ** 3


class FieldState:
    """
    Electric and magnetic fields on the periodic box.

    Parameters
    ----------
    E, B : array (3, n, n, n)
        Real field components. Content on the Nyquist planes is removed.

    box_length : float
        Side L of the box.

    time : float
        Time stamp.

    workers : int
        Threads used by each transform.

    Attributes
    ----------
    E_hat, B_hat : complex arrays (3, n, n, n)
        Spectral representation, computed lazily and cached.
    """

    def __init__(self, E, B, box_length, time=0.0, workers=1, _spectral=None):
        """Default parameters."""
        E = np.asarray(E, dtype=float)
        B = np.asarray(B, dtype=float)
        if E.ndim != 4 or E.shape[0] != 3 or E.shape != B.shape:
            raise ValueError(f"E and B must have shape (3, n, n, n), got {E.shape} and {B.shape}")
        if len(set(E.shape[1:])) != 1:
            raise ValueError(f"the grid must be cubic, got {E.shape[1:]}")
        _check_grid(E.shape[1])
        self.box_length = float(box_length)
        self.time = float(time)
        self.workers = workers
        if _spectral is None:
            keep = frequency_grid(E.shape[1], self.box_length)[2]
            E_hat = to_spectral(E, self.box_length, workers) * keep
            B_hat = to_spectral(B, self.box_length, workers) * keep
            E = to_real(E_hat, self.box_length, workers)
            B = to_real(B_hat, self.box_length, workers)
            _spectral = (E_hat, B_hat)
        self.E = E
        self.B = B
        self._E_hat, self._B_hat = _spectral

    @classmethod
    def from_spectral(cls, E_hat, B_hat, box_length, time=0.0, workers=1):
        """Build a state from spectral arrays, dropping the Nyquist planes."""
        box_length = float(box_length)
        keep = frequency_grid(E_hat.shape[1], box_length)[2]
        E_hat = E_hat * keep
        B_hat = B_hat * keep
        E = to_real(E_hat, box_length, workers)
        B = to_real(B_hat, box_length, workers)
        return cls(E, B, box_length, time, workers, _spectral=(E_hat, B_hat))

    @classmethod
    def vacuum(cls, n, box_length, time=0.0, workers=1):
        zeros = np.zeros((3, n, n, n))
        return cls(zeros, zeros.copy(), box_length, time, workers)

    @property
    def n(self):
        return self.E.shape[1]

    @property
    def dx(self):
        return self.box_length / self.n

    @property
    def cell_volume(self):
        return self.dx**3

    @property
    def E_hat(self):
        if self._E_hat is None:
            self._E_hat = to_spectral(self.E, self.box_length, self.workers)
        return self._E_hat

    @property
    def B_hat(self):
        if self._B_hat is None:
            self._B_hat = to_spectral(self.B, self.box_length, self.workers)
        return self._B_hat

    def copy(self):
        return FieldState(
            self.E.copy(),
            self.B.copy(),
            self.box_length,
            self.time,
            self.workers,
            _spectral=(self.E_hat.copy(), self.B_hat.copy()),
        )


class SourceDensity:
    """
    Charge and current densities rho = 4 pi int f dv, j = 4 pi int v^ f dv.

    Parameters
    ----------
    rho : array (n, n, n)
    j : array (3, n, n, n)
    box_length : float
    """

    def __init__(self, rho, j, box_length, workers=1, j_hat=None):
        """Default parameters."""
        self.rho = np.asarray(rho, dtype=float)
        self.j = np.asarray(j, dtype=float)
        self.box_length = float(box_length)
        self.workers = workers
        self._rho_hat = None
        self._j_hat = j_hat

    @classmethod
    def empty(cls, n, box_length):
        return cls(np.zeros((n, n, n)), np.zeros((3, n, n, n)), box_length)

    @property
    def n(self):
        return self.rho.shape[-1]

    @property
    def cell_volume(self):
        return (self.box_length / self.n) ** 3

    @property
    def rho_hat(self):
        if self._rho_hat is None:
            self._rho_hat = to_spectral(self.rho, self.box_length, self.workers)
        return self._rho_hat

    @property
    def j_hat(self):
        if self._j_hat is None:
            self._j_hat = to_spectral(self.j, self.box_length, self.workers)
        return self._j_hat

    def with_current_hat(self, j_hat):
        """Same density with a replaced spectral current."""
        return SourceDensity(
            self.rho, to_real(j_hat, self.box_length, self.workers), self.box_length, self.workers, j_hat
        )

    def total_charge(self):
        return float(np.sum(self.rho) * self.cell_volume)


def correct_current(j_hat, rho_old_hat, rho_new_hat, dt, box_length):
    """
    Replace the longitudinal current so that discrete continuity holds.

    (rho_new - rho_old) / dt + i xi . j = 0 exactly on every nonzero mode;
    the transverse part and the zero mode are kept.
    """
    n = j_hat.shape[-1]
    k, k_norm, _ = frequency_grid(n, float(box_length))
    n_hat = _unit_wavevectors(k, k_norm)
    safe = np.where(k_norm > 0, k_norm, 1.0)
    longitudinal = np.where(k_norm > 0, 1j * (rho_new_hat - rho_old_hat) / (dt * safe), 0.0)
    corrected = j_hat - n_hat * _dot(n_hat, j_hat) + n_hat * longitudinal
    corrected[:, 0, 0, 0] = j_hat[:, 0, 0, 0]
    return corrected


def _half_waves(F_hat, dF_hat, k_norm):
    """u = |xi|^-1 (d_t - i|xi|) F, zero mode set to 0."""
    safe = np.where(k_norm > 0, k_norm, 1.0)
    return np.where(k_norm > 0, (dF_hat - 1j * k_norm * F_hat) / safe, 0.0)


def _from_half_wave(u_hat):
    """F = (-u + conj(u)) / (2i)."""
    return (-u_hat + conj_reflect(u_hat)) / 2j


def _time_derivatives(E_hat, B_hat, k, j_hat=None):
    dE = 1j * _cross(k, B_hat)
    if j_hat is not None:
        dE = dE - j_hat
    dB = -1j * _cross(k, E_hat)
    return dE, dB


def propagate_free(state, dt):
    """
    Exact free evolution over dt.

    The transverse half-waves are multiplied by exp(-i |xi| dt); the
    longitudinal electric field and the zero mode do not move.
    """
    k, k_norm, keep = frequency_grid(state.n, state.box_length)
    n_hat = _unit_wavevectors(k, k_norm)
    E_hat, B_hat = state.E_hat, state.B_hat
    E_long = n_hat * _dot(n_hat, E_hat)
    B_long = n_hat * _dot(n_hat, B_hat)
    E_trans, B_trans = E_hat - E_long, B_hat - B_long
    dE, dB = _time_derivatives(E_trans, B_trans, k)
    phase = np.exp(-1j * k_norm * dt)
    E_new = E_long + _from_half_wave(phase * _half_waves(E_trans, dE, k_norm))
    B_new = B_long + _from_half_wave(phase * _half_waves(B_trans, dB, k_norm))
    E_new[:, 0, 0, 0] = E_hat[:, 0, 0, 0]
    B_new[:, 0, 0, 0] = B_hat[:, 0, 0, 0]
    return FieldState.from_spectral(
        E_new * keep, B_new * keep, state.box_length, state.time + dt, state.workers
    )


def apply_sources(state, src, dt):
    """Kick E by -j dt; B is unchanged by the sources."""
    if dt > state.dx:
        raise CFLViolation(
            f"time step {dt:g} exceeds the grid spacing {state.dx:g}; reduce the dt factor"
        )
    return FieldState.from_spectral(
        state.E_hat - dt * src.j_hat, state.B_hat, state.box_length, state.time, state.workers
    )


class HalfWaveProfile:
    """
    Profiles h_i = exp(i t |xi|) u_i of the electric (1) and magnetic (2)
    half-waves.

    Attributes
    ----------
    h1_hat, h2_hat : complex arrays (3, n, n, n)
    time : float
    box_length : float
    zero_mode : tuple of complex arrays (3,)
        Spatial averages of E and B, which the half-waves do not carry.
    """

    def __init__(self, h1_hat, h2_hat, time, box_length, zero_mode=None):
        """Default parameters."""
        self.h1_hat = h1_hat
        self.h2_hat = h2_hat
        self.time = float(time)
        self.box_length = float(box_length)
        if zero_mode is None:
            zero_mode = (np.zeros(3, complex), np.zeros(3, complex))
        self.zero_mode = zero_mode

    @property
    def n(self):
        return self.h1_hat.shape[-1]

    def component(self, index):
        if index == 1:
            return self.h1_hat
        if index == 2:
            return self.h2_hat
        raise ValueError(f"profile index must be 1 or 2, got {index}")


def extract_profiles(state, t=None, src=None):
    """
    Half-wave profiles of the fields.

    The time derivatives come from the field equations, with the current
    of `src` when given.
    """
    t = state.time if t is None else t
    k, k_norm, keep = frequency_grid(state.n, state.box_length)
    j_hat = None if src is None else src.j_hat * keep
    dE, dB = _time_derivatives(state.E_hat, state.B_hat, k, j_hat)
    phase = np.exp(1j * t * k_norm)
    h1 = phase * _half_waves(state.E_hat, dE, k_norm) * keep
    h2 = phase * _half_waves(state.B_hat, dB, k_norm) * keep
    zero_mode = (state.E_hat[:, 0, 0, 0].copy(), state.B_hat[:, 0, 0, 0].copy())
    return HalfWaveProfile(h1, h2, t, state.box_length, zero_mode)


def reconstruct_fields(profile, workers=1):
    """Invert `extract_profiles`."""
    _, k_norm, _ = frequency_grid(profile.n, profile.box_length)
    phase = np.exp(-1j * profile.time * k_norm)
    E_hat = _from_half_wave(phase * profile.h1_hat)
    B_hat = _from_half_wave(phase * profile.h2_hat)
    E_hat[:, 0, 0, 0], B_hat[:, 0, 0, 0] = profile.zero_mode
    return FieldState.from_spectral(E_hat, B_hat, profile.box_length, profile.time, workers)


def thinned_lattice(n, box_length, k_max=4):
    """Nonzero modes with every integer index in [-k_max, k_max]."""
    k, k_norm, keep = frequency_grid(n, float(box_length))
    index = np.abs(fft.fftfreq(n, d=1.0 / n)) <= k_max
    mask = index[:, None, None] & index[None, :, None] & index[None, None, :]
    return mask & keep & (k_norm > 0)


def _deposit_transform(x, xi, dx):
    """Fourier transform of the trilinear shape of each particle, exp(-i xi.x) at nodes."""
    cell = np.floor(x / dx)
    frac = x / dx - cell
    result = np.ones((x.shape[0], xi.shape[0]), dtype=complex)
    for axis in range(3):
        node = np.exp(-1j * np.outer(cell[:, axis] * dx, xi[:, axis]))
        shift = np.exp(-1j * xi[:, axis] * dx)
        result *= node * ((1.0 - frac[:, axis])[:, None] + frac[:, axis][:, None] * shift)
    return result


def modified_profile_correction_zero_order(
    profile, ensemble, t=None, component=1, k_max=4, chunk=4096, shape="cic"
):
    """
    Profile with the zeroth-order free-transport correction removed.

    h~(xi) = h(xi) - exp(i t |xi|) sum_p w_p D_p(xi) a(v_p) xi / (|xi| (|xi| - v^_p . xi)),
    where D_p is the transform of the deposited shape of particle p
    (exp(-i xi.x_p) for shape="point"), a(v) xi = 4 pi (v^ (v^.xi) - xi) for
    the electric profile and -4 pi v^ x xi for the magnetic one. Only the
    thinned lattice `thinned_lattice(n, L, k_max)` is corrected.

    Returns
    -------
    h_tilde : complex array (3, n, n, n)
    """
    t = profile.time if t is None else t
    n, box_length = profile.n, profile.box_length
    h_hat = profile.component(component)
    k, k_norm, _ = frequency_grid(n, box_length)
    mask = thinned_lattice(n, box_length, k_max)
    xi = k[:, mask].T
    xi_norm = k_norm[mask]
    correction = np.zeros((xi.shape[0], 3), dtype=complex)
    x = np.asarray(ensemble.x, dtype=float)
    v_hat = ensemble.v / np.sqrt(1.0 + np.sum(ensemble.v**2, axis=-1))[:, None]
    dx = box_length / n
    for start in range(0, x.shape[0], chunk):
        stop = start + chunk
        if shape == "cic":
            kernel = _deposit_transform(x[start:stop], xi, dx)
        elif shape == "point":
            kernel = np.exp(-1j * x[start:stop] @ xi.T)
        else:
            raise ValueError(f"shape must be 'cic' or 'point', got {shape!r}")
        vel = v_hat[start:stop]
        projection = vel @ xi.T
        denominator = xi_norm[None, :] * (xi_norm[None, :] - projection)
        weight = ensemble.w[start:stop, None] * kernel / denominator
        if component == 1:
            correction += 4.0 * np.pi * (
                np.einsum("pm,pm,pc->mc", weight, projection, vel) - np.sum(weight, axis=0)[:, None] * xi
            )
        elif component == 2:
            cross = np.cross(vel[:, None, :], xi[None, :, :])
            correction += -4.0 * np.pi * np.einsum("pm,pmc->mc", weight, cross)
        else:
            raise ValueError(f"component must be 1 or 2, got {component}")
    modified = np.array(h_hat, copy=True)
    modified[:, mask] -= (np.exp(1j * t * xi_norm)[:, None] * correction).T
    return modified


def _lattice_derivatives(array, order, spacing):
    """Stack of all order-n centered differences along the three lattice axes."""
    layers = [array]
    for _ in range(order):
        layers = [np.gradient(layer, spacing, axis=axis) for layer in layers for axis in range(3)]
    return np.sqrt(sum(np.abs(layer) ** 2 for layer in layers))


def xn_norm(profile_hat, n_order, box_length, min_points=8):
    """
    sup_k 2^((n+1)k) max |grad_xi^n h psi_k| over dyadic shells of the lattice.

    Parameters
    ----------
    profile_hat : complex array (3, n, n, n) or (n, n, n)
        Spectral array in FFT ordering.

    n_order : int
        Number of frequency derivatives, 0..3.

    min_points : int
        Shells with fewer lattice points are skipped.
    """
    if not 0 <= n_order <= 3:
        raise ValueError(f"n must be between 0 and 3, got {n_order}")
    profile_hat = np.asarray(profile_hat)
    if profile_hat.ndim == 3:
        profile_hat = profile_hat[None]
    n = profile_hat.shape[-1]
    _, k_norm, _ = frequency_grid(n, float(box_length))
    spacing = 2.0 * np.pi / box_length
    shifted = fft.fftshift(profile_hat, axes=_AXES)
    k_shifted = fft.fftshift(k_norm)
    magnitude = np.sqrt(
        sum(_lattice_derivatives(component, n_order, spacing) ** 2 for component in shifted)
    )
    k_lo = int(np.floor(np.log2(spacing))) - 1
    k_hi = int(np.ceil(np.log2(k_shifted.max()))) + 2
    best = 0.0
    skipped = []
    for shell in range(k_lo, k_hi + 1):
        weight = CUTOFF.psi(k_shifted, shell)
        if np.count_nonzero(weight > 0) < min_points:
            skipped.append(shell)
            continue
        best = max(best, 2.0 ** ((n_order + 1) * shell) * float(np.max(magnitude * weight)))
    if skipped and len(skipped) == k_hi - k_lo + 1:
        warnings.warn("every dyadic shell was skipped; the lattice is too coarse")
    return best


def profile_l2(profile_hat, box_length):
    """L2 norm over the frequency lattice."""
    spacing = 2.0 * np.pi / box_length
    return float(np.sqrt(np.sum(np.abs(profile_hat) ** 2) * spacing**3))


def gauss_residual(state, src=None, eps=1e-30):
    """
    ||i xi . E_hat - rho_hat|| / max(||rho_hat||, eps) on the filtered lattice.

    Without charge (src None or rho_hat = 0) the residual is taken relative
    to ||xi|| |E_hat| instead. The zero mode is excluded: the total charge is
    neutralised by a uniform background on the torus.
    """
    k, k_norm, keep = frequency_grid(state.n, state.box_length)
    active = keep & (k_norm > 0)
    divergence = 1j * _dot(k, state.E_hat)
    rho_hat = np.zeros(divergence.shape, complex) if src is None else src.rho_hat
    numerator = np.linalg.norm((divergence - rho_hat)[active])
    charge_scale = np.linalg.norm(rho_hat[active])
    if charge_scale > 0:
        return float(numerator / max(charge_scale, eps))
    field_scale = np.sqrt(np.sum((k_norm**2 * np.sum(np.abs(state.E_hat) ** 2, axis=0))[active]))
    return float(numerator / max(field_scale, eps))


def div_b_residual(state, eps=1e-30):
    """||i xi . B_hat|| relative to ||xi|| |B_hat|."""
    k, k_norm, _ = frequency_grid(state.n, state.box_length)
    numerator = np.linalg.norm(_dot(k, state.B_hat))
    scale = np.sqrt(np.sum(k_norm**2 * np.sum(np.abs(state.B_hat) ** 2, axis=0)))
    return float(numerator / max(scale, eps))


def field_energy(state):
    """(1 / 8 pi) int |E|^2 + |B|^2 dx."""
    return float((np.sum(state.E**2) + np.sum(state.B**2)) * state.cell_volume / (8.0 * np.pi))


def coulomb_field(src, workers=1):
    """Longitudinal field with i xi . E_hat = rho_hat and no zero mode."""
    n, box_length = src.n, src.box_length
    k, k_norm, keep = frequency_grid(n, box_length)
    safe = np.where(k_norm > 0, k_norm**2, 1.0)
    E_hat = np.where(k_norm > 0, -1j * k * src.rho_hat / safe, 0.0) * keep
    return FieldState.from_spectral(E_hat, np.zeros_like(E_hat), box_length, 0.0, workers)


def grid_coordinates(n, box_length):
    """Node coordinates x = j dx, shape (3, n, n, n)."""
    axis = np.arange(n) * (box_length / n)
    return np.stack(np.meshgrid(axis, axis, axis, indexing="ij"))


def plane_wave_state(n, box_length, amplitude=1.0, mode=1, time=0.0, workers=1):
    """E = A cos(k (x3 - t)) e1, B = A cos(k (x3 - t)) e2 with k = 2 pi mode / L."""
    x = grid_coordinates(n, box_length)
    wave = amplitude * np.cos(2.0 * np.pi * mode / box_length * (x[2] - time))
    E = np.zeros((3, n, n, n))
    B = np.zeros((3, n, n, n))
    E[0] = wave
    B[1] = wave
    return FieldState(E, B, box_length, time, workers)


def gaussian_pulse_state(n, box_length, amplitude=1.0, sigma=6.0, center=None, workers=1):
    """
    Divergence-free pulse E = curl(A exp(-|x - c|^2 / sigma^2) e3), B = 0.

    The centre defaults to the middle of the box. The curl is taken on the
    lattice, so i xi . E_hat vanishes mode by mode.
    """
    center = np.full(3, box_length / 2.0) if center is None else np.asarray(center, float)
    x = grid_coordinates(n, box_length) - center[:, None, None, None]
    gauss_hat = to_spectral(amplitude * np.exp(-np.sum(x * x, axis=0) / sigma**2), box_length, workers)
    k, _, _ = frequency_grid(n, float(box_length))
    E_hat = np.zeros((3, n, n, n), dtype=complex)
    E_hat[0] = 1j * k[1] * gauss_hat
    E_hat[1] = -1j * k[0] * gauss_hat
    return FieldState.from_spectral(E_hat, np.zeros_like(E_hat), box_length, 0.0, workers)
