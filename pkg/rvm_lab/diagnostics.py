"""Decay-exponent fitting, light-cone sampling, energy surrogates and
conservation monitors.

Authors: rvm_lab team
"""
import warnings

import numpy as np
import pandas as pd
from scipy import stats

from . import maxwell
from .geometry import CUTOFF, DESK_N
from .particles import ParticleEnsemble, interpolate_fields

MIN_SAMPLES = 8
WINDOW_SHRINK = 0.25


class DecayFitError(ValueError):
    """Raised when a series cannot be fitted by a power law."""


def _sanitize_series(times, values):
    times = np.asarray(times, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if times.shape != values.shape:
        raise ValueError(f"times and values differ in length: {times.size} != {values.size}")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times, values


class DecaySeries:
    """
    Time series of a positive observable and its power-law fit.

    Parameters
    ----------
    times : array
        Strictly increasing sample times.

    values : array

    window : tuple of float, optional
        Fit window [t_a, t_b]; the whole series when omitted.

    name : str
        Observable name.

    Attributes
    ----------
    exponent, stderr : float or None
        Set by `fit`.
    """

    def __init__(self, times, values, window=None, name="observable"):
        """Default parameters."""
        self.times, self.values = _sanitize_series(times, values)
        if window is None and self.times.size:
            window = (float(self.times[0]), float(self.times[-1]))
        self.window = window
        self.name = name
        self.exponent = None
        self.stderr = None

    @property
    def is_zero(self):
        return bool(np.all(self.values == 0))

    def in_window(self, window=None):
        t_a, t_b = self.window if window is None else window
        return (self.times >= t_a) & (self.times <= t_b)

    def fit(self, window=None):
        self.exponent, self.stderr = fit_decay_exponent(self, window)
        return self.exponent, self.stderr


def fit_decay_exponent(series, window=None):
    """
    Least-squares slope of log(value) against log(t) inside the window.

    Returns
    -------
    exponent, stderr : float

    Raises
    ------
    DecayFitError
        Fewer than 8 samples in the window, or non-positive values.
    """
    mask = series.in_window(window)
    times, values = series.times[mask], series.values[mask]
    window = series.window if window is None else window
    if times.size < MIN_SAMPLES:
        raise DecayFitError(
            f"{series.name}: {times.size} samples in window [{window[0]:g}, {window[1]:g}], "
            f"at least {MIN_SAMPLES} are needed"
        )
    if np.any(values <= 0) or np.any(times <= 0):
        raise DecayFitError(f"{series.name}: a power-law fit needs positive times and values")
    result = stats.linregress(np.log(times), np.log(values))
    return float(result.slope), float(result.stderr)


def window_robustness(series, window=None, floor=1e-10):
    """
    Refit on windows shrunk by 25% from either side.

    Returns
    -------
    report : dict
        exponent, stderr, the two shrunk exponents, the largest shift and
        whether it stays below 2 stderr (or `floor` for exact power laws).
    """
    window = series.window if window is None else window
    exponent, stderr = fit_decay_exponent(series, window)
    span = WINDOW_SHRINK * (window[1] - window[0])
    left, _ = fit_decay_exponent(series, (window[0] + span, window[1]))
    right, _ = fit_decay_exponent(series, (window[0], window[1] - span))
    shift = max(abs(left - exponent), abs(right - exponent))
    return {
        "exponent": exponent,
        "stderr": stderr,
        "exponent_left_shrunk": left,
        "exponent_right_shrunk": right,
        "max_shift": shift,
        "robust": bool(shift < max(2.0 * stderr, floor)),
    }


def default_fit_window(box_length, radius, t_min=10.0, t_max=None, near_field=True):
    """
    [max(10, 2R), 0.9 (L/2 - R)], falling back to 10 when that is empty.

    Parameters
    ----------
    t_max : float, optional
        Caps the end of the window, e.g. at the run length.

    near_field : bool
        Start after 2R. Samples riding the light cone carry no near field
        and start at t_min.
    """
    t_a = max(t_min, 2.0 * radius) if near_field else t_min
    t_b = 0.9 * (box_length / 2.0 - radius)
    if t_max is not None:
        t_b = min(t_b, t_max)
    if t_b <= t_a:
        warnings.warn(
            f"fit window [{t_a:g}, {t_b:g}] is empty for L={box_length:g}, R={radius:g}; "
            f"starting it at t={t_min:g} instead"
        )
        t_a = t_min
    if t_b <= t_a:
        raise DecayFitError(f"the box L={box_length:g} is too small for data of radius {radius:g}")
    return t_a, t_b


class ConeOffset:
    """
    Distance delta(t) = absolute + fraction t behind the light cone.

    delta = 0 samples on the cone; fraction = 0.5 samples at |x| = t/2.
    """

    def __init__(self, name, absolute=0.0, fraction=0.0):
        """Default parameters."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
        self.name = name
        self.absolute = float(absolute)
        self.fraction = float(fraction)

    def delta(self, t):
        return self.absolute + self.fraction * t


class ConeSampler:
    """
    Sample points x = c + (t - delta) n along rays leaving the data centre.

    Parameters
    ----------
    directions : array (m, 3)
        Normalised on construction. Defaults to eight rays in the plane
        orthogonal to e3.

    offsets : list of ConeOffset
        Defaults to the cone itself and the half-cone |x - c| = t/2.

    center : array (3,)

    box_length : float
    """

    def __init__(self, box_length, center=None, directions=None, offsets=None):
        """Default parameters."""
        self.box_length = float(box_length)
        self.center = np.full(3, self.box_length / 2.0) if center is None else np.asarray(center, float)
        if directions is None:
            angles = np.arange(8) * np.pi / 4.0
            directions = np.stack([np.cos(angles), np.sin(angles), np.zeros(8)], axis=-1)
        directions = np.asarray(directions, dtype=float).reshape(-1, 3)
        norms = np.linalg.norm(directions, axis=-1)
        if np.any(norms == 0):
            raise ValueError("sampling directions must be nonzero")
        self.directions = directions / norms[:, None]
        self.offsets = offsets or [ConeOffset("on_cone"), ConeOffset("half_cone", fraction=0.5)]

    def is_valid(self, t, radius):
        """Inside the unwrapped region t + |x - c| <= L/2, up to roundoff in t."""
        return t + radius <= self.box_length / 2.0 * (1.0 + 1e-12)

    def points(self, t, offset):
        radius = max(t - offset.delta(t), 0.0)
        return self.center + radius * self.directions, radius

    def sample(self, state):
        """
        Largest |E| + |B| over the rays for every offset.

        Returns
        -------
        values : dict
            Offset name to value; offsets outside the valid region are
            skipped with a warning.
        """
        values = {}
        for offset in self.offsets:
            points, radius = self.points(state.time, offset)
            if not self.is_valid(state.time, radius):
                warnings.warn(
                    f"{offset.name} samples at t={state.time:g} leave the valid region; skipped"
                )
                continue
            tracers = ParticleEnsemble(points, np.zeros_like(points), np.zeros(len(points)), self.box_length)
            E_p, B_p = interpolate_fields(state, tracers)
            values[offset.name] = float(np.max(np.linalg.norm(E_p, axis=-1) + np.linalg.norm(B_p, axis=-1)))
        return values


def sample_field_decay(snapshots, sampler, window=None):
    """
    Decay series of the cone samples over field snapshots.

    Parameters
    ----------
    snapshots : iterable of FieldState

    sampler : ConeSampler

    Returns
    -------
    series : dict
        Offset name to DecaySeries.
    """
    rows = {offset.name: ([], []) for offset in sampler.offsets}
    for state in snapshots:
        for name, value in sampler.sample(state).items():
            rows[name][0].append(state.time)
            rows[name][1].append(value)
    return {
        name: DecaySeries(times, values, window, name=f"field_{name}")
        for name, (times, values) in rows.items()
    }


def _periodic_gradient_norm(grid, spacing):
    parts = [(np.roll(grid, -1, axis) - np.roll(grid, 1, axis)) / (2.0 * spacing) for axis in range(3)]
    return np.sqrt(sum(part**2 for part in parts))


def density_moment_value(moment_grid, alpha, power, spacing):
    """
    (max over the grid of |grad^alpha m|)^(1/power) for a deposited moment
    grid m ~ int f^power dv; alpha is 0 or 1, gradients by centered
    differences.
    """
    if alpha == 0:
        peak = float(np.max(np.abs(moment_grid)))
    elif alpha == 1:
        peak = float(np.max(_periodic_gradient_norm(moment_grid, spacing)))
    else:
        raise ValueError(f"derivative order must be 0 or 1, got {alpha}")
    if power not in (1, 2):
        raise ValueError(f"power must be 1 or 2, got {power}")
    return peak ** (1.0 / power)


def density_moment_series(times, moment_grids, alpha, power, box_length, window=None):
    """DecaySeries of `density_moment_value` over snapshots of one moment grid."""
    grids = list(moment_grids)
    if not grids:
        raise DecayFitError("no density snapshots to build a series from")
    spacing = box_length / grids[0].shape[-1]
    values = [density_moment_value(grid, alpha, power, spacing) for grid in grids]
    return DecaySeries(times, values, window, name=f"density_a{alpha}_p{power}")


def _dyadic_gradient_l2(h_hat, box_length):
    """sup_k 2^(k/2) ||grad_xi h psi_k||_L2 over the lattice."""
    spacing = 2.0 * np.pi / box_length
    n = h_hat.shape[-1]
    _, k_norm, _ = maxwell.frequency_grid(n, float(box_length))
    axes = (-3, -2, -1)
    shifted = np.fft.fftshift(h_hat, axes=axes)
    k_shifted = np.fft.fftshift(k_norm)
    squared = sum(
        np.abs(np.gradient(component, spacing, axis=axis)) ** 2 for component in shifted for axis in range(3)
    )
    best = 0.0
    for shell in range(int(np.floor(np.log2(spacing))) - 1, int(np.ceil(np.log2(k_shifted.max()))) + 2):
        weight = CUTOFF.psi(k_shifted, shell)
        if not np.any(weight > 0):
            continue
        best = max(best, 2.0 ** (shell / 2.0) * float(np.sqrt(np.sum(squared * weight**2) * spacing**3)))
    return best


def weighted_velocity_l2(ensemble, n_desk=DESK_N, bins=16):
    """
    ||(1 + |v|)^(20 N) g_hat(t, 0, v)||_L2 from a momentum histogram.

    g_hat(t, 0, v) is the spatial integral of f, the v-marginal of the
    ensemble.
    """
    if ensemble is None or ensemble.n_particles == 0:
        return 0.0
    reach = float(np.max(np.abs(ensemble.v))) or 1.0
    edges = np.linspace(-reach, reach, bins + 1)
    histogram, _ = np.histogramdd(ensemble.v, bins=(edges, edges, edges), weights=ensemble.w)
    volume = (edges[1] - edges[0]) ** 3
    centers = 0.5 * (edges[1:] + edges[:-1])
    c = np.stack(np.meshgrid(centers, centers, centers, indexing="ij"))
    weight = (1.0 + np.sqrt(np.sum(c * c, axis=0))) ** (20 * n_desk)
    return float(np.sqrt(np.sum((weight * histogram / volume) ** 2) * volume))


def energy_surrogates(profile, modified=None, profile_rate=None, ensemble=None, n_max=1):
    """
    Truncated energy functionals of the profiles and the particle density.

    Parameters
    ----------
    profile : HalfWaveProfile

    modified : tuple of complex arrays, optional
        Modified profiles (h~1, h~2); the plain profiles are used when
        omitted.

    profile_rate : tuple of complex arrays, optional
        Time derivatives (d_t h1, d_t h2); the (1 + t) ||d_t h||_Xn terms are
        left out when omitted.

    ensemble : ParticleEnsemble, optional

    n_max : int
        Highest X_n index kept.

    Returns
    -------
    record : dict
        E_low_eb_trunc, E_high_eb_trunc, weighted_L2_f.
    """
    L = profile.box_length
    plain = (profile.h1_hat, profile.h2_hat)
    modified = plain if modified is None else modified
    low = 0.0
    high = 0.0
    for index in range(2):
        for n_order in range(n_max + 1):
            low += maxwell.xn_norm(modified[index], n_order, L)
            if profile_rate is not None:
                low += (1.0 + abs(profile.time)) * maxwell.xn_norm(profile_rate[index], n_order, L)
        high += maxwell.profile_l2(plain[index], L) + maxwell.profile_l2(modified[index], L)
        high += _dyadic_gradient_l2(modified[index], L)
    return {
        "E_low_eb_trunc": low,
        "E_high_eb_trunc": high,
        "weighted_L2_f": weighted_velocity_l2(ensemble),
    }


def conservation_report(monitors, eps=1e-300):
    """
    Maxima over a run of the conservation monitors.

    Parameters
    ----------
    monitors : pandas.DataFrame
        Columns t, charge, energy, gauss, div_b; one row per step.

    Returns
    -------
    report : dict
        charge_drift and energy_drift relative to the first row, gauss_max,
        divB_max.
    """
    missing = {"t", "charge", "energy", "gauss", "div_b"} - set(monitors.columns)
    if missing:
        raise ValueError(f"monitor table lacks columns {sorted(missing)}")
    if monitors.empty:
        return {"charge_drift": 0.0, "energy_drift": 0.0, "gauss_max": 0.0, "divB_max": 0.0}
    charge0 = monitors["charge"].iloc[0]
    energy0 = monitors["energy"].iloc[0]
    return {
        "charge_drift": float((monitors["charge"] - charge0).abs().max() / max(abs(charge0), eps)),
        "energy_drift": float((monitors["energy"] - energy0).abs().max() / max(abs(energy0), eps)),
        "gauss_max": float(monitors["gauss"].max()),
        "divB_max": float(monitors["div_b"].max()),
    }


def series_table(series_by_name):
    """Long-format rows t, observable, value for a group of DecaySeries."""
    frames = [
        pd.DataFrame({"t": series.times, "observable": series.name, "value": series.values})
        for series in series_by_name.values()
    ]
    if not frames:
        return pd.DataFrame(columns=["t", "observable", "value"])
    return pd.concat(frames, ignore_index=True)


def format_report(record, title=None):
    """Flat `key = value` text block."""
    lines = [] if title is None else [f"# {title}"]
    for key, value in record.items():
        if isinstance(value, float):
            value = f"{value:.12g}"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
