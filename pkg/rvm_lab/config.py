"""Run configuration: nested key-value JSON files plus flag overrides.

Authors: rvm_lab team
"""
import json
import os

import numpy as np

OUTPUT_ENV = "RVM_LAB_OUTPUT"

# Admissible scenarios
all_scenarios = ["identities", "free-wave", "free-transport", "rvm"]

# Documented keys per section, with their defaults
DEFAULTS = {
    "grid": {"n": 64, "box_length": 128.0},
    "particles": {
        "n_particles": 0,
        "epsilon": 1e-3,
        "sigma_x": 1.0,
        "sigma_v": 0.5,
        "seed": 0,
    },
    "field": {"amplitude": 0.0, "sigma": 6.0},
    "run": {
        "scenario": "rvm",
        "dt_factor": 0.25,
        "t_final": None,
        "snapshot_interval": 1.0,
        "output_dir": None,
        "workers": 1,
        "fit_window": None,
        "profile_k_max": 2,
        "profile_interval": 5.0,
    },
    "identities": {
        "samples": 100000,
        "seed": 0,
        "step": 1e-3,
        "corpus_size": 12,
        "negative_controls": False,
    },
}

FIELD_RADIUS_WIDTHS = 5.0
CLOUD_RADIUS_WIDTHS = 4.0


class ConfigError(ValueError):
    """Raised for unknown keys, invalid values and CFL or horizon violations."""


def _check_error(unknown_keys, invalid_values):
    """Consolidate a single error message across every configuration problem."""
    if unknown_keys or invalid_values:
        error_msg = ""
        if unknown_keys:
            error_msg += f"Unknown configuration keys: {unknown_keys}. "
        if invalid_values:
            error_msg += "Invalid values: " + "; ".join(invalid_values) + ". "
        raise ConfigError(error_msg + f"Documented sections are {sorted(DEFAULTS)}.")


def _sanitize_scenario(scenario):
    """Defines the supported scenarios."""
    if scenario not in all_scenarios:
        raise ConfigError(f"{scenario} is not a supported scenario; choose from {all_scenarios}")
    return scenario


def _sanitize_grid(n, box_length):
    """Grid sizes must be powers of two and the box positive."""
    problems = []
    if not isinstance(n, (int, np.integer)) or n < 2 or n & (n - 1):
        problems.append(f"grid.n={n} is not a power of two")
    if not box_length > 0:
        problems.append(f"grid.box_length={box_length} must be positive")
    return problems


def _parse_value(text):
    """JSON literal when possible, plain string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class RunConfig:
    """
    Parameters of one run.

    Parameters
    ----------
    grid : dict, optional
        n (grid points per axis, a power of two), box_length.

    particles : dict, optional
        n_particles, epsilon (amplitude of f0), sigma_x, sigma_v, seed.

    field : dict, optional
        amplitude and sigma of the initial divergence-free pulse.

    run : dict, optional
        scenario ("identities", "free-wave", "free-transport" or "rvm"),
        dt_factor (dt = dt_factor dx, at most 0.5), t_final (defaults to
        the horizon (L - 2R)/2, and at most L/4 with a pulse),
        snapshot_interval, output_dir, workers,
        fit_window ([t_a, t_b] or None for the default window),
        profile_k_max (thinned lattice of the modified profiles),
        profile_interval (time between profile and energy diagnostics).

    identities : dict, optional
        samples, seed, step (base finite-difference step), corpus_size,
        negative_controls.

    Notes
    -----
    Missing keys take the values of `DEFAULTS`; unknown keys are errors.
    """

    def __init__(self, grid=None, particles=None, field=None, run=None, identities=None):
        """Default parameters."""
        sections = {
            "grid": grid,
            "particles": particles,
            "field": field,
            "run": run,
            "identities": identities,
        }
        unknown_keys = []
        for section, values in sections.items():
            merged = dict(DEFAULTS[section])
            for key, value in (values or {}).items():
                if key not in merged:
                    unknown_keys.append(f"{section}.{key}")
                merged[key] = value
            setattr(self, section, merged)
        _check_error(unknown_keys, [])
        try:
            self.validate()
        except TypeError as exception:
            raise ConfigError(f"A configuration value has the wrong type: {exception}")

    # derived quantities
    @property
    def scenario(self):
        return self.run["scenario"]

    @property
    def dx(self):
        return self.grid["box_length"] / self.grid["n"]

    @property
    def dt(self):
        return self.run["dt_factor"] * self.dx

    @property
    def has_particles(self):
        return self.scenario in ("free-transport", "rvm") and self.particles["n_particles"] > 0

    @property
    def has_pulse(self):
        return self.scenario == "free-wave" or self.field["amplitude"] != 0

    @property
    def data_radius(self):
        """Radius R of the initial data: 5 sigma for the pulse, 4 sigma_x for the cloud."""
        radius = 0.0
        if self.has_pulse:
            radius = max(radius, FIELD_RADIUS_WIDTHS * self.field["sigma"])
        if self.has_particles:
            radius = max(radius, CLOUD_RADIUS_WIDTHS * self.particles["sigma_x"])
        return radius

    @property
    def horizon(self):
        """Longest run before wrapped images reach the data, (L - 2R)/2."""
        return (self.grid["box_length"] - 2.0 * self.data_radius) / 2.0

    @property
    def cone_limit(self):
        """Last time L/4 at which on-cone samples stay in the unwrapped half box."""
        return self.grid["box_length"] / 4.0

    @property
    def t_final(self):
        """Explicit run length, else the horizon, capped at the cone limit for pulses."""
        t_final = self.run["t_final"]
        if t_final is not None:
            return float(t_final)
        return min(self.horizon, self.cone_limit) if self.has_pulse else self.horizon

    @property
    def output_root(self):
        return self.run["output_dir"] or os.environ.get(OUTPUT_ENV, os.path.join(os.getcwd(), "rvm_runs"))

    def validate(self):
        """Check values, the CFL bound and the horizon."""
        invalid_values = _sanitize_grid(self.grid["n"], self.grid["box_length"])
        try:
            _sanitize_scenario(self.scenario)
        except ConfigError as exception:
            invalid_values.append(str(exception))
        if not 0 < self.run["dt_factor"] <= 0.5:
            invalid_values.append(f"run.dt_factor={self.run['dt_factor']} violates dt <= 0.5 dx")
        if self.run["snapshot_interval"] <= 0:
            invalid_values.append("run.snapshot_interval must be positive")
        if self.run["profile_interval"] <= 0:
            invalid_values.append("run.profile_interval must be positive")
        if self.run["workers"] < 1:
            invalid_values.append("run.workers must be at least 1")
        if self.particles["n_particles"] < 0:
            invalid_values.append("particles.n_particles must be non-negative")
        if self.particles["sigma_x"] <= 0 or self.particles["sigma_v"] <= 0:
            invalid_values.append("particle widths must be positive")
        if self.field["sigma"] <= 0:
            invalid_values.append("field.sigma must be positive")
        if self.identities["step"] <= 0:
            invalid_values.append("identities.step must be positive")
        window = self.run["fit_window"]
        if window is not None and (len(window) != 2 or not window[0] < window[1]):
            invalid_values.append(f"run.fit_window={window} must be an increasing pair")
        if not invalid_values and self.scenario != "identities":
            if self.horizon <= 0:
                invalid_values.append(
                    f"box L={self.grid['box_length']:g} cannot hold data of radius {self.data_radius:g}"
                )
            elif self.t_final > self.horizon:
                invalid_values.append(
                    f"run.t_final={self.t_final:g} exceeds the horizon (L - 2R)/2 = {self.horizon:g}"
                )
        _check_error([], invalid_values)

    def to_dict(self):
        return {section: dict(getattr(self, section)) for section in DEFAULTS}

    @classmethod
    def from_dict(cls, data):
        unknown = [section for section in data if section not in DEFAULTS]
        _check_error(unknown, [])
        return RunConfig(**data)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exception:
            raise ConfigError(f"{path} is not valid JSON: {exception}")
        except OSError as exception:
            raise ConfigError(f"Could not read the configuration file {path}: {exception}")
        return cls.from_dict(data)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps() + "\n")

    def with_overrides(self, overrides):
        """
        Copy with `section.key=value` overrides applied.

        Values are parsed as JSON literals, falling back to plain strings.
        """
        data = self.to_dict()
        problems = []
        for item in overrides or []:
            assignment, sep, text = item.partition("=")
            section, dot, key = assignment.strip().partition(".")
            if not sep or not dot:
                problems.append(f"override {item!r} is not of the form section.key=value")
                continue
            if section not in data:
                problems.append(f"override {item!r} names an unknown section")
                continue
            data[section][key] = _parse_value(text.strip())
        _check_error([], problems)
        return RunConfig.from_dict(data)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{type(self).__name__}(scenario={self.scenario!r}, n={self.grid['n']}, L={self.grid['box_length']:g})"
