"""Predefined run scenarios with the acceptance parameters as defaults.

Authors: rvm_lab team
"""
from .config import RunConfig


class Identities(RunConfig):
    """
    Identity and commutation suite.

    Parameters
    ----------
    samples : int
        Seeded samples per exact identity (the null-phase check draws ten
        times as many).

    seed : int

    negative_controls : bool
        Also witness the non-commutation of plain grad_v.

    step : float
        Base finite-difference step.
    """

    def __init__(self, samples=100000, seed=0, negative_controls=False, step=1e-3):
        """Default parameters."""
        super().__init__(
            run={"scenario": "identities"},
            identities={
                "samples": samples,
                "seed": seed,
                "negative_controls": negative_controls,
                "step": step,
            },
        )


class FreeWave(RunConfig):
    """
    Vacuum Maxwell evolution of a divergence-free Gaussian pulse.

    The on-cone field decays like 1/t and the field at |x| = t/2 falls off
    faster.

    Parameters
    ----------
    n : int
        Grid points per axis.

    box_length : float

    amplitude, sigma : float
        Pulse E = curl(amplitude exp(-|x - c|^2 / sigma^2) e3).

    dt_factor : float

    workers : int
    """

    def __init__(self, n=64, box_length=128.0, amplitude=1.0, sigma=6.0, dt_factor=0.25, workers=1):
        """Default parameters."""
        super().__init__(
            grid={"n": n, "box_length": box_length},
            field={"amplitude": amplitude, "sigma": sigma},
            run={"scenario": "free-wave", "dt_factor": dt_factor, "workers": workers},
        )


class FreeTransport(RunConfig):
    """
    Particles streaming freely; the fields are driven by their sources but do
    not act back.

    The density at the cloud centre decays like t^-3 and its gradient like
    t^-4.

    Parameters
    ----------
    n : int

    box_length : float

    n_particles : int
        A power of two keeps the Sobol sample balanced.

    epsilon, sigma_x, sigma_v : float
        f0 = epsilon exp(-|x - c|^2 / sigma_x^2 - |v|^2 / sigma_v^2).

    seed : int

    dt_factor : float

    workers : int
    """

    def __init__(
        self,
        n=64,
        box_length=128.0,
        n_particles=2**20,
        epsilon=1e-3,
        sigma_x=1.0,
        sigma_v=0.5,
        seed=0,
        dt_factor=0.5,
        workers=1,
    ):
        """Default parameters."""
        super().__init__(
            grid={"n": n, "box_length": box_length},
            particles={
                "n_particles": n_particles,
                "epsilon": epsilon,
                "sigma_x": sigma_x,
                "sigma_v": sigma_v,
                "seed": seed,
            },
            run={"scenario": "free-transport", "dt_factor": dt_factor, "workers": workers},
        )


class SmallDataRVM(RunConfig):
    """
    Fully coupled small-data run, starting from the Coulomb field of the cloud
    plus a weak divergence-free pulse whose on-cone decay is measured.

    Parameters
    ----------
    n : int

    box_length : float

    n_particles : int

    epsilon, sigma_x, sigma_v : float

    amplitude, field_sigma : float
        Initial pulse.

    seed : int

    t_final : float

    dt_factor : float

    workers : int
    """

    def __init__(
        self,
        n=64,
        box_length=128.0,
        n_particles=2**20,
        epsilon=1e-3,
        sigma_x=1.0,
        sigma_v=0.5,
        amplitude=0.1,
        field_sigma=4.0,
        seed=0,
        t_final=40.0,
        dt_factor=0.25,
        workers=1,
    ):
        """Default parameters."""
        super().__init__(
            grid={"n": n, "box_length": box_length},
            particles={
                "n_particles": n_particles,
                "epsilon": epsilon,
                "sigma_x": sigma_x,
                "sigma_v": sigma_v,
                "seed": seed,
            },
            field={"amplitude": amplitude, "sigma": field_sigma},
            run={"scenario": "rvm", "dt_factor": dt_factor, "t_final": t_final, "workers": workers},
        )


# Preset per scenario name, as used by the command line
all_presets = {
    "identities": Identities,
    "free-wave": FreeWave,
    "free-transport": FreeTransport,
    "rvm": SmallDataRVM,
}
