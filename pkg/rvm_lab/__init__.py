"""Numerical lab for the small-data relativistic Vlasov-Maxwell system."""
from rvm_lab.config import RunConfig, ConfigError
from rvm_lab.presets import Identities, FreeWave, FreeTransport, SmallDataRVM
from rvm_lab.identities import IdentitySuite, run_identity_suite
from rvm_lab.simulation import run_simulation, write_run
from rvm_lab.outputs import load_run_table, load_series
from rvm_lab.diagnostics import fit_decay_exponent

__all__ = [
    "RunConfig",
    "ConfigError",
    "Identities",
    "FreeWave",
    "FreeTransport",
    "SmallDataRVM",
    "IdentitySuite",
    "run_identity_suite",
    "run_simulation",
    "write_run",
    "load_run_table",
    "load_series",
    "fit_decay_exponent",
]
