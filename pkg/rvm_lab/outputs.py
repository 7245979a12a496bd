"""Helper functions to read run outputs back.

Authors: rvm_lab team
"""
import os

import pandas as pd

from .diagnostics import DecaySeries

OBSERVABLES_FILE = "observables.csv"
MONITORS_FILE = "monitors.csv"
REPORT_FILE = "report.txt"
CONFIG_FILE = "config.json"
FIELDS_FILE = "fields.rvmf"
ENSEMBLE_FILE = "ensemble.rvmp"
CALIBRATION_FILE = "calibration.json"
IDENTITIES_FILE = "identities.csv"

COLUMNS = ["t", "observable", "value"]


class MissingObservable(Exception):
    """
    Exception raised when failing to find observables in a run table.

    Parameters
    ----------
        observables : list of missing observables
        available: list of observables present in the table
    """

    def __init__(self, observables=None, available=None):
        """Default values are empty lists."""
        self.observables = observables if observables else []
        self.available = available if available else []


def _check_error(missing_observables, available):
    """Consolidate a single error message across multiple missing observables."""
    if missing_observables:
        error_msg = (
            "The following observables are missing: "
            + f" {missing_observables}"
            + f". Available observables are {available}."
        )
        raise ValueError(error_msg)


def _sanitize_runs(runs):
    """Make sure the inputs are in the correct format."""
    # a single run is accepted as well as a list of runs
    flag_single = isinstance(runs, (str, os.PathLike)) or isinstance(runs, pd.DataFrame)
    if flag_single:
        runs = [runs]
    return runs, flag_single


def _get_file_table(run):
    """Get the observables CSV of a run directory, or the file itself."""
    if os.path.isdir(run):
        return os.path.join(run, OBSERVABLES_FILE)
    return run


def _check_observables(table, observables):
    """Check that the observables can be found in a run table."""
    available = sorted(table["observable"].unique())
    not_found = [name for name in observables if name not in available]
    if not_found:
        raise MissingObservable(observables=not_found, available=available)
    return None


def _table_to_df(run):
    """Load a run table as a pandas DataFrame."""
    if isinstance(run, pd.DataFrame):
        table = run
    else:
        path = _get_file_table(run)
        try:
            table = pd.read_csv(path)
        except OSError:
            raise ValueError(f"Could not find a run table at {path}")
    missing = [column for column in COLUMNS if column not in table.columns]
    if missing:
        raise ValueError(f"run table lacks the columns {missing}")
    return table


def load_run_table(runs, observables=None):
    """
    Load the long-format observable tables of one or several runs.

    Parameters
    ----------
    runs : path to a run directory or CSV file, or DataFrame, optionally as a list.

    observables : list of str, optional
        Keep only these observables; every one must be present.

    Returns
    -------
    tables : DataFrame or list of DataFrame
        Columns t, observable, value.
    """
    runs, flag_single = _sanitize_runs(runs)
    tables = []
    missing, available = [], []
    for run in runs:
        table = _table_to_df(run)
        if observables is not None:
            try:
                _check_observables(table, observables)
            except MissingObservable as exception:
                missing += exception.observables
                available = exception.available
                continue
            table = table[table["observable"].isin(observables)]
        tables.append(table.reset_index(drop=True))
    _check_error(missing, available)
    return tables[0] if flag_single else tables


def load_series(run, observable, window=None):
    """DecaySeries of one observable of a run."""
    table = load_run_table(run, [observable])
    table = table.sort_values("t")
    return DecaySeries(table["t"].to_numpy(), table["value"].to_numpy(), window, name=observable)
