"""Binary dumps of field states and particle ensembles.

Authors: rvm_lab team
"""
import numpy as np

from .maxwell import FieldState
from .particles import ParticleEnsemble

VERSION = 1

FIELD_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("dims", "<u4", (3,)),
        ("box_length", "<f8"),
        ("time", "<f8"),
    ]
)

ENSEMBLE_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("n_particles", "<u8"),
        ("time", "<f8"),
    ]
)

_HEADERS = {b"RVMF": FIELD_HEADER, b"RVMP": ENSEMBLE_HEADER}


class DumpFormatError(ValueError):
    """Raised for files that are not rvm_lab dumps."""


def write_fields(state, path):
    """
    Field dump: header then E1 E2 E3 B1 B2 B3, each little-endian f64 with
    x varying fastest.
    """
    header = np.zeros((), dtype=FIELD_HEADER)
    header["magic"] = b"RVMF"
    header["version"] = VERSION
    header["dims"] = (state.n,) * 3
    header["box_length"] = state.box_length
    header["time"] = state.time
    with open(path, "wb") as f:
        f.write(header.tobytes())
        for component in list(state.E) + list(state.B):
            f.write(np.ravel(component, order="F").astype("<f8").tobytes())


def write_ensemble(ensemble, path):
    """Ensemble dump: header then the x (N, 3), v (N, 3) and w (N,) blocks."""
    header = np.zeros((), dtype=ENSEMBLE_HEADER)
    header["magic"] = b"RVMP"
    header["version"] = VERSION
    header["n_particles"] = ensemble.n_particles
    header["time"] = ensemble.time
    with open(path, "wb") as f:
        f.write(header.tobytes())
        for block in (ensemble.x, ensemble.v, ensemble.w):
            f.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_header(path):
    """Header of either dump kind as a dict, with a `kind` entry."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic not in _HEADERS:
            raise DumpFormatError(f"{path} is not an rvm_lab dump (magic {magic!r})")
        f.seek(0)
        dtype = _HEADERS[magic]
        raw = f.read(dtype.itemsize)
    if len(raw) < dtype.itemsize:
        raise DumpFormatError(f"{path} is truncated")
    header = np.frombuffer(raw, dtype=dtype)[0]
    record = {"kind": "fields" if magic == b"RVMF" else "ensemble"}
    for name in dtype.names[1:]:
        value = header[name]
        record[name] = value.tolist() if np.ndim(value) else value.item()
    if record["version"] != VERSION:
        raise DumpFormatError(f"{path} has version {record['version']}, expected {VERSION}")
    return record


def read_fields(path, workers=1):
    header = read_header(path)
    if header["kind"] != "fields":
        raise DumpFormatError(f"{path} holds an ensemble, not fields")
    n = header["dims"][0]
    data = np.fromfile(path, dtype="<f8", offset=FIELD_HEADER.itemsize)
    if data.size != 6 * n**3:
        raise DumpFormatError(f"{path} holds {data.size} values, expected {6 * n**3}")
    components = data.reshape(6, n**3)
    grids = np.stack([np.reshape(c, (n, n, n), order="F") for c in components])
    return FieldState(grids[:3], grids[3:], header["box_length"], header["time"], workers)


def read_ensemble(path, box_length):
    """Read an ensemble dump; the box length is not part of the format."""
    header = read_header(path)
    if header["kind"] != "ensemble":
        raise DumpFormatError(f"{path} holds fields, not an ensemble")
    count = header["n_particles"]
    data = np.fromfile(path, dtype="<f8", offset=ENSEMBLE_HEADER.itemsize)
    if data.size != 7 * count:
        raise DumpFormatError(f"{path} holds {data.size} values, expected {7 * count}")
    x = data[: 3 * count].reshape(count, 3)
    v = data[3 * count : 6 * count].reshape(count, 3)
    w = data[6 * count :]
    return ParticleEnsemble(x, v, w, box_length, header["time"])
