"""Text dump formats shared by all modules.

Field dump: one header line ``d=<d> N=<N> K=<K> k=<k> name=<name>`` followed
by row-major values, one per line, at full double precision (%.17g).  A
coupling uses the same layout with ``shape=coupling`` in the header and
n_cells^2 lines.  A factored path measure is a header ``d= N= K= nu=`` plus
the log endpoint potential and the interior log potentials, in that order.
"""

from __future__ import annotations

import numpy as np

from .torus import GridSpec, make_grid

FMT = "%.17g"


def _header_line(**kv) -> str:
    return " ".join(f"{key}={val}" for key, val in kv.items())


def _parse_header(line: str) -> dict:
    out = {}
    for tok in line.strip().split():
        key, _, val = tok.partition("=")
        out[key] = val
    return out


def write_field(path, grid: GridSpec, values: np.ndarray, name: str, K=None, k=None):
    vals = np.asarray(values, dtype=float).reshape(-1)
    with open(path, "w") as fh:
        fh.write(_header_line(d=grid.d, N=grid.N, K="-" if K is None else K,
                              k="-" if k is None else k, name=name) + "\n")
        for v in vals:
            fh.write(FMT % v + "\n")


def read_field(path):
    with open(path) as fh:
        header = _parse_header(fh.readline())
        vals = np.array([float(line) for line in fh if line.strip()])
    grid = make_grid(int(header["d"]), int(header["N"]))
    meta = {"name": header.get("name", ""),
            "K": None if header.get("K", "-") == "-" else int(header["K"]),
            "k": None if header.get("k", "-") == "-" else int(header["k"])}
    return grid, vals.reshape(grid.shape), meta


def write_coupling(path, grid: GridSpec, values: np.ndarray, name: str = "coupling"):
    n = grid.n_cells
    vals = np.asarray(values, dtype=float).reshape(n * n)
    with open(path, "w") as fh:
        fh.write(_header_line(d=grid.d, N=grid.N, shape="coupling", name=name) + "\n")
        for v in vals:
            fh.write(FMT % v + "\n")


def read_coupling(path):
    with open(path) as fh:
        header = _parse_header(fh.readline())
        if header.get("shape") != "coupling":
            raise ValueError(f"{path} is not a coupling dump")
        vals = np.array([float(line) for line in fh if line.strip()])
    grid = make_grid(int(header["d"]), int(header["N"]))
    n = grid.n_cells
    return grid, vals.reshape(n, n)


def save_measure(path, measure):
    n = measure.grid.n_cells
    with open(path, "w") as fh:
        fh.write(_header_line(d=measure.grid.d, N=measure.grid.N, K=measure.K,
                              nu=FMT % measure.nu) + "\n")
        for v in measure.log_eta.reshape(-1):
            fh.write(FMT % v + "\n")
        for k in range(measure.K - 1):
            for v in measure.log_a[k]:
                fh.write(FMT % v + "\n")


def load_measure(path):
    from .path_measure import FactoredPathMeasure

    with open(path) as fh:
        header = _parse_header(fh.readline())
        vals = np.array([float(line) for line in fh if line.strip()])
    grid = make_grid(int(header["d"]), int(header["N"]))
    K = int(header["K"])
    nu = float(header["nu"])
    n = grid.n_cells
    expect = n * n + (K - 1) * n
    if vals.size != expect:
        raise ValueError(f"measure dump has {vals.size} values, expected {expect}")
    log_eta = vals[: n * n].reshape(n, n)
    log_a = vals[n * n:].reshape(K - 1, n)
    return FactoredPathMeasure(grid, nu, K, log_eta, log_a)


def write_csv(path, headers, rows):
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for row in rows:
            fh.write(",".join(FMT % v if isinstance(v, float) else str(v) for v in row) + "\n")
