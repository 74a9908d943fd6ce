"""CSV readers and writers with fixed column order and 17 significant digits."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .greens import FrequencyGrid, GFKind, MatrixGreenFunction, ScalarGreenFunction, TimeCorrelator, TimeGrid

FLOAT_FORMAT = "%.17g"


class CSVFormatError(ValueError):
    """A CSV file does not have the expected header or shape."""


def _fmt(x) -> str:
    return FLOAT_FORMAT % x


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")
    return path


def _read(path, header):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            found = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CSVFormatError(f"{path} is empty") from None
        if found != list(header):
            raise CSVFormatError(f"{path}: expected header {','.join(header)}, got {','.join(found)}")
        rows = [r for r in reader if r]
    if not rows:
        raise CSVFormatError(f"{path} has no data rows")
    try:
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise CSVFormatError(f"{path}: non-numeric entry ({exc})") from None


def write_scalar_gf(path, g: ScalarGreenFunction):
    rows = zip(g.omega, g.values.real, g.values.imag)
    return _write(path, ("omega", "re", "im"), rows)


def read_scalar_gf(path, kind: GFKind = GFKind.TIME_ORDERED, eta: float = 0.0) -> ScalarGreenFunction:
    data = _read(path, ("omega", "re", "im"))
    grid = FrequencyGrid.from_array(data[:, 0])
    return ScalarGreenFunction(grid, data[:, 1] + 1j * data[:, 2], kind, eta)


def write_matrix_gf(path, g: MatrixGreenFunction):
    """Long format: one row per (omega, i, j)."""
    n = g.n_sites
    rows = ((w, i, j, v.real, v.imag)
            for w, mat in zip(g.omega, g.values) for i in range(n) for j in range(n)
            for v in (mat[i, j],))
    return _write(path, ("omega", "i", "j", "re", "im"), rows)


def read_matrix_gf(path, kind: GFKind = GFKind.TIME_ORDERED, eta: float = 0.0) -> MatrixGreenFunction:
    data = _read(path, ("omega", "i", "j", "re", "im"))
    idx = data[:, 1:3].astype(int)
    n = int(idx.max()) + 1
    if data.shape[0] % (n * n):
        raise CSVFormatError(f"{path}: row count is not a multiple of {n}x{n}")
    omega = data[:: n * n, 0]
    values = np.zeros((omega.size, n, n), complex)
    w_idx = np.repeat(np.arange(omega.size), n * n)
    values[w_idx, idx[:, 0], idx[:, 1]] = data[:, 3] + 1j * data[:, 4]
    return MatrixGreenFunction(FrequencyGrid.from_array(omega), values, kind, eta)


def write_reconstruction(path, g: ScalarGreenFunction, condition, flags):
    rows = zip(g.omega, g.values.real, g.values.imag, condition, np.asarray(flags, int).astype(float))
    return _write(path, ("omega", "re", "im", "cond", "flag"), rows)


def write_flagged_gf(path, g: ScalarGreenFunction):
    rows = zip(g.omega, g.values.real, g.values.imag, g.flags.astype(float))
    return _write(path, ("omega", "re", "im", "flag"), rows)


def write_four_time(path, times, values):
    times = np.atleast_2d(times)
    values = np.asarray(values, complex)
    rows = (tuple(t) + (v.real, v.imag) for t, v in zip(times, values))
    return _write(path, ("t1", "t2", "t3", "t4", "re", "im"), rows)


def read_four_time(path):
    data = _read(path, ("t1", "t2", "t3", "t4", "re", "im"))
    return data[:, :4], data[:, 4] + 1j * data[:, 5]


def write_matsubara(path, omega_n, values):
    values = np.asarray(values, complex)
    rows = ((float(n), w, v.real, v.imag) for n, w, v in zip(range(1, values.size + 1), omega_n, values))
    return _write(path, ("n", "omega_n", "re", "im"), rows)


def read_matsubara(path):
    """Matsubara series; beta is recovered from the first frequency."""
    from .matsubara import MatsubaraSeries

    data = _read(path, ("n", "omega_n", "re", "im"))
    n = data[:, 0]
    if not np.array_equal(n, np.arange(1, n.size + 1)):
        raise CSVFormatError(f"{path}: Matsubara indices must run 1..n_max")
    beta = 2 * np.pi / data[0, 1]
    return MatsubaraSeries(beta, data[:, 2] + 1j * data[:, 3])


def write_spectral_density_csv(path, omega, values):
    return _write(path, ("omega", "J"), zip(omega, values))


def read_spectral_density_csv(path):
    from .bath import Tabulated

    data = _read(path, ("omega", "J"))
    return Tabulated(data[:, 0], data[:, 1])


def write_time_series(path, c: TimeCorrelator):
    return _write(path, ("t", "re", "im"), zip(c.t, c.values.real, c.values.imag))


def read_time_series(path) -> TimeCorrelator:
    data = _read(path, ("t", "re", "im"))
    t = data[:, 0]
    grid = TimeGrid(float(t[-1]), t.size)
    if not np.allclose(t, grid.t, rtol=0, atol=1e-9 * max(1.0, grid.t_max)):
        raise CSVFormatError(f"{path}: times must be uniform and symmetric about 0")
    return TimeCorrelator(grid, data[:, 1] + 1j * data[:, 2])
