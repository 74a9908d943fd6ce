"""Grids, correlator containers and the transforms shared by every pipeline.

Fourier convention used throughout the package::

    G(omega) = integral dt exp(+i omega t) G(t)

All quadratures are trapezoidal on uniform grids. The infinitesimal ``+i0`` of
the continuum formulas is replaced by a finite broadening ``eta``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ETA = 1e-3


class GFKind(str, enum.Enum):
    TIME_ORDERED = "time_ordered"
    RETARDED = "retarded"
    MATSUBARA = "matsubara"


class UndersampledError(ValueError):
    """Raised when a time series cannot resolve the requested frequencies."""


class SupportTruncationWarning(UserWarning):
    """A spectral function does not vanish at the edges of its grid."""


@dataclass(frozen=True)
class FrequencyGrid:
    omega_min: float
    omega_max: float
    n_points: int

    def __post_init__(self):
        if not self.omega_min < self.omega_max:
            raise ValueError("omega_min must be smaller than omega_max")
        if int(self.n_points) < 2:
            raise ValueError("a frequency grid needs at least two points")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return (self.omega_max - self.omega_min) / (self.n_points - 1)

    @property
    def omega(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.n_points)

    def __len__(self) -> int:
        return self.n_points

    def index_of(self, omega: float) -> int:
        """Index of the grid point closest to ``omega``."""
        return int(np.argmin(np.abs(self.omega - omega)))

    @classmethod
    def from_array(cls, omega, rtol: float = 1e-9) -> "FrequencyGrid":
        """Recover a uniform grid from sampled points (e.g. read from CSV)."""
        omega = np.asarray(omega, dtype=float)
        grid = cls(float(omega[0]), float(omega[-1]), omega.size)
        if not np.allclose(omega, grid.omega, rtol=0, atol=rtol * max(1.0, np.abs(omega).max())):
            raise ValueError("frequency samples are not uniformly spaced")
        return grid


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[-t_max, t_max]``."""

    t_max: float
    n_points: int

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if int(self.n_points) < 2:
            raise ValueError("a time grid needs at least two points")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return 2.0 * self.t_max / (self.n_points - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(-self.t_max, self.t_max, self.n_points)

    def __len__(self) -> int:
        return self.n_points

    @classmethod
    def with_spacing(cls, t_max: float, dt: float) -> "TimeGrid":
        """Grid with spacing at most ``dt`` and a sample exactly at t=0."""
        half = int(np.ceil(t_max / dt))
        return cls(half * (t_max / half), 2 * half + 1)


def trapezoid_weights(n: int, spacing: float) -> np.ndarray:
    w = np.full(n, spacing)
    w[0] = w[-1] = 0.5 * spacing
    return w


def _check_values(values, n, dtype=complex):
    values = np.asarray(values, dtype=dtype)
    if values.shape[0] != n:
        raise ValueError(f"expected {n} values along the grid, got {values.shape[0]}")
    return values


@dataclass(frozen=True, eq=False)
class ScalarGreenFunction:
    """Complex correlator sampled on a frequency grid.

    ``flags`` marks grid points whose value is untrusted (a singular
    denominator, an excluded cell, ...). Flagged values hold a finite
    sentinel, never NaN.
    """

    grid: FrequencyGrid
    values: np.ndarray
    kind: GFKind = GFKind.RETARDED
    eta: float = DEFAULT_ETA
    flags: np.ndarray | None = None

    def __post_init__(self):
        values = _check_values(self.values, len(self.grid))
        if values.ndim != 1:
            raise ValueError("scalar Green's function values must be one-dimensional")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", GFKind(self.kind))
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        flags = np.zeros(values.shape, bool) if self.flags is None else np.asarray(self.flags, bool)
        if flags.shape != values.shape:
            raise ValueError("flags must match the values shape")
        object.__setattr__(self, "flags", flags)

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    def replace(self, **changes) -> "ScalarGreenFunction":
        fields = dict(grid=self.grid, values=self.values, kind=self.kind, eta=self.eta, flags=self.flags)
        fields.update(changes)
        return ScalarGreenFunction(**fields)


@dataclass(frozen=True, eq=False)
class MatrixGreenFunction:
    """Site-resolved correlator, ``values[w, i, j]`` on a frequency grid."""

    grid: FrequencyGrid
    values: np.ndarray
    kind: GFKind = GFKind.RETARDED
    eta: float = DEFAULT_ETA
    flags: np.ndarray | None = None

    def __post_init__(self):
        values = _check_values(self.values, len(self.grid))
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError("matrix Green's function values must have shape (n_freq, n, n)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", GFKind(self.kind))
        flags = np.zeros(len(self.grid), bool) if self.flags is None else np.asarray(self.flags, bool)
        if flags.shape != (len(self.grid),):
            raise ValueError("matrix flags are per frequency")
        object.__setattr__(self, "flags", flags)

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    def element(self, i: int, j: int) -> ScalarGreenFunction:
        return ScalarGreenFunction(self.grid, self.values[:, i, j], self.kind, self.eta, self.flags)

    @classmethod
    def diagonal(cls, g: ScalarGreenFunction, n_sites: int) -> "MatrixGreenFunction":
        """Site-diagonal matrix with ``g`` on every diagonal entry."""
        values = g.values[:, None, None] * np.eye(n_sites)[None]
        return cls(g.grid, values, g.kind, g.eta, g.flags)


@dataclass(frozen=True, eq=False)
class TimeCorrelator:
    grid: TimeGrid
    values: np.ndarray
    labels: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, len(self.grid)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.t


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, len(self.grid), float))

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega


def _chunked_kernel_sum(out_points, in_points, weights, samples, kernel, chunk=2048):
    """sum_j kernel(out_i, in_j) * weights_j * samples_j, in memory-bounded chunks."""
    ws = weights * samples
    result = np.empty(out_points.size, dtype=complex)
    for start in range(0, out_points.size, chunk):
        sl = slice(start, start + chunk)
        result[sl] = kernel(out_points[sl, None], in_points[None, :]) @ ws
    return result


def fourier_time_to_freq(c: TimeCorrelator, grid: FrequencyGrid, eta: float = DEFAULT_ETA,
                         kind: GFKind = GFKind.TIME_ORDERED) -> ScalarGreenFunction:
    """Damped Fourier transform ``int dt exp(i w t - eta |t|) c(t)``.

    Raises
    ------
    UndersampledError
        If the Nyquist frequency of ``c`` does not exceed ``max|omega|``.
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    dt = c.grid.spacing
    if np.pi / dt <= max(abs(grid.omega_min), abs(grid.omega_max)):
        raise UndersampledError("undersampled time series")
    t = c.t
    w = trapezoid_weights(t.size, dt) * np.exp(-eta * np.abs(t))
    values = _chunked_kernel_sum(grid.omega, t, w, c.values,
                                 lambda om, tt: np.exp(1j * om * tt))
    return ScalarGreenFunction(grid, values, kind, eta)


def inverse_fourier(g: ScalarGreenFunction, times) -> np.ndarray:
    """``(1/2pi) int dw exp(-i w t) g(w)`` by trapezoidal quadrature."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    w = trapezoid_weights(len(g.grid), g.grid.spacing) / (2 * np.pi)
    return _chunked_kernel_sum(times, g.omega, w, g.values,
                               lambda tt, om: np.exp(-1j * om * tt))


def _warn_support(a: SpectralFunction, edge_tol: float):
    scale = max(np.abs(a.values).max(), np.finfo(float).tiny)
    edge = max(abs(a.values[0]), abs(a.values[-1]))
    if edge > edge_tol * scale:
        warnings.warn(
            f"spectral function is {edge:.3g} at the grid edge; its support is truncated",
            SupportTruncationWarning, stacklevel=3)


def retarded_from_spectral(a: SpectralFunction, grid: FrequencyGrid, eta: float = DEFAULT_ETA,
                           edge_tol: float = 1e-6) -> ScalarGreenFunction:
    """Retarded function ``int dw1 A(w1) / (w - w1 + i eta)`` on ``grid``.

    The integral runs over ``a.grid``; the principal-value structure is
    regularised by ``eta`` only.
    """
    if eta <= 0:
        raise ValueError("retarded_from_spectral needs eta > 0")
    _warn_support(a, edge_tol)
    w = trapezoid_weights(len(a.grid), a.grid.spacing)
    values = _chunked_kernel_sum(grid.omega, a.omega, w, a.values.astype(complex),
                                 lambda om, om1: 1.0 / (om - om1 + 1j * eta))
    return ScalarGreenFunction(grid, values, GFKind.RETARDED, eta)


def spectral_from_retarded(g: ScalarGreenFunction) -> SpectralFunction:
    if g.kind is not GFKind.RETARDED:
        raise ValueError(f"spectral_from_retarded needs a retarded function, got {g.kind.value}")
    return SpectralFunction(g.grid, -g.values.imag / np.pi)


def bose_factor(omega, beta: float) -> np.ndarray:
    """Bose occupation 1/(exp(beta w) - 1); zero for ``beta = inf`` and w > 0."""
    omega = np.asarray(omega, dtype=float)
    if np.isinf(beta):
        return np.where(omega > 0, 0.0, np.where(omega < 0, -1.0, np.inf))
    with np.errstate(divide="ignore", over="ignore"):
        return 1.0 / np.expm1(beta * omega)


def timeordered_from_retarded(g: ScalarGreenFunction, beta: float) -> ScalarGreenFunction:
    """``Re g + i (1 + 2 n(w)) Im g`` with the Bose occupation ``n``.

    For finite ``beta`` the cell at exactly w = 0 has a divergent occupation; it
    is returned as ``Re g`` and flagged.
    """
    if g.kind is not GFKind.RETARDED:
        raise ValueError("timeordered_from_retarded needs a retarded function")
    if not beta > 0:
        raise ValueError("beta must be positive (or inf)")
    omega = g.omega
    zero = omega == 0.0
    if np.isinf(beta):
        factor = np.sign(omega)
    else:
        factor = np.zeros_like(omega)
        factor[~zero] = 1.0 + 2.0 * bose_factor(omega[~zero], beta)
    flags = g.flags | (zero if np.isfinite(beta) else np.zeros_like(zero))
    values = g.values.real + 1j * factor * g.values.imag
    return ScalarGreenFunction(g.grid, values, GFKind.TIME_ORDERED, g.eta, flags)
