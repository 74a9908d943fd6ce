"""Bath spectral densities, free bath Green's functions and mode discretization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .greens import (DEFAULT_ETA, FrequencyGrid, GFKind, MatrixGreenFunction, ScalarGreenFunction,
                     SpectralFunction, TimeCorrelator, TimeGrid, fourier_time_to_freq,
                     retarded_from_spectral)


class SpectralDensity:
    """Bath coupling density J(w), defined for w >= 0.

    Subclasses implement ``_evaluate`` (vectorised, w >= 0) and
    ``_antiderivative`` so that bin integrals are exact.
    """

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(omega < 0):
            raise ValueError("spectral densities are defined for omega >= 0; pass |omega|")
        return self._evaluate(omega)

    def integrate(self, lo: float, hi: float) -> float:
        """Exact integral of J over [lo, hi]."""
        if lo < 0 or hi < lo:
            raise ValueError("need 0 <= lo <= hi")
        return float(self._antiderivative(hi) - self._antiderivative(lo))

    def _evaluate(self, omega):
        raise NotImplementedError

    def _antiderivative(self, omega):
        raise NotImplementedError


@dataclass(frozen=True)
class OhmicExpCutoff(SpectralDensity):
    """``J(w) = alpha * w * exp(-w / omega_c)``; ``omega_c = inf`` is strictly linear."""

    alpha: float
    omega_c: float = 50.0

    def __post_init__(self):
        if self.alpha < 0 or not self.omega_c > 0:
            raise ValueError("need alpha >= 0 and omega_c > 0")

    def _evaluate(self, omega):
        if np.isinf(self.omega_c):
            return self.alpha * omega
        return self.alpha * omega * np.exp(-omega / self.omega_c)

    def _antiderivative(self, omega):
        c = self.omega_c
        if np.isinf(c):
            return 0.5 * self.alpha * omega**2
        return -self.alpha * c * np.exp(-omega / c) * (omega + c)


@dataclass(frozen=True)
class Lorentzian(SpectralDensity):
    """``J(w) = weight * (width/pi) / ((w - center)^2 + width^2)``."""

    weight: float
    center: float
    width: float

    def __post_init__(self):
        if self.weight < 0 or not self.width > 0:
            raise ValueError("need weight >= 0 and width > 0")

    def _evaluate(self, omega):
        return self.weight * (self.width / np.pi) / ((omega - self.center) ** 2 + self.width**2)

    def _antiderivative(self, omega):
        return self.weight / np.pi * np.arctan((omega - self.center) / self.width)


@dataclass(frozen=True, eq=False)
class Tabulated(SpectralDensity):
    """Piecewise-linear J through tabulated points, zero outside the table."""

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if omega.shape != values.shape or omega.ndim != 1:
            raise ValueError("tabulated omega and values must be equal-length vectors")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("tabulated omega must be strictly increasing")
        if np.any(values < 0) or np.any(omega < 0):
            raise ValueError("tabulated J needs omega >= 0 and J >= 0")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)

    def _evaluate(self, omega):
        return np.interp(omega, self.omega, self.values, left=0.0, right=0.0)

    def _antiderivative(self, omega):
        xs, ys = self.omega, self.values
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
        omega = np.clip(omega, xs[0], xs[-1])
        k = np.clip(np.searchsorted(xs, omega, side="right") - 1, 0, max(xs.size - 2, 0))
        if xs.size == 1:
            return 0.0
        x0, y0 = xs[k], ys[k]
        y = np.interp(omega, xs, ys)
        return cum[k] + 0.5 * (y0 + y) * (omega - x0)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        from .io import read_spectral_density_csv
        return read_spectral_density_csv(path)


def eval_spectral_density(j: SpectralDensity, omega: float) -> float:
    if omega < 0:
        raise ValueError("spectral densities are defined for omega >= 0; pass |omega|")
    return float(j(omega))


def _sign_j(j: SpectralDensity, omega):
    return np.sign(omega) * j(np.abs(omega))


def bath_gf_lindblad_approx(j: SpectralDensity, grid: FrequencyGrid) -> ScalarGreenFunction:
    """Markovian bath function ``-(i/2) sign(w) J(|w|)`` (imaginary part only)."""
    return ScalarGreenFunction(grid, -0.5j * _sign_j(j, grid.omega), GFKind.RETARDED, 0.0)


def bath_spectral_function(j: SpectralDensity, grid: FrequencyGrid) -> SpectralFunction:
    """``A(w) = sign(w) J(|w|) / (2 pi)``."""
    return SpectralFunction(grid, _sign_j(j, grid.omega) / (2 * np.pi))


def bath_gf_full(j: SpectralDensity, grid: FrequencyGrid, eta: float = DEFAULT_ETA,
                 spectral_grid: FrequencyGrid | None = None) -> ScalarGreenFunction:
    """Retarded bath function from its spectral function, real and imaginary parts.

    ``spectral_grid`` is the integration grid for the spectral function; by
    default it is symmetric, four times wider than ``grid`` and resolves
    ``eta`` with two points per broadening width.
    """
    if spectral_grid is None:
        half = 4.0 * max(abs(grid.omega_min), abs(grid.omega_max))
        n = int(min(2 * half / (0.5 * eta), 400_000)) | 1
        spectral_grid = FrequencyGrid(-half, half, n)
    return retarded_from_spectral(bath_spectral_function(j, spectral_grid), grid, eta)


@dataclass(frozen=True, eq=False)
class DiscretizedBath:
    mode_frequencies: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.mode_frequencies, dtype=float)
        couplings = np.asarray(self.couplings, dtype=float)
        if freqs.shape != couplings.shape:
            raise ValueError("mode frequencies and couplings must have equal lengths")
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("mode frequencies must be positive and strictly increasing")
        object.__setattr__(self, "mode_frequencies", freqs)
        object.__setattr__(self, "couplings", couplings)

    @property
    def n_modes(self) -> int:
        return self.mode_frequencies.size

    def weights(self) -> np.ndarray:
        """Integrated spectral weight ``2 pi t_m^2`` carried by each mode."""
        return 2 * np.pi * self.couplings**2

    def time_ordered_correlator(self, grid: TimeGrid) -> TimeCorrelator:
        """Zero-temperature ``-i <T X(t) X(0)>`` of one bath."""
        t = np.abs(grid.t)[:, None]
        values = -1j * (self.couplings**2 * np.exp(-1j * self.mode_frequencies * t)).sum(axis=1)
        return TimeCorrelator(grid, values)

    def time_ordered_gf(self, grid: FrequencyGrid, eta: float = DEFAULT_ETA,
                        time_grid: TimeGrid | None = None) -> ScalarGreenFunction:
        """Zero-temperature time-ordered bath function.

        Without ``time_grid`` the closed form of the damped transform is used;
        with one, the bath correlator is sampled and transformed exactly like
        a measured system correlator.
        """
        if time_grid is not None:
            return fourier_time_to_freq(self.time_ordered_correlator(time_grid), grid, eta)
        om = grid.omega[:, None]
        wm, t2 = self.mode_frequencies, self.couplings**2
        values = (t2 * (1 / (om - wm + 1j * eta) - 1 / (om + wm - 1j * eta))).sum(axis=1)
        return ScalarGreenFunction(grid, values, GFKind.TIME_ORDERED, eta)


def discretize_bath(j: SpectralDensity, n_modes: int, band) -> DiscretizedBath:
    """Linear binning of ``band`` with one mode per bin at the bin midpoint.

    ``2 pi t_m^2`` equals the exact integral of J over bin m.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    lo, hi = map(float, band)
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < lo < hi")
    edges = np.linspace(lo, hi, n_modes + 1)
    weights = np.array([j.integrate(a, b) for a, b in zip(edges[:-1], edges[1:])])
    return DiscretizedBath(0.5 * (edges[1:] + edges[:-1]), np.sqrt(np.clip(weights, 0, None) / (2 * np.pi)))


def cumulative_weight_deviation(bath: DiscretizedBath, j: SpectralDensity, band, n_probe: int = 4001) -> float:
    """Largest gap between the cumulative integral of J and of the discrete modes."""
    lo, hi = band
    probe = np.linspace(lo, hi, n_probe)
    exact = np.array([j.integrate(lo, w) for w in probe])
    discrete = np.array([bath.weights()[bath.mode_frequencies <= w].sum() for w in probe])
    return float(np.abs(exact - discrete).max())


@dataclass(frozen=True)
class BathModel:
    """Identical, mutually independent baths on every site."""

    density: SpectralDensity
    beta: float = np.inf
    n_sites: int = 1

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive or inf")
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")

    def lindblad_matrix_gf(self, grid: FrequencyGrid) -> MatrixGreenFunction:
        """Site-diagonal Markovian bath function; cross-site entries vanish."""
        return MatrixGreenFunction.diagonal(bath_gf_lindblad_approx(self.density, grid), self.n_sites)

    def matsubara_values(self, omega_n) -> np.ndarray:
        """Per-site bath function at the Matsubara points, ``J(w_n)/2``.

        This is the continuation of ``-(i/2) sign(w) J(|w|)`` to ``z = i w_n``
        for a linear J; for other families it is the standard weak-coupling
        replacement.
        """
        return 0.5 * self.density(np.asarray(omega_n, dtype=float)).astype(complex)
