"""Wick factorization, the four-time verification statistic and the first-order
non-Gaussian correction of the perturbed two-time correlator.

Correlator conventions: ``two_time(ta, tb)`` returns the time-ordered
expectation ``<T O(ta) O(tb)>`` (not multiplied by -i). Bath-dressed leg and
ring sums are returned in Green's-function units; the corresponding
diagrammatic sums of expectation values are ``i`` times these (every
convolution contributes ``-i`` and every free pair ``i G``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .greens import ScalarGreenFunction, TimeGrid, inverse_fourier, trapezoid_weights
from .reconstruct import forward_dyson_scalar

DEFAULT_PAIRING_CAP = 12
DEFAULT_DEFECT_THRESHOLD = 1e-6
# the ring is symmetric under exchange of its two ends, so each diagram is
# generated twice by the expansion of exp(-i int V)
RING_SYMMETRY_FACTOR = 0.5


class QuadratureResolutionWarning(UserWarning):
    """The tabulated kernel varies too much between neighbouring grid cells."""


@dataclass(frozen=True)
class PairingSet:
    n: int
    pairings: tuple[tuple[tuple[int, int], ...], ...]

    def __len__(self) -> int:
        return len(self.pairings)

    def __iter__(self):
        return iter(self.pairings)


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@lru_cache(maxsize=None)
def _matchings(indices: tuple[int, ...]):
    if not indices:
        return ((),)
    first, rest = indices[0], indices[1:]
    out = []
    for pos, partner in enumerate(rest):
        remaining = rest[:pos] + rest[pos + 1:]
        for tail in _matchings(remaining):
            out.append(((first, partner),) + tail)
    return tuple(out)


def enumerate_pairings(n: int, cap: int = DEFAULT_PAIRING_CAP) -> PairingSet:
    """All perfect matchings of ``0..n-1``.

    Canonical order: the lowest free index is paired with each later index in
    increasing order, recursively.
    """
    if n < 0 or n % 2:
        raise ValueError("pairings need an even, non-negative number of operators")
    if n > cap:
        raise ValueError(f"n={n} exceeds the pairing cap {cap}")
    return PairingSet(n, _matchings(tuple(range(n))))


def wick_expand(two_time: Callable[[float, float], complex], times: Sequence[float],
                cap: int = DEFAULT_PAIRING_CAP) -> complex:
    """Sum over pairings of products of two-time correlators at the paired times."""
    times = list(times)
    pairs = enumerate_pairings(len(times), cap)
    cache: dict[tuple[int, int], complex] = {}

    def pair_value(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = complex(two_time(times[a], times[b]))
        return cache[(a, b)]

    return complex(sum(math.prod(pair_value(a, b) for a, b in p) for p in pairs))


def _pair_products(two_time, times):
    t1, t2, t3, t4 = times
    return np.array([
        two_time(t1, t2) * two_time(t3, t4),
        two_time(t1, t3) * two_time(t2, t4),
        two_time(t1, t4) * two_time(t2, t3),
    ], dtype=complex)


def wick_defect(four_time_measured: complex, two_time_measured: Callable[[float, float], complex],
                times: Sequence[float]) -> complex:
    """Measured four-time correlator minus its three pairwise factorizations."""
    if len(times) != 4:
        raise ValueError("the Wick defect needs exactly four times")
    return complex(four_time_measured - _pair_products(two_time_measured, times).sum())


@dataclass(frozen=True, eq=False)
class WickReport:
    quadruples: np.ndarray = field(repr=False)
    defect: np.ndarray = field(repr=False)
    defect_norm: float
    threshold: float
    relative: bool = True

    @property
    def verdict(self) -> str:
        return "pass" if self.defect_norm <= self.threshold else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"defect_norm": self.defect_norm, "threshold": self.threshold,
                "relative": self.relative, "verdict": self.verdict,
                "n_quadruples": int(len(self.quadruples))}


def verify_wick(four_time, two_time: Callable[[float, float], complex], quadruples,
                threshold: float = DEFAULT_DEFECT_THRESHOLD, relative: bool = True) -> WickReport:
    """Wick defect on a set of time quadruples.

    ``four_time`` is either a callable of four times or an array of measured
    values aligned with ``quadruples``. With ``relative=True`` the defect norm
    is ``max|defect|`` divided by the largest pairwise product.
    """
    quadruples = np.atleast_2d(np.asarray(quadruples, dtype=float))
    if quadruples.shape[1] != 4:
        raise ValueError("quadruples must have shape (n, 4)")
    if callable(four_time):
        measured = np.array([four_time(*q) for q in quadruples], dtype=complex)
    else:
        measured = np.asarray(four_time, dtype=complex)
        if measured.shape != (len(quadruples),):
            raise ValueError("one measured value per quadruple is required")
    products = np.array([_pair_products(two_time, q) for q in quadruples])
    defect = measured - products.sum(axis=1)
    norm = float(np.abs(defect).max())
    if relative:
        norm /= max(float(np.abs(products).max()), np.finfo(float).tiny)
    return WickReport(quadruples, defect, norm, threshold, relative)


# dressed bath structures

def _geometric_flags(x):
    return np.abs(x) >= 1.0


def leg_sum(g_s0: ScalarGreenFunction, g_b0: ScalarGreenFunction) -> ScalarGreenFunction:
    """Resummed leg ``G_B0 G_S0 / (1 - G_B0 G_S0)``; flags where the series diverges."""
    x = g_b0.values * g_s0.values
    flags = _geometric_flags(x)
    values = np.where(flags, 0.0, x / np.where(flags, 1.0, 1.0 - x))
    return g_s0.replace(values=values, flags=flags | g_s0.flags | g_b0.flags)


def ring_sum(g_s0: ScalarGreenFunction, g_b0: ScalarGreenFunction) -> ScalarGreenFunction:
    """Resummed ring ``G_B0 / (1 - G_S0 G_B0)``; flags where the series diverges."""
    x = g_b0.values * g_s0.values
    flags = _geometric_flags(x)
    values = np.where(flags, 0.0, g_b0.values / np.where(flags, 1.0, 1.0 - x))
    return g_s0.replace(values=values, flags=flags | g_s0.flags | g_b0.flags)


def leg_partial_sum(g_s0, g_b0, order: int):
    """``sum_{p=1..order} (G_B0 G_S0)^p`` for arrays or scalars."""
    x = np.asarray(g_b0) * np.asarray(g_s0)
    return sum(x**p for p in range(1, order + 1))


def ring_partial_sum(g_s0, g_b0, order: int):
    """``G_B0 sum_{p=0..order} (G_S0 G_B0)^p``."""
    x = np.asarray(g_b0) * np.asarray(g_s0)
    return np.asarray(g_b0) * sum(x**p for p in range(order + 1))


# first-order G4 correction

class G4Kernel:
    """Connected four-time kernel on ``TimeGrid^4``.

    Either a full table ``values[i1, i2, i3, i4]`` or a separable kernel
    ``f(t1) f(t2) f(t3) f(t4)`` given by a vectorised callable.
    """

    def __init__(self, grid: TimeGrid, values: np.ndarray | None = None,
                 factor: Callable[[np.ndarray], np.ndarray] | None = None):
        if (values is None) == (factor is None):
            raise ValueError("give exactly one of a table or a separable factor")
        self.grid = grid
        self.factor = factor
        if values is not None:
            values = np.asarray(values, dtype=complex)
            if values.shape != (len(grid),) * 4:
                raise ValueError("tabulated kernel must have shape (n, n, n, n)")
        self.values = values

    @classmethod
    def separable(cls, grid: TimeGrid, factor) -> "G4Kernel":
        return cls(grid, factor=factor)

    @classmethod
    def tabulated(cls, grid: TimeGrid, values) -> "G4Kernel":
        return cls(grid, values=values)

    @property
    def is_separable(self) -> bool:
        return self.factor is not None

    def table(self) -> np.ndarray:
        if self.values is not None:
            return self.values
        f = np.asarray(self.factor(self.grid.t), dtype=complex)
        return np.einsum("a,b,c,d->abcd", f, f, f, f)

    def _index(self, t: float) -> int:
        grid_t = self.grid.t
        i = int(np.argmin(np.abs(grid_t - t)))
        if abs(grid_t[i] - t) > 1e-9 * max(1.0, self.grid.t_max):
            raise ValueError(f"time {t} is not a point of the kernel grid")
        return i

    def check_resolution(self, tol: float = 0.25):
        if self.is_separable:
            f = np.asarray(self.factor(self.grid.t), dtype=complex)
            variation = np.abs(np.diff(f)).max() / max(np.abs(f).max(), np.finfo(float).tiny)
        else:
            table = self.values
            scale = max(np.abs(table).max(), np.finfo(float).tiny)
            variation = max(np.abs(np.diff(table, axis=ax)).max() for ax in range(4)) / scale
        if variation > tol:
            warnings.warn(f"kernel changes by {variation:.2g} of its scale between neighbouring cells",
                          QuadratureResolutionWarning, stacklevel=3)
        return variation


def g4_correction(g4: G4Kernel, ring_kernel, leg_kernel, times: Sequence[float],
                  resolution_tol: float = 0.25) -> complex:
    """First-order G4 correction to ``<T O_I O_II>``.

    ``ring_kernel(tau)`` and ``leg_kernel(tau)`` are the resummed ring and leg
    sums in the time domain (expectation-value units). The correction is
    ``RING_SYMMETRY_FACTOR`` times the sum of

    ``- int G4(I, II, x1, x2) R(x1 - x2)``
    ``+ i sum_{a<->b} int G4(a, x1, x2, x3) R(x1 - x2) L(x3 - t_b)``
    ``+ int G4(x1, x2, x3, x4) R(x1 - x2) L(x3 - t_I) L(x4 - t_II)``

    evaluated by trapezoidal quadrature over the kernel grid.
    """
    t_i, t_ii = times
    g4.check_resolution(resolution_tol)
    x = g4.grid.t
    w = trapezoid_weights(x.size, g4.grid.spacing)
    ring = np.asarray(ring_kernel(x[:, None] - x[None, :]), dtype=complex) * w[:, None] * w[None, :]
    leg_i = np.asarray(leg_kernel(x - t_i), dtype=complex) * w
    leg_ii = np.asarray(leg_kernel(x - t_ii), dtype=complex) * w
    if g4.is_separable:
        f = np.asarray(g4.factor(x), dtype=complex)
        f_i, f_ii = complex(g4.factor(np.array([t_i]))[0]), complex(g4.factor(np.array([t_ii]))[0])
        ring_ff = f @ ring @ f
        term1 = -f_i * f_ii * ring_ff
        term2 = 1j * ring_ff * (f_i * (f @ leg_ii) + f_ii * (f @ leg_i))
        term3 = ring_ff * (f @ leg_i) * (f @ leg_ii)
        return complex(RING_SYMMETRY_FACTOR * (term1 + term2 + term3))
    table = g4.values
    a, b = g4._index(t_i), g4._index(t_ii)
    term1 = -np.einsum("xy,xy->", table[a, b], ring)
    term2 = 1j * (np.einsum("xyz,xy,z->", table[a], ring, leg_ii)
                  + np.einsum("xyz,xy,z->", table[b], ring, leg_i))
    term3 = np.einsum("wxyz,wx,y,z->", table, ring, leg_i, leg_ii)
    return complex(RING_SYMMETRY_FACTOR * (term1 + term2 + term3))


def _time_kernel(g: ScalarGreenFunction, scale: complex):
    def kernel(tau):
        tau = np.asarray(tau, dtype=float)
        flat, inverse = np.unique(tau.ravel(), return_inverse=True)
        return (scale * inverse_fourier(g, flat))[inverse].reshape(tau.shape)
    return kernel


def dressed_kernels(g_s0: ScalarGreenFunction, g_b0: ScalarGreenFunction):
    """Time-domain ring and leg kernels (expectation-value units) from frequency data."""
    return (_time_kernel(ring_sum(g_s0, g_b0), 1j), _time_kernel(leg_sum(g_s0, g_b0), 1j))


def corrected_two_time(g4: G4Kernel, g_s0: ScalarGreenFunction, g_b0: ScalarGreenFunction,
                       times: Sequence[float], base: complex | None = None) -> complex:
    """Perturbed two-time correlator including the first-order G4 correction.

    ``base`` is the Wick-valid perturbed correlator ``<T O_I O_II>``; by default
    it is obtained from the Dyson equation and transformed back to time.
    """
    t_i, t_ii = times
    if base is None:
        g_sb = forward_dyson_scalar(g_s0, g_b0)
        base = complex(1j * inverse_fourier(g_sb, [t_i - t_ii])[0])
    ring, leg = dressed_kernels(g_s0, g_b0)
    return base + g4_correction(g4, ring, leg, times)
