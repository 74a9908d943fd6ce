"""Bosonic Matsubara grids, reconstruction at the Matsubara points and Padé
continuation back to the real axis."""
from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from .greens import FrequencyGrid, GFKind, ScalarGreenFunction
from .reconstruct import (MATRIX_TOL_FACTOR, SCALAR_SINGULAR_TOL, forward_dyson_matrix_values,
                          forward_dyson_values, reconstruct_matrix_values, reconstruct_values)

PADE_PRECISION_DIGITS = 60
PADE_TAIL_TOL = 1e-13
SPURIOUS_TOL = 1e-3


def matsubara_frequencies(beta: float, n_max: int) -> np.ndarray:
    """``w_n = 2 pi n / beta`` for ``n = 1..n_max``."""
    if not beta > 0 or not np.isfinite(beta):
        raise ValueError("beta must be positive and finite")
    if int(n_max) < 1:
        raise ValueError("n_max must be at least 1")
    return 2 * np.pi * np.arange(1, int(n_max) + 1) / beta


@dataclass(frozen=True, eq=False)
class MatsubaraSeries:
    """Values at ``w_n = 2 pi n / beta``, ``n = 1..n_max``.

    ``values`` has shape ``(n_max,)`` for a scalar function or
    ``(n_max, N, N)`` for a site matrix.
    """

    beta: float
    values: np.ndarray
    flags: np.ndarray | None = None

    def __post_init__(self):
        if not self.beta > 0 or not np.isfinite(self.beta):
            raise ValueError("beta must be positive and finite")
        values = np.asarray(self.values, dtype=complex)
        if values.ndim not in (1, 3) or values.shape[0] < 1:
            raise ValueError("values must have shape (n_max,) or (n_max, N, N)")
        if values.ndim == 3 and values.shape[1] != values.shape[2]:
            raise ValueError("matrix values must be square")
        object.__setattr__(self, "values", values)
        flags = np.zeros(values.shape[0], bool) if self.flags is None else np.asarray(self.flags, bool)
        if flags.shape != (values.shape[0],):
            raise ValueError("flags are per Matsubara point")
        object.__setattr__(self, "flags", flags)

    @property
    def n_max(self) -> int:
        return self.values.shape[0]

    @property
    def omega_n(self) -> np.ndarray:
        return matsubara_frequencies(self.beta, self.n_max)

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 3

    def truncate(self, n_max: int) -> "MatsubaraSeries":
        return MatsubaraSeries(self.beta, self.values[:n_max], self.flags[:n_max])


def _check_series_pair(a: MatsubaraSeries, b: MatsubaraSeries):
    if a.beta != b.beta or a.n_max != b.n_max:
        raise ValueError("Matsubara series must share beta and n_max")
    if a.values.shape != b.values.shape:
        raise ValueError("Matsubara series have different shapes")


def reconstruct_matsubara(g_sb_m: MatsubaraSeries, g_b0_m: MatsubaraSeries,
                          tol: float = SCALAR_SINGULAR_TOL,
                          tol_factor: float = MATRIX_TOL_FACTOR) -> MatsubaraSeries:
    """``G_S0 = G_SB (1 + G_B0 G_SB)^-1`` at every Matsubara point."""
    _check_series_pair(g_sb_m, g_b0_m)
    if g_sb_m.is_matrix:
        values, _, flags = reconstruct_matrix_values(g_sb_m.values, g_b0_m.values, tol_factor)
    else:
        values, _, flags = reconstruct_values(g_sb_m.values, g_b0_m.values, tol)
    return MatsubaraSeries(g_sb_m.beta, values, flags | g_sb_m.flags | g_b0_m.flags)


def forward_matsubara(g_s0_m: MatsubaraSeries, g_b0_m: MatsubaraSeries,
                      tol: float = SCALAR_SINGULAR_TOL,
                      tol_factor: float = MATRIX_TOL_FACTOR) -> MatsubaraSeries:
    """``G_SB = (1 - G_S0 G_B0)^-1 G_S0`` at every Matsubara point."""
    _check_series_pair(g_s0_m, g_b0_m)
    if g_s0_m.is_matrix:
        values, flags = forward_dyson_matrix_values(g_s0_m.values, g_b0_m.values, tol_factor)
    else:
        values, flags = forward_dyson_values(g_s0_m.values, g_b0_m.values, tol)
    return MatsubaraSeries(g_s0_m.beta, values, flags | g_s0_m.flags | g_b0_m.flags)


@dataclass(frozen=True, eq=False)
class PadeApproximant:
    """Continued fraction ``a1 / (1 + a2 (z - z1) / (1 + a3 (z - z2) / ...))``.

    ``degree`` is the number of coefficients minus one. ``dropped_nodes`` lists
    nodes excluded by the degenerate-node fallback; ``report`` describes it.
    """

    nodes: np.ndarray
    coefficients: np.ndarray
    node_residual: float
    dropped_nodes: tuple[int, ...] = ()
    report: str = ""
    used_nodes: np.ndarray = field(default=None, repr=False)

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    def evaluate(self, z, n_coefficients: int | None = None) -> np.ndarray:
        """Evaluate with the first ``n_coefficients`` terms (default all)."""
        n = self.coefficients.size if n_coefficients is None else int(n_coefficients)
        if not 1 <= n <= self.coefficients.size:
            raise ValueError("n_coefficients out of range")
        z = np.asarray(z, dtype=complex)
        a, zn = self.coefficients, self.used_nodes
        tail = np.zeros_like(z)
        for p in range(n - 1, 0, -1):
            tail = a[p] * (z - zn[p - 1]) / (1.0 + tail)
        return a[0] / (1.0 + tail)

    def __call__(self, z) -> np.ndarray:
        return self.evaluate(z)

    def poles(self, cancel_tol: float = 1e-8) -> np.ndarray:
        """Poles of the rational function, with numerator-cancelled roots removed.

        Uses the three-term recurrence ``A_p = A_{p-1} + a_p (z - z_{p-1}) A_{p-2}``
        (same for ``B``) with ``f = A / B``.
        """
        P = np.polynomial.Polynomial
        a, zn = self.coefficients, self.used_nodes
        num_prev, num = P([0.0]), P([a[0]])
        den_prev, den = P([1.0]), P([1.0])
        for p in range(1, a.size):
            factor = P([-a[p] * zn[p - 1], a[p]])
            num, num_prev = num + factor * num_prev, num
            den, den_prev = den + factor * den_prev, den
        roots = den.roots()
        if roots.size == 0:
            return roots
        scale = max(np.abs(num.coef).max(), np.finfo(float).tiny)
        keep = np.array([abs(num(r)) > cancel_tol * scale * max(1.0, abs(r)) ** num.degree() for r in roots])
        return roots[keep]


def _thiele_coefficients(z, u, tail_tol):
    """Reciprocal differences in high precision.

    Returns the coefficients, the indices of the nodes they interpolate and
    the indices dropped as degenerate.
    """
    with mpmath.workdps(PADE_PRECISION_DIGITS):
        zs = [mpmath.mpc(complex(x)) for x in z]
        g = [mpmath.mpc(complex(x)) for x in u]
        order = list(range(len(zs)))
        coeffs, used, dropped = [], [], []
        while order:
            head = order[0]
            a = g[head]
            if used:
                prev = used[-1]
                # tail term a_p (z - z_{p-1}) is what the new level adds to 1
                tails = [abs(g[i] * (zs[i] - zs[prev])) for i in order]
                if max(tails) <= tail_tol:
                    break
                if tails[0] <= tail_tol or a == 0:
                    dropped.append(head)
                    order = order[1:]
                    continue
            if a == 0 and not used:
                if all(g[i] == 0 for i in order):
                    coeffs.append(a)
                    used.append(head)
                    break
                dropped.append(head)
                order = order[1:]
                continue
            coeffs.append(a)
            used.append(head)
            rest = order[1:]
            degenerate = [i for i in rest if g[i] == 0]
            dropped.extend(degenerate)
            rest = [i for i in rest if g[i] != 0]
            for i in rest:
                g[i] = (a - g[i]) / ((zs[i] - zs[head]) * g[i])
            order = rest
        return ([complex(c) for c in coeffs], used, dropped)


def pade_fit(series: MatsubaraSeries | None = None, *, nodes=None, values=None,
             tail_tol: float = PADE_TAIL_TOL) -> PadeApproximant:
    """Thiele continued-fraction interpolant through ``(i w_n, value)``.

    Either a scalar ``MatsubaraSeries`` (``n_max >= 4``) or explicit complex
    ``nodes`` and ``values`` are accepted. Interpolation stops early when the
    remaining nodes are already reproduced to ``tail_tol``; nodes with a
    vanishing reciprocal difference are dropped and reported.
    """
    if series is not None:
        if series.is_matrix:
            raise ValueError("pade_fit works per element; pass a scalar series")
        if series.n_max < 4:
            raise ValueError("pade_fit needs n_max >= 4")
        nodes = 1j * series.omega_n
        values = series.values
    nodes = np.asarray(nodes, dtype=complex)
    values = np.asarray(values, dtype=complex)
    if nodes.shape != values.shape or nodes.ndim != 1 or nodes.size < 1:
        raise ValueError("nodes and values must be equal-length vectors")
    if not np.all(np.isfinite(values)):
        raise ValueError("Padé input values must be finite")
    if np.unique(nodes).size != nodes.size:
        raise ValueError("Padé nodes must be distinct")
    coeffs, used, dropped = _thiele_coefficients(nodes, values, tail_tol)
    approx = PadeApproximant(nodes, np.array(coeffs, complex), 0.0, tuple(dropped),
                             used_nodes=nodes[used])
    fitted = approx.evaluate(nodes)
    scale = max(np.abs(values).max(), np.finfo(float).tiny)
    residual = float(np.abs(fitted - values).max() / scale)
    report = ""
    if dropped:
        report = f"degenerate nodes {list(dropped)} dropped; degree reduced to {len(coeffs) - 1}"
    return PadeApproximant(nodes, approx.coefficients, residual, tuple(dropped), report,
                           used_nodes=approx.used_nodes)


def pade_continue(approx: PadeApproximant, grid: FrequencyGrid, eta: float,
                  spurious_tol: float = SPURIOUS_TOL) -> ScalarGreenFunction:
    """Evaluate at ``w + i eta``; flag points where degree d and d-2 disagree.

    The comparison is relative to the largest modulus of the continuation on
    the grid.
    """
    if not eta > 0:
        raise ValueError("pade_continue needs eta > 0")
    z = grid.omega + 1j * eta
    values = approx.evaluate(z)
    flags = np.zeros(values.shape, bool)
    n = approx.coefficients.size
    if n >= 3:
        lower = approx.evaluate(z, n - 2)
        scale = max(np.abs(values).max(), np.finfo(float).tiny)
        flags = np.abs(values - lower) > spurious_tol * scale
    if not np.all(np.isfinite(values)):
        bad = ~np.isfinite(values)
        values = np.where(bad, 0.0, values)
        flags |= bad
    return ScalarGreenFunction(grid, values, GFKind.RETARDED, eta, flags)
