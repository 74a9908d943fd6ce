"""Estimator-style wrappers (``fit`` / ``transform`` / ``predict``).

Hyper-parameters live in ``__init__`` and are exposed through ``get_params``;
fitted state carries a trailing underscore.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_same_grid, gf_values
from .greens import FrequencyGrid, MatrixGreenFunction, ScalarGreenFunction
from .matsubara import (PADE_TAIL_TOL, SPURIOUS_TOL, MatsubaraSeries, pade_continue, pade_fit)
from .reconstruct import (MATRIX_TOL_FACTOR, SCALAR_SINGULAR_TOL, forward_dyson_matrix_values,
                          forward_dyson_values, reconstruct_matrix_values, reconstruct_values)
from .wick import DEFAULT_DEFECT_THRESHOLD, verify_wick


def _wrap(like, values, flags):
    if isinstance(like, ScalarGreenFunction):
        return like.replace(values=values, flags=flags | like.flags)
    if isinstance(like, MatrixGreenFunction):
        return MatrixGreenFunction(like.grid, values, like.kind, like.eta, flags | like.flags)
    return values


class DysonReconstructor(TransformerMixin, BaseEstimator):
    """Removes a known bath from perturbed Green's functions.

    ``fit`` stores the free bath function; ``transform`` maps perturbed
    functions to ideal ones and ``inverse_transform`` applies the forward
    Dyson equation. Inputs are Green's function objects or arrays of shape
    ``(n,)`` or ``(n, N, N)``.

    Parameters
    ----------
    tol : float
        Scalar singularity tolerance for ``|1 + G_B0 G_SB|``.
    tol_factor : float
        Matrix singularity factor on ``n * eps * sigma_max``.

    Attributes
    ----------
    g_b0_ : ndarray
        Fitted bath values.
    condition_profile_ : ndarray
        Conditioning of the last ``transform`` call.
    flags_ : ndarray
        Frequencies excluded in the last ``transform`` call.
    """

    def __init__(self, tol: float = SCALAR_SINGULAR_TOL, tol_factor: float = MATRIX_TOL_FACTOR):
        self.tol = tol
        self.tol_factor = tol_factor

    def fit(self, X, y=None):
        check_positive(self.tol, "tol")
        check_positive(self.tol_factor, "tol_factor")
        self.g_b0_ = gf_values(X, "G_B0")
        self.grid_ = getattr(X, "grid", None)
        self.is_matrix_ = self.g_b0_.ndim == 3
        return self

    def _check(self, X, name):
        check_is_fitted(self, "g_b0_")
        values = gf_values(X, name)
        if self.grid_ is not None and getattr(X, "grid", self.grid_) != self.grid_:
            raise ValueError("input and fitted bath live on different frequency grids")
        check_same_grid(values, self.g_b0_)
        return values

    def transform(self, X):
        g_sb = self._check(X, "G_SB")
        if self.is_matrix_:
            values, cond, flags = reconstruct_matrix_values(g_sb, self.g_b0_, self.tol_factor)
        else:
            values, cond, flags = reconstruct_values(g_sb, self.g_b0_, self.tol)
        self.condition_profile_, self.flags_ = cond, flags
        return _wrap(X, values, flags)

    def inverse_transform(self, X):
        g_s0 = self._check(X, "G_S0")
        if self.is_matrix_:
            values, flags = forward_dyson_matrix_values(g_s0, self.g_b0_, self.tol_factor)
        else:
            values, flags = forward_dyson_values(g_s0, self.g_b0_, self.tol)
        return _wrap(X, values, flags)


class PadeContinuation(BaseEstimator):
    """Padé continuation of Matsubara data to ``w + i eta``.

    ``fit`` accepts a scalar ``MatsubaraSeries``; ``predict`` takes a
    ``FrequencyGrid`` (returning a retarded Green's function with spurious-pole
    flags) or real frequencies (returning raw complex values).
    """

    def __init__(self, eta: float = 1e-3, tail_tol: float = PADE_TAIL_TOL, spurious_tol: float = SPURIOUS_TOL):
        self.eta = eta
        self.tail_tol = tail_tol
        self.spurious_tol = spurious_tol

    def fit(self, X: MatsubaraSeries, y=None):
        if not isinstance(X, MatsubaraSeries):
            raise TypeError("PadeContinuation.fit expects a MatsubaraSeries")
        self.approximant_ = pade_fit(X, tail_tol=self.tail_tol)
        self.node_residual_ = self.approximant_.node_residual
        self.degree_ = self.approximant_.degree
        return self

    def predict(self, X):
        check_is_fitted(self, "approximant_")
        check_positive(self.eta, "eta")
        if isinstance(X, FrequencyGrid):
            return pade_continue(self.approximant_, X, self.eta, self.spurious_tol)
        omega = np.asarray(X, dtype=float)
        return self.approximant_(omega + 1j * self.eta)


class WickVerifier(BaseEstimator):
    """Wick test of measured four-time data against a fitted two-time correlator.

    ``fit`` takes a callable ``two_time(ta, tb)``; ``score`` returns the defect
    norm and ``predict`` the pass/fail verdict for a set of quadruples.
    """

    def __init__(self, threshold: float = DEFAULT_DEFECT_THRESHOLD, relative: bool = True):
        self.threshold = threshold
        self.relative = relative

    def fit(self, X, y=None):
        if not callable(X):
            raise TypeError("WickVerifier.fit expects a callable two-time correlator")
        self.two_time_ = X
        return self

    def report(self, quadruples, four_time):
        check_is_fitted(self, "two_time_")
        check_positive(self.threshold, "threshold")
        return verify_wick(four_time, self.two_time_, quadruples, self.threshold, self.relative)

    def score(self, quadruples, four_time) -> float:
        return self.report(quadruples, four_time).defect_norm

    def predict(self, quadruples, four_time) -> str:
        return self.report(quadruples, four_time).verdict
