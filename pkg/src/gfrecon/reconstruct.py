"""Forward Dyson composition, reconstruction of the ideal Green's function and
first-order sensitivity to imperfect inputs.

Every frequency is treated independently. Near-singular denominators are
flagged and excluded rather than regularised: the information is genuinely
lost there.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .greens import MatrixGreenFunction, ScalarGreenFunction


class PreconditionWarning(UserWarning):
    """A first-order formula is evaluated outside its validity region."""


# Validity margin for "<<" in the perturbative conditions: |delta| * margin < |reference|.
VALIDITY_MARGIN = 10.0
SCALAR_SINGULAR_TOL = 1e-10
MATRIX_TOL_FACTOR = 1e4


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    """Reconstructed ideal function with its per-frequency conditioning.

    ``condition_profile`` is ``|1 + G_B0 G_SB|`` (scalar) or the smallest
    singular value of ``1 + G_B0 G_SB`` (matrix). ``flags`` marks frequencies
    where the reconstruction is undefined; they hold zero as sentinel.
    """

    g_s0_reconstructed: ScalarGreenFunction | MatrixGreenFunction
    condition_profile: np.ndarray
    flags: np.ndarray

    @property
    def n_flagged(self) -> int:
        return int(self.flags.sum())


def _check_pair(a, b):
    if a.grid != b.grid:
        raise ValueError("Green's functions live on different grids")
    if a.kind != b.kind:
        raise ValueError(f"kind mismatch: {a.kind.value} vs {b.kind.value}")


# array kernels, shared with the Matsubara pipeline

def _scalar_divide(num, den, tol):
    scale = 1.0 + np.abs(den - 1.0)
    flags = np.abs(den) <= tol * scale
    safe = np.where(flags, 1.0, den)
    return np.where(flags, 0.0, num / safe), flags


def forward_dyson_values(g_s0, g_b0, tol=SCALAR_SINGULAR_TOL):
    """``G_S0 / (1 - G_S0 G_B0)`` pointwise; returns (values, flags)."""
    g_s0, g_b0 = np.asarray(g_s0, complex), np.asarray(g_b0, complex)
    return _scalar_divide(g_s0, 1.0 - g_s0 * g_b0, tol)


def reconstruct_values(g_sb, g_b0, tol=SCALAR_SINGULAR_TOL):
    """``G_SB / (1 + G_B0 G_SB)`` pointwise; returns (values, |den|, flags)."""
    g_sb, g_b0 = np.asarray(g_sb, complex), np.asarray(g_b0, complex)
    den = 1.0 + g_b0 * g_sb
    values, flags = _scalar_divide(g_sb, den, tol)
    return values, np.abs(den), flags


def _singular_flags(mats, tol_factor):
    sv = np.linalg.svd(mats, compute_uv=False)
    n = mats.shape[-1]
    threshold = tol_factor * n * np.finfo(float).eps * sv[..., 0]
    return sv[..., -1], sv[..., -1] <= threshold


def forward_dyson_matrix_values(g_s0, g_b0, tol_factor=MATRIX_TOL_FACTOR):
    """Solve ``(1 - G_S0 G_B0) G_SB = G_S0`` per frequency; returns (values, flags)."""
    g_s0, g_b0 = np.asarray(g_s0, complex), np.asarray(g_b0, complex)
    eye = np.eye(g_s0.shape[-1])
    lhs = eye - g_s0 @ g_b0
    _, flags = _singular_flags(lhs, tol_factor)
    lhs = np.where(flags[:, None, None], eye, lhs)
    values = np.linalg.solve(lhs, g_s0)
    values[flags] = 0.0
    return values, flags


def reconstruct_matrix_values(g_sb, g_b0, tol_factor=MATRIX_TOL_FACTOR):
    """``G_S0 = G_SB (1 + G_B0 G_SB)^-1`` per frequency; returns (values, sigma_min, flags)."""
    g_sb, g_b0 = np.asarray(g_sb, complex), np.asarray(g_b0, complex)
    eye = np.eye(g_sb.shape[-1])
    rhs_mat = eye + g_b0 @ g_sb
    sigma_min, flags = _singular_flags(rhs_mat, tol_factor)
    rhs_mat = np.where(flags[:, None, None], eye, rhs_mat)
    # X M = G_SB  <=>  M^T X^T = G_SB^T
    values = np.swapaxes(np.linalg.solve(np.swapaxes(rhs_mat, -1, -2), np.swapaxes(g_sb, -1, -2)), -1, -2)
    values[flags] = 0.0
    return values, sigma_min, flags


# Green's-function level API

def forward_dyson_scalar(g_s0: ScalarGreenFunction, g_b0: ScalarGreenFunction,
                         tol: float = SCALAR_SINGULAR_TOL) -> ScalarGreenFunction:
    """Perturbed function from the Dyson equation, ``G_S0 / (1 - G_S0 G_B0)``."""
    _check_pair(g_s0, g_b0)
    values, flags = forward_dyson_values(g_s0.values, g_b0.values, tol)
    return g_s0.replace(values=values, flags=flags | g_s0.flags | g_b0.flags)


def reconstruct_scalar(g_sb: ScalarGreenFunction, g_b0: ScalarGreenFunction,
                       tol: float = SCALAR_SINGULAR_TOL) -> ReconstructionResult:
    """Ideal function ``G_SB / (1 + G_B0 G_SB)``."""
    _check_pair(g_sb, g_b0)
    values, cond, flags = reconstruct_values(g_sb.values, g_b0.values, tol)
    flags = flags | g_sb.flags | g_b0.flags
    return ReconstructionResult(g_sb.replace(values=values, flags=flags), cond, flags)


def _check_matrix_pair(a: MatrixGreenFunction, b: MatrixGreenFunction):
    _check_pair(a, b)
    if a.n_sites != b.n_sites:
        raise ValueError("matrix Green's functions have different numbers of sites")


def forward_dyson_matrix(g_s0: MatrixGreenFunction, g_b0: MatrixGreenFunction,
                         tol_factor: float = MATRIX_TOL_FACTOR) -> MatrixGreenFunction:
    _check_matrix_pair(g_s0, g_b0)
    values, flags = forward_dyson_matrix_values(g_s0.values, g_b0.values, tol_factor)
    return MatrixGreenFunction(g_s0.grid, values, g_s0.kind, g_s0.eta, flags | g_s0.flags | g_b0.flags)


def reconstruct_matrix(g_sb: MatrixGreenFunction, g_b0: MatrixGreenFunction,
                       tol_factor: float = MATRIX_TOL_FACTOR) -> ReconstructionResult:
    _check_matrix_pair(g_sb, g_b0)
    values, sigma_min, flags = reconstruct_matrix_values(g_sb.values, g_b0.values, tol_factor)
    flags = flags | g_sb.flags | g_b0.flags
    g = MatrixGreenFunction(g_sb.grid, values, g_sb.kind, g_sb.eta, flags)
    return ReconstructionResult(g, sigma_min, flags)


# sensitivity

def _as_values(x, like: ScalarGreenFunction):
    if isinstance(x, ScalarGreenFunction):
        return x.values
    return np.broadcast_to(np.asarray(x, complex), like.values.shape)


def sensitivity_bath_first_order(g_s0: ScalarGreenFunction, delta_g_b0,
                                 margin: float = VALIDITY_MARGIN) -> ScalarGreenFunction:
    """First-order reconstruction under a bath error, ``G_S0 (1 - G_S0 dG_B0)``.

    The validity condition ``|dG_B0| << |1/G_SB + G_B0|`` is checked through the
    identity ``1/G_SB + G_B0 = 1/G_S0``; violating points are flagged and a
    :class:`PreconditionWarning` is emitted. The prediction does not depend on
    ``G_B0`` itself.
    """
    g, delta = g_s0.values, _as_values(delta_g_b0, g_s0)
    violated = np.abs(delta * g) * margin > 1.0
    if violated.any():
        warnings.warn(f"bath error is not small at {violated.sum()} frequencies",
                      PreconditionWarning, stacklevel=2)
    return g_s0.replace(values=g * (1.0 - g * delta), flags=g_s0.flags | violated)


@dataclass(frozen=True, eq=False)
class SystemSensitivity:
    prediction: ScalarGreenFunction
    amplification: np.ndarray
    amplification_flags: np.ndarray


def sensitivity_system_first_order(g_s0: ScalarGreenFunction, g_sb: ScalarGreenFunction, delta_g_sb,
                                   g_b0: ScalarGreenFunction | None = None,
                                   margin: float = VALIDITY_MARGIN,
                                   amplification_threshold: float = 1e2) -> SystemSensitivity:
    """First-order reconstruction under a measurement error of ``G_SB``.

    ``G_S0 (1 + (G_S0/G_SB) dG_SB/G_SB)``. Frequencies where the amplification
    ``|G_S0/G_SB|`` exceeds ``amplification_threshold`` are flagged: there a
    small relative error of the measurement ruins the reconstruction.
    """
    _check_pair(g_s0, g_sb)
    g, gsb, delta = g_s0.values, g_sb.values, _as_values(delta_g_sb, g_s0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gsb != 0, g / np.where(gsb != 0, gsb, 1), np.inf)
        rel = np.where(gsb != 0, delta / np.where(gsb != 0, gsb, 1), 0)
    flags = g_s0.flags | g_sb.flags
    if g_b0 is not None:
        # |dG_SB| << |1/G_B0 + G_SB|, written without dividing by G_B0
        violated = np.abs(delta * g_b0.values) * margin > np.abs(1.0 + g_b0.values * gsb)
        if violated.any():
            warnings.warn(f"measurement error is not small at {violated.sum()} frequencies",
                          PreconditionWarning, stacklevel=2)
        flags = flags | violated
    amplification = np.abs(ratio)
    amp_flags = amplification > amplification_threshold
    prediction = g_s0.replace(values=np.where(np.isfinite(ratio), g * (1.0 + ratio * rel), 0.0),
                              flags=flags | amp_flags)
    return SystemSensitivity(prediction, amplification, amp_flags)


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    delta_input_norm: float
    first_order_prediction: ScalarGreenFunction
    exact_perturbed: ScalarGreenFunction
    residual_norm: float


def sensitivity_report(g_s0, g_sb, g_b0, delta, target: Literal["bath", "system"]) -> SensitivityReport:
    """Exact perturbed reconstruction next to its first-order prediction."""
    delta = _as_values(delta, g_s0)
    if target == "bath":
        exact = reconstruct_scalar(g_sb, g_b0.replace(values=g_b0.values + delta)).g_s0_reconstructed
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PreconditionWarning)
            first = sensitivity_bath_first_order(g_s0, delta)
    elif target == "system":
        exact = reconstruct_scalar(g_sb.replace(values=g_sb.values + delta), g_b0).g_s0_reconstructed
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PreconditionWarning)
            first = sensitivity_system_first_order(g_s0, g_sb, delta).prediction
    else:
        raise ValueError("target must be 'bath' or 'system'")
    keep = ~(exact.flags | g_s0.flags)
    residual = float(np.abs(exact.values - first.values)[keep].max(initial=0.0))
    return SensitivityReport(float(np.abs(delta).max()), first, exact, residual)


@dataclass(frozen=True)
class NoiseModel:
    """Independent complex Gaussian noise per frequency.

    ``target='bath'`` perturbs G_B0 with absolute scale ``sigma``;
    ``target='system'`` perturbs G_SB with scale ``sigma * |G_SB|``.
    """

    target: Literal["bath", "system"]
    sigma: float

    def __post_init__(self):
        if self.target not in ("bath", "system"):
            raise ValueError("noise target must be 'bath' or 'system'")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def sample(self, rng: np.random.Generator, g_sb: ScalarGreenFunction) -> np.ndarray:
        n = len(g_sb.grid)
        xi = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        scale = self.sigma if self.target == "bath" else self.sigma * np.abs(g_sb.values)
        return scale * xi


@dataclass(frozen=True, eq=False)
class MonteCarloSummary:
    reports: list[SensitivityReport] = field(repr=False)
    errors: np.ndarray = field(repr=False)            # exact - G_S0, shape (n_trials, n_freq)
    first_order_errors: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def mean_error(self) -> np.ndarray:
        return self.errors.mean(axis=0)

    @property
    def rms_error(self) -> np.ndarray:
        return np.sqrt((np.abs(self.errors) ** 2).mean(axis=0))

    @property
    def spread(self) -> float:
        return float(np.abs(self.errors).std(axis=0).max()) if len(self.errors) else 0.0


def monte_carlo_sensitivity(g_s0: ScalarGreenFunction, g_sb: ScalarGreenFunction, g_b0: ScalarGreenFunction,
                            noise: NoiseModel, n_trials: int, seed: int) -> MonteCarloSummary:
    """Distribution of reconstruction errors under random input errors."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_trials):
        reports.append(sensitivity_report(g_s0, g_sb, g_b0, noise.sample(rng, g_sb), noise.target))
    errors = np.array([r.exact_perturbed.values - g_s0.values for r in reports])
    first = np.array([r.first_order_prediction.values - g_s0.values for r in reports])
    return MonteCarloSummary(reports, errors, first, seed)
