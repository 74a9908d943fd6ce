"""Closed forms for the periodic chain of coupled resonators with per-site baths.

Units: hbar = 1. Sites are indexed ``0..N-1`` in the public functions that take
site indices; momentum labels follow the ``k = 1..N`` convention with
``phi0 = 2 pi / N`` (``k = N`` is the uniform mode).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bath import SpectralDensity
from .greens import FrequencyGrid, GFKind, MatrixGreenFunction, bose_factor


@dataclass(frozen=True)
class ChainModel:
    n_sites: int
    mass: float = 1.0
    omega_r: float = 1.0
    coupling: float = 0.0

    def __post_init__(self):
        if int(self.n_sites) < 1:
            raise ValueError("the chain needs at least one site")
        if not self.mass > 0 or not self.omega_r > 0 or self.coupling < 0:
            raise ValueError("need mass > 0, omega_r > 0 and coupling >= 0")
        object.__setattr__(self, "n_sites", int(self.n_sites))

    @property
    def phi0(self) -> float:
        return 2 * np.pi / self.n_sites

    @property
    def ks(self) -> np.ndarray:
        return np.arange(1, self.n_sites + 1)

    def _check_k(self, k):
        k = np.asarray(k)
        if np.any((k < 1) | (k > self.n_sites)):
            raise ValueError(f"mode index must lie in 1..{self.n_sites}")
        return k

    def _check_site(self, j):
        if not 0 <= j < self.n_sites:
            raise ValueError(f"site index must lie in 0..{self.n_sites - 1}")

    def frequencies(self) -> np.ndarray:
        return dispersion(self, self.ks)

    def rates(self, j: SpectralDensity) -> np.ndarray:
        return lindblad_rate(self, j, self.ks)

    def occupations(self, beta: float) -> np.ndarray:
        return bose_factor(self.frequencies(), beta)


class ModeData(NamedTuple):
    frequencies: np.ndarray
    rates: np.ndarray
    occupations: np.ndarray


def mode_data(model: ChainModel, j: SpectralDensity, beta: float) -> ModeData:
    return ModeData(model.frequencies(), model.rates(j), model.occupations(beta))


def dispersion(model: ChainModel, k):
    """``Omega_k = sqrt((2 Omega sin(k phi0 / 2))^2 + omega_r^2)``."""
    k = model._check_k(k)
    # sin(k phi0/2) = sin((N-k) phi0/2); fold so that the symmetry is exact in floating point
    k = np.minimum(k, model.n_sites - k)
    return np.sqrt((2 * model.coupling * np.sin(k * model.phi0 / 2)) ** 2 + model.omega_r**2)


def lindblad_rate(model: ChainModel, j: SpectralDensity, k):
    """``Gamma_k = J(Omega_k) / (2 m Omega_k)``."""
    omega_k = dispersion(model, k)
    return j(omega_k) / (2 * model.mass * omega_k)


def _pole_pair(model, k, z, broadening):
    omega_k = dispersion(model, k)
    pref = model.n_sites / (2 * model.mass * omega_k)
    return pref * (1 / (z - omega_k + 1j * broadening) - 1 / (z + omega_k + 1j * broadening))


def g_s0_matsubara_k(model: ChainModel, k, beta: float, omega_n, eta: float = 0.0):
    """Ideal momentum-space Matsubara function, ``omega_n > 0``.

    ``beta`` only fixes which ``omega_n`` are Matsubara points; the function
    itself carries no occupation factor.
    """
    omega_n = np.asarray(omega_n, dtype=float)
    if np.any(omega_n <= 0):
        raise ValueError("Matsubara closed forms are defined for omega_n > 0")
    return _pole_pair(model, k, 1j * omega_n, eta)


def g_sb_matsubara_k(model: ChainModel, k, rate, omega_n):
    """Bath-broadened momentum-space Matsubara function (``i eta -> i Gamma_k / 2``)."""
    if np.any(np.asarray(rate) < 0):
        raise ValueError("rates must be non-negative")
    omega_n = np.asarray(omega_n, dtype=float)
    if np.any(omega_n <= 0):
        raise ValueError("Matsubara closed forms are defined for omega_n > 0")
    return _pole_pair(model, k, 1j * omega_n, 0.5 * np.asarray(rate))


def g_retarded_k(model: ChainModel, k, rate, z):
    """Retarded momentum-space function at complex ``z`` in the upper half plane.

    Written in the single-fraction form ``N / (m ((z + i Gamma/2)^2 - Omega_k^2))``
    so that it is an independent evaluator of the Matsubara pole pair.
    """
    omega_k = dispersion(model, k)
    zz = np.asarray(z, dtype=complex) + 0.5j * np.asarray(rate)
    return model.n_sites / (model.mass * (zz**2 - omega_k**2))


def _site_kernel(model, j1, j2, beta):
    """Occupation-weighted phase factors of the site-basis k-sum."""
    model._check_site(j1)
    model._check_site(j2)
    k = model.ks
    nbar = model.occupations(beta)
    phase = k * (j1 - j2) * model.phi0
    return (np.exp(-1j * phase) * nbar - np.exp(1j * phase) * (nbar + 1)) / (2 * model.mass * model.frequencies())


def g_site_matsubara(model: ChainModel, j1: int, j2: int, beta: float, omega_n, rates=None):
    """Site-basis Matsubara function as the k-sum with occupation factors.

    ``rates=None`` (or zeros) gives the ideal chain; per-k rates broaden the
    poles by ``Gamma_k / 2``.
    """
    omega_n = np.atleast_1d(np.asarray(omega_n, dtype=float))
    if np.any(omega_n <= 0):
        raise ValueError("Matsubara closed forms are defined for omega_n > 0")
    rates = np.zeros(model.n_sites) if rates is None else np.broadcast_to(np.asarray(rates, float), (model.n_sites,))
    weight = _site_kernel(model, j1, j2, beta)
    z = 1j * omega_n[:, None]
    omega_k = model.frequencies()[None, :]
    half = 0.5j * rates[None, :]
    poles = 1 / (z + omega_k + half) - 1 / (z - omega_k + half)
    return (weight[None, :] * poles).sum(axis=1) / model.n_sites


def site_matrix_matsubara(model: ChainModel, beta: float, omega_n, rates=None) -> np.ndarray:
    """All site pairs, shape ``(len(omega_n), N, N)``."""
    omega_n = np.atleast_1d(omega_n)
    n = model.n_sites
    out = np.empty((omega_n.size, n, n), dtype=complex)
    for j1 in range(n):
        for j2 in range(n):
            out[:, j1, j2] = g_site_matsubara(model, j1, j2, beta, omega_n, rates)
    return out


def site_matrix_retarded(model: ChainModel, grid: FrequencyGrid, rates=None, eta: float = 0.0) -> MatrixGreenFunction:
    """Real-axis retarded site matrix ``(1/N) sum_k e^{ik(j1-j2)phi0} / (m((w + i(eta + Gamma_k/2))^2 - Omega_k^2))``."""
    n = model.n_sites
    rates = np.zeros(n) if rates is None else np.broadcast_to(np.asarray(rates, float), (n,))
    z = grid.omega[:, None] + 1j * eta
    gk = np.stack([g_retarded_k(model, k, rates[k - 1], z[:, 0]) for k in model.ks], axis=1) / n
    sites = np.arange(n)
    phase = np.exp(1j * model.phi0 * model.ks[None, None, :] * (sites[:, None, None] - sites[None, :, None]))
    values = np.einsum("wk,ijk->wij", gk, phase) / n
    return MatrixGreenFunction(grid, values, GFKind.RETARDED, eta)


def site_to_k(model: ChainModel, site_values: np.ndarray) -> np.ndarray:
    """``G^k = sum_{j1,j2} G^{j1 j2} exp(i k (j1 - j2) phi0)`` for every k."""
    sites = np.arange(model.n_sites)
    diff = sites[:, None] - sites[None, :]
    phase = np.exp(1j * model.phi0 * model.ks[:, None, None] * diff[None])
    return np.einsum("...ij,kij->...k", site_values, phase)


class QRTCorrelators(NamedTuple):
    aa: complex
    ad_ad: complex
    ad_a: complex
    a_ad: complex


def qrt_correlators(model: ChainModel, rates, beta: float, t1: float, t2: float, k: int) -> QRTCorrelators:
    """Stationary two-time moments of mode ``k`` under the per-mode Lindbladian.

    Phases follow free Heisenberg evolution ``a_k(t) = a_k exp(-i Omega_k t)``:
    ``<a^dag(t1) a(t2)> ~ exp(+i Omega_k (t1 - t2))`` and
    ``<a(t1) a^dag(t2)> ~ exp(-i Omega_k (t1 - t2))``.
    """
    model._check_k(k)
    omega_k = float(dispersion(model, k))
    rate = float(np.broadcast_to(np.asarray(rates, float), (model.n_sites,))[k - 1])
    nbar = float(bose_factor(omega_k, beta))
    tau = t1 - t2
    envelope = np.exp(-0.5 * rate * abs(tau))
    return QRTCorrelators(
        aa=0j,
        ad_ad=0j,
        ad_a=nbar * np.exp(1j * omega_k * tau) * envelope,
        a_ad=(nbar + 1) * np.exp(-1j * omega_k * tau) * envelope,
    )


@dataclass(frozen=True, eq=False)
class ModeTransform:
    """Linear map from normal modes to local operators.

    ``d_a[j, k]`` and ``d_adag[j, k]`` are the coefficients of ``a_k`` and
    ``a_k^dag`` in ``d_j``; ``q_*`` and ``p_*`` the same for ``q_j``, ``p_j``.
    """

    d_a: np.ndarray
    d_adag: np.ndarray
    q_a: np.ndarray
    q_adag: np.ndarray
    p_a: np.ndarray
    p_adag: np.ndarray

    def commutator_qp(self) -> np.ndarray:
        """``[q_i, p_j] / i`` assembled from the coefficients and ``[a_k, a_k'^dag] = delta``."""
        return (self.q_a @ self.p_adag.T - self.q_adag @ self.p_a.T) / 1j

    def commutator_d(self) -> np.ndarray:
        """``[d_i, d_j^dag]``; the identity for a canonical transform."""
        return self.d_a @ self.d_a.conj().T - self.d_adag @ self.d_adag.conj().T


def mode_transform(model: ChainModel) -> ModeTransform:
    n, m, wr = model.n_sites, model.mass, model.omega_r
    omega_k = model.frequencies()
    j = np.arange(n)[:, None]
    k = model.ks[None, :]
    ratio_minus = np.sqrt(wr / omega_k) - np.sqrt(omega_k / wr)
    ratio_plus = np.sqrt(wr / omega_k) + np.sqrt(omega_k / wr)
    d_adag = np.exp(-1j * k * j * model.phi0) * ratio_minus / (2 * np.sqrt(n))
    d_a = np.exp(1j * k * j * model.phi0) * ratio_plus / (2 * np.sqrt(n))
    # q = (d + d^dag) / sqrt(2 m w_r),  p = i sqrt(m w_r / 2) (d^dag - d)
    dd_a = d_a + d_adag.conj()
    dd_adag = d_adag + d_a.conj()
    q_scale = 1 / np.sqrt(2 * m * wr)
    p_scale = 1j * np.sqrt(m * wr / 2)
    return ModeTransform(
        d_a=d_a, d_adag=d_adag,
        q_a=q_scale * dd_a, q_adag=q_scale * dd_adag,
        p_a=p_scale * (d_adag.conj() - d_a), p_adag=p_scale * (d_a.conj() - d_adag),
    )
