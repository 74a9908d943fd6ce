"""Brute-force reference data.

* Exact diagonalization of the chain plus discretized baths on a truncated
  Fock space (optional quartic on-site term for non-Gaussian test data).
* Exact normal-mode correlators of the fully quadratic chain plus baths, for
  baths too large for a Fock space.
* Numerical propagation of the single-mode Lindblad generator and its
  two-time correlators via the regression theorem.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bath import DiscretizedBath
from .chain import ChainModel, dispersion
from .greens import (DEFAULT_ETA, FrequencyGrid, GFKind, MatrixGreenFunction, TimeCorrelator, TimeGrid,
                     bose_factor, fourier_time_to_freq)

DEFAULT_DIMENSION_CAP = 50_000
DENSE_LIMIT = 3_000
EDGE_OCCUPATION_TOL = 1e-6
BOLTZMANN_CUTOFF = 1e-14


class DimensionCapError(RuntimeError):
    """The truncated Hilbert space exceeds the configured cap."""


class TruncationWarning(UserWarning):
    """The state populates the highest retained Fock level."""


class PropagationError(RuntimeError):
    """Propagation of the master equation failed."""


@dataclass(frozen=True, eq=False)
class FockOracleConfig:
    """Chain of ``n_sites`` oscillators, each optionally coupled to its own bath.

    ``baths`` holds one ``DiscretizedBath`` per site (or is empty). The
    coupling is ``lambda_b * q_j * sum_m t_m (b_m + b_m^dag)``. ``chi`` adds
    ``chi * q_j^4`` on every site. ``beta = inf`` selects the ground state.
    """

    chain: ChainModel
    fock_cut: int = 8
    baths: tuple[DiscretizedBath, ...] = ()
    lambda_b: float = 1.0
    chi: float = 0.0
    beta: float = np.inf
    dimension_cap: int = DEFAULT_DIMENSION_CAP

    def __post_init__(self):
        if int(self.fock_cut) < 2:
            raise ValueError("fock_cut must be at least 2")
        if self.chi < 0:
            raise ValueError("chi must be non-negative")
        if not self.beta > 0:
            raise ValueError("beta must be positive or inf")
        baths = tuple(self.baths)
        if baths and len(baths) != self.chain.n_sites:
            raise ValueError("give one bath per site or none")
        object.__setattr__(self, "baths", baths)
        object.__setattr__(self, "fock_cut", int(self.fock_cut))

    @property
    def n_modes(self) -> int:
        return self.chain.n_sites + sum(b.n_modes for b in self.baths)

    @property
    def dimension(self) -> int:
        return self.fock_cut ** self.n_modes

    def check_dimension(self):
        if self.dimension > self.dimension_cap:
            raise DimensionCapError(
                f"Hilbert dimension {self.fock_cut}^{self.n_modes} = {self.dimension} "
                f"exceeds the cap {self.dimension_cap}")


def _ladder(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), 1)


def _local_position_powers(d: int, mass: float, omega: float):
    """``q`` and ``q^4`` truncated to ``d`` levels, ``q^4`` built in a padded space."""
    pad = d + 4
    a = _ladder(pad)
    q = (a + a.T) / np.sqrt(2 * mass * omega)
    return q[:d, :d], np.linalg.matrix_power(q, 4)[:d, :d]


def _embed(local: sp.spmatrix, position: int, n_modes: int, d: int) -> sp.csr_matrix:
    left = sp.identity(d**position, format="csr")
    right = sp.identity(d ** (n_modes - position - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(local)), right, format="csr")


class FockOracle:
    """Hamiltonian, operators and eigendata for one configuration."""

    def __init__(self, cfg: FockOracleConfig):
        cfg.check_dimension()
        self.cfg = cfg
        self._build()

    def _build(self):
        cfg, chain, d = self.cfg, self.cfg.chain, self.cfg.fock_cut
        n_sites, n_modes = chain.n_sites, cfg.n_modes
        q_loc, q4_loc = _local_position_powers(d, chain.mass, chain.omega_r)
        number = np.diag(np.arange(d, dtype=float))
        a = _ladder(d)
        self.q = [_embed(q_loc, j, n_modes, d) for j in range(n_sites)]
        h = sp.csr_matrix((cfg.dimension, cfg.dimension))
        for j in range(n_sites):
            h = h + _embed(chain.omega_r * (number + 0.5 * np.eye(d)), j, n_modes, d)
            if cfg.chi:
                h = h + cfg.chi * _embed(q4_loc, j, n_modes, d)
        if chain.coupling and n_sites > 1:
            k = 0.5 * chain.mass * chain.coupling**2
            for j in range(n_sites):
                diff = self.q[(j + 1) % n_sites] - self.q[j]
                h = h + k * (diff @ diff)
        position = n_sites
        self.bath_positions = []
        for j, bath in enumerate(cfg.baths):
            x_op = sp.csr_matrix((cfg.dimension, cfg.dimension))
            for freq, t in zip(bath.mode_frequencies, bath.couplings):
                h = h + freq * _embed(number, position, n_modes, d)
                x_op = x_op + t * _embed(a + a.T, position, n_modes, d)
                self.bath_positions.append(position)
                position += 1
            h = h + cfg.lambda_b * (self.q[j] @ x_op)
        self.hamiltonian = sp.csr_matrix(h)

    @property
    def is_dense(self) -> bool:
        return self.cfg.dimension <= DENSE_LIMIT

    def hermiticity_residual(self) -> float:
        diff = self.hamiltonian - self.hamiltonian.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    @cached_property
    def eigensystem(self):
        if not self.is_dense:
            raise DimensionCapError(
                f"dense diagonalization limited to dimension {DENSE_LIMIT}, got {self.cfg.dimension}")
        return np.linalg.eigh(self.hamiltonian.toarray())

    @cached_property
    def ground_state(self):
        if self.is_dense:
            e, v = self.eigensystem
            return float(e[0]), v[:, 0]
        e, v = spla.eigsh(self.hamiltonian, k=1, which="SA", tol=1e-13)
        return float(e[0]), v[:, 0]

    def thermal_weights(self):
        e, _ = self.eigensystem
        w = np.exp(-self.cfg.beta * (e - e[0]))
        w /= w.sum()
        keep = w >= BOLTZMANN_CUTOFF
        return w, keep

    def edge_occupation(self) -> float:
        """Largest population of the top Fock level of any mode in the state."""
        d, n_modes = self.cfg.fock_cut, self.cfg.n_modes
        if np.isinf(self.cfg.beta):
            probs = np.abs(self.ground_state[1]) ** 2
        else:
            e, v = self.eigensystem
            w, _ = self.thermal_weights()
            probs = (np.abs(v) ** 2) @ w
        probs = probs.reshape((d,) * n_modes)
        return max(float(np.take(probs, d - 1, axis=ax).sum()) for ax in range(n_modes))

    def check_truncation(self, tol: float = EDGE_OCCUPATION_TOL) -> float:
        edge = self.edge_occupation()
        if edge > tol:
            warnings.warn(f"top Fock level population {edge:.2e} exceeds {tol:.0e}",
                          TruncationWarning, stacklevel=3)
        return edge

    def propagate(self, v: np.ndarray, s: float) -> np.ndarray:
        """``exp(-i H s) v``."""
        if s == 0:
            return v
        if self.is_dense:
            e, u = self.eigensystem
            return u @ (np.exp(-1j * e * s) * (u.conj().T @ v))
        return spla.expm_multiply(-1j * s * self.hamiltonian, v.astype(complex))

    # two-time correlators

    def _ground_spectral_pair(self, i: int, j: int, n_lanczos: int):
        """Excitation energies and weights of ``<0| q_i f(H - E0) q_j |0>``."""
        e0, psi = self.ground_state
        u, w = self.q[i] @ psi, self.q[j] @ psi
        if self.is_dense:
            e, vecs = self.eigensystem
            return e - e0, (vecs.T @ u) * (vecs.T @ w)
        if i == j:
            en, wt = lanczos_spectrum(self.hamiltonian, u, n_lanczos)
            return en - e0, wt
        ep, wp = lanczos_spectrum(self.hamiltonian, u + w, n_lanczos)
        em, wm = lanczos_spectrum(self.hamiltonian, u - w, n_lanczos)
        return np.concatenate([ep, em]) - e0, 0.25 * np.concatenate([wp, -wm])

    def two_time(self, i: int, j: int, times, n_lanczos: int = 200) -> np.ndarray:
        """``<T q_i(t) q_j(0)>`` in the ground or thermal state."""
        times = np.asarray(times, dtype=float)
        self.check_truncation()
        if np.isinf(self.cfg.beta):
            en, wt = self._ground_spectral_pair(i, j, n_lanczos)
            tau = np.abs(times).ravel()
            out = np.empty(tau.size, complex)
            for start in range(0, tau.size, 1024):
                sl = slice(start, start + 1024)
                out[sl] = np.exp(-1j * tau[sl, None] * en[None, :]) @ wt
            return out.reshape(times.shape)
        e, v = self.eigensystem
        p, keep = self.thermal_weights()
        qi = v.T @ (self.q[i] @ v)
        qj = v.T @ (self.q[j] @ v)
        rows = np.flatnonzero(keep)
        # t >= 0: sum_m p_m (q_i)_{mn} (q_j)_{nm} e^{i(E_m - E_n) t}
        fwd = p[rows, None] * qi[rows] * qj[:, rows].T
        bwd = p[rows, None] * qj[rows] * qi[:, rows].T
        gap = e[rows, None] - e[None, :]
        flat = times.ravel()
        out = np.empty(flat.size, complex)
        for idx, t in enumerate(flat):
            if t >= 0:
                out[idx] = np.sum(fwd * np.exp(1j * gap * t))
            else:
                out[idx] = np.sum(bwd * np.exp(-1j * gap * t))
        return out.reshape(times.shape)

    # n-time correlators

    def n_time(self, sites: Sequence[int], times: Sequence[float]) -> complex:
        """``<T q_{s1}(t1) ... q_{sn}(tn)>`` by sequential propagation."""
        if len(sites) != len(times):
            raise ValueError("one time per operator")
        order = sorted(range(len(times)), key=lambda a: -times[a])
        ops = [self.q[sites[a]] for a in order]
        ts = [float(times[a]) for a in order]
        if np.isinf(self.cfg.beta):
            return self._n_time_state(*self.ground_state, ops, ts)
        e, v = self.eigensystem
        p, keep = self.thermal_weights()
        return complex(sum(p[m] * self._n_time_state(e[m], v[:, m], ops, ts)
                           for m in np.flatnonzero(keep)))

    def _n_time_state(self, energy, psi, ops, ts):
        # <psi| e^{iHt1} O1 e^{-iH(t1-t2)} O2 ... On e^{-iH tn} |psi>
        vec = ops[-1] @ psi.astype(complex)
        for k in range(len(ops) - 2, -1, -1):
            vec = ops[k] @ self.propagate(vec, ts[k] - ts[k + 1])
        phase = np.exp(1j * energy * (ts[0] - ts[-1]))
        return complex(phase * np.vdot(psi, vec))


def lanczos_spectrum(h: sp.spmatrix, v: np.ndarray, n_steps: int):
    """Ritz energies and weights of the spectral measure of ``v`` under ``h``.

    Full reorthogonalization; the weights sum to ``|v|^2``.
    """
    norm = np.linalg.norm(v)
    if norm == 0:
        return np.zeros(1), np.zeros(1)
    n_steps = min(n_steps, v.size)
    basis = np.zeros((n_steps, v.size))
    alpha, beta = np.zeros(n_steps), np.zeros(n_steps)
    basis[0] = v / norm
    m = n_steps
    for k in range(n_steps):
        w = h @ basis[k]
        alpha[k] = basis[k] @ w
        w -= basis[: k + 1].T @ (basis[: k + 1] @ w)
        w -= basis[: k + 1].T @ (basis[: k + 1] @ w)
        if k + 1 == n_steps:
            break
        beta[k] = np.linalg.norm(w)
        if beta[k] < 1e-12 * max(1.0, abs(alpha[k])):
            m = k + 1
            break
        basis[k + 1] = w / beta[k]
    ritz, vecs = scipy.linalg.eigh_tridiagonal(alpha[:m], beta[: m - 1])
    return ritz, norm**2 * vecs[0] ** 2


def build_hamiltonian(cfg: FockOracleConfig) -> sp.csr_matrix:
    return FockOracle(cfg).hamiltonian


def time_ordered_correlator(cfg: FockOracleConfig, op_indices, times, oracle: FockOracle | None = None):
    """``<T q_i(t) q_j(0)>`` for an array of ``t``."""
    oracle = oracle or FockOracle(cfg)
    return oracle.two_time(op_indices[0], op_indices[1], times)


def four_time_correlator(cfg: FockOracleConfig, times, sites=(0, 0, 0, 0),
                         oracle: FockOracle | None = None) -> complex:
    if len(times) != 4:
        raise ValueError("four times are required")
    oracle = oracle or FockOracle(cfg)
    return oracle.n_time(sites, times)


def measure_gsb_from_oracle(cfg: FockOracleConfig, grid: FrequencyGrid, time_grid: TimeGrid,
                            eta: float = DEFAULT_ETA, oracle: FockOracle | None = None) -> MatrixGreenFunction:
    """Site-matrix time-ordered function ``-i <T q_i(t) q_j(0)>`` transformed to ``grid``."""
    oracle = oracle or FockOracle(cfg)
    n = cfg.chain.n_sites
    values = np.empty((len(grid), n, n), complex)
    for i in range(n):
        for j in range(i, n):
            c = TimeCorrelator(time_grid, -1j * oracle.two_time(i, j, time_grid.t), (i, j))
            values[:, i, j] = values[:, j, i] = fourier_time_to_freq(c, grid, eta).values
    return MatrixGreenFunction(grid, values, GFKind.TIME_ORDERED, eta)


# quadratic normal-mode oracle

@dataclass(frozen=True, eq=False)
class NormalModes:
    frequencies: np.ndarray
    amplitudes: np.ndarray  # q_i = sum_s amplitudes[i, s] xi_s

    def correlator(self, i: int, j: int, times, beta: float = np.inf) -> np.ndarray:
        """``<T q_i(t) q_j(0)>`` for the quadratic Hamiltonian."""
        tau = np.abs(np.asarray(times, dtype=float))
        nu = self.frequencies
        nbar = bose_factor(nu, beta)
        w = self.amplitudes[i] * self.amplitudes[j] / (2 * nu)
        phase = np.exp(-1j * tau[..., None] * nu)
        return ((nbar + 1) * w * phase + nbar * w * phase.conj()).sum(axis=-1)


def normal_modes(chain: ChainModel, baths: Sequence[DiscretizedBath] = (), lambda_b: float = 1.0) -> NormalModes:
    """Normal modes of the chain plus baths with ``b + b^dag = sqrt(2 w) Q`` (unit bath mass)."""
    n = chain.n_sites
    bath_freqs, couplings, owners = [], [], []
    for j, bath in enumerate(baths):
        bath_freqs.extend(bath.mode_frequencies)
        couplings.extend(bath.couplings)
        owners.extend([j] * bath.n_modes)
    nb = len(bath_freqs)
    dim = n + nb
    v = np.zeros((dim, dim))
    v[:n, :n] = chain.mass * chain.omega_r**2 * np.eye(n)
    if chain.coupling and n > 1:
        k = chain.mass * chain.coupling**2
        for j in range(n):
            jp = (j + 1) % n
            v[j, j] += k
            v[jp, jp] += k
            v[j, jp] -= k
            v[jp, j] -= k
    for idx, (w, t, owner) in enumerate(zip(bath_freqs, couplings, owners)):
        b = n + idx
        v[b, b] = w**2
        c = lambda_b * t * np.sqrt(2 * w)
        v[owner, b] += c
        v[b, owner] += c
    inv_sqrt_mass = np.concatenate([np.full(n, 1 / np.sqrt(chain.mass)), np.ones(nb)])
    hess = inv_sqrt_mass[:, None] * v * inv_sqrt_mass[None, :]
    nu2, u = np.linalg.eigh(hess)
    if nu2[0] <= 0:
        raise ValueError("the coupled quadratic Hamiltonian is unstable")
    return NormalModes(np.sqrt(nu2), (inv_sqrt_mass[:, None] * u)[:n])


# Lindblad / regression-theorem oracle

LINDBLAD_MIN_CUT = 30
LINDBLAD_TAIL_POPULATION = 1e-13


def lindblad_fock_cut(nbar: float, tail: float = LINDBLAD_TAIL_POPULATION, minimum: int = LINDBLAD_MIN_CUT) -> int:
    """Smallest cut whose top level carries thermal population ``<= tail``."""
    if nbar <= 0:
        return minimum
    ratio = nbar / (nbar + 1)
    return max(minimum, int(math.ceil(math.log(tail * (nbar + 1)) / math.log(ratio))) + 1)


@dataclass(frozen=True, eq=False)
class LindbladConfig:
    """Independent-mode Lindblad generator of the chain normal modes.

    With ``fock_cut=None`` each mode is truncated by ``lindblad_fock_cut`` of
    its occupation.
    """

    chain: ChainModel
    rates: np.ndarray
    occupations: np.ndarray
    fock_cut: int | None = None

    def __post_init__(self):
        n = self.chain.n_sites
        rates = np.broadcast_to(np.asarray(self.rates, float), (n,)).copy()
        occ = np.broadcast_to(np.asarray(self.occupations, float), (n,)).copy()
        if np.any(rates < 0) or np.any(occ < 0):
            raise ValueError("rates and occupations must be non-negative")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "occupations", occ)

    @classmethod
    def thermal(cls, chain: ChainModel, rates, beta: float, fock_cut: int | None = None) -> "LindbladConfig":
        return cls(chain, rates, chain.occupations(beta), fock_cut)

    def cut_for(self, k: int) -> int:
        if self.fock_cut is not None:
            return int(self.fock_cut)
        return lindblad_fock_cut(float(self.occupations[k - 1]))


class LindbladCorrelators(NamedTuple):
    t: np.ndarray
    ad_a: np.ndarray
    a_ad: np.ndarray
    steady_state_deviation: float
    trace_deviation: float


class _SingleModeLindblad:
    def __init__(self, omega: float, rate: float, nbar: float, d: int):
        self.d = d
        self.a = _ladder(d).astype(complex)
        self.ad = self.a.conj().T
        self.h = omega * self.ad @ self.a
        self.c_down = np.sqrt(rate * (nbar + 1)) * self.a
        self.c_up = np.sqrt(rate * nbar) * self.ad
        self.nbar = nbar

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.h @ rho - rho @ self.h)
        for c in (self.c_down, self.c_up):
            cd = c.conj().T
            cdc = cd @ c
            out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
        return out

    def superoperator(self) -> sp.csr_matrix:
        """Sparse generator acting on row-major ``vec(rho)``: ``vec(A rho B) = (A kron B^T) vec(rho)``."""
        eye = sp.identity(self.d, format="csr")
        h = sp.csr_matrix(self.h)
        sup = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
        for c in (self.c_down, self.c_up):
            c = sp.csr_matrix(c)
            cdc = c.conj().T @ c
            sup = sup + sp.kron(c, c.conj()) - 0.5 * (sp.kron(cdc, eye) + sp.kron(eye, cdc.T))
        return sp.csr_matrix(sup)

    def steady_state(self) -> np.ndarray:
        """Null vector of the generator in the population sector, normalized to unit trace."""
        d = self.d
        # a unique stationary state is phase invariant, hence diagonal
        idx = np.arange(d) * (d + 1)
        block = self.superoperator()[idx][:, idx].toarray()
        # the generator conserves the trace, so one row is redundant: swap in Tr rho = 1
        block[0] = 1.0
        rhs = np.zeros(d, complex)
        rhs[0] = 1.0
        p = np.linalg.solve(block, rhs)
        return np.diag(p / p.sum())

    def thermal_state(self) -> np.ndarray:
        n = np.arange(self.d)
        if self.nbar == 0:
            p = (n == 0).astype(float)
        else:
            p = (self.nbar / (self.nbar + 1)) ** n
            p /= p.sum()
        return np.diag(p).astype(complex)

    def propagate(self, rho0: np.ndarray, t: np.ndarray) -> np.ndarray:
        """``exp(L t) rho0`` for every ``t``.

        The generator commutes with the phase rotation ``a -> a exp(i phi)``,
        so each coherence order ``rho[n + q, n]`` evolves in its own block,
        which is exponentiated exactly.
        """
        d = self.d
        sup = self.superoperator()
        v0 = rho0.ravel()
        rows, cols = np.divmod(np.arange(d * d), d)
        order = rows - cols
        out = np.zeros((t.size, d * d), complex)
        for q in np.unique(order[v0 != 0]):
            idx = np.flatnonzero(order == q)
            block = sup[idx][:, idx].toarray()
            for i, s in enumerate(t):
                out[i, idx] = scipy.linalg.expm(block * s) @ v0[idx]
        if not np.all(np.isfinite(out)):
            raise PropagationError("Lindblad propagation produced non-finite values")
        return out.reshape(t.size, d, d)


def lindblad_two_time(cfg: LindbladConfig, k: int, t) -> LindbladCorrelators:
    """``<a_k^dag(t) a_k(0)>`` and ``<a_k(t) a_k^dag(0)>`` in the stationary state.

    The stationary state is the numerical null vector of the generator; its
    distance from the thermal state is reported, not assumed to vanish.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("times must be a strictly increasing array of t >= 0")
    cfg.chain._check_k(k)
    omega = float(dispersion(cfg.chain, k))
    mode = _SingleModeLindblad(omega, cfg.rates[k - 1], cfg.occupations[k - 1], cfg.cut_for(k))
    rho = mode.steady_state()
    deviation = float(np.abs(rho - mode.thermal_state()).max())
    # regression theorem: <A(t) B(0)> = Tr[A exp(Lt)(B rho)]
    prop_a = mode.propagate(mode.a @ rho, t)
    prop_ad = mode.propagate(mode.ad @ rho, t)
    ad_a = np.einsum("ij,tji->t", mode.ad, prop_a)
    a_ad = np.einsum("ij,tji->t", mode.a, prop_ad)
    excited = np.zeros((mode.d, mode.d), complex)
    excited[1, 1] = 1.0
    traces = np.trace(mode.propagate(excited, t), axis1=1, axis2=2)
    return LindbladCorrelators(t, ad_a, a_ad, deviation, float(np.abs(traces - 1).max()))
