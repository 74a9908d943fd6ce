import numpy as np
import pytest

from gfrecon.greens import FrequencyGrid, GFKind, ScalarGreenFunction, TimeGrid
from gfrecon.wick import (G4Kernel, QuadratureResolutionWarning, WickReport, corrected_two_time,
                          double_factorial, enumerate_pairings, g4_correction, leg_partial_sum, leg_sum,
                          ring_partial_sum, ring_sum, verify_wick, wick_defect, wick_expand)


@pytest.mark.parametrize("n", [0, 2, 4, 6, 8, 10, 12])
def test_pairing_count_is_double_factorial(n):
    pairs = enumerate_pairings(n)
    assert len(pairs) == double_factorial(n - 1)
    for p in pairs:
        assert sorted(i for pair in p for i in pair) == list(range(n))
    assert len(set(pairs)) == len(pairs)


def test_pairing_order_and_validation():
    assert list(enumerate_pairings(4)) == [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    with pytest.raises(ValueError):
        enumerate_pairings(3)
    with pytest.raises(ValueError):
        enumerate_pairings(14)
    assert len(enumerate_pairings(14, cap=14)) == 135135


def test_wick_expand_constant_and_homogeneity():
    assert wick_expand(lambda a, b: 1.0, [0] * 6) == 15
    g = lambda a, b: np.exp(-abs(a - b)) * (1 + 0.3j * (a - b))
    times = [0.1, -0.4, 0.7, 1.2, 0.0, -1.0]
    lam = 1.7 - 0.2j
    assert wick_expand(lambda a, b: lam * g(a, b), times) == pytest.approx(lam**3 * wick_expand(g, times), rel=1e-13)


def test_wick_defect_vanishes_for_gaussian_pairing():
    g = lambda a, b: np.exp(-0.5 * (a - b) ** 2)
    times = (0.0, 0.3, -0.2, 1.1)
    exact = wick_expand(g, times)
    assert wick_defect(exact, g, times) == pytest.approx(0, abs=1e-15)
    assert wick_defect(exact + 0.1, g, times) == pytest.approx(0.1, abs=1e-14)


def test_verify_wick_verdicts():
    g = lambda a, b: np.exp(-abs(a - b))
    quads = np.random.default_rng(0).uniform(-1, 1, (5, 4))
    good = verify_wick(lambda *t: wick_expand(g, t), g, quads)
    assert isinstance(good, WickReport) and good.verdict == "pass"
    bad = verify_wick(lambda *t: 1.5 * wick_expand(g, t), g, quads)
    assert bad.verdict == "fail" and bad.defect_norm > 0.1
    measured = np.array([wick_expand(g, q) for q in quads])
    assert verify_wick(measured, g, quads).defect_norm < 1e-14
    assert verify_wick(measured, g, quads, relative=False).to_dict()["relative"] is False
    with pytest.raises(ValueError):
        verify_wick(measured[:2], g, quads)


def _const_gf(value, n=5):
    return ScalarGreenFunction(FrequencyGrid(-1, 1, n), np.full(n, value, complex), GFKind.RETARDED, 0.01)


def test_leg_and_ring_partial_sums_and_resummation():
    assert leg_partial_sum(0.5, 0.5, 1) == pytest.approx(0.25)
    assert ring_partial_sum(0.5, 0.5, 0) == pytest.approx(0.5)
    g, b = _const_gf(0.5), _const_gf(0.5)
    assert np.allclose(leg_sum(g, b).values, 1 / 3)
    assert np.allclose(ring_sum(g, b).values, 2 / 3)
    assert leg_partial_sum(0.5, 0.5, 40) == pytest.approx(1 / 3, rel=1e-14)
    assert ring_partial_sum(0.5, 0.5, 40) == pytest.approx(2 / 3, rel=1e-14)


def test_resummation_flags_divergent_series():
    out = leg_sum(_const_gf(2.0), _const_gf(0.6))
    assert out.flags.all() and np.all(out.values == 0)
    assert ring_sum(_const_gf(2.0), _const_gf(0.6)).flags.all()


def test_zero_kernel_gives_zero_correction():
    grid = TimeGrid(4.0, 21)
    g4 = G4Kernel.tabulated(grid, np.zeros((21,) * 4))
    val = g4_correction(g4, lambda t: np.exp(-t**2), lambda t: np.exp(-t**2), (0.0, 0.4))
    assert val == 0


def test_separable_kernel_matches_gaussian_integrals():
    grid = TimeGrid(8.0, 801)
    f = lambda t: np.exp(-np.asarray(t) ** 2)
    gauss = lambda t: np.exp(-np.asarray(t) ** 2)
    t1, t2 = 0.3, -0.5
    ring_ff = np.pi / np.sqrt(3)
    leg = lambda t: np.sqrt(np.pi / 2) * np.exp(-t**2 / 2)
    expected = 0.5 * (-f(t1) * f(t2) * ring_ff
                + 1j * ring_ff * (f(t1) * leg(t2) + f(t2) * leg(t1))
                + ring_ff * leg(t1) * leg(t2))
    val = g4_correction(G4Kernel.separable(grid, f), gauss, gauss, (t1, t2))
    assert val == pytest.approx(expected, rel=1e-10)


def test_tabulated_matches_separable():
    grid = TimeGrid(3.0, 13)
    f = lambda t: np.exp(-np.asarray(t) ** 2) * (1 + 0.2j * np.asarray(t))
    ring = lambda t: np.exp(-np.abs(t))
    leg = lambda t: 0.3 * np.exp(-np.asarray(t) ** 2)
    sep = G4Kernel.separable(grid, f)
    tab = G4Kernel.tabulated(grid, sep.table())
    times = (grid.t[5], grid.t[8])
    with pytest.warns(QuadratureResolutionWarning):
        a = g4_correction(sep, ring, leg, times)
    with pytest.warns(QuadratureResolutionWarning):
        b = g4_correction(tab, ring, leg, times)
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ValueError), pytest.warns(QuadratureResolutionWarning):
        g4_correction(tab, ring, leg, (0.1234, 0.0))


def test_resolution_warning_only_for_coarse_grids():
    f = lambda t: np.exp(-np.asarray(t) ** 2 / 0.01)
    with pytest.warns(QuadratureResolutionWarning):
        G4Kernel.separable(TimeGrid(2.0, 21), f).check_resolution()
    assert G4Kernel.separable(TimeGrid(2.0, 2001), f).check_resolution() < 0.25


def test_kernel_construction_validation():
    grid = TimeGrid(1.0, 3)
    with pytest.raises(ValueError):
        G4Kernel(grid)
    with pytest.raises(ValueError):
        G4Kernel.tabulated(grid, np.zeros((3, 3, 3)))


def test_corrected_two_time_without_kernel_is_dyson_result():
    grid = FrequencyGrid(-20, 20, 4001)
    w = grid.omega
    eta = 0.05
    g_s0 = ScalarGreenFunction(grid, 0.5 / (w - 1 + 1j * eta) - 0.5 / (w + 1 - 1j * eta), GFKind.TIME_ORDERED, eta)
    g_b0 = g_s0.replace(values=np.full(w.size, -0.02j))
    tgrid = TimeGrid(2.0, 5)
    zero = G4Kernel.tabulated(tgrid, np.zeros((5,) * 4))
    out = corrected_two_time(zero, g_s0, g_b0, (0.0, 0.0), base=0.7 + 0.1j)
    assert out == 0.7 + 0.1j
    default = corrected_two_time(zero, g_s0, g_b0, (0.0, 0.0))
    # free oscillator <x x>(0) = 1/2; the weak bath barely changes it
    assert default.real == pytest.approx(0.5, abs=0.05)


def test_ring_symmetry_factor_matches_exact_second_order():
    """Imaginary-time check of the lowest-order G4 coefficient.

    Anharmonic oscillator ``q`` coupled by ``lam q X`` to one bath mode. The
    exact ``lam^2`` coefficient of ``<T q(tau) q(0)>`` minus its Wick part must
    equal ``c * int int G4(tau, 0, x, y) D(x - y)`` with ``c`` the ring factor.
    """
    from gfrecon.wick import RING_SYMMETRY_FACTOR

    d, db, chi, beta, wb = 20, 10, 0.3, 1.5, 1.7
    lad = lambda n: np.diag(np.sqrt(np.arange(1, n)), 1)
    big = (lad(d + 4) + lad(d + 4).T) / np.sqrt(2)
    q = big[:d, :d]
    hs = np.diag(np.arange(d) + 0.5) + chi * np.linalg.matrix_power(big, 4)[:d, :d]
    x_b = lad(db) + lad(db).T
    hb = wb * np.diag(np.arange(db, dtype=float))

    def thermal_pair(h, op, tau):
        e, v = np.linalg.eigh(h)
        e = e - e[0]
        o = v.T @ op @ v
        w = np.exp(-beta * e)
        return np.array([np.sum(w[:, None] * np.exp(t * (e[:, None] - e[None, :])) * o * o.T)
                         for t in np.atleast_1d(tau)]) / w.sum()

    def coupled(lam, tau):
        h = np.kron(hs, np.eye(db)) + np.kron(np.eye(d), hb) + lam * np.kron(q, x_b)
        return thermal_pair(h, np.kron(q, np.eye(db)), tau)

    tau = 0.4
    second = lambda lam: (coupled(lam, tau) + coupled(-lam, tau) - 2 * coupled(0, tau))[0] / (2 * lam**2)
    c2 = (4 * second(0.01) - second(0.02)) / 3

    es, vs = np.linalg.eigh(hs)
    es = es - es[0]
    qs = vs.T @ q @ vs
    ws = np.exp(-beta * es)
    ws = ws / ws.sum()
    g2 = lambda t: thermal_pair(hs, q, np.mod(t, beta))
    q_t = lambda t: np.exp(t * es)[:, None] * qs * np.exp(-t * es)[None, :]

    def four(ts):
        m = np.eye(d)
        for k in np.argsort(ts)[::-1]:
            m = m @ q_t(ts[k])
        return np.sum(ws * np.diag(m))

    nb = 1 / np.expm1(beta * wb)
    bath = lambda t: (nb + 1) * np.exp(-np.abs(t) * wb) + nb * np.exp(np.abs(t) * wb)
    s = np.linspace(0, beta, 41)
    w = np.full(s.size, s[1])
    w[[0, -1]] /= 2
    g_tau, g_0 = g2(tau - s), g2(s)
    kernel = bath(s[:, None] - s[None, :])
    wick_part = np.einsum("i,ij,j,i,j->", g_tau, kernel, g_0, w, w)
    pair = g2((s[:, None] - s[None, :]).ravel()).reshape(s.size, s.size)
    g4 = np.array([[four([tau, 0.0, x, y]) for y in s] for x in s])
    g4 = g4 - (g2(tau)[0] * pair + np.outer(g_tau, g_0) + np.outer(g_0, g_tau))
    g4_int = np.einsum("ij,ij,i,j->", g4, kernel, w, w)
    assert (c2 - wick_part) / g4_int == pytest.approx(RING_SYMMETRY_FACTOR, abs=0.01)
