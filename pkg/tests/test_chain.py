import numpy as np
import pytest

from gfrecon.bath import BathModel, OhmicExpCutoff
from gfrecon.chain import (ChainModel, dispersion, g_retarded_k, g_s0_matsubara_k, g_sb_matsubara_k,
                           g_site_matsubara, lindblad_rate, mode_data, mode_transform, qrt_correlators,
                           site_matrix_matsubara, site_matrix_retarded, site_to_k)
from gfrecon.greens import FrequencyGrid


def test_dispersion_examples():
    m = ChainModel(4, coupling=0.5)
    assert dispersion(m, 2) == pytest.approx(np.sqrt(2.0), rel=1e-15)
    assert dispersion(m, 2) == pytest.approx(1.414214, abs=1e-6)
    assert dispersion(m, 4) == pytest.approx(1.0)
    assert np.allclose(ChainModel(5, coupling=0.0).frequencies(), 1.0)


def test_dispersion_symmetry_and_range():
    m = ChainModel(7, omega_r=1.3, coupling=0.8)
    k = np.arange(1, 7)
    assert np.array_equal(dispersion(m, k), dispersion(m, 7 - k))
    for bad in (0, 8):
        with pytest.raises(ValueError):
            dispersion(m, bad)


def test_lindblad_rate_examples():
    j = OhmicExpCutoff(0.2, np.inf)
    m = ChainModel(5, coupling=0.4)
    assert np.allclose(lindblad_rate(m, j, m.ks), 0.1, rtol=1e-14)
    assert np.all(lindblad_rate(m, OhmicExpCutoff(0.0), m.ks) == 0)
    heavy = ChainModel(5, mass=2.0, coupling=0.4)
    assert np.allclose(lindblad_rate(heavy, j, heavy.ks), 0.05)


def test_mode_data_occupations():
    m = ChainModel(3, coupling=0.3)
    data = mode_data(m, OhmicExpCutoff(0.1), np.inf)
    assert np.all(data.occupations == 0)
    hot = mode_data(m, OhmicExpCutoff(0.1), 1.0)
    assert np.allclose(hot.occupations, 1 / np.expm1(data.frequencies))


def test_g_s0_matsubara_single_mode_value():
    m = ChainModel(1)
    assert g_s0_matsubara_k(m, 1, 2 * np.pi, 1.0) == pytest.approx(-0.5 + 0j, abs=1e-15)


def test_g_s0_matsubara_decays_like_inverse_square():
    m = ChainModel(3, coupling=0.4)
    wn = np.array([1e3, 1e4])
    g = g_s0_matsubara_k(m, 1, 1.0, wn)
    # (N / 2m Omega) (-2 Omega / (wn^2 + Omega^2)) -> -N / (m wn^2)
    assert np.allclose(g * wn**2, -3.0, rtol=1e-5)


def test_g_s0_matsubara_dispersionless_is_k_independent():
    m = ChainModel(4, coupling=0.0)
    values = [g_s0_matsubara_k(m, k, 1.0, 2.0) for k in m.ks]
    assert np.allclose(values, values[0], rtol=0, atol=0)


def test_g_sb_matsubara_examples():
    m = ChainModel(1)
    wn = np.array([0.5, 1.0, 2.0])
    assert np.allclose(g_sb_matsubara_k(m, 1, 0.0, wn), g_s0_matsubara_k(m, 1, 1.0, wn))
    # single-fraction form: 1 / ((i + 0.05 i)^2 - 1) = -1 / 2.1025
    assert g_sb_matsubara_k(m, 1, 0.1, 1.0) == pytest.approx(-1 / 2.1025, rel=1e-14)
    with pytest.raises(ValueError):
        g_sb_matsubara_k(m, 1, -0.1, 1.0)


def test_broadening_suppresses_modulus_near_resonance():
    m = ChainModel(2, coupling=0.5)
    wn = np.linspace(0.5, 2.0, 31)
    for k in m.ks:
        assert np.all(np.abs(g_sb_matsubara_k(m, k, 0.2, wn)) <= np.abs(g_s0_matsubara_k(m, k, 1.0, wn)))


def test_pole_pair_and_single_fraction_agree():
    m = ChainModel(6, mass=1.7, coupling=0.6)
    wn = np.linspace(0.3, 5, 17)
    for k in m.ks:
        a = g_sb_matsubara_k(m, k, 0.07, wn)
        b = g_retarded_k(m, k, 0.07, 1j * wn)
        assert np.abs(a - b).max() < 1e-14 * np.abs(b).max()


def test_site_function_translation_invariance():
    m = ChainModel(5, coupling=0.4)
    wn = np.array([0.7, 1.9])
    g = site_matrix_matsubara(m, 2.0, wn, rates=0.05)
    for j1 in range(5):
        for j2 in range(5):
            ref = g[:, (j1 - j2) % 5, 0]
            assert np.allclose(g[:, j1, j2], ref, rtol=0, atol=1e-15)


def test_site_function_single_site_reduces_to_mode_form():
    m = ChainModel(1)
    wn = np.array([0.4, 1.3])
    assert np.allclose(g_site_matsubara(m, 0, 0, 3.0, wn), g_s0_matsubara_k(m, 1, 3.0, wn), rtol=1e-14)
    with pytest.raises(ValueError):
        g_site_matsubara(m, 0, 1, 3.0, wn)


def test_site_to_k_recovers_mode_form_and_occupations_cancel():
    m = ChainModel(6, coupling=0.5)
    beta = 0.7  # finite temperature: occupation factors must cancel
    wn = 2 * np.pi * np.arange(1, 6) / beta
    rates = m.rates(OhmicExpCutoff(0.05, np.inf))
    gk = site_to_k(m, site_matrix_matsubara(m, beta, wn, rates))
    for k in m.ks:
        assert np.abs(gk[:, k - 1] - g_sb_matsubara_k(m, k, rates[k - 1], wn)).max() < 1e-12


def test_site_matrix_symmetric_and_translation_invariant():
    m = ChainModel(4, coupling=0.5)
    g = site_matrix_retarded(m, FrequencyGrid(0, 2, 51), rates=0.05, eta=1e-3).values
    assert np.allclose(g, np.swapaxes(g, 1, 2), atol=1e-15)
    for shift in range(4):
        rolled = np.roll(np.roll(g, shift, axis=1), shift, axis=2)
        assert np.allclose(rolled, g, atol=1e-15)


def test_per_mode_dyson_identity_residual_is_second_order():
    # G_SB = G_S0 + G_S0 G_SB (sum_j G_B0^jj / N^2) with G_B0^jj = J/2, linear J
    m = ChainModel(4, coupling=0.5)
    beta = 2 * np.pi
    wn = np.arange(1, 21, dtype=float)

    def residual(alpha):
        j = OhmicExpCutoff(alpha, np.inf)
        b = BathModel(j, beta, m.n_sites).matsubara_values(wn)
        worst = 0.0
        for k in m.ks:
            g0 = g_s0_matsubara_k(m, k, beta, wn)
            gsb = g_sb_matsubara_k(m, k, lindblad_rate(m, j, k), wn)
            worst = max(worst, np.abs(gsb - g0 - g0 * gsb * (m.n_sites * b / m.n_sites**2)).max() / np.abs(g0).max())
        return worst

    r1, r2 = residual(0.02), residual(0.01)
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)


def test_qrt_examples():
    m = ChainModel(3, coupling=0.4)
    c = qrt_correlators(m, 0.1, np.inf, 10.0, 0.0, 2)
    assert c.ad_a == 0 and c.aa == 0 and c.ad_ad == 0
    assert abs(c.a_ad) == pytest.approx(np.exp(-0.5), rel=1e-14)
    assert abs(c.a_ad) == pytest.approx(0.60653, abs=1e-5)
    hot = qrt_correlators(m, 0.1, 0.8, 1.3, 1.3, 1)
    assert hot.a_ad - hot.ad_a == pytest.approx(1.0, abs=1e-14)


def test_qrt_phase_follows_free_evolution():
    m = ChainModel(3, coupling=0.4)
    omega = dispersion(m, 1)
    c = qrt_correlators(m, 0.0, 1.0, 2.0, 0.5, 1)
    nbar = 1 / np.expm1(omega)
    assert c.a_ad == pytest.approx((nbar + 1) * np.exp(-1j * omega * 1.5), rel=1e-14)
    assert c.ad_a == pytest.approx(nbar * np.exp(1j * omega * 1.5), rel=1e-14)


def test_mode_transform_is_canonical():
    for n, coupling in ((1, 0.0), (3, 0.4), (6, 0.9)):
        t = mode_transform(ChainModel(n, mass=1.3, omega_r=0.8, coupling=coupling))
        assert np.allclose(t.commutator_qp(), np.eye(n), atol=1e-13)
        assert np.allclose(t.commutator_d(), np.eye(n), atol=1e-13)


def test_mode_transform_coefficient_modulus():
    m = ChainModel(5, omega_r=1.2, coupling=0.7)
    t = mode_transform(m)
    omega_k = m.frequencies()
    expected = (np.sqrt(1.2 / omega_k) + np.sqrt(omega_k / 1.2)) / (2 * np.sqrt(5))
    assert np.allclose(np.abs(t.d_a), expected[None, :], rtol=1e-14)


def test_mode_transform_single_site_and_decoupled_limit():
    m = ChainModel(1, mass=2.0, omega_r=1.5)
    t = mode_transform(m)
    assert np.allclose(t.q_a, np.sqrt(1 / (2 * 2.0 * 1.5)))
    assert np.allclose(t.q_adag, np.sqrt(1 / (2 * 2.0 * 1.5)))
    free = mode_transform(ChainModel(4, coupling=0.0))
    assert np.allclose(free.d_adag, 0)
    assert np.allclose(free.d_a @ free.d_a.conj().T, np.eye(4))
