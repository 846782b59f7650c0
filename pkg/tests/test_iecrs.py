import math

import numpy as np
import pytest

from ecrs.iecrs import (AoOptions, omega_matrix, solve_phase1,
                        solve_phase2_low, solve_phase2_sca, solve_iecrs,
                        surrogate_terms, span_basis)
from ecrs.rates import rate_phase2_iecrs, iecrs_rates
from ecrs.scene import SceneConfig, sample_scene

import oracles


# ---------------------------------------------------------------------------
# delay phasor Gram matrix


def test_omega_distinct_delays_identity():
    rng = np.random.default_rng(0)
    for n_c in (16, 64):
        tau = rng.choice(n_c, size=5, replace=False)
        om = omega_matrix(tau, n_c)
        assert np.max(np.abs(om - n_c * np.eye(5))) < 1e-9


def test_omega_equal_delay_pair():
    om = omega_matrix(np.array([3, 3]), 32)
    assert om[0, 1] == pytest.approx(32, abs=1e-9)


def test_omega_k1():
    om = omega_matrix(np.array([7]), 64)
    assert om.shape == (1, 1)
    assert om[0, 0] == pytest.approx(64, abs=1e-9)


# ---------------------------------------------------------------------------
# phase 2


def test_low_uses_all_power():
    rng = np.random.default_rng(1)
    g = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    p_k = np.abs(rng.standard_normal(5))
    g_bar, _ = solve_phase2_low(g, np.arange(5), p_k, 64)
    assert np.sum(np.abs(g_bar) ** 2) == pytest.approx(
        np.sum(np.abs(g) ** 2 * p_k), rel=1e-12)


def test_sca_k1_hits_disk_boundary():
    g = np.array([0.6 + 0.2j])
    p_k = np.array([1.5])
    g_bar, r2, _ = solve_phase2_sca(g, np.array([3]), p_k, 64)
    assert abs(g_bar[0]) == pytest.approx(abs(g[0]) * math.sqrt(1.5), rel=1e-4)
    g_low, r_low = solve_phase2_low(g, np.array([3]), p_k, 64)
    assert r2 == pytest.approx(r_low, rel=1e-6)


def test_sca_near_low_at_low_power():
    cfg = SceneConfig(k=5, p_k_dbm=-30.0, n_c=128)
    ch = sample_scene(cfg, seed=11)
    g_bar, r_sca, _ = solve_phase2_sca(ch.g, ch.tau, cfg.p_k_mw, cfg.n_c)
    _, r_low = solve_phase2_low(ch.g, ch.tau, cfg.p_k_mw, cfg.n_c)
    assert abs(r_low - r_sca) / r_sca <= 0.01


def test_sca_equal_delays_cophase():
    # both relayed signals land in the same tap: phases must align
    g = np.array([0.5 * np.exp(1j * 0.8), 0.7 * np.exp(-1j * 1.9)])
    tau = np.array([4, 4])
    p_k = np.array([1.0, 1.0])
    g_bar, r2, _ = solve_phase2_sca(g, tau, p_k, 32)
    phases = np.angle(g_bar)
    dphi = abs(((phases[0] - phases[1]) + np.pi) % (2 * np.pi) - np.pi)
    assert dphi < 1e-3
    assert np.abs(g_bar) == pytest.approx(np.abs(g), rel=1e-4)  # full power
    coherent = math.log2(1.0 + (np.abs(g) @ np.sqrt(p_k)) ** 2)
    assert r2 == pytest.approx(coherent, rel=1e-5)


def test_sca_trace_monotone():
    cfg = SceneConfig(k=4, n_c=64)
    ch = sample_scene(cfg, seed=5)
    _, _, trace = solve_phase2_sca(ch.g, ch.tau, cfg.p_k_mw, cfg.n_c)
    d = np.diff(trace.values)
    assert np.all(d >= -1e-8)


def test_sca_matches_grid_oracle_k2():
    rng = np.random.default_rng(7)
    for trial in range(3):
        g = 0.7 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        tau = rng.choice(16, size=2, replace=False)
        p_k = np.array([1.0, 1.0])
        _, r_sca, _ = solve_phase2_sca(g, tau, p_k, 16)
        r_star = oracles.iecrs_phase2_oracle(g, tau, p_k, 16)
        assert r_sca == pytest.approx(r_star, abs=5e-3)


def test_surrogate_tangent_at_local_point():
    rng = np.random.default_rng(9)
    k, n_c = 3, 32
    g_local = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    tau = rng.integers(0, 20, size=k)
    P, r = surrogate_terms(g_local, tau, n_c)
    x = np.empty(2 * k)
    x[0::2] = g_local.real
    x[1::2] = g_local.imag
    from ecrs.rates import ofdm_gains
    exact = np.abs(ofdm_gains(g_local, tau, n_c)) ** 2
    assert np.allclose(r + P @ x, 1.0 + exact, atol=1e-10)


# ---------------------------------------------------------------------------
# phase 1


def test_phase1_k1_single_antenna_matches_grid():
    res = solve_phase1(np.array([[1.0 + 0j]]), 1.0)
    star = oracles.iecrs_phase1_oracle(np.array([1.0]), 1.0)
    assert -res.t0 == pytest.approx(star, abs=1e-3)


def test_phase1_k2_single_antenna_matches_grid():
    rng = np.random.default_rng(13)
    for _ in range(3):
        h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        H = h[None, :]
        p_ap = 2.0
        res = solve_phase1(H, p_ap)
        star = oracles.iecrs_phase1_oracle(np.abs(h) ** 2, p_ap)
        assert -res.t0 == pytest.approx(star, abs=5e-3)


def test_phase1_zero_power_limit():
    res = solve_phase1(np.array([[1.0 + 0j]]), 1e-9)
    assert -res.t0 < 1e-8
    assert res.t0 <= 0.0


def test_phase1_trace_monotone_default_scene():
    cfg = SceneConfig(n_v=4, n_h=4, k=5)
    ch = sample_scene(cfg, seed=3)
    res = solve_phase1(ch.H, cfg.p_ap_mw)
    d = np.diff(res.trace.values)
    assert np.all(d <= 1e-8)


def test_phase1_power_feasible_and_split_consistent():
    cfg = SceneConfig(n_v=4, n_h=2, k=3)
    ch = sample_scene(cfg, seed=8)
    res = solve_phase1(ch.H, cfg.p_ap_mw)
    assert np.sum(np.abs(res.F) ** 2) <= cfg.p_ap_mw * (1 + 1e-8)
    r_c, r_p = iecrs_rates(ch.H, res.F)
    # decode constraint tight at the binding mUE after retightening
    assert np.min(r_c) - np.sum(res.c) == pytest.approx(0.0, abs=1e-9)
    assert -res.t0 == pytest.approx(min(np.min(r_p + res.c[:3]), res.c_d),
                                    abs=1e-12)


def test_span_basis_rejects_zero():
    with pytest.raises(ValueError):
        span_basis(np.zeros((4, 2), dtype=complex))


# ---------------------------------------------------------------------------
# full scheme


def test_solve_iecrs_min_assembly():
    cfg = SceneConfig(n_v=4, n_h=4, k=3, n_c=128)
    ch = sample_scene(cfg, seed=21)
    prec, rep = solve_iecrs(ch, cfg, AoOptions(phase2="sca"))
    assert rep.r_d == pytest.approx(min(rep.c_split[-1], rep.r_d_phase2),
                                    rel=1e-12)
    assert rep.min_rate == pytest.approx(
        min(np.min(rep.r_mue), rep.r_d), rel=1e-12)
    # power feasibility of both phases
    assert prec.power() <= cfg.p_ap_mw * (1 + 1e-8)
    lim = np.abs(ch.g) ** 2 * cfg.p_k_mw
    assert np.all(np.abs(prec.g_bar) ** 2 <= lim * (1 + 1e-8) + 1e-15)


def test_solve_iecrs_pinned_common_parts():
    cfg = SceneConfig(n_v=2, n_h=2, k=3, n_c=64)
    ch = sample_scene(cfg, seed=22)
    prec, rep = solve_iecrs(ch, cfg, AoOptions(phase2="low"), pin_common=True)
    assert np.all(prec.c[:3] == 0.0)
    assert rep.scheme == "ic_noma"


def test_solve_iecrs_auto_switches_to_low():
    cfg = SceneConfig(n_v=2, n_h=2, k=2, n_c=1024)
    ch = sample_scene(cfg, seed=23)
    opts = AoOptions(phase2="auto")
    prec, rep = solve_iecrs(ch, cfg, opts)
    _, r_low = solve_phase2_low(ch.g, ch.tau, cfg.p_k_mw, cfg.n_c)
    assert rep.r_d_phase2 == pytest.approx(r_low, rel=1e-12)
