import math

import numpy as np
import pytest

from ecrs.baselines import (init_mrt_svd, init_mrt_decrs, solve_ic_noma,
                            solve_dc_noma, solve_st, st_phase2_rate)
from ecrs.iecrs import AoOptions, solve_iecrs, solve_phase1
from ecrs.rates import iecrs_rates
from ecrs.scene import SceneConfig, sample_scene


def test_init_mrt_svd_power_exact():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
    F = init_mrt_svd(H, 2.5)
    assert np.sum(np.abs(F) ** 2) == pytest.approx(2.5, rel=1e-12)


def test_init_mrt_svd_k1_collinear():
    rng = np.random.default_rng(1)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    F = init_mrt_svd(h[:, None], 1.0)
    # rank-1 SVD: common and private beams align with the channel
    cos_c = abs(np.vdot(F[:, 0], h)) / (np.linalg.norm(F[:, 0]) * np.linalg.norm(h))
    cos_p = abs(np.vdot(F[:, 1], h)) / (np.linalg.norm(F[:, 1]) * np.linalg.norm(h))
    assert cos_c == pytest.approx(1.0, abs=1e-12)
    assert cos_p == pytest.approx(1.0, abs=1e-12)


def test_init_mrt_svd_orthogonal_equal_projections():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], dtype=complex)
    F = init_mrt_svd(H, 1.0)
    p0 = abs(np.vdot(H[:, 0], F[:, 0]))
    p1 = abs(np.vdot(H[:, 1], F[:, 0]))
    assert p0 == pytest.approx(p1, abs=1e-9)


def test_init_mrt_decrs_layout():
    rng = np.random.default_rng(2)
    H = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    F = init_mrt_decrs(H, 3.0)
    assert F.shape == (4, 6)
    assert np.sum(np.abs(F) ** 2) == pytest.approx(3.0, rel=1e-12)
    for j in range(6):
        assert np.sum(np.abs(F[:, j]) ** 2) == pytest.approx(0.5, rel=1e-12)
    assert np.allclose(F[:, 0], F[:, 3])  # common k aligns with private k


def test_ic_noma_pins_common_parts():
    cfg = SceneConfig(n_v=2, n_h=2, k=3, n_c=64)
    ch = sample_scene(cfg, seed=2)
    rep = solve_ic_noma(ch, cfg, AoOptions(phase2="low"))
    assert np.all(rep.c_split[:3] == 0.0)
    # the pinned solution is feasible for the unpinned problem
    assert rep.common_slack >= -1e-9


def test_st_k2_equal_gains():
    assert st_phase2_rate(np.array([0.5, 0.5]),
                          np.array([4.0, 4.0])) == pytest.approx(math.log2(5))


def test_st_k1_equals_full_scheme():
    cfg = SceneConfig(n_v=2, n_h=2, k=1, n_c=64)
    ch = sample_scene(cfg, seed=3)
    opts = AoOptions(phase2="sca")
    p1 = solve_phase1(ch.H, cfg.p_ap_mw, opts)
    _, rep_st = solve_st(ch, cfg, opts, phase1=p1)
    _, rep_ie = solve_iecrs(ch, cfg, opts, phase1=p1)
    assert rep_st.min_rate == pytest.approx(rep_ie.min_rate, abs=2e-4)


def test_st_dominates_iecrs_per_scene():
    cfg = SceneConfig(n_v=2, n_h=2, k=4, n_c=64)
    opts = AoOptions(phase2="sca")
    for seed in range(3):
        ch = sample_scene(cfg, seed=seed)
        p1 = solve_phase1(ch.H, cfg.p_ap_mw, opts)
        _, rep_st = solve_st(ch, cfg, opts, phase1=p1)
        _, rep_ie = solve_iecrs(ch, cfg, opts, phase1=p1)
        assert rep_st.min_rate >= rep_ie.min_rate - 1e-9


def test_iecrs_dominates_ic_noma_on_average():
    cfg = SceneConfig(n_v=2, n_h=2, k=3, n_c=64)
    opts = AoOptions(phase2="low")
    diffs = []
    for seed in range(8):
        ch = sample_scene(cfg, seed=seed)
        _, rep_ie = solve_iecrs(ch, cfg, opts)
        rep_ic = solve_ic_noma(ch, cfg, opts)
        diffs.append(rep_ie.min_rate - rep_ic.min_rate)
    assert np.mean(diffs) >= -1e-3


def test_dc_noma_pins_common_parts():
    cfg = SceneConfig(n_v=2, n_h=2, k=2, n_c=64)
    ch = sample_scene(cfg, seed=5)
    rep = solve_dc_noma(ch, cfg)
    assert np.all(rep.c_split[:2] == 0.0)


def test_zero_mue_power_kills_relayed_rate():
    cfg = SceneConfig(n_v=2, n_h=2, k=2, n_c=64, p_k_dbm=float("-inf"))
    ch = sample_scene(cfg, seed=6)
    rep_ic = solve_ic_noma(ch, cfg, AoOptions(phase2="low"))
    rep_dc = solve_dc_noma(ch, cfg)
    assert rep_ic.r_d == 0.0
    assert rep_dc.r_d == 0.0
