import math

import numpy as np
import pytest

from ecrs.chanest import (PilotConfig, EstimationResult, default_roots,
                          gen_pilots, shifted_pilot, simulate_pilot_rx,
                          delay_profiles, estimate_delays, estimate_gains,
                          estimate, metrics, estimate_scene)
from ecrs.scene import Channels, SceneConfig, sample_scene, max_coop_delay


def make_cfg(n_pilot=37, k=2, tau_max=10, p_dbm=0.0):
    return PilotConfig(n_pilot=n_pilot, roots=default_roots(k, n_pilot),
                       p_dbm=p_dbm, tau_max=tau_max, n_rx=tau_max + n_pilot)


def make_channels(g, tau):
    g = np.asarray(g, complex)
    k = len(g)
    return Channels(H=np.ones((1, k), complex), g=g,
                    tau=np.asarray(tau, np.int64), positions=np.zeros((k, 3)))


# ---------------------------------------------------------------------------
# pilots


def test_pilot_norm():
    for n_p in (37, 50, 100):
        cfg = make_cfg(n_pilot=n_p, k=3)
        psi = gen_pilots(cfg)
        assert np.allclose(np.sum(np.abs(psi) ** 2, axis=0), n_p, atol=1e-12)


def test_default_roots_coprime():
    # even length: coprimality is against the prime core (97 for 100)
    assert default_roots(5, 100) == (1, 2, 3, 4, 5)
    assert default_roots(3, 37) == (1, 2, 3)
    assert default_roots(3, 9) == (1, 2, 4)  # odd length used as-is


def test_cyclic_autocorrelation_small():
    cfg = make_cfg(n_pilot=37, k=1)
    psi = gen_pilots(cfg)[:, 0]
    for shift in (1, 5, 18):
        corr = abs(np.vdot(np.roll(psi, shift), psi)) / 37.0
        assert corr < 1e-10  # ideal cyclic autocorrelation


def test_linear_autocorrelation_bounded():
    cfg = make_cfg(n_pilot=37, k=1)
    psi = gen_pilots(cfg)[:, 0]
    n_rx = 37 + 10
    ref = shifted_pilot(psi, 0, n_rx)
    worst = max(abs(np.vdot(shifted_pilot(psi, t, n_rx), ref)) / 37.0
                for t in range(1, 11))
    assert worst <= 1.0 / math.sqrt(37) + 0.05


def test_cross_correlation_near_sqrt_np():
    cfg = make_cfg(n_pilot=37, k=2)
    psi = gen_pilots(cfg)
    vals = [abs(np.vdot(np.roll(psi[:, 0], s), psi[:, 1])) / 37.0
            for s in range(37)]
    assert np.mean(vals) == pytest.approx(1.0 / math.sqrt(37), rel=0.25)


def test_pilot_config_validation():
    with pytest.raises(ValueError):
        PilotConfig(n_pilot=37, roots=(1, 1), p_dbm=0.0, tau_max=5, n_rx=50)
    with pytest.raises(ValueError):
        PilotConfig(n_pilot=37, roots=(37,), p_dbm=0.0, tau_max=5, n_rx=50)
    with pytest.raises(ValueError):
        PilotConfig(n_pilot=37, roots=(1,), p_dbm=0.0, tau_max=20, n_rx=50)


# ---------------------------------------------------------------------------
# received signal


def test_rx_noiseless_single_pilot():
    cfg = make_cfg(k=1, p_dbm=0.0)
    psi = gen_pilots(cfg)
    ch = make_channels([1.0], [0])
    y = simulate_pilot_rx(psi, ch, cfg, noise=False)
    assert np.allclose(y, shifted_pilot(psi[:, 0], 0, cfg.n_rx))


def test_rx_noiseless_matches_matrix_form():
    cfg = make_cfg(k=2)
    psi = gen_pilots(cfg)
    ch = make_channels([0.5 + 0.1j, -0.2 + 0.9j], [3, 7])
    y = simulate_pilot_rx(psi, ch, cfg, noise=False)
    big_psi = np.column_stack([shifted_pilot(psi[:, i], int(ch.tau[i]),
                                             cfg.n_rx) for i in range(2)])
    assert np.allclose(y, math.sqrt(cfg.p_mw) * big_psi @ ch.g)


def test_rx_noise_variance():
    cfg = make_cfg(n_pilot=50, k=1, tau_max=4)
    psi = gen_pilots(cfg)
    ch = make_channels([0.3], [1])
    clean = simulate_pilot_rx(psi, ch, cfg, noise=False)
    acc = 0.0
    n_draws = 200
    for seed in range(n_draws):
        y = simulate_pilot_rx(psi, ch, cfg, noise_seed=seed)
        acc += np.mean(np.abs(y - clean) ** 2)
    assert acc / n_draws == pytest.approx(1.0, rel=0.05)


def test_rx_rejects_out_of_range_delay():
    cfg = make_cfg(k=1, tau_max=5)
    psi = gen_pilots(cfg)
    ch = make_channels([1.0], [9])
    with pytest.raises(ValueError):
        simulate_pilot_rx(psi, ch, cfg)


# ---------------------------------------------------------------------------
# delay estimation


def test_delays_noiseless_k1_exact():
    cfg = make_cfg(n_pilot=37, k=1, tau_max=10)
    psi = gen_pilots(cfg)
    for tau in (0, 4, 10):
        ch = make_channels([0.7 - 0.4j], [tau])
        y = simulate_pilot_rx(psi, ch, cfg, noise=False)
        assert estimate_delays(y, psi, cfg)[0] == tau


def test_delays_noiseless_k5_saturation():
    # Interference between pilots (not noise) limits short pilots: a few
    # scenes still miss at length 100 under this geometry's near-far spread,
    # while length 200 is error free.
    cfg0 = SceneConfig(k=5)
    wrong = {100: 0, 200: 0}
    used = 0
    seed = 0
    while used < 40 and seed < 200:
        ch = sample_scene(cfg0, seed=seed)
        seed += 1
        if len(set(ch.tau.tolist())) < 5:
            continue
        used += 1
        for n_p in wrong:
            res = estimate_scene(ch, cfg0, n_pilot=n_p, noise_seed=seed,
                                 noise=False)
            wrong[n_p] += int(np.sum(res.tau_hat != ch.tau))
    assert wrong[200] == 0
    assert wrong[100] <= 0.05 * used * 5


def test_delays_degenerate_snr_uniform_guess():
    cfg = make_cfg(n_pilot=37, k=1, tau_max=9, p_dbm=-300.0)
    psi = gen_pilots(cfg)
    wrong = 0
    runs = 400
    for seed in range(runs):
        ch = make_channels([1.0], [3])
        y = simulate_pilot_rx(psi, ch, cfg, noise_seed=seed)
        wrong += int(estimate_delays(y, psi, cfg)[0] != 3)
    assert wrong / runs == pytest.approx(9.0 / 10.0, abs=0.08)


def test_projection_decomposition():
    # profile = signal + interference + noise terms, accumulated separately
    cfg = make_cfg(n_pilot=37, k=2, tau_max=8)
    psi = gen_pilots(cfg)
    ch = make_channels([0.8, 0.5j], [2, 6])
    rng_seed = 5
    y = simulate_pilot_rx(psi, ch, cfg, noise_seed=rng_seed)
    prof = delay_profiles(y, psi, cfg)
    amp = math.sqrt(cfg.p_mw)
    noise = y - simulate_pilot_rx(psi, ch, cfg, noise=False)
    for k in range(2):
        for t in range(cfg.tau_max + 1):
            probe = shifted_pilot(psi[:, k], t, cfg.n_rx)
            sig = amp * np.vdot(probe, shifted_pilot(psi[:, k],
                                                     int(ch.tau[k]),
                                                     cfg.n_rx)) * ch.g[k]
            intf = sum(amp * np.vdot(probe,
                                     shifted_pilot(psi[:, i], int(ch.tau[i]),
                                                   cfg.n_rx)) * ch.g[i]
                       for i in range(2) if i != k)
            nz = np.vdot(probe, noise)
            assert prof[k, t] == pytest.approx(sig + intf + nz, abs=1e-9)


# ---------------------------------------------------------------------------
# gain estimation


def test_gains_noiseless_exact():
    cfg = make_cfg(n_pilot=50, k=3, tau_max=12)
    psi = gen_pilots(cfg)
    ch = make_channels([0.5, -0.3 + 0.2j, 1.1j], [0, 5, 12])
    y = simulate_pilot_rx(psi, ch, cfg, noise=False)
    g_hat, deficient = estimate_gains(y, psi, ch.tau, cfg)
    assert not deficient
    nmse = np.sum(np.abs(g_hat - ch.g) ** 2) / np.sum(np.abs(ch.g) ** 2)
    assert nmse <= 1e-20


def test_gains_wrong_delay_projection_loss():
    cfg = make_cfg(n_pilot=37, k=1, tau_max=5)
    psi = gen_pilots(cfg)
    g = 0.9 - 0.2j
    ch = make_channels([g], [2])
    y = simulate_pilot_rx(psi, ch, cfg, noise=False)
    g_hat, _ = estimate_gains(y, psi, np.array([3]), cfg)
    # direct computation of the mismatched LS solution
    probe = shifted_pilot(psi[:, 0], 3, cfg.n_rx)
    truth = shifted_pilot(psi[:, 0], 2, cfg.n_rx)
    expected = np.vdot(probe, truth) * g / 37.0
    assert g_hat[0] == pytest.approx(expected, abs=1e-12)
    nmse = abs(g_hat[0] - g) ** 2 / abs(g) ** 2
    assert nmse > 0.5  # badly wrong when the delay is off by one


def test_gains_rank_deficient_flagged():
    cfg = PilotConfig(n_pilot=37, roots=(1, 1 + 37), p_dbm=0.0,
                      tau_max=5, n_rx=42)  # same sequence modulo length
    psi = gen_pilots(cfg)
    ch = make_channels([0.5, 0.5], [2, 2])
    y = simulate_pilot_rx(psi, ch, cfg, noise=False)
    g_hat, deficient = estimate_gains(y, psi, np.array([2, 2]), cfg)
    assert deficient


def test_power_compensation():
    cfg = make_cfg(n_pilot=50, k=1, tau_max=4, p_dbm=17.0)
    psi = gen_pilots(cfg)
    ch = make_channels([0.35 + 0.1j], [1])
    y = simulate_pilot_rx(psi, ch, cfg, noise=False)
    res = estimate(y, psi, cfg)
    assert res.g_hat[0] == pytest.approx(ch.g[0], abs=1e-12)


# ---------------------------------------------------------------------------
# metrics


def test_metrics_trivial():
    g = np.array([1.0 + 0j])
    right = EstimationResult(tau_hat=np.array([3]), g_hat=g.copy())
    wrong = EstimationResult(tau_hat=np.array([4]), g_hat=g * 0.0)
    der, nmse = metrics([(g, [3])], [right])
    assert der == 0.0 and nmse == 0.0
    der, nmse = metrics([(g, [3])], [wrong])
    assert der == 1.0 and nmse == 1.0


def test_metrics_mixed():
    g = np.ones(5, complex)
    est = EstimationResult(tau_hat=np.array([0, 1, 2, 3, 9]), g_hat=g.copy())
    der, _ = metrics([(g, [0, 1, 2, 3, 4])], [est])
    assert der == pytest.approx(0.2)


def test_metrics_requires_runs():
    with pytest.raises(ValueError):
        metrics([], [])


def test_scene_pilot_window_covers_delays():
    cfg = SceneConfig(k=8)
    pc = PilotConfig.for_scene(cfg, n_pilot=100)
    for seed in range(10):
        ch = sample_scene(cfg, seed=seed)
        assert np.all(ch.tau <= pc.tau_max)
