"""Benchmark schemes and shared precoder initializers.

The NOMA-style baselines reuse the full optimizers with the per-mUE common
rate parts pinned to zero, so their feasible sets are literal subsets of the
rate-splitting ones.  The single-tap baseline replaces the second phase by
the coherent flat-channel optimum.
"""

from __future__ import annotations

import math

import numpy as np

from .rates import RateReport, combine_rates_iecrs, iecrs_rates
from .scene import Channels, SceneConfig


def init_mrt_svd(H: np.ndarray, p_ap: float,
                 common_fraction: float = 0.5) -> np.ndarray:
    """Common column from the dominant left singular vector, private columns
    matched to each channel, scaled to spend the full power budget."""
    if not np.any(H):
        raise ValueError("zero channel matrix")
    k = H.shape[1]
    u, _, _ = np.linalg.svd(H, full_matrices=False)
    F = np.empty((H.shape[0], k + 1), dtype=complex)
    F[:, 0] = u[:, 0] * math.sqrt(common_fraction * p_ap)
    p_priv = (1.0 - common_fraction) * p_ap / k
    for i in range(k):
        F[:, 1 + i] = H[:, i] / np.linalg.norm(H[:, i]) * math.sqrt(p_priv)
    return F


def init_mrt_decrs(H: np.ndarray, p_ap: float) -> np.ndarray:
    """Matched-filter columns for both stream groups, even power split."""
    if not np.any(H):
        raise ValueError("zero channel matrix")
    k = H.shape[1]
    per_col = math.sqrt(p_ap / (2 * k))
    cols = H / np.linalg.norm(H, axis=0, keepdims=True) * per_col
    return np.hstack([cols, cols])


def solve_ic_noma(channels: Channels, config: SceneConfig, opts=None):
    """Identical-common scheme with all per-mUE common parts forced to zero."""
    from .iecrs import solve_iecrs
    return solve_iecrs(channels, config, opts, pin_common=True)


def solve_dc_noma(channels: Channels, config: SceneConfig, opts=None):
    """Distinct-common scheme with all per-mUE common parts forced to zero."""
    from .decrs import solve_decrs
    return solve_decrs(channels, config, opts, pin_common=True)


def st_phase2_rate(g: np.ndarray, p_k: np.ndarray) -> float:
    """Second-phase optimum when all relayed signals share one tap: co-phased
    full power, so the amplitudes add coherently."""
    amp = float(np.sum(np.abs(g) * np.sqrt(p_k)))
    return math.log2(1.0 + amp ** 2)


def solve_st(channels: Channels, config: SceneConfig, opts=None, phase1=None):
    """Single-tap upper-bound baseline: first phase as the identical-common
    scheme, second phase evaluated as if every delay were zero."""
    from .iecrs import solve_phase1 as _solve_phase1, Phase1Result
    if phase1 is None:
        phase1 = _solve_phase1(channels.H, config.p_ap_mw, opts)
    p_k = config.p_k_mw
    r_d2 = st_phase2_rate(channels.g, p_k)
    g_bar = np.abs(channels.g) * np.sqrt(p_k) + 0j
    r_c, r_p = iecrs_rates(channels.H, phase1.F)
    report = combine_rates_iecrs(phase1.c, r_p, r_d2, r_c=r_c)
    report.scheme = "st"
    return g_bar, report
