"""Rate, MSE and OFDM-mapping algebra shared by both scheme variants.

Noise variance is 1 throughout (channels are noise-normalized at synthesis),
so every SINR denominator carries a bare +1.  Rates are in bits per channel
use.

Two scheme layouts exist:
  * identical-common ("iecrs"): precoder matrix n_t x (K+1), column 0 is the
    single common stream, columns 1..K the private streams; rate split
    c = [C_1..C_K, C_d].
  * distinct-common ("decrs"): precoder matrix n_t x 2K, columns 0..K-1 the
    per-mUE common streams, columns K..2K-1 the private streams; rate split
    c = [C_1..C_K, C_d1..C_dK].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# containers


@dataclass
class IecrsPrecoders:
    """Solution point of the identical-common scheme."""

    F: np.ndarray          # n_t x (K+1), column 0 = common
    c: np.ndarray          # K+1 rate split [C_1..C_K, C_d]
    g_bar: np.ndarray      # effective second-phase gains, length K

    @property
    def k(self) -> int:
        return self.F.shape[1] - 1

    def power(self) -> float:
        return float(np.sum(np.abs(self.F) ** 2))


@dataclass
class DecrsPrecoders:
    """Solution point of the distinct-common scheme."""

    F: np.ndarray          # n_t x 2K, columns 0..K-1 common, K..2K-1 private
    c: np.ndarray          # 2K rate split [C_1..C_K, C_d1..C_dK]
    g_bar: np.ndarray

    @property
    def k(self) -> int:
        return self.F.shape[1] // 2

    def power(self) -> float:
        return float(np.sum(np.abs(self.F) ** 2))


@dataclass
class RateReport:
    """Achieved rates of one solution, plus feasibility diagnostics."""

    scheme: str
    r_mue: np.ndarray                 # R_k per mUE
    r_d: float
    min_rate: float
    r_p: np.ndarray
    r_c: np.ndarray
    c_split: np.ndarray               # C_1..C_K plus C_d (or C_d1..C_dK)
    r_d_phase2: float | None = None   # second-phase rate (identical-common)
    r_dk_phase2: np.ndarray | None = None  # per-mUE second-phase rates
    common_slack: float = np.inf      # min over k of decode margin
    cd_waste: float = 0.0             # first-phase common rate lost to phase 2

    def csv_row(self) -> list:
        return [self.scheme, repr(self.min_rate), repr(self.r_d),
                repr(float(np.min(self.r_mue))), repr(self.cd_waste)]

    @staticmethod
    def csv_header() -> list:
        return ["scheme", "min_rate", "r_d", "min_r_mue", "cd_waste"]


# ---------------------------------------------------------------------------
# first-phase achievable rates


def iecrs_rates(H: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Common and private rates at each mUE for the (K+1)-column layout."""
    G2 = np.abs(H.conj().T @ F) ** 2            # k x (K+1)
    k = H.shape[1]
    s_c = G2[:, 0]
    priv = G2[:, 1:]
    s_p = np.diagonal(priv).copy()
    i_k = priv.sum(axis=1) - s_p
    r_c = np.log2(1.0 + s_c / (s_p + i_k + 1.0))
    r_p = np.log2(1.0 + s_p / (i_k + 1.0))
    return r_c, r_p


def decrs_rates(H: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Common and private rates at each mUE for the 2K-column layout."""
    k = H.shape[1]
    G2 = np.abs(H.conj().T @ F) ** 2            # k x 2K
    com, priv = G2[:, :k], G2[:, k:]
    s_c = np.diagonal(com).copy()
    s_p = np.diagonal(priv).copy()
    i_c = com.sum(axis=1) - s_c
    i_k = priv.sum(axis=1) - s_p
    r_c = np.log2(1.0 + s_c / (s_p + i_k + i_c + 1.0))
    r_p = np.log2(1.0 + s_p / (i_k + i_c + 1.0))
    return r_c, r_p


# ---------------------------------------------------------------------------
# second phase


def ofdm_gains(g_bar: np.ndarray, tau: np.ndarray, n_c: int) -> np.ndarray:
    """Per-subcarrier channel of the tapped cooperative link, n = 1..n_c."""
    n = np.arange(1, n_c + 1)
    phase = np.exp(-2j * np.pi * np.outer(np.asarray(tau, float), n) / n_c)
    return np.asarray(g_bar, complex) @ phase


def rate_phase2_iecrs(g_bar: np.ndarray, tau: np.ndarray, n_c: int,
                      cp_len: int | None = None) -> float:
    """Second-phase rate of the identical-common scheme.

    The headline metric drops the cyclic-prefix overhead from the prefactor
    (valid for n_c >> cp_len); pass ``cp_len`` to get the exact
    1/(n_c + cp_len) scaling instead.
    """
    gains = np.abs(ofdm_gains(g_bar, tau, n_c)) ** 2
    pre = 1.0 / (n_c + cp_len) if cp_len is not None else 1.0 / n_c
    return float(pre * np.sum(np.log2(1.0 + gains)))


def rate_phase2_decrs(g_bar: np.ndarray) -> np.ndarray:
    """Per-mUE second-phase rates; other mUEs' streams count as interference."""
    p = np.abs(np.asarray(g_bar)) ** 2
    j_k = p.sum() - p
    return np.log2(1.0 + p / (j_k + 1.0))


# ---------------------------------------------------------------------------
# rate assembly


def combine_rates_iecrs(c: np.ndarray, r_p: np.ndarray, r_phase2: float, *,
                        r_c: np.ndarray | None = None,
                        tol: float = 1e-9) -> RateReport:
    """Assemble the full report; R_d = min(C_d, second-phase rate)."""
    c = np.asarray(c, float)
    k = len(c) - 1
    c_k, c_d = c[:k], float(c[k])
    r_mue = r_p + c_k
    r_d = min(c_d, r_phase2)
    slack = np.inf
    if r_c is not None:
        slack = float(np.min(r_c) - np.sum(c))
        if slack < -tol:
            raise ValueError(f"common-rate split infeasible by {-slack:.3e}")
    return RateReport(
        scheme="iecrs", r_mue=r_mue, r_d=r_d,
        min_rate=float(min(np.min(r_mue), r_d)),
        r_p=r_p, r_c=r_c if r_c is not None else np.full(k, np.nan),
        c_split=c, r_d_phase2=r_phase2, common_slack=slack,
        cd_waste=max(0.0, c_d - r_phase2))


def combine_rates_decrs(c: np.ndarray, r_p: np.ndarray,
                        r_phase2k: np.ndarray, *,
                        r_c: np.ndarray | None = None,
                        tol: float = 1e-9) -> RateReport:
    """Assemble the full report; R_d sums per-mUE min(C_dk, second-phase)."""
    c = np.asarray(c, float)
    k = len(c) // 2
    c_k, c_dk = c[:k], c[k:]
    r_mue = r_p + c_k
    per_k = np.minimum(c_dk, r_phase2k)
    r_d = float(np.sum(per_k))
    slack = np.inf
    if r_c is not None:
        slack = float(np.min(r_c - c_k - c_dk))
        if slack < -tol:
            raise ValueError(f"common-rate split infeasible by {-slack:.3e}")
    return RateReport(
        scheme="decrs", r_mue=r_mue, r_d=r_d,
        min_rate=float(min(np.min(r_mue), r_d)),
        r_p=r_p, r_c=r_c if r_c is not None else np.full(k, np.nan),
        c_split=c, r_dk_phase2=r_phase2k, common_slack=slack,
        cd_waste=float(np.sum(np.maximum(0.0, c_dk - r_phase2k))))


# ---------------------------------------------------------------------------
# MSE / weighted-MSE suite
#
# For an estimate s_hat = w*y of a unit-power stream received with complex
# signal amplitude s and total receive power T (signal + interference +
# noise), the MSE is |w|^2 T - 2 Re(w s) + 1, minimized by w = conj(s)/T
# with minimum 1 - |s|^2/T.  The weighted MSE xi = mu*eps - ln(mu) at the
# optimal (w, mu) equals 1 - R ln2, tying rates to MSEs.


@dataclass
class IecrsWeights:
    w_c: np.ndarray
    w_p: np.ndarray
    mu_c: np.ndarray
    mu_p: np.ndarray


@dataclass
class DecrsWeights:
    w_c: np.ndarray
    w_p: np.ndarray
    w_d: np.ndarray
    mu_c: np.ndarray
    mu_p: np.ndarray
    mu_d: np.ndarray


def _mse(w: np.ndarray, s: np.ndarray, T: np.ndarray) -> np.ndarray:
    return np.abs(w) ** 2 * T - 2.0 * np.real(w * s) + 1.0


def _iecrs_sig_pow(H, F):
    G = H.conj().T @ F
    G2 = np.abs(G) ** 2
    k = H.shape[1]
    t_c = G2.sum(axis=1) + 1.0
    t_p = t_c - G2[:, 0]
    s_c = G[np.arange(k), 0]
    s_p = G[np.arange(k), 1 + np.arange(k)]
    return s_c, s_p, t_c, t_p


def mmse_update_iecrs(H: np.ndarray, F: np.ndarray) -> IecrsWeights:
    """Optimal equalizers and weights for the current precoders."""
    s_c, s_p, t_c, t_p = _iecrs_sig_pow(H, F)
    eps_c = 1.0 - np.abs(s_c) ** 2 / t_c
    eps_p = 1.0 - np.abs(s_p) ** 2 / t_p
    return IecrsWeights(w_c=np.conj(s_c) / t_c, w_p=np.conj(s_p) / t_p,
                        mu_c=1.0 / eps_c, mu_p=1.0 / eps_p)


def mse_suite_iecrs(H: np.ndarray, F: np.ndarray, w: IecrsWeights):
    """MSEs and weighted MSEs of both stream types at given equalizers."""
    s_c, s_p, t_c, t_p = _iecrs_sig_pow(H, F)
    eps_c = _mse(w.w_c, s_c, t_c)
    eps_p = _mse(w.w_p, s_p, t_p)
    xi_c = w.mu_c * eps_c - np.log(w.mu_c)
    xi_p = w.mu_p * eps_p - np.log(w.mu_p)
    return eps_c, eps_p, xi_c, xi_p


def _decrs_sig_pow(H, F, g_bar):
    k = H.shape[1]
    G = H.conj().T @ F
    G2 = np.abs(G) ** 2
    t_c = G2.sum(axis=1) + 1.0
    rng = np.arange(k)
    s_c = G[rng, rng]
    s_p = G[rng, k + rng]
    t_p = t_c - np.abs(s_c) ** 2
    t_d = np.sum(np.abs(g_bar) ** 2) + 1.0
    return s_c, s_p, t_c, t_p, t_d


def mmse_update_decrs(H: np.ndarray, F: np.ndarray,
                      g_bar: np.ndarray) -> DecrsWeights:
    s_c, s_p, t_c, t_p, t_d = _decrs_sig_pow(H, F, g_bar)
    eps_c = 1.0 - np.abs(s_c) ** 2 / t_c
    eps_p = 1.0 - np.abs(s_p) ** 2 / t_p
    eps_d = 1.0 - np.abs(g_bar) ** 2 / t_d
    return DecrsWeights(w_c=np.conj(s_c) / t_c, w_p=np.conj(s_p) / t_p,
                        w_d=np.conj(g_bar) / t_d,
                        mu_c=1.0 / eps_c, mu_p=1.0 / eps_p, mu_d=1.0 / eps_d)


def mse_suite_decrs(H: np.ndarray, F: np.ndarray, g_bar: np.ndarray,
                    w: DecrsWeights):
    s_c, s_p, t_c, t_p, t_d = _decrs_sig_pow(H, F, g_bar)
    eps_c = _mse(w.w_c, s_c, t_c)
    eps_p = _mse(w.w_p, s_p, t_p)
    eps_d = _mse(w.w_d, np.asarray(g_bar), t_d)
    xi_c = w.mu_c * eps_c - np.log(w.mu_c)
    xi_p = w.mu_p * eps_p - np.log(w.mu_p)
    xi_d = w.mu_d * eps_d - np.log(w.mu_d)
    return eps_c, eps_p, eps_d, xi_c, xi_p, xi_d
