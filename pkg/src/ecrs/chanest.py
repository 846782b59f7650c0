"""Cooperative-link channel estimation from Zadoff-Chu pilots.

Each mUE transmits a distinct-root Zadoff-Chu sequence; the dUE sees their
superposition, each arriving at its own integer tap delay.  Delays are
recovered by a maximum-projection search (correlate each candidate shift of
each pilot against the received window), after which the gains follow from
least squares on the regenerated shifted-pilot matrix.

Shifts are linear (zero padded), not cyclic, so the correlation sidelobes
are small but nonzero; estimation quality therefore improves with the
pilot length.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .scene import Channels, SceneConfig, dbm_to_mw, max_coop_delay


@dataclass
class PilotConfig:
    """Pilot signaling parameters for one estimation round."""

    n_pilot: int
    roots: tuple
    p_dbm: float
    tau_max: int
    n_rx: int

    def __post_init__(self):
        self.validate()

    @property
    def k(self) -> int:
        return len(self.roots)

    @property
    def p_mw(self) -> float:
        return dbm_to_mw(self.p_dbm)

    def validate(self):
        if self.n_pilot < 3:
            raise ValueError("pilot length must be >= 3")
        if self.tau_max < 0 or self.tau_max + self.n_pilot > self.n_rx:
            raise ValueError("receive window must cover every shifted pilot")
        if len(set(self.roots)) != len(self.roots):
            raise ValueError("pilot roots must be distinct")
        core = zc_core_length(self.n_pilot)
        for r in self.roots:
            if r <= 0 or math.gcd(int(r), core) != 1:
                raise ValueError(f"root {r} not coprime with core {core}")

    @classmethod
    def for_scene(cls, config: SceneConfig, n_pilot: int,
                  p_dbm: float | None = None) -> "PilotConfig":
        """Size the receive window from the deployment-region delay bound."""
        tau_max = max_coop_delay(config)
        return cls(n_pilot=n_pilot, roots=default_roots(config.k, n_pilot),
                   p_dbm=0.0 if p_dbm is None else p_dbm,
                   tau_max=tau_max, n_rx=tau_max + n_pilot)


def zc_core_length(n_pilot: int) -> int:
    """Length of the Zadoff-Chu core sequence for a requested pilot length.

    Odd lengths are used as-is.  Even lengths fall back to the largest prime
    below (the chirp form below needs an odd length, and even lengths force
    root differences to share factors with the length, which inflates
    cross-correlations); the core is then cyclically extended to fill the
    pilot.
    """
    if n_pilot % 2 == 1:
        return n_pilot

    def is_prime(x):
        if x < 2:
            return False
        return all(x % d for d in range(2, int(math.isqrt(x)) + 1))

    n = n_pilot - 1
    while not is_prime(n):
        n -= 1
    return n


def default_roots(k: int, n_pilot: int) -> tuple:
    """The k smallest positive integers coprime with the sequence core."""
    core = zc_core_length(n_pilot)
    roots = []
    r = 1
    while len(roots) < k:
        if math.gcd(r, core) == 1:
            roots.append(r)
        r += 1
        if r > 100 * n_pilot:
            raise ValueError("cannot find enough coprime roots")
    return tuple(roots)


@dataclass
class EstimationResult:
    tau_hat: np.ndarray
    g_hat: np.ndarray
    profiles: np.ndarray | None = None   # |projection| per (mUE, shift)
    rank_deficient: bool = False


def gen_pilots(cfg: PilotConfig) -> np.ndarray:
    """Zadoff-Chu pilot matrix, one unit-modulus column per mUE.

    psi_k[m] = exp(-j pi r_k m(m+1) / N) over the core length N; an even
    pilot length runs the core past its period (cyclic extension, as in
    standard preamble designs).  Unit-modulus entries give
    ||psi_k||^2 = n_pilot exactly.
    """
    core = zc_core_length(cfg.n_pilot)
    m = np.arange(cfg.n_pilot) % core
    phase = -np.pi * np.outer(m * (m + 1), np.asarray(cfg.roots)) / core
    return np.exp(1j * phase)


def shifted_pilot(psi: np.ndarray, tau: int, n_rx: int) -> np.ndarray:
    """Zero-padded delayed copy of one pilot column."""
    out = np.zeros(n_rx, dtype=complex)
    out[tau:tau + len(psi)] = psi
    return out


def simulate_pilot_rx(pilots: np.ndarray, channels: Channels,
                      cfg: PilotConfig, noise_seed: int | None = 0,
                      noise: bool = True) -> np.ndarray:
    """Superimpose the delayed pilots through the cooperative gains.

    Unit-variance complex Gaussian noise per sample (channels are
    noise-normalized); pass ``noise=False`` for the clean signal.
    """
    if np.any(channels.tau > cfg.tau_max):
        raise ValueError("a delay exceeds the configured search range")
    y = np.zeros(cfg.n_rx, dtype=complex)
    amp = math.sqrt(cfg.p_mw)
    for i in range(channels.k):
        y += amp * channels.g[i] * shifted_pilot(pilots[:, i],
                                                 int(channels.tau[i]),
                                                 cfg.n_rx)
    if noise:
        rng = np.random.default_rng(noise_seed)
        y += (rng.standard_normal(cfg.n_rx)
              + 1j * rng.standard_normal(cfg.n_rx)) / math.sqrt(2.0)
    return y


def delay_profiles(y: np.ndarray, pilots: np.ndarray,
                   cfg: PilotConfig) -> np.ndarray:
    """Projection of every candidate shift of every pilot onto the signal.

    Returns a complex (k, tau_max + 1) array; entry (k, tau) is
    psi_k^(tau)^H y.
    """
    windows = np.lib.stride_tricks.sliding_window_view(y, cfg.n_pilot)
    return pilots.conj().T @ windows[:cfg.tau_max + 1].T


def estimate_delays(y: np.ndarray, pilots: np.ndarray,
                    cfg: PilotConfig) -> np.ndarray:
    """Maximum-projection delay estimates; ties break to the smallest shift."""
    prof = np.abs(delay_profiles(y, pilots, cfg))
    return np.argmax(prof, axis=1).astype(np.int64)


def estimate_gains(y: np.ndarray, pilots: np.ndarray, tau_hat: np.ndarray,
                   cfg: PilotConfig) -> tuple[np.ndarray, bool]:
    """Least-squares gains from the regenerated shifted-pilot matrix.

    Power compensation is folded in so the estimate targets the gain itself.
    A rank-deficient matrix (e.g. two mUEs sharing root and delay) falls
    back to the pseudo-inverse and is flagged.
    """
    k = pilots.shape[1]
    psi_hat = np.column_stack([shifted_pilot(pilots[:, i], int(tau_hat[i]),
                                             cfg.n_rx) for i in range(k)])
    gram = psi_hat.conj().T @ psi_hat
    rhs = psi_hat.conj().T @ y
    try:
        if np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError
        g_hat = np.linalg.solve(gram, rhs)
        deficient = False
    except np.linalg.LinAlgError:
        g_hat = np.linalg.pinv(psi_hat) @ y
        deficient = True
    return g_hat / math.sqrt(cfg.p_mw), deficient


def estimate(y: np.ndarray, pilots: np.ndarray, cfg: PilotConfig,
             keep_profiles: bool = False) -> EstimationResult:
    """Full pipeline: delays by maximum projection, then LS gains."""
    prof = delay_profiles(y, pilots, cfg)
    tau_hat = np.argmax(np.abs(prof), axis=1).astype(np.int64)
    g_hat, deficient = estimate_gains(y, pilots, tau_hat, cfg)
    return EstimationResult(tau_hat=tau_hat, g_hat=g_hat,
                            profiles=prof if keep_profiles else None,
                            rank_deficient=deficient)


def metrics(truths: list, estimates: list) -> tuple[float, float]:
    """Empirical delay error rate and gain NMSE over a batch of runs."""
    if not truths:
        raise ValueError("need at least one run")
    der_acc, nmse_acc = 0.0, 0.0
    for (g, tau), est in zip(truths, estimates):
        der_acc += float(np.mean(est.tau_hat != np.asarray(tau)))
        nmse_acc += float(np.sum(np.abs(est.g_hat - g) ** 2)
                          / np.sum(np.abs(g) ** 2))
    return der_acc / len(truths), nmse_acc / len(truths)


def estimate_scene(channels: Channels, config: SceneConfig, n_pilot: int,
                   noise_seed: int, p_dbm: float | None = None,
                   noise: bool = True) -> EstimationResult:
    """Convenience wrapper: one estimation round on a realized scene."""
    cfg = PilotConfig.for_scene(config, n_pilot, p_dbm)
    pilots = gen_pilots(cfg)
    y = simulate_pilot_rx(pilots, channels, cfg, noise_seed, noise=noise)
    return estimate(y, pilots, cfg)


def profiles_to_csv(result: EstimationResult, path):
    """Projection magnitude per (mUE, shift) for offline inspection."""
    if result.profiles is None:
        raise ValueError("estimation was run without keep_profiles")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mue", "shift", "abs_projection"])
        k, n = result.profiles.shape
        for i in range(k):
            for t in range(n):
                writer.writerow([i, t, repr(abs(result.profiles[i, t]))])
