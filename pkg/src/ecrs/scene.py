"""Scene geometry and channel synthesis.

An access point (AP) with a uniform planar array serves K single-antenna
medium users (mUEs) over line-of-sight links; a destination user (dUE) has
no AP link and is reached only through the mUEs.  This module draws mUE
positions, builds the noise-normalized downlink channel matrix, the
cooperative mUE-dUE gains, and the integer tap delays of the cooperative
links.

All powers are handled in mW internally.  Channel gains are divided by the
noise standard deviation at synthesis time, so every downstream SNR
expression can use unit noise variance.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def free_space_beta0_db(f_c: float) -> float:
    """Free-space path gain at 1 m for carrier frequency ``f_c`` (dB)."""
    return 20.0 * math.log10(SPEED_OF_LIGHT / (4.0 * math.pi * f_c))


@dataclass
class SceneConfig:
    """Physical and system constants plus node geometry.

    Single source of truth for antenna grid, user count, powers,
    frequencies and OFDM dimensioning.  ``p_k_dbm`` may be a scalar
    (broadcast to all mUEs) or a sequence of length ``k``.
    """

    n_v: int = 4
    n_h: int = 4
    k: int = 5
    f_c: float = 0.3e12
    bandwidth: float = 1.0e9
    f_s: float | None = None            # defaults to bandwidth (critically sampled)
    n0_dbm_per_hz: float = -174.0
    p_ap_dbm: float = 20.0
    p_k_dbm: float | tuple = 0.0
    alpha: float = 2.0
    beta0_db: float | None = None       # defaults to free-space gain at 1 m
    n_c: int = 256
    cp_len: int | None = None           # defaults to max realized tap delay
    ap_pos: tuple = (0.0, 4.0, 1.0)
    due_pos: tuple = (8.0, 4.0, 0.0)
    mue_box: tuple = ((2.0, 0.0, 0.0), (6.0, 8.0, 0.0))
    rng_seed: int = 0

    def __post_init__(self):
        if self.f_s is None:
            self.f_s = self.bandwidth
        if self.beta0_db is None:
            self.beta0_db = free_space_beta0_db(self.f_c)
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def n_t(self) -> int:
        return self.n_v * self.n_h

    @property
    def noise_mw(self) -> float:
        """Noise power over the full bandwidth, in mW."""
        return dbm_to_mw(self.n0_dbm_per_hz + 10.0 * math.log10(self.bandwidth))

    @property
    def p_ap_mw(self) -> float:
        return dbm_to_mw(self.p_ap_dbm)

    @property
    def p_k_mw(self) -> np.ndarray:
        p = self.p_k_dbm
        if np.isscalar(p):
            return np.full(self.k, dbm_to_mw(p))
        if len(p) != self.k:
            raise ValueError(f"p_k_dbm has {len(p)} entries for k={self.k}")
        return np.array([dbm_to_mw(v) for v in p])

    def validate(self):
        if self.n_v < 1 or self.n_h < 1:
            raise ValueError("antenna grid dimensions must be >= 1")
        if self.k < 1:
            raise ValueError("need at least one mUE")
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if self.cp_len is not None and self.cp_len < 0:
            raise ValueError("cp_len must be >= 0")
        if self.bandwidth <= 0 or self.f_s is not None and self.f_s <= 0:
            raise ValueError("bandwidth and f_s must be positive")
        if self.f_c <= 0:
            raise ValueError("f_c must be positive")
        if self.noise_mw <= 0 or self.p_ap_mw <= 0 or np.any(self.p_k_mw < 0):
            raise ValueError("linear powers must be positive")
        lo, hi = (np.asarray(c, float) for c in self.mue_box)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi < lo):
            raise ValueError("mue_box must be two ordered 3-vectors")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_k_dbm"] = (self.p_k_dbm if np.isscalar(self.p_k_dbm)
                        else list(self.p_k_dbm))
        d["ap_pos"] = list(self.ap_pos)
        d["due_pos"] = list(self.due_pos)
        d["mue_box"] = [list(self.mue_box[0]), list(self.mue_box[1])]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("ap_pos", "due_pos"):
            if key in d:
                d[key] = tuple(d[key])
        if "mue_box" in d:
            d["mue_box"] = (tuple(d["mue_box"][0]), tuple(d["mue_box"][1]))
        if "p_k_dbm" in d and not np.isscalar(d["p_k_dbm"]):
            d["p_k_dbm"] = tuple(d["p_k_dbm"])
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "SceneConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json_file(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class Channels:
    """One channel realization.

    ``H`` is the noise-normalized downlink matrix (n_t x k, column k is the
    channel of mUE k), ``g`` the noise-normalized cooperative gains, ``tau``
    the integer tap delays of the mUE-dUE links, ``positions`` the realized
    mUE coordinates.
    """

    H: np.ndarray
    g: np.ndarray
    tau: np.ndarray
    positions: np.ndarray

    @property
    def k(self) -> int:
        return self.H.shape[1]

    @property
    def n_t(self) -> int:
        return self.H.shape[0]


def pathloss(d: float, config: SceneConfig) -> float:
    """Linear path gain beta0 * d^(-alpha) at distance ``d`` meters."""
    if d <= 0:
        raise ValueError("distance must be positive")
    return db_to_lin(config.beta0_db) * d ** (-config.alpha)


def tap_delay(d: float, f_s: float) -> int:
    """Integer tap index of a propagation distance at sampling rate f_s."""
    return int(round(f_s * d / SPEED_OF_LIGHT))


def max_coop_delay(config: SceneConfig) -> int:
    """Upper bound on realizable mUE-dUE tap delays from the box geometry."""
    lo, hi = (np.asarray(c, float) for c in config.mue_box)
    due = np.asarray(config.due_pos, float)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    d_max = float(np.max(np.linalg.norm(corners - due, axis=1)))
    return tap_delay(d_max, config.f_s)


def steering_vector(config: SceneConfig, direction: np.ndarray) -> np.ndarray:
    """Planar-array response for a unit direction vector seen from the AP.

    Vertical phase progression uses sin(elevation) = dz; horizontal uses
    cos(elevation) * cos(azimuth) = dx, both read directly off the unit
    direction vector (half-wavelength element spacing).
    """
    a_v = np.exp(1j * np.pi * np.arange(config.n_v) * direction[2])
    a_h = np.exp(1j * np.pi * np.arange(config.n_h) * direction[0])
    return np.kron(a_v, a_h)


def build_channels(config: SceneConfig, positions: np.ndarray,
                   theta: np.ndarray) -> Channels:
    """Deterministic channel synthesis from realized positions and phases."""
    ap = np.asarray(config.ap_pos, float)
    due = np.asarray(config.due_pos, float)
    positions = np.asarray(positions, float)
    sigma = math.sqrt(config.noise_mw)

    H = np.empty((config.n_t, config.k), dtype=complex)
    g = np.empty(config.k, dtype=complex)
    tau = np.empty(config.k, dtype=np.int64)
    for i in range(config.k):
        delta = positions[i] - ap
        d_ap = float(np.linalg.norm(delta))
        d_due = float(np.linalg.norm(positions[i] - due))
        if d_ap <= 0 or d_due <= 0:
            raise ValueError("mUE coincides with AP or dUE")
        H[:, i] = (math.sqrt(pathloss(d_ap, config))
                   * steering_vector(config, delta / d_ap) / sigma)
        g[i] = (math.sqrt(pathloss(d_due, config))
                * np.exp(1j * theta[i]) / sigma)
        tau[i] = tap_delay(d_due, config.f_s)
    return Channels(H=H, g=g, tau=tau, positions=positions)


def sample_scene(config: SceneConfig, seed: int | None = None) -> Channels:
    """Draw mUE positions uniformly in the box and synthesize channels.

    Deterministic given (config, seed); positions at zero distance from the
    AP or dUE are resampled.
    """
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    lo, hi = (np.asarray(c, float) for c in config.mue_box)
    ap = np.asarray(config.ap_pos, float)
    due = np.asarray(config.due_pos, float)

    for _ in range(100):
        positions = rng.uniform(lo, hi, size=(config.k, 3))
        d_ap = np.linalg.norm(positions - ap, axis=1)
        d_due = np.linalg.norm(positions - due, axis=1)
        if np.all(d_ap > 0) and np.all(d_due > 0):
            break
    else:
        raise RuntimeError("could not draw a nondegenerate geometry")

    theta = rng.uniform(0.0, 2.0 * np.pi, size=config.k)
    return build_channels(config, positions, theta)


# -- channel CSV layout (debugging / golden tests) --------------------------
#
# One row per mUE:
#   k, pos_x, pos_y, pos_z, tau, g_re, g_im, h0_re, h0_im, ..., h{n_t-1}_im


def channels_to_csv(channels: Channels, path):
    n_t = channels.n_t
    header = ["k", "pos_x", "pos_y", "pos_z", "tau", "g_re", "g_im"]
    for a in range(n_t):
        header += [f"h{a}_re", f"h{a}_im"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(channels.k):
            row = [i, *(repr(float(v)) for v in channels.positions[i]),
                   int(channels.tau[i]),
                   repr(float(channels.g[i].real)), repr(float(channels.g[i].imag))]
            for a in range(n_t):
                row += [repr(float(channels.H[a, i].real)),
                        repr(float(channels.H[a, i].imag))]
            writer.writerow(row)


def channels_from_csv(path) -> Channels:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, rows = rows[0], rows[1:]
    n_t = (len(header) - 7) // 2
    k = len(rows)
    H = np.empty((n_t, k), dtype=complex)
    g = np.empty(k, dtype=complex)
    tau = np.empty(k, dtype=np.int64)
    positions = np.empty((k, 3))
    for row in rows:
        i = int(row[0])
        positions[i] = [float(v) for v in row[1:4]]
        tau[i] = int(row[4])
        g[i] = float(row[5]) + 1j * float(row[6])
        vals = [float(v) for v in row[7:]]
        H[:, i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    return Channels(H=H, g=g, tau=tau, positions=positions)
