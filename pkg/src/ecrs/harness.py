"""Monte Carlo sweep orchestration and CSV emission.

Experiments sweep a grid (user count, pilot length or pilot power), draw a
fixed number of scenes per grid point with seeds derived deterministically
from one master seed, run the requested schemes, and write one CSV row per
(grid point, scheme) with mean and standard error.  Scheme failures are
recorded in the row status and do not abort the sweep.

CSV files are byte-identical across runs with the same experiment and
master seed: header metadata carries a hash of the experiment definition,
and no timestamps or machine state enter the output.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import solve_dc_noma, solve_ic_noma, solve_st
from .chanest import PilotConfig, estimate, gen_pilots, simulate_pilot_rx
from .decrs import solve_decrs
from .iecrs import AoOptions, omega_matrix, solve_iecrs, solve_phase1
from .rates import RateReport
from .scene import Channels, SceneConfig, sample_scene

ALL_SCHEMES = ("iecrs", "low", "decrs", "ic_noma", "dc_noma", "st")
RATE_KINDS = ("rate_vs_K", "rate_vs_K_low_power", "rate_vs_K_imperfect_csi")
EST_KINDS = ("der_nmse_vs_Np", "der_nmse_vs_power")
ALL_KINDS = RATE_KINDS + EST_KINDS + ("lemma_check",)


@dataclass
class Experiment:
    kind: str
    grid: tuple
    scenes: int
    schemes: tuple
    base_config: SceneConfig
    out_path: str
    master_seed: int
    pilot_len: int = 100
    phase2: str = "auto"

    def validate(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.scenes < 1:
            raise ValueError("need at least one scene per grid point")
        if not self.grid:
            raise ValueError("empty sweep grid")
        for s in self.schemes:
            if s not in ALL_SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if self.kind in RATE_KINDS and not np.isscalar(self.base_config.p_k_dbm):
            raise ValueError("user-count sweeps need a scalar p_k_dbm")

    def digest(self) -> str:
        payload = {
            "kind": self.kind, "grid": list(self.grid),
            "scenes": self.scenes, "schemes": list(self.schemes),
            "config": self.base_config.to_dict(),
            "master_seed": self.master_seed, "pilot_len": self.pilot_len,
            "phase2": self.phase2,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentResult:
    path: str
    rows: list
    ok: bool


def derive_seed(master_seed: int, grid_index: int, scene_index: int,
                stream: int = 0) -> int:
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(grid_index, scene_index, stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, float)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) \
        if len(values) > 1 else 0.0
    return mean, se


def run_schemes(channels: Channels, config: SceneConfig, schemes,
                opts: AoOptions) -> dict:
    """All requested schemes on one scene, sharing first-phase solves."""
    out = {}
    phase1 = None
    phase1_pin = None

    def get_phase1(pin):
        nonlocal phase1, phase1_pin
        if pin:
            if phase1_pin is None:
                phase1_pin = solve_phase1(channels.H, config.p_ap_mw, opts,
                                          pin_common=pin)
            return phase1_pin
        if phase1 is None:
            phase1 = solve_phase1(channels.H, config.p_ap_mw, opts)
        return phase1

    for scheme in schemes:
        try:
            if scheme == "iecrs":
                _, rep = solve_iecrs(channels, config, opts,
                                     phase1=get_phase1(False))
            elif scheme == "low":
                low_opts = dataclasses.replace(opts, phase2="low")
                _, rep = solve_iecrs(channels, config, low_opts,
                                     phase1=get_phase1(False))
                rep.scheme = "low"
            elif scheme == "ic_noma":
                _, rep = solve_iecrs(channels, config, opts, pin_common=True,
                                     phase1=get_phase1(True))
            elif scheme == "st":
                _, rep = solve_st(channels, config, opts,
                                  phase1=get_phase1(False))
            elif scheme == "decrs":
                _, rep = solve_decrs(channels, config, opts)
            elif scheme == "dc_noma":
                _, rep = solve_decrs(channels, config, opts, pin_common=True)
            else:
                raise ValueError(scheme)
            out[scheme] = rep
        except Exception as exc:  # recorded per row, sweep continues
            out[scheme] = exc
    return out


def _write_csv(path, experiment: Experiment, header: list, rows: list):
    with open(path, "w", newline="") as fh:
        fh.write("# ecrs experiment output\n")
        fh.write(f"# experiment={experiment.kind}\n")
        fh.write(f"# master_seed={experiment.master_seed}\n")
        fh.write(f"# config_hash={experiment.digest()}\n")
        fh.write(f"# package_version={__version__}\n")
        fh.write("# columns: " + ", ".join(header) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def _run_rate_sweep(experiment: Experiment) -> ExperimentResult:
    opts = AoOptions(phase2=experiment.phase2)
    rows = []
    ok = True
    for gi, k in enumerate(experiment.grid):
        cfg = dataclasses.replace(experiment.base_config, k=int(k))
        per_scheme = {s: [] for s in experiment.schemes}
        errors = {}
        for si in range(experiment.scenes):
            seed = derive_seed(experiment.master_seed, gi, si)
            channels = sample_scene(cfg, seed=seed)
            reports = run_schemes(channels, cfg, experiment.schemes, opts)
            for s, rep in reports.items():
                if isinstance(rep, Exception):
                    errors[s] = f"{type(rep).__name__}: {rep}"
                else:
                    per_scheme[s].append(rep.min_rate)
        for s in experiment.schemes:
            if s in errors:
                rows.append([int(k), s, "", "", experiment.scenes,
                             "error:" + errors[s]])
                ok = False
            else:
                mean, se = _mean_se(per_scheme[s])
                rows.append([int(k), s, _fmt(mean), _fmt(se),
                             experiment.scenes, "ok"])
    header = ["k", "scheme", "mean_min_rate", "stderr", "scenes", "status"]
    _write_csv(experiment.out_path, experiment, header, rows)
    return ExperimentResult(experiment.out_path, rows, ok)


def _estimate_one(cfg: SceneConfig, channels: Channels, n_pilot: int,
                  p_dbm: float | None, seed: int):
    pc = PilotConfig.for_scene(cfg, n_pilot, p_dbm)
    pilots = gen_pilots(pc)
    y = simulate_pilot_rx(pilots, channels, pc, noise_seed=seed)
    return estimate(y, pilots, pc)


def _run_estimation_sweep(experiment: Experiment) -> ExperimentResult:
    cfg = experiment.base_config
    rows = []
    ok = True
    for gi, point in enumerate(experiment.grid):
        if experiment.kind == "der_nmse_vs_Np":
            n_pilot, p_dbm = int(point), None
        else:
            n_pilot, p_dbm = experiment.pilot_len, float(point)
        ders, nmses = [], []
        status = "ok"
        try:
            for si in range(experiment.scenes):
                seed = derive_seed(experiment.master_seed, gi, si)
                channels = sample_scene(cfg, seed=seed)
                res = _estimate_one(cfg, channels, n_pilot, p_dbm,
                                    derive_seed(experiment.master_seed,
                                                gi, si, stream=1))
                ders.append(float(np.mean(res.tau_hat != channels.tau)))
                nmses.append(float(np.sum(np.abs(res.g_hat - channels.g) ** 2)
                                   / np.sum(np.abs(channels.g) ** 2)))
        except Exception as exc:
            status = f"error:{type(exc).__name__}: {exc}"
            ok = False
            rows.append([point, "", "", "", "", experiment.scenes, status])
            continue
        der_m, der_se = _mean_se(ders)
        nmse_m, nmse_se = _mean_se(nmses)
        rows.append([point, _fmt(der_m), _fmt(der_se), _fmt(nmse_m),
                     _fmt(nmse_se), experiment.scenes, status])
    header = ["grid", "der", "der_stderr", "nmse", "nmse_stderr", "scenes",
              "status"]
    _write_csv(experiment.out_path, experiment, header, rows)
    return ExperimentResult(experiment.out_path, rows, ok)


def _run_lemma_check(experiment: Experiment) -> ExperimentResult:
    rows = []
    ok = True
    k_max = max(2, min(8, experiment.base_config.k))
    for gi, n_c in enumerate(experiment.grid):
        n_c = int(n_c)
        worst = 0.0
        for si in range(experiment.scenes):
            rng = np.random.default_rng(
                derive_seed(experiment.master_seed, gi, si))
            k = int(rng.integers(1, k_max + 1))
            k = min(k, n_c)
            tau = rng.choice(n_c, size=k, replace=False)
            dev = float(np.max(np.abs(omega_matrix(tau, n_c)
                                      - n_c * np.eye(k))))
            worst = max(worst, dev)
        passed = worst <= 1e-9
        ok = ok and passed
        rows.append([n_c, experiment.scenes, _fmt(worst),
                     "ok" if passed else "error:identity violated"])
    header = ["n_c", "draws", "max_abs_dev", "status"]
    _write_csv(experiment.out_path, experiment, header, rows)
    return ExperimentResult(experiment.out_path, rows, ok)


def run_imperfect_csi(experiment: Experiment) -> ExperimentResult:
    """Optimize with estimated cooperative CSI, evaluate on the truth.

    Only the mUE-dUE link is estimated (the downlink is assumed known), so
    the shared first phase is exact and the gap comes entirely from the
    relayed link.
    """
    opts = AoOptions(phase2=experiment.phase2)
    rows = []
    ok = True
    schemes = [s for s in experiment.schemes if s in ("iecrs", "decrs")]
    for gi, k in enumerate(experiment.grid):
        cfg = dataclasses.replace(experiment.base_config, k=int(k))
        acc = {s: {"perfect": [], "imperfect": []} for s in schemes}
        status = "ok"
        try:
            for si in range(experiment.scenes):
                seed = derive_seed(experiment.master_seed, gi, si)
                channels = sample_scene(cfg, seed=seed)
                est = _estimate_one(cfg, channels, experiment.pilot_len, None,
                                    derive_seed(experiment.master_seed,
                                                gi, si, stream=1))
                if "iecrs" in schemes:
                    p1 = solve_phase1(channels.H, cfg.p_ap_mw, opts)
                    _, rep_p = solve_iecrs(channels, cfg, opts, phase1=p1)
                    _, rep_i = solve_iecrs(channels, cfg, opts, phase1=p1,
                                           coop_g=est.g_hat,
                                           coop_tau=est.tau_hat)
                    acc["iecrs"]["perfect"].append(rep_p.min_rate)
                    acc["iecrs"]["imperfect"].append(rep_i.min_rate)
                if "decrs" in schemes:
                    _, rep_p = solve_decrs(channels, cfg, opts)
                    _, rep_i = solve_decrs(channels, cfg, opts,
                                           coop_g=est.g_hat,
                                           coop_tau=est.tau_hat)
                    acc["decrs"]["perfect"].append(rep_p.min_rate)
                    acc["decrs"]["imperfect"].append(rep_i.min_rate)
        except Exception as exc:
            status = f"error:{type(exc).__name__}: {exc}"
            ok = False
            for s in schemes:
                rows.append([int(k), s, "", "", "", "", "",
                             experiment.scenes, status])
            continue
        for s in schemes:
            mp, sp = _mean_se(acc[s]["perfect"])
            mi, si_ = _mean_se(acc[s]["imperfect"])
            rows.append([int(k), s, _fmt(mp), _fmt(sp), _fmt(mi), _fmt(si_),
                         _fmt(mp - mi), experiment.scenes, "ok"])
    header = ["k", "scheme", "mean_perfect", "se_perfect", "mean_imperfect",
              "se_imperfect", "mean_gap", "scenes", "status"]
    _write_csv(experiment.out_path, experiment, header, rows)
    return ExperimentResult(experiment.out_path, rows, ok)


def run(experiment: Experiment) -> ExperimentResult:
    """Dispatch an experiment to its runner; returns rows and a status."""
    experiment.validate()
    if experiment.kind in ("rate_vs_K", "rate_vs_K_low_power"):
        return _run_rate_sweep(experiment)
    if experiment.kind == "rate_vs_K_imperfect_csi":
        return run_imperfect_csi(experiment)
    if experiment.kind in EST_KINDS:
        return _run_estimation_sweep(experiment)
    return _run_lemma_check(experiment)
