"""Command-line interface.

Subcommands: ``simulate`` (rate sweeps), ``estimate`` (delay/gain estimator
sweeps), ``lemma-check`` (delay phasor Gram identity), ``audit`` (solve one
scene and cross-check the optimizer output against first-principles rates).
Exit code 0 on full success, nonzero if any row failed.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .decrs import decrs_rate_audit, solve_decrs
from .harness import ALL_SCHEMES, Experiment, run
from .iecrs import AoOptions, solve_iecrs, solve_phase1
from .rates import iecrs_rates
from .scene import SceneConfig, sample_scene


def _load_config(path: str | None) -> SceneConfig:
    return SceneConfig() if path is None else SceneConfig.from_json_file(path)


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def _add_common(p):
    p.add_argument("--config", help="scene config JSON (defaults built in)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--scenes", type=int, default=100,
                   help="scenes per grid point")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecrs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="min-rate sweeps over the user count")
    _add_common(p)
    p.add_argument("--kind", default="rate_vs_K",
                   choices=["rate_vs_K", "rate_vs_K_low_power",
                            "rate_vs_K_imperfect_csi"])
    p.add_argument("--grid", type=_int_list, default=tuple(range(1, 11)),
                   help="comma-separated user counts")
    p.add_argument("--schemes", default=",".join(ALL_SCHEMES),
                   help="comma-separated scheme list")
    p.add_argument("--phase2", default="auto", choices=["auto", "sca", "low"])
    p.add_argument("--pilot-len", type=int, default=500,
                   help="pilot length for imperfect-CSI sweeps")

    p = sub.add_parser("estimate", help="delay/gain estimator sweeps")
    _add_common(p)
    p.add_argument("--kind", default="vs_np", choices=["vs_np", "vs_power"])
    p.add_argument("--grid", help="pilot lengths or pilot powers (dBm)")
    p.add_argument("--pilot-len", type=int, default=100,
                   help="pilot length for power sweeps")

    p = sub.add_parser("lemma-check",
                       help="delay phasor Gram identity over random draws")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nc", type=_int_list, default=(16, 64, 256))
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--kmax", type=int, default=8)

    p = sub.add_parser("audit", help="solve one scene and cross-check rates")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", default="both",
                   choices=["iecrs", "decrs", "both"])
    return ap


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    schemes = tuple(args.schemes.split(","))
    exp = Experiment(kind=args.kind, grid=args.grid, scenes=args.scenes,
                     schemes=schemes, base_config=cfg, out_path=args.out,
                     master_seed=args.seed, pilot_len=args.pilot_len,
                     phase2=args.phase2)
    result = run(exp)
    print(f"wrote {result.path} ({len(result.rows)} rows)")
    return 0 if result.ok else 1


def _cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    if args.kind == "vs_np":
        kind = "der_nmse_vs_Np"
        grid = _int_list(args.grid) if args.grid else (50, 100, 200, 400)
    else:
        kind = "der_nmse_vs_power"
        grid = _float_list(args.grid) if args.grid else (-20.0, -10.0, 0.0, 10.0)
    exp = Experiment(kind=kind, grid=grid, scenes=args.scenes, schemes=(),
                     base_config=cfg, out_path=args.out,
                     master_seed=args.seed, pilot_len=args.pilot_len)
    result = run(exp)
    print(f"wrote {result.path} ({len(result.rows)} rows)")
    return 0 if result.ok else 1


def _cmd_lemma_check(args) -> int:
    cfg = SceneConfig(k=max(1, args.kmax))
    exp = Experiment(kind="lemma_check", grid=args.nc, scenes=args.draws,
                     schemes=(), base_config=cfg, out_path=args.out,
                     master_seed=args.seed)
    result = run(exp)
    worst = max(float(r[2]) for r in result.rows)
    print(f"wrote {result.path}; max |Gram - n_c I| deviation = {worst:.3e}")
    return 0 if result.ok else 1


def _cmd_audit(args) -> int:
    cfg = _load_config(args.config)
    channels = sample_scene(cfg, seed=args.seed)
    opts = AoOptions()
    failures = 0

    if args.scheme in ("iecrs", "both"):
        prec, rep = solve_iecrs(channels, cfg, opts)
        r_c, r_p = iecrs_rates(channels.H, prec.F)
        checks = [
            ("iecrs power budget", prec.power() <= cfg.p_ap_mw * (1 + 1e-8)),
            ("iecrs relay power disks",
             bool(np.all(np.abs(prec.g_bar) ** 2
                         <= np.abs(channels.g) ** 2 * cfg.p_k_mw
                         * (1 + 1e-8) + 1e-15))),
            ("iecrs common decode margin",
             float(np.min(r_c) - np.sum(prec.c)) >= -1e-9),
            ("iecrs min-rate assembly",
             abs(rep.min_rate - min(float(np.min(rep.r_mue)), rep.r_d))
             <= 1e-9),
        ]
        for name, passed in checks:
            print(f"{'PASS' if passed else 'FAIL'} {name}")
            failures += 0 if passed else 1

    if args.scheme in ("decrs", "both"):
        prec, rep = solve_decrs(channels, cfg, opts)
        aud = decrs_rate_audit(prec, channels, cfg, t0=-rep.min_rate)
        print(f"{'PASS' if aud.ok else 'FAIL'} decrs first-principles audit")
        for issue in aud.issues:
            print(f"  issue: {issue}")
        failures += 0 if aud.ok else 1

    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "estimate":
        return _cmd_estimate(args)
    if args.command == "lemma-check":
        return _cmd_lemma_check(args)
    return _cmd_audit(args)


if __name__ == "__main__":
    sys.exit(main())
