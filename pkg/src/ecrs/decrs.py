"""Max-min rate optimization for the distinct-common scheme.

One alternating loop optimizes the downlink precoders, the relayed-link
effective gains, the negated rate split and the per-mUE epigraph slacks
jointly: with the equalizers and weights fixed, all weighted-MSE constraints
are convex in the remaining variables, so each round is a single subsolver
call.  The same safeguarded acceptance as the identical-common loop keeps
the recorded objective monotone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .iecrs import AoOptions, AoTrace, span_basis
from .rates import (LN2, DecrsPrecoders, RateReport, combine_rates_decrs,
                    decrs_rates, mmse_update_decrs, mse_suite_decrs,
                    rate_phase2_decrs)
from .scene import Channels, SceneConfig
from .subsolver import (BallCon, ColsQuadCon, LinCon, SubproblemSpec,
                        VarLayout, realrep_outer, solve)


@dataclass
class DecrsSolveInfo:
    t0: float
    trace: AoTrace


def _build_joint_spec(Ht, p_ap, radius2, active, w, hr_stack, *,
                      pin_common, eps_feas, eps_opt):
    r, k = Ht.shape
    k_act = int(np.sum(active))
    act_pos = {kk: i for i, kk in enumerate(np.flatnonzero(active))}
    layout = VarLayout()
    fblk = layout.add_complex_cols("F", r, 2 * k)
    gblk = layout.add_complex_cols("g", 1, k_act) if k_act else None
    nx = k if pin_common else 2 * k      # [X_1..X_K,] X_d1..X_dK
    xsl = layout.add_real("x", nx)
    tsl = layout.add_real("t", k)
    t0sl = layout.add_real("t0", 1)
    t0 = t0sl.start

    def xk_idx(i):
        return None if pin_common else xsl.start + i

    def xd_idx(i):
        return xsl.start + (0 if pin_common else k) + i

    cons = []
    eps_d_const = np.ones(k)             # MSE of pinned (zero-power) streams
    for i in range(k):                   # private-stream epigraph rows
        mu, wk = float(w.mu_p[i]), complex(w.w_p[i])
        s = math.sqrt(mu) * wk
        cols = np.array([j for j in range(2 * k) if j != i])  # drop own common
        offsets = np.zeros(len(cols), complex)
        offsets[np.flatnonzero(cols == k + i)[0]] = -math.sqrt(mu)
        lin_idx, lin_val = [t0], [-LN2]
        if not pin_common:
            lin_idx.append(xk_idx(i))
            lin_val.append(LN2)
        d = 1.0 + math.log(mu) - mu * abs(wk) ** 2
        cons.append(ColsQuadCon(fblk, s, Ht[:, i], cols, offsets, d,
                                ("F", i), lin_idx, lin_val))
    for i in range(k):                   # common-stream decode rows
        mu, wk = float(w.mu_c[i]), complex(w.w_c[i])
        s = math.sqrt(mu) * wk
        cols = np.arange(2 * k)
        offsets = np.zeros(2 * k, complex)
        offsets[i] = -math.sqrt(mu)
        lin_idx, lin_val = [xd_idx(i)], [-LN2]
        if not pin_common:
            lin_idx.append(xk_idx(i))
            lin_val.append(-LN2)
        d = 1.0 + math.log(mu) - mu * abs(wk) ** 2
        cons.append(ColsQuadCon(fblk, s, Ht[:, i], cols, offsets, d,
                                ("F", i), lin_idx, lin_val))
    for i in range(k):                   # relayed-stream epigraph rows
        mu, wk = float(w.mu_d[i]), complex(w.w_d[i])
        if not active[i]:
            # zero-radius disk: the stream is off, its MSE is constant 1
            eps_d_const[i] = 1.0
            lhs = (mu * 1.0 - math.log(mu) - 1.0) / LN2
            a = np.zeros(layout.n)
            a[tsl.start + i] = -1.0
            cons.append(LinCon(a, -lhs))
            continue
        s = math.sqrt(mu) * wk
        cols = np.arange(k_act)
        offsets = np.zeros(k_act, complex)
        offsets[act_pos[i]] = -math.sqrt(mu)
        d = 1.0 + math.log(mu) - mu * abs(wk) ** 2
        cons.append(ColsQuadCon(gblk, s, np.ones(1, complex), cols, offsets,
                                d, ("g", 0), [tsl.start + i], [-LN2]))

    for i in range(k):                   # X_dk <= t_k
        a = np.zeros(layout.n)
        a[xd_idx(i)], a[tsl.start + i] = 1.0, -1.0
        cons.append(LinCon(a, 0.0))
    a = np.zeros(layout.n)               # sum t_k <= t0
    a[tsl.start:tsl.stop] = 1.0
    a[t0] = -1.0
    cons.append(LinCon(a, 0.0))
    for j in range(nx):                  # rate splits >= 0
        e = np.zeros(layout.n)
        e[xsl.start + j] = 1.0
        cons.append(LinCon(e, 0.0))
    cons.append(BallCon(np.arange(fblk.start, fblk.stop), p_ap))
    if k_act:
        for i, kk in enumerate(np.flatnonzero(active)):
            cons.append(BallCon(
                idx=[gblk.col_start(i), gblk.col_start(i) + 1],
                bound=radius2[kk]))

    c_lin = np.zeros(layout.n)
    c_lin[t0] = 1.0
    hr = {"F": hr_stack}
    if k_act:
        hr["g"] = np.stack([np.eye(2)])
    spec = SubproblemSpec(layout=layout, c_lin=c_lin, cons=cons,
                          hr_stacks=hr, eps_feas=eps_feas, eps_opt=eps_opt)
    return spec, fblk, gblk, xsl, tsl, t0sl


def _joint_t0(Ht, Z, g_bar, x_split, w, pin_common):
    """Exact epigraph value of a point under given weights.

    The per-mUE slacks are tightened to their lower bounds, matching what
    the minimization would return.
    """
    k = Ht.shape[1]
    _, _, _, xi_c, xi_p, xi_d = mse_suite_decrs(Ht, Z, g_bar, w)
    if pin_common:
        xk = np.zeros(k)
        xd = np.asarray(x_split[:k], float)
    else:
        xk = np.asarray(x_split[:k], float)
        xd = np.asarray(x_split[k:], float)
    viol = float(np.max((xi_c - 1.0) / LN2 - xd - xk))
    t_k = np.maximum(xd, (xi_d - 1.0) / LN2)
    t0 = max(float(np.max(xk + (xi_p - 1.0) / LN2)), float(np.sum(t_k)))
    return t0, t_k, viol


def _warm_point(spec, fblk, gblk, xsl, tsl, t0sl, Ht, p_ap, radius2, active,
                w, Z, g_bar, c_prev, pin_common):
    k = Ht.shape[1]
    x = np.zeros(spec.layout.n)
    power = float(np.sum(np.abs(Z) ** 2))
    if power > p_ap * (1.0 - 1e-9):
        Z = Z * math.sqrt(p_ap * (1.0 - 1e-9) / power)
    g_bar = g_bar.copy()
    for kk in np.flatnonzero(active):
        lim = radius2[kk] * (1.0 - 1e-9)
        if abs(g_bar[kk]) ** 2 > lim:
            g_bar[kk] *= math.sqrt(lim / abs(g_bar[kk]) ** 2)
    fblk.pack_into(x, Z)
    if gblk is not None:
        gblk.pack_into(x, g_bar[active][None, :])
    _, _, _, xi_c, xi_p, xi_d = mse_suite_decrs(Ht, Z, g_bar, w)

    for delta in (1e-7, 1e-9, 1e-11, 1e-13):
        xk = np.zeros(k) if pin_common else -np.maximum(c_prev[:k], delta)
        lb = (xi_c - 1.0) / LN2 - xk
        xd = np.minimum(-delta, np.maximum(lb + delta, -c_prev[k:]))
        if np.any(xd < lb + 0.5 * delta):
            continue
        if not pin_common:
            x[xsl.start:xsl.start + k] = xk
        x[xsl.start + (0 if pin_common else k):xsl.stop] = xd
        t_k = np.maximum(xd, (xi_d - 1.0) / LN2) + delta
        x[tsl.start:tsl.stop] = t_k
        t0 = max(float(np.max(xk + (xi_p - 1.0) / LN2)), float(np.sum(t_k)))
        x[t0sl.start] = t0 + delta
        return x
    return x


def solve_decrs(channels: Channels, config: SceneConfig,
                opts: AoOptions | None = None, *,
                pin_common: bool = False,
                coop_g: np.ndarray | None = None,
                coop_tau: np.ndarray | None = None,
                trace: AoTrace | None = None):
    """Joint alternating solve of precoders, relayed gains and rate split.

    ``coop_g`` overrides the cooperative-link CSI seen by the optimizer; the
    returned report always evaluates the true channels.  Pass an ``AoTrace``
    to capture the per-round epigraph history.
    """
    opts = opts or AoOptions()
    from .baselines import init_mrt_decrs

    H = channels.H
    g_csi = channels.g if coop_g is None else coop_g
    k = H.shape[1]
    p_k = config.p_k_mw
    B = span_basis(H)
    Ht = B.conj().T @ H
    hr_stack = np.stack([realrep_outer(Ht[:, i]) for i in range(k)])

    radius2 = np.abs(g_csi) ** 2 * p_k
    active = radius2 > 0.0
    Z = B.conj().T @ init_mrt_decrs(H, config.p_ap_mw)
    g_bar = np.abs(g_csi) * np.sqrt(p_k) * math.sqrt(1.0 - 1e-9) + 0j
    g_bar[~active] = 0.0

    c_prev = np.zeros(2 * k)
    w = mmse_update_decrs(Ht, Z, g_bar)
    t0_acc, _, _ = _joint_t0(Ht, Z, g_bar,
                             np.concatenate([np.zeros(0 if pin_common else k),
                                             np.zeros(k)]),
                             w, pin_common)
    trace = trace if trace is not None else AoTrace()
    t_init = None
    for it in range(opts.ao_max_iter):
        tic = time.perf_counter()
        spec, fblk, gblk, xsl, tsl, t0sl = _build_joint_spec(
            Ht, config.p_ap_mw, radius2, active, w, hr_stack,
            pin_common=pin_common, eps_feas=opts.eps_feas,
            eps_opt=opts.eps_opt)
        spec.x0 = _warm_point(spec, fblk, gblk, xsl, tsl, t0sl, Ht,
                              config.p_ap_mw, radius2, active, w, Z, g_bar,
                              c_prev, pin_common)
        spec.t_init = t_init
        res = solve(spec)
        if res.status == "infeasible":
            raise RuntimeError("joint subproblem infeasible; bad config")

        Z_new = fblk.unpack(res.x)
        g_new = np.zeros(k, complex)
        if gblk is not None:
            g_new[active] = gblk.unpack(res.x)[0]
        x_new = res.x[xsl.start:xsl.stop]
        x_old = (-c_prev[k:] if pin_common else -c_prev)
        t0_new, _, _ = _joint_t0(Ht, Z_new, g_new, x_new, w, pin_common)
        t0_old, _, _ = _joint_t0(Ht, Z, g_bar, x_old, w, pin_common)
        if t0_new <= t0_old:
            Z, g_bar = Z_new, g_new
            if pin_common:
                c_prev = np.concatenate([np.zeros(k), -x_new])
            else:
                c_prev = -x_new
            accepted = t0_new
        else:
            accepted = t0_old
        gain = t0_acc - accepted
        t0_acc = min(t0_acc, accepted)
        trace.append(t0_acc, time.perf_counter() - tic, res.newton_total)
        w = mmse_update_decrs(Ht, Z, g_bar)

        m = len(spec.cons)
        t_init = max(1.0, min(1e5, m / max(3.0 * abs(gain), 100 * opts.eps_opt)))
        if (gain <= opts.ao_rel_tol * max(abs(t0_acc), 1e-12)
                or gain <= opts.ao_abs_tol) and it >= 1:
            break

    # plan -> true channels (identity under true CSI), exact rates, tighten
    F = B @ Z
    with np.errstate(divide="ignore", invalid="ignore"):
        f_d = np.where(np.abs(g_csi) > 0, g_bar / g_csi, 0.0)
    g_true = channels.g * f_d
    r_c, r_p = decrs_rates(H, F)
    r_dk2 = rate_phase2_decrs(g_true)
    c_k = np.maximum(c_prev[:k], 0.0)
    c_dk = np.maximum(r_c - c_k, 0.0)
    c = np.concatenate([c_k, c_dk])
    report = combine_rates_decrs(c, r_p, r_dk2, r_c=r_c)
    report.scheme = "dc_noma" if pin_common else "decrs"
    trace.append(-report.min_rate, 0.0, 0)
    precoders = DecrsPrecoders(F=F, c=c, g_bar=g_true)
    return precoders, report


# ---------------------------------------------------------------------------
# audit


@dataclass
class AuditReport:
    ok: bool
    issues: list
    report: RateReport


def decrs_rate_audit(solution: DecrsPrecoders, channels: Channels,
                     config: SceneConfig, *, t0: float | None = None,
                     tol: float = 1e-6) -> AuditReport:
    """Recompute every rate from first principles and check the solution.

    Verifies the power budgets, the common-rate decode constraints and,
    when the optimizer's epigraph value is supplied, that it matches the
    recomputed minimum rate.
    """
    issues = []
    k = solution.k
    r_c, r_p = decrs_rates(channels.H, solution.F)
    r_dk2 = rate_phase2_decrs(solution.g_bar)
    c_k, c_dk = solution.c[:k], solution.c[k:]

    power = solution.power()
    if power > config.p_ap_mw * (1.0 + 1e-8) + 1e-12:
        issues.append(f"AP power exceeded: {power:.6g}")
    lim = np.abs(channels.g) ** 2 * config.p_k_mw
    if np.any(np.abs(solution.g_bar) ** 2 > lim * (1.0 + 1e-8) + 1e-12):
        issues.append("mUE power disk exceeded")
    viol = float(np.max(c_k + c_dk - r_c))
    if viol > 1e-9:
        issues.append(f"common decode constraint violated by {viol:.3e}")
    if np.any(solution.c < -1e-12):
        issues.append("negative rate split")

    report = combine_rates_decrs(solution.c, r_p, r_dk2, r_c=r_c,
                                 tol=np.inf)
    if t0 is not None and abs((-t0) - report.min_rate) > tol:
        issues.append(f"epigraph mismatch: -t0={-t0:.9f} "
                      f"min_rate={report.min_rate:.9f}")
    return AuditReport(ok=not issues, issues=issues, report=report)
