"""Max-min rate optimization for the identical-common scheme.

Phase 1 (downlink precoding and rate split) alternates between closed-form
MMSE equalizer/weight updates and a convex subproblem over the precoders,
the negated rate split x = -c and the epigraph slack t0.  Phase 2 (the
relayed link) runs successive convex approximation on the per-subcarrier
gains, or a closed-form full-power strategy appropriate in the low-SNR
regime.

Both alternating loops are safeguarded: a step is accepted only if it does
not worsen the exact objective, so the recorded histories are monotone even
at the subsolver's optimality tolerance.

Precoders live in the span of the user channels (components orthogonal to
every channel spend power without changing any rate, so the restriction is
lossless); this keeps the subproblem dimension at K(K+1) complex variables
regardless of the array size.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .rates import (LN2, IecrsPrecoders, RateReport, combine_rates_iecrs,
                    iecrs_rates, mmse_update_iecrs, mse_suite_iecrs,
                    ofdm_gains, rate_phase2_iecrs)
from .scene import Channels, SceneConfig
from .subsolver import (BallCon, ColsQuadCon, LinCon, LogTerms,
                        SubproblemSpec, VarLayout, realrep_outer, solve)


@dataclass
class AoOptions:
    """Stopping rules and solver tolerances shared by both AO loops."""

    ao_rel_tol: float = 1e-4
    ao_abs_tol: float = 1e-10
    ao_max_iter: int = 200
    sca_rel_tol: float = 1e-4
    sca_max_iter: int = 100
    phase2: str = "auto"          # "sca" | "low" | "auto"
    auto_low_nc: int = 512        # "auto" switches to "low" above this n_c
    eps_feas: float = 1e-8
    eps_opt: float = 1e-6
    init_common_fraction: float = 0.5


@dataclass
class AoTrace:
    """Objective history of one alternating solve (and wall time per step)."""

    values: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    newton: list = field(default_factory=list)

    def append(self, value, wall, newton):
        self.values.append(float(value))
        self.wall.append(float(wall))
        self.newton.append(int(newton))

    def to_csv(self, path, label="value"):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", label, "wall_s", "newton_steps"])
            for i, (v, t, n) in enumerate(zip(self.values, self.wall,
                                              self.newton)):
                writer.writerow([i, repr(v), repr(t), n])


@dataclass
class Phase1Result:
    F: np.ndarray
    c: np.ndarray
    c_d: float
    t0: float
    trace: AoTrace
    basis: np.ndarray


def span_basis(H: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span of H."""
    u, s, _ = np.linalg.svd(H, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise ValueError("zero channel matrix")
    r = int(np.sum(s > s[0] * 1e-12))
    return u[:, :r]


def omega_matrix(tau: np.ndarray, n_c: int) -> np.ndarray:
    """Gram matrix of the per-subcarrier delay phasors (verification aid)."""
    n = np.arange(1, n_c + 1)
    M = np.exp(2j * np.pi * np.outer(n, np.asarray(tau, float)) / n_c)
    return M.T @ M.conj()


# ---------------------------------------------------------------------------
# phase 1: WMMSE alternating optimization


def _build_phase1_spec(Ht, p_ap, w, hr_stack, *, pin_common,
                       eps_feas, eps_opt):
    r, k = Ht.shape
    layout = VarLayout()
    fblk = layout.add_complex_cols("F", r, k + 1)
    nx = 1 if pin_common else k + 1
    xsl = layout.add_real("x", nx)
    tsl = layout.add_real("t0", 1)
    xd = xsl.stop - 1
    t0 = tsl.start

    cons = []
    for i in range(k):
        mu, wk = float(w.mu_p[i]), complex(w.w_p[i])
        s = math.sqrt(mu) * wk
        cols = np.arange(1, k + 1)
        offsets = np.zeros(k, complex)
        offsets[i] = -math.sqrt(mu)
        lin_idx, lin_val = [t0], [-LN2]
        if not pin_common:
            lin_idx.append(xsl.start + i)
            lin_val.append(LN2)
        d = 1.0 + math.log(mu) - mu * abs(wk) ** 2
        cons.append(ColsQuadCon(fblk, s, Ht[:, i], cols, offsets, d,
                                ("F", i), lin_idx, lin_val))
    for i in range(k):
        mu, wk = float(w.mu_c[i]), complex(w.w_c[i])
        s = math.sqrt(mu) * wk
        cols = np.arange(0, k + 1)
        offsets = np.zeros(k + 1, complex)
        offsets[0] = -math.sqrt(mu)
        lin_idx, lin_val = [xd], [-LN2]
        if not pin_common:
            for j in range(k):
                lin_idx.append(xsl.start + j)
                lin_val.append(-LN2)
        d = 1.0 + math.log(mu) - mu * abs(wk) ** 2
        cons.append(ColsQuadCon(fblk, s, Ht[:, i], cols, offsets, d,
                                ("F", i), lin_idx, lin_val))

    a = np.zeros(layout.n)
    a[xd], a[t0] = 1.0, -1.0
    cons.append(LinCon(a, 0.0))                      # X_d <= t0
    for j in range(nx):
        e = np.zeros(layout.n)
        e[xsl.start + j] = 1.0
        cons.append(LinCon(e, 0.0))                  # rate splits >= 0
    cons.append(BallCon(np.arange(fblk.start, fblk.stop), p_ap))

    c_lin = np.zeros(layout.n)
    c_lin[t0] = 1.0
    return SubproblemSpec(layout=layout, c_lin=c_lin, cons=cons,
                          hr_stacks={"F": hr_stack},
                          eps_feas=eps_feas, eps_opt=eps_opt), fblk, xsl, tsl


def _phase1_warm_point(spec, fblk, xsl, tsl, Ht, p_ap, w, Z, c_prev,
                       pin_common):
    """Strictly interior start near the previous iterate under new weights."""
    k = Ht.shape[1]
    x = np.zeros(spec.layout.n)
    power = float(np.sum(np.abs(Z) ** 2))
    if power > p_ap * (1.0 - 1e-9):
        Z = Z * math.sqrt(p_ap * (1.0 - 1e-9) / power)
    fblk.pack_into(x, Z)
    _, _, xi_c, xi_p = mse_suite_iecrs(Ht, Z, w)

    for delta in (1e-7, 1e-9, 1e-11, 1e-13):
        if pin_common:
            xk = np.zeros(k)
            x_sum = 0.0
        else:
            xk = -np.maximum(c_prev[:k], delta)
            x[xsl.start:xsl.start + k] = xk
            x_sum = float(np.sum(xk))
        lb = float(np.max(xi_c - 1.0)) / LN2 - x_sum
        xd = min(-delta, max(lb + delta, -float(c_prev[-1])))
        if xd < lb + 0.5 * delta:
            continue
        x[xsl.stop - 1] = xd
        t0 = max(xd, float(np.max(xk + (xi_p - 1.0) / LN2)))
        x[tsl.start] = t0 + delta
        return x
    return x  # may be infeasible; the subsolver's phase 1 will repair it


def _phase1_t0(Ht, Z, x_split, w, pin_common):
    """Epigraph value of a point under given weights (exact tightening)."""
    k = Ht.shape[1]
    _, _, xi_c, xi_p = mse_suite_iecrs(Ht, Z, w)
    if pin_common:
        xk = np.zeros(k)
        xd = float(x_split[0])
    else:
        xk = x_split[:k]
        xd = float(x_split[k])
    lhs_a = float(np.max(xk + (xi_p - 1.0) / LN2))
    return max(lhs_a, xd)


def solve_phase1(H: np.ndarray, p_ap: float, opts: AoOptions | None = None, *,
                 pin_common: bool = False,
                 F0: np.ndarray | None = None) -> Phase1Result:
    """Alternate MMSE updates with convex precoder/rate-split solves.

    Returns the full-space precoders, the rate split with the common-rate
    budget retightened against the exact rates, and the monotone epigraph
    trace.
    """
    opts = opts or AoOptions()
    from .baselines import init_mrt_svd

    B = span_basis(H)
    Ht = B.conj().T @ H
    k = H.shape[1]
    if F0 is None:
        F0 = init_mrt_svd(H, p_ap, opts.init_common_fraction)
    Z = B.conj().T @ F0
    hr_stack = np.stack([realrep_outer(Ht[:, i]) for i in range(k)])

    c_prev = np.zeros(k + 1)
    w = mmse_update_iecrs(Ht, Z)
    t0_acc = _phase1_t0(Ht, Z, -c_prev if not pin_common
                        else np.array([-c_prev[-1]]), w, pin_common)
    trace = AoTrace()
    t_init = None
    for it in range(opts.ao_max_iter):
        tic = time.perf_counter()
        spec, fblk, xsl, tsl = _build_phase1_spec(
            Ht, p_ap, w, hr_stack, pin_common=pin_common,
            eps_feas=opts.eps_feas, eps_opt=opts.eps_opt)
        spec.x0 = _phase1_warm_point(spec, fblk, xsl, tsl, Ht, p_ap, w,
                                     Z, c_prev, pin_common)
        spec.t_init = t_init
        res = solve(spec)
        if res.status == "infeasible":
            raise RuntimeError("phase-1 subproblem infeasible; bad config")

        Z_new = fblk.unpack(res.x)
        x_new = res.x[xsl.start:xsl.stop]
        t0_new = _phase1_t0(Ht, Z_new, x_new, w, pin_common)
        t0_old = _phase1_t0(Ht, Z, -c_prev if not pin_common
                            else np.array([-c_prev[-1]]), w, pin_common)
        if t0_new <= t0_old:
            Z = Z_new
            if pin_common:
                c_prev = np.concatenate([np.zeros(k), [-x_new[0]]])
            else:
                c_prev = -x_new
            accepted = t0_new
        else:
            accepted = t0_old
        gain = t0_acc - accepted
        t0_acc = min(t0_acc, accepted)
        trace.append(t0_acc, time.perf_counter() - tic, res.newton_total)
        w = mmse_update_iecrs(Ht, Z)

        m = len(spec.cons)
        t_init = max(1.0, min(1e5, m / max(3.0 * abs(gain), 100 * opts.eps_opt)))
        if gain <= opts.ao_rel_tol * max(abs(t0_acc), 1e-12) \
                or gain <= opts.ao_abs_tol:
            if it >= 1:
                break

    # final tightening against the exact rates
    r_c, r_p = iecrs_rates(Ht, Z)
    c_k = np.maximum(c_prev[:k], 0.0)
    c_d = max(0.0, float(np.min(r_c) - np.sum(c_k)))
    c = np.concatenate([c_k, [c_d]])
    t0 = -min(float(np.min(r_p + c_k)), c_d)
    trace.append(t0, 0.0, 0)
    return Phase1Result(F=B @ Z, c=c, c_d=c_d, t0=t0, trace=trace, basis=B)


# ---------------------------------------------------------------------------
# phase 2: relayed-link gain optimization


def surrogate_terms(g_local: np.ndarray, tau: np.ndarray, n_c: int):
    """Affine minorant coefficients of each squared subcarrier gain.

    Returns (P, r) with |g~_n|^2 >= r_n - 1 + P_n . [Re g, Im g] for every
    effective-gain vector, with equality at ``g_local``.
    """
    k = len(g_local)
    n = np.arange(1, n_c + 1)
    E = np.exp(-2j * np.pi * np.outer(n, np.asarray(tau, float)) / n_c)
    gl = E @ np.asarray(g_local, complex)          # local subcarrier gains
    coef = np.conj(gl)[:, None] * E                # d|g~|^2 / d g_bar
    P = np.empty((n_c, 2 * k))
    P[:, 0::2] = 2.0 * coef.real
    P[:, 1::2] = -2.0 * coef.imag
    r = 1.0 - np.abs(gl) ** 2
    return P, r


def solve_phase2_sca(g: np.ndarray, tau: np.ndarray, p_k: np.ndarray,
                     n_c: int, opts: AoOptions | None = None):
    """Successive convex approximation on the subcarrier gains.

    Each round maximizes sum(log(1 + surrogate)) over the per-mUE power
    disks, with the surrogate tight at the previous accepted point; the
    exact rate is re-evaluated every round and a round that fails to improve
    it ends the loop.
    """
    opts = opts or AoOptions()
    g = np.asarray(g, complex)
    p_k = np.asarray(p_k, float)
    radius2 = np.abs(g) ** 2 * p_k
    active = radius2 > 0.0
    k_act = int(np.sum(active))

    g_bar = np.abs(g) * np.sqrt(p_k) * math.sqrt(1.0 - 1e-9) + 0j
    g_bar[~active] = 0.0
    best = rate_phase2_iecrs(g_bar, tau, n_c)
    trace = AoTrace()
    trace.append(best, 0.0, 0)
    if k_act == 0:
        return g_bar, best, trace

    tau_act = np.asarray(tau)[active]
    rad_act = radius2[active]
    for _ in range(opts.sca_max_iter):
        tic = time.perf_counter()
        layout = VarLayout()
        gblk = layout.add_complex_cols("g", 1, k_act)
        P, r = surrogate_terms(g_bar[active], tau_act, n_c)
        logs = LogTerms(P=P, r=r, w=np.ones(n_c))
        cons = [BallCon(idx=[gblk.col_start(i), gblk.col_start(i) + 1],
                        bound=rad_act[i]) for i in range(k_act)]
        x0 = np.zeros(layout.n)
        gblk.pack_into(x0, g_bar[active][None, :])
        spec = SubproblemSpec(layout=layout, c_lin=np.zeros(layout.n),
                              cons=cons, logs=logs,
                              hr_stacks={"g": np.stack([np.eye(2)])},
                              eps_feas=opts.eps_feas, eps_opt=opts.eps_opt,
                              x0=x0)
        res = solve(spec)
        cand = np.zeros_like(g_bar)
        cand[active] = gblk.unpack(res.x)[0]
        r_new = rate_phase2_iecrs(cand, tau, n_c)
        if r_new <= best:
            break
        gain = r_new - best
        g_bar, best = cand, r_new
        trace.append(best, time.perf_counter() - tic, res.newton_total)
        if gain <= opts.sca_rel_tol * max(best, 1e-12):
            break
    return g_bar, best, trace


def solve_phase2_low(g: np.ndarray, tau: np.ndarray, p_k: np.ndarray,
                     n_c: int):
    """Full mUE power with a common phase reference.

    Optimal in the low-SNR regime: with delays distinct modulo n_c the
    subcarrier energy depends only on the gain magnitudes, and entries
    sharing a delay combine coherently because their phases are equal.
    """
    g_bar = np.abs(np.asarray(g)) * np.sqrt(np.asarray(p_k, float)) + 0j
    return g_bar, rate_phase2_iecrs(g_bar, tau, n_c)


# ---------------------------------------------------------------------------
# full scheme


def solve_iecrs(channels: Channels, config: SceneConfig,
                opts: AoOptions | None = None, *,
                pin_common: bool = False,
                phase1: Phase1Result | None = None,
                coop_g: np.ndarray | None = None,
                coop_tau: np.ndarray | None = None):
    """Run both phases and assemble the rate report.

    ``coop_g``/``coop_tau`` override the cooperative-link CSI handed to the
    phase-2 optimizer (imperfect-CSI studies); the report always evaluates
    the true channels.  The first-phase common budget is not re-optimized
    when the relayed link is the bottleneck; the lost rate is reported as
    ``cd_waste``.
    """
    opts = opts or AoOptions()
    if phase1 is None:
        phase1 = solve_phase1(channels.H, config.p_ap_mw, opts,
                              pin_common=pin_common)
    g_csi = channels.g if coop_g is None else coop_g
    tau_csi = channels.tau if coop_tau is None else coop_tau

    mode = opts.phase2
    if mode == "auto":
        mode = "low" if config.n_c > opts.auto_low_nc else "sca"
    if mode == "sca":
        g_bar_csi, _, _ = solve_phase2_sca(g_csi, tau_csi, config.p_k_mw,
                                           config.n_c, opts)
    else:
        g_bar_csi, _ = solve_phase2_low(g_csi, tau_csi, config.p_k_mw,
                                        config.n_c)

    # map the planned gains through the true channels (exact under true CSI)
    with np.errstate(divide="ignore", invalid="ignore"):
        f_d = np.where(np.abs(g_csi) > 0, g_bar_csi / g_csi, 0.0)
    g_bar = channels.g * f_d
    r_d2 = rate_phase2_iecrs(g_bar, channels.tau, config.n_c)

    r_c, r_p = iecrs_rates(channels.H, phase1.F)
    report = combine_rates_iecrs(phase1.c, r_p, r_d2, r_c=r_c)
    report.scheme = "ic_noma" if pin_common else "iecrs"
    precoders = IecrsPrecoders(F=phase1.F, c=phase1.c, g_bar=g_bar)
    return precoders, report
