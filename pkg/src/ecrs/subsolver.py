"""Log-barrier interior-point solver for the per-iteration convex subproblems.

Problems have the form

    minimize    c'x  -  sum_j w_j * ln(r_j + p_j'x)
    subject to  a_i'x <= b_i                          (linear)
                ||A_i x + c_i||^2 + b_i'x <= d_i      (convex quadratic)

over a real variable vector that packs complex precoder columns as
(Re, Im) pairs.  The optional log terms carry separable concave pieces of a
surrogate objective exactly (weights w_j > 0); with no log terms the
objective is the plain linear functional of the subproblem contract.

Quadratic constraints come in three storage forms that describe the same
sum-of-squares math:

  * ``QuadCon``     -- dense A (generic, used by tests and small problems);
  * ``BallCon``     -- A is coordinate selection (power balls and disks);
  * ``ColsQuadCon`` -- rows are one scaled channel row per precoder column
                       (the weighted-MSE constraints); the Hessian block of
                       every column is a multiple of one shared 2r x 2r
                       matrix, which keeps assembly cheap.

The solve is a standard feasible-start barrier method: damped Newton
centering with backtracking line search, then t <- mu * t until the duality
gap bound m/t clears the optimality tolerance.  A phase-1 pass (minimize
the max constraint violation) recovers a strictly feasible start when the
supplied point is not interior.  Everything is deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


# ---------------------------------------------------------------------------
# variable layout


@dataclass
class ColBlock:
    """Contiguous block of complex columns, each stored as [Re(r), Im(r)]."""

    name: str
    start: int
    r: int
    ncols: int

    @property
    def stop(self) -> int:
        return self.start + 2 * self.r * self.ncols

    def col_start(self, j: int) -> int:
        return self.start + 2 * self.r * j

    def unpack(self, x: np.ndarray) -> np.ndarray:
        seg = x[self.start:self.stop].reshape(self.ncols, 2, self.r)
        return (seg[:, 0, :] + 1j * seg[:, 1, :]).T  # r x ncols

    def pack_into(self, x: np.ndarray, Z: np.ndarray):
        seg = np.empty((self.ncols, 2, self.r))
        seg[:, 0, :] = Z.T.real
        seg[:, 1, :] = Z.T.imag
        x[self.start:self.stop] = seg.reshape(-1)


class VarLayout:
    """Packs named real blocks and complex column blocks into one vector."""

    def __init__(self):
        self.n = 0
        self.real_blocks: dict[str, slice] = {}
        self.col_blocks: dict[str, ColBlock] = {}

    def add_real(self, name: str, size: int) -> slice:
        sl = slice(self.n, self.n + size)
        self.real_blocks[name] = sl
        self.n += size
        return sl

    def add_complex_cols(self, name: str, r: int, ncols: int) -> ColBlock:
        blk = ColBlock(name, self.n, r, ncols)
        self.col_blocks[name] = blk
        self.n += 2 * r * ncols
        return blk


def realrep_outer(h: np.ndarray) -> np.ndarray:
    """2r x 2r real form of the quadratic f -> |h^H f|^2 on [Re f; Im f]."""
    v = np.conj(h)  # row coefficients of h^H
    M = np.block([[v.real, -v.imag], [v.imag, v.real]])
    return M.T @ M


# ---------------------------------------------------------------------------
# constraints


class LinCon:
    """a'x <= b."""

    def __init__(self, a: np.ndarray, b: float):
        self.a = np.asarray(a, float)
        self.b = float(b)

    def value(self, x, zc):
        return float(self.a @ x - self.b)

    def grad(self, x, zc, out):
        out += self.a


class BallCon:
    """||x[idx]||^2 + sum(lin_val * x[lin_idx]) <= bound."""

    def __init__(self, idx, bound, lin_idx=(), lin_val=()):
        self.idx = np.asarray(idx, np.intp)
        self.bound = float(bound)
        self.lin_idx = np.asarray(lin_idx, np.intp)
        self.lin_val = np.asarray(lin_val, float)

    def value(self, x, zc):
        v = float(x[self.idx] @ x[self.idx]) - self.bound
        if self.lin_idx.size:
            v += float(self.lin_val @ x[self.lin_idx])
        return v

    def grad(self, x, zc, out):
        out[self.idx] += 2.0 * x[self.idx]
        if self.lin_idx.size:
            out[self.lin_idx] += self.lin_val


class QuadCon:
    """||A x + c||^2 + b'x <= d with dense A."""

    def __init__(self, A, c, d, b=None):
        self.A = np.asarray(A, float)
        self.c = np.asarray(c, float)
        self.d = float(d)
        self.b = None if b is None else np.asarray(b, float)
        self._ata = 2.0 * self.A.T @ self.A
        self._y = None

    def value(self, x, zc):
        self._y = self.A @ x + self.c
        v = float(self._y @ self._y) - self.d
        if self.b is not None:
            v += float(self.b @ x)
        return v

    def grad(self, x, zc, out):
        out += 2.0 * self.A.T @ self._y
        if self.b is not None:
            out += self.b


class ColsQuadCon:
    """sum_j |s * (h^H f_cols[j]) + off_j|^2 + sum(lin_val*x[lin_idx]) <= d.

    ``hr_key`` = (block name, index into the spec's shared stack of
    realrep_outer(h) matrices); the curvature of every involved column is
    2*|s|^2 times that shared matrix.
    """

    def __init__(self, block: ColBlock, s: complex, h: np.ndarray, cols,
                 offsets, d, hr_key, lin_idx=(), lin_val=()):
        self.block = block
        self.s = complex(s)
        self.v = complex(s) * np.conj(np.asarray(h))   # row: s * h^H
        self.cols = np.asarray(cols, np.intp)
        self.offsets = np.asarray(offsets, complex)
        self.d = float(d)
        self.hr_key = hr_key
        self.lin_idx = np.asarray(lin_idx, np.intp)
        self.lin_val = np.asarray(lin_val, float)
        r = block.r
        starts = block.start + 2 * r * self.cols
        self._flat_idx = (starts[:, None] + np.arange(2 * r)[None, :]).ravel()
        self._u = None

    @property
    def curv_coef(self) -> float:
        return abs(self.s) ** 2

    def value(self, x, zc):
        Z = zc[self.block.name]
        self._u = self.v @ Z[:, self.cols] + self.offsets
        v = float(np.sum(np.abs(self._u) ** 2)) - self.d
        if self.lin_idx.size:
            v += float(self.lin_val @ x[self.lin_idx])
        return v

    def grad(self, x, zc, out):
        W = 2.0 * np.conj(self.v)[:, None] * self._u[None, :]  # r x ncols
        out[self._flat_idx] += np.concatenate(
            [W.real, W.imag], axis=0).T.ravel()
        if self.lin_idx.size:
            out[self.lin_idx] += self.lin_val


@dataclass
class LogTerms:
    """Objective part -sum_j w_j ln(r_j + P_j x) (all weights positive)."""

    P: np.ndarray
    r: np.ndarray
    w: np.ndarray


# ---------------------------------------------------------------------------
# spec / result


@dataclass
class SubproblemSpec:
    layout: VarLayout
    c_lin: np.ndarray
    cons: list
    logs: LogTerms | None = None
    hr_stacks: dict = field(default_factory=dict)
    eps_feas: float = 1e-8
    eps_opt: float = 1e-6
    max_stages: int = 64
    max_newton: int = 250
    x0: np.ndarray | None = None
    t_init: float | None = None

    def validate(self):
        n = self.layout.n
        if self.c_lin.shape != (n,):
            raise ValueError("objective dimension mismatch")
        if self.logs is not None and self.logs.P.shape[1] != n:
            raise ValueError("log-term dimension mismatch")
        for con in self.cons:
            if isinstance(con, LinCon) and con.a.shape != (n,):
                raise ValueError("linear constraint dimension mismatch")
            if isinstance(con, QuadCon) and con.A.shape[1] != n:
                raise ValueError("quadratic constraint dimension mismatch")


@dataclass
class StageTrace:
    t: float
    objective: float
    newton_steps: int
    lambda2: float
    merits: list


@dataclass
class SubproblemResult:
    x: np.ndarray
    objective: float
    status: str                 # "optimal" | "max_iter" | "infeasible"
    gap_bound: float
    max_violation: float
    trace: list
    newton_total: int


# ---------------------------------------------------------------------------
# evaluation helpers


def _zcache(spec, x):
    return {name: blk.unpack(x) for name, blk in spec.layout.col_blocks.items()}


def _values(spec, x):
    zc = _zcache(spec, x)
    return np.array([con.value(x, zc) for con in spec.cons]), zc


def _f0(spec, x):
    v = float(spec.c_lin @ x)
    if spec.logs is not None:
        arg = spec.logs.r + spec.logs.P @ x
        if np.any(arg <= 0.0):
            return np.inf
        v -= float(spec.logs.w @ np.log(arg))
    return v


def _merit(spec, x, t):
    f0 = _f0(spec, x)
    if not np.isfinite(f0):
        return np.inf
    if spec.cons:
        fvals, _ = _values(spec, x)
        if np.any(fvals >= 0.0):
            return np.inf
        return t * f0 - float(np.sum(np.log(-fvals)))
    return t * f0


def _grad_hess(spec, x, t):
    n = spec.layout.n
    zc = _zcache(spec, x)
    g = t * spec.c_lin.copy()
    H = np.zeros((n, n))

    if spec.logs is not None:
        arg = spec.logs.r + spec.logs.P @ x
        g -= t * (spec.logs.P.T @ (spec.logs.w / arg))
        Pw = spec.logs.P * np.sqrt(t * spec.logs.w / arg ** 2)[:, None]
        H += Pw.T @ Pw

    if not spec.cons:
        return g, H

    m = len(spec.cons)
    G = np.zeros((m, n))
    col_gamma: dict = {}
    for i, con in enumerate(spec.cons):
        f = con.value(x, zc)
        sigma = 1.0 / (-f)
        con.grad(x, zc, G[i])
        if isinstance(con, BallCon):
            H[con.idx, con.idx] += 2.0 * sigma
        elif isinstance(con, QuadCon):
            H += sigma * con._ata
        elif isinstance(con, ColsQuadCon):
            blk_name, hr_idx = con.hr_key
            gam = col_gamma.setdefault(
                blk_name,
                np.zeros((len(spec.hr_stacks[blk_name]),
                          spec.layout.col_blocks[blk_name].ncols)))
            gam[hr_idx, con.cols] += 2.0 * sigma * con.curv_coef
        G[i] *= sigma

    g += G.sum(axis=0)
    H += G.T @ G

    for blk_name, gam in col_gamma.items():
        blk = spec.layout.col_blocks[blk_name]
        stack = spec.hr_stacks[blk_name]
        blocks = np.einsum("hc,hab->cab", gam, stack)
        w = 2 * blk.r
        for j in range(blk.ncols):
            s = blk.col_start(j)
            H[s:s + w, s:s + w] += blocks[j]
    return g, H


def _newton_solve(H, g):
    ridge = 0.0
    for _ in range(4):
        try:
            cf = sla.cho_factor(H if ridge == 0.0
                                else H + ridge * np.eye(H.shape[0]),
                                lower=True, check_finite=False)
            return -sla.cho_solve(cf, g, check_finite=False)
        except np.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-12 * (np.trace(H) + 1.0))
    raise np.linalg.LinAlgError("hessian factorization failed")


def _center(spec, x, t, stop=None):
    merits = [_merit(spec, x, t)]
    lam2 = np.inf
    steps = 0
    ntol = 1e-8 * max(1.0, t)
    for _ in range(spec.max_newton):
        if stop is not None and stop(x):
            break
        g, H = _grad_hess(spec, x, t)
        try:
            dx = _newton_solve(H, g)
        except np.linalg.LinAlgError:
            break
        lam2 = float(-g @ dx)
        if lam2 < 0.0:
            lam2 = 0.0
        if 0.5 * lam2 <= ntol:
            break
        alpha = 1.0
        base = merits[-1]
        accepted = False
        while alpha >= 1e-13:
            cand = _merit(spec, x + alpha * dx, t)
            if cand <= base - 0.25 * alpha * lam2:
                x = x + alpha * dx
                merits.append(cand)
                accepted = True
                break
            alpha *= 0.5
        steps += 1
        if not accepted:
            break
    return x, merits, steps, lam2


# ---------------------------------------------------------------------------
# phase 1


def _phase1(spec: SubproblemSpec, x_start: np.ndarray | None):
    """Find a strictly feasible point by minimizing the max violation.

    The search is confined to a large ball around the starting point
    (otherwise the barrier rewards unbounded drift along directions that
    only widen constraint slack); problems whose feasible set lies entirely
    outside that ball are reported infeasible.
    """
    n = spec.layout.n
    layout = VarLayout()
    layout.n = n + 1
    layout.real_blocks = dict(spec.layout.real_blocks)
    layout.col_blocks = dict(spec.layout.col_blocks)
    s_idx = n

    def extend(con):
        if isinstance(con, LinCon):
            a = np.concatenate([con.a, [-1.0]])
            return LinCon(a, con.b)
        if isinstance(con, BallCon):
            return BallCon(con.idx, con.bound,
                           lin_idx=np.concatenate([con.lin_idx, [s_idx]]),
                           lin_val=np.concatenate([con.lin_val, [-1.0]]))
        if isinstance(con, QuadCon):
            A = np.hstack([con.A, np.zeros((con.A.shape[0], 1))])
            b = np.zeros(n + 1) if con.b is None else np.concatenate([con.b, [0.0]])
            b[s_idx] = -1.0
            return QuadCon(A, con.c, con.d, b=b)
        if isinstance(con, ColsQuadCon):
            return ColsQuadCon(con.block, con.s, np.conj(con.v / con.s),
                               con.cols, con.offsets, con.d, con.hr_key,
                               lin_idx=np.concatenate([con.lin_idx, [s_idx]]),
                               lin_val=np.concatenate([con.lin_val, [-1.0]]))
        raise TypeError(type(con))

    cons = [extend(c) for c in spec.cons]
    if spec.logs is not None:
        # keep the main objective's log arguments positive with a margin
        for j in range(len(spec.logs.r)):
            margin = 1e-8 * (1.0 + abs(spec.logs.r[j]))
            a = np.concatenate([-spec.logs.P[j], [-1.0]])
            cons.append(LinCon(a, spec.logs.r[j] - margin))

    c_lin = np.zeros(n + 1)
    c_lin[s_idx] = 1.0
    p1 = SubproblemSpec(layout=layout, c_lin=c_lin, cons=cons,
                        hr_stacks=spec.hr_stacks,
                        eps_feas=spec.eps_feas, eps_opt=min(spec.eps_opt, 1e-6),
                        max_stages=spec.max_stages, max_newton=spec.max_newton)

    x = np.zeros(n + 1)
    if x_start is not None:
        x[:n] = x_start
    vals, _ = _values(spec, x[:n])
    worst = float(np.max(vals)) if len(vals) else 0.0
    if spec.logs is not None:
        arg = spec.logs.r + spec.logs.P @ x[:n]
        worst = max(worst, float(np.max(-arg)) + 1e-6)
    x[s_idx] = worst + 1.0 + 0.1 * abs(worst)

    # bound the search: slack floor plus a trust ball around the start
    cons.append(LinCon(np.concatenate([np.zeros(n), [-1.0]]), 1.0))
    radius2 = 1e8 * (1.0 + float(x @ x))
    cons.append(QuadCon(np.eye(n + 1), -x, radius2))

    def interior(y):
        vals, _ = _values(spec, y)
        ok = (not len(vals)) or float(np.max(vals)) < -1e-10
        if ok and spec.logs is not None:
            arg = spec.logs.r + spec.logs.P @ y
            ok = bool(np.all(arg > 0.0))
        return ok

    t = 1.0
    m = len(cons)
    for _ in range(p1.max_stages):
        x, _, _, _ = _center(p1, x, t, stop=lambda y: interior(y[:n]))
        if interior(x[:n]):
            return x[:n]
        if m / t <= 0.5 * p1.eps_opt:
            break
        t *= 30.0
    return None


# ---------------------------------------------------------------------------
# entry point


def solve(spec: SubproblemSpec, x0: np.ndarray | None = None) -> SubproblemResult:
    """Solve the subproblem; deterministic given the spec.

    The returned status is "optimal" when the barrier duality-gap bound is
    below ``eps_opt``; the point then satisfies every constraint strictly,
    so feasibility residuals are zero to ``eps_feas`` by construction.
    """
    spec.validate()
    n = spec.layout.n
    if x0 is None:
        x0 = spec.x0 if spec.x0 is not None else np.zeros(n)
    x = np.asarray(x0, float).copy()

    strictly_feasible = np.isfinite(_merit(spec, x, 1.0))
    if not strictly_feasible:
        found = _phase1(spec, x)
        if found is None:
            vals, _ = _values(spec, x)
            return SubproblemResult(
                x=x, objective=_f0(spec, x), status="infeasible",
                gap_bound=np.inf,
                max_violation=float(np.max(vals)) if len(vals) else 0.0,
                trace=[], newton_total=0)
        x = found

    m = len(spec.cons)
    t = float(spec.t_init) if spec.t_init else 1.0
    trace = []
    newton_total = 0
    status = "max_iter"
    for _ in range(spec.max_stages):
        x, merits, steps, lam2 = _center(spec, x, t)
        newton_total += steps
        trace.append(StageTrace(t=t, objective=_f0(spec, x),
                                newton_steps=steps, lambda2=lam2,
                                merits=merits))
        if m == 0 or m / t <= 0.5 * spec.eps_opt:
            status = "optimal"
            break
        t *= 30.0

    vals, _ = _values(spec, x)
    return SubproblemResult(
        x=x, objective=_f0(spec, x), status=status,
        gap_bound=(m / t if m else 0.0),
        max_violation=float(np.max(vals)) if len(vals) else 0.0,
        trace=trace, newton_total=newton_total)


def dump_trace_csv(result: SubproblemResult, path):
    """Write the per-stage iterate trace for offline inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "t", "objective", "newton_steps", "lambda2"])
        for i, st in enumerate(result.trace):
            writer.writerow([i, repr(st.t), repr(st.objective),
                             st.newton_steps, repr(st.lambda2)])
