"""Log-barrier Newton solver for the epigraph-form max-min subproblem.

Maximizes ``t`` subject to ``t <= f_i`` for every concave surrogate, the
bandwidth and power simplices, the altitude/beamwidth boxes and the convex
coverage cut.  Variables are optimized in scaled form
``(tau, p/P, h/h_max^2, theta/theta_max^2, t)``; the two simplex equalities
are eliminated with a fixed null-space basis so every Newton system is a
small dense positive-definite solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from uavnoma.model import DesignPoint, SchemeKind, objective, is_feasible
from uavnoma.scenario import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    barrier_init: float = 0.1
    barrier_factor: float = 0.1
    newton_tol: float = 1e-13
    max_newton: int = 600
    gap_target: float = 1e-8
    tau_floor: float = 1e-4
    power_floor: float = 1e-6  # fraction of P

    def __post_init__(self):
        for name in ("barrier_init", "newton_tol", "max_newton", "gap_target", "tau_floor", "power_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverOptions.{name} must be positive")
        if not 0 < self.barrier_factor < 1:
            raise ValueError("SolverOptions.barrier_factor must lie in (0, 1)")


@dataclass
class ConvexSubproblem:
    """Surrogates, coverage cut and locked coordinate groups at one expansion point."""

    scenario: Scenario
    scheme: SchemeKind
    surrogates: object
    cut: object
    expansion: DesignPoint
    locks: frozenset = frozenset()

    @property
    def num_epigraph(self) -> int:
        return len(self.surrogates)


@dataclass
class SubproblemSolution:
    point: DesignPoint
    t: float
    status: str
    value: float
    warm_value: float
    newton_steps: int
    kkt: dict = field(default_factory=dict)


class _Barrier:
    """Constraint bookkeeping and barrier derivatives in scaled variables."""

    def __init__(self, sp: ConvexSubproblem, opts: SolverOptions):
        s = sp.scenario
        prm = s.params
        sur = sp.surrogates
        self.sp, self.sur, self.cut = sp, sur, sp.cut
        self.n_tau = n_tau = sur.n_tau
        self.K = K = s.num_users
        self.nz = nz = n_tau + K + 2
        self.n = nz + 1
        self.it = nz
        self.ih, self.ith = n_tau + K, n_tau + K + 1
        h_lo, h_hi = prm.h_bounds
        t_lo, t_hi = prm.theta_bounds
        self.scale = np.concatenate([np.ones(n_tau), np.full(K, prm.total_power), [h_hi, t_hi]])
        locks = sp.locks

        lo_idx, lo_val, hi_idx, hi_val = [], [], [], []
        free = []
        tau_ix = list(range(n_tau))
        p_ix = list(range(n_tau, n_tau + K))
        self.tau_free = "tau" not in locks
        self.p_free = "power" not in locks
        if self.tau_free:
            lo_idx += tau_ix
            lo_val += [opts.tau_floor] * n_tau
        if self.p_free:
            lo_idx += p_ix
            lo_val += [opts.power_floor] * K
        self.h_free = "h" not in locks
        self.th_free = "theta" not in locks
        if self.h_free:
            lo_idx.append(self.ih)
            lo_val.append(h_lo / h_hi)
            hi_idx.append(self.ih)
            hi_val.append(1.0)
        if self.th_free:
            lo_idx.append(self.ith)
            lo_val.append(t_lo / t_hi)
            hi_idx.append(self.ith)
            hi_val.append(1.0)
        self.lo_idx, self.lo_val = np.array(lo_idx, dtype=int), np.array(lo_val)
        self.hi_idx, self.hi_val = np.array(hi_idx, dtype=int), np.array(hi_val)
        self.use_cut = self.cut is not None and (self.h_free or self.th_free)

        cols = []
        for group, is_free in ((tau_ix, self.tau_free), (p_ix, self.p_free)):
            if is_free and len(group) > 1:
                last = group[-1]
                for i in group[:-1]:
                    col = np.zeros(self.n)
                    col[i], col[last] = 1.0, -1.0
                    cols.append(col)
        for i, is_free in ((self.ih, self.h_free), (self.ith, self.th_free), (self.it, True)):
            if is_free:
                col = np.zeros(self.n)
                col[i] = 1.0
                cols.append(col)
        self.Z = np.column_stack(cols)
        self.m_epi = len(sur)
        self.m = self.m_epi + len(self.lo_idx) + len(self.hi_idx) + int(self.use_cut)

        vi = sur.var_index
        self.rows5 = np.repeat(np.arange(self.m_epi), 5)
        self.cols5 = vi.ravel()
        self.hr = np.broadcast_to(vi[:, :, None], (self.m_epi, 5, 5)).ravel()
        self.hc = np.broadcast_to(vi[:, None, :], (self.m_epi, 5, 5)).ravel()
        self.slot_scale = self.scale[vi]

    def natural(self, x: np.ndarray) -> np.ndarray:
        return x[: self.nz] * self.scale

    def slacks(self, x: np.ndarray):
        z = self.natural(x)
        epi = self.sur.values_flat(z) - x[self.it]
        lo = x[self.lo_idx] - self.lo_val
        hi = self.hi_val - x[self.hi_idx]
        parts = [epi, lo, hi]
        if self.use_cut:
            parts.append(np.atleast_1d(self.cut.slack(z[self.ih], z[self.ith])))
        return np.concatenate(parts)

    def phi(self, x: np.ndarray, w: float, t_scale: float) -> float:
        with np.errstate(all="ignore"):
            c = self.slacks(x)
        if not np.all(c > 0) or not np.all(np.isfinite(c)):
            return math.inf
        return -x[self.it] / t_scale - w * float(np.sum(np.log(c)))

    def derivatives(self, x: np.ndarray, w: float, t_scale: float):
        n, it = self.n, self.it
        z = self.natural(x)
        val, lg, lh = self.sur.derivatives(z)
        lg = lg * self.slot_scale
        lh = lh * self.slot_scale[:, :, None] * self.slot_scale[:, None, :]
        c_epi = val - x[it]
        G = np.zeros((self.m_epi, n))
        np.add.at(G, (self.rows5, self.cols5), lg.ravel())
        G[:, it] = -1.0
        inv = 1.0 / c_epi
        grad = -G.T @ inv
        H = (G.T * inv**2) @ G
        np.add.at(H, (self.hr, self.hc), -(lh * inv[:, None, None]).ravel())

        c_lo = x[self.lo_idx] - self.lo_val
        np.add.at(grad, self.lo_idx, -1.0 / c_lo)
        np.add.at(H, (self.lo_idx, self.lo_idx), 1.0 / c_lo**2)
        c_hi = self.hi_val - x[self.hi_idx]
        np.add.at(grad, self.hi_idx, 1.0 / c_hi)
        np.add.at(H, (self.hi_idx, self.hi_idx), 1.0 / c_hi**2)
        if self.use_cut:
            sc = self.scale[[self.ih, self.ith]]
            cv, cg, ch = self.cut.slack_derivatives(z[self.ih], z[self.ith])
            cg = cg * sc
            ch = ch * np.outer(sc, sc)
            idx = [self.ih, self.ith]
            grad[idx] -= cg / cv
            H[np.ix_(idx, idx)] += np.outer(cg, cg) / cv**2 - ch / cv
        grad *= w
        H *= w
        grad[it] -= 1.0 / t_scale
        return grad, H


def _interior_start(bar: _Barrier, v: DesignPoint, opts: SolverOptions) -> np.ndarray:
    """Scaled copy of ``v`` pulled strictly inside every inequality."""
    sp = bar.sp
    prm = sp.scenario.params
    z = np.concatenate([v.tau, v.power, [v.h, v.theta]])
    x = np.zeros(bar.n)
    x[: bar.nz] = z / bar.scale
    n_tau, K = bar.n_tau, bar.K

    def lift(seg, floor):
        lo = 2.0 * floor
        if np.min(seg) < lo:
            seg = np.maximum(seg, lo)
            seg = seg / seg.sum()
        return seg

    if bar.tau_free:
        x[:n_tau] = lift(x[:n_tau], opts.tau_floor)
    if bar.p_free:
        x[n_tau : n_tau + K] = lift(x[n_tau : n_tau + K], opts.power_floor)
    margin = 1e-7
    for i, free, bounds, top in (
        (bar.ih, bar.h_free, prm.h_bounds, prm.h_bounds[1]),
        (bar.ith, bar.th_free, prm.theta_bounds, prm.theta_bounds[1]),
    ):
        if free:
            lo, hi = bounds[0] / top, 1.0
            gap = margin * (hi - lo)
            x[i] = min(max(x[i], lo + gap), hi - gap)
    if bar.use_cut:
        # pull inward along increasing h, then beamwidth once h is capped
        step = 1e-6
        for _ in range(200):
            if bar.cut.slack(x[bar.ih] * bar.scale[bar.ih], x[bar.ith] * bar.scale[bar.ith]) > 1e-10:
                break
            hi = 1.0 - margin * (1.0 - prm.h_bounds[0] / prm.h_bounds[1])
            if bar.h_free and x[bar.ih] + step <= hi:
                x[bar.ih] += step
            elif bar.th_free:
                x[bar.ith] = min(x[bar.ith] + step, 1.0 - margin)
            step *= 2
        else:
            raise ValueError("warm start cannot be made strictly feasible for the coverage cut")
    vals = bar.sur.values_flat(bar.natural(x))
    spread = max(abs(float(np.min(vals))), 1e-12)
    x[bar.it] = float(np.min(vals)) - 1e-3 * spread
    return x


def solve_subproblem(sp: ConvexSubproblem, warm_start: DesignPoint,
                     opts: SolverOptions = SolverOptions()) -> SubproblemSolution:
    """Maximize the minimum surrogate rate by a barrier path from ``warm_start``.

    The returned point never has a lower surrogate objective than the warm
    start, whatever the status.
    """
    sur = sp.surrogates
    warm_value = float(np.min(sur.values(warm_start))) if np.all(warm_start.tau > 0) and np.all(warm_start.power > 0) else -math.inf
    ok, why = _warm_ok(sp, warm_start)
    if not ok:
        raise ValueError(f"warm start infeasible for subproblem: {'; '.join(why)}")
    bar = _Barrier(sp, opts)
    x = _interior_start(bar, warm_start, opts)
    t_scale = max(abs(x[bar.it]), 1e-9)
    Z = bar.Z
    w = opts.barrier_init
    steps = 0
    status = "converged"
    lam2 = math.inf
    grad = None
    while True:
        centered = False
        while steps < opts.max_newton:
            grad, H = bar.derivatives(x, w, t_scale)
            gr = Z.T @ grad
            Hr = Z.T @ H @ Z
            try:
                dy = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hr), gr)
            except (np.linalg.LinAlgError, ValueError):
                reg = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(Hr)))))
                dy = -np.linalg.solve(Hr + reg * np.eye(len(gr)), gr)
            lam2 = float(-gr @ dy)
            if not math.isfinite(lam2):
                status = "numerical"
                break
            if lam2 / 2 <= opts.newton_tol:
                centered = True
                break
            dx = Z @ dy
            f0 = bar.phi(x, w, t_scale)
            step = 1.0
            while step > 1e-14:
                f1 = bar.phi(x + step * dx, w, t_scale)
                if f1 <= f0 - 0.01 * step * lam2:
                    break
                step *= 0.5
            steps += 1
            if step <= 1e-14:
                status = "numerical"
                break
            x = x + step * dx
        if status == "numerical":
            break
        if not centered:
            status = "max-iters"
            break
        if bar.m * w < opts.gap_target:
            break
        w *= opts.barrier_factor

    point = _finalize(bar, x)
    value = float(np.min(sur.values(point)))
    # dual residual in the barrier's local norm (the Newton decrement) and the duality gap bound
    kkt = {
        "dual_residual": math.sqrt(max(lam2, 0.0)) if math.isfinite(lam2) else math.inf,
        "complementarity": bar.m * w,
        "gradient_inf": float(np.max(np.abs(Z.T @ grad))) if grad is not None else math.nan,
    }
    if status != "converged":
        log.debug("subproblem %s after %d Newton steps", status, steps)
    if not value >= warm_value:
        return SubproblemSolution(warm_start, warm_value, status, warm_value, warm_value, steps, kkt)
    return SubproblemSolution(point, float(x[bar.it]), status, value, warm_value, steps, kkt)


def _finalize(bar: _Barrier, x: np.ndarray) -> DesignPoint:
    z = bar.natural(x)
    n_tau, K = bar.n_tau, bar.K
    tau = z[:n_tau]
    p = z[n_tau : n_tau + K]
    P = bar.sp.scenario.params.total_power
    tau = tau / tau.sum()
    p = p * (P / p.sum())
    return DesignPoint(tau, p, z[bar.ih], z[bar.ith])


def _warm_ok(sp: ConvexSubproblem, v: DesignPoint, tol: float = 1e-8):
    """Closed-set feasibility of ``v`` for the subproblem (cut in place of coverage)."""
    ok, why = is_feasible(sp.scenario, sp.scheme, v, tol)
    why = [w for w in why if not w.startswith("coverage")]
    if sp.cut is not None and sp.cut.slack(v.h, v.theta) < -tol:
        why.append("coverage cut violated")
    return not why, why


def safeguard_step(s: Scenario, scheme: SchemeKind, v_old: DesignPoint, v_new: DesignPoint) -> DesignPoint:
    """Accept ``v_new`` only if the exact objective does not drop.

    Otherwise backtrack toward ``v_old`` by factors 1/2 .. 1/2^8 and return
    the first feasible improving point, falling back to ``v_old``.
    """
    f_old = objective(s, scheme, v_old).min_rate
    if objective(s, scheme, v_new).min_rate >= f_old - 1e-12 and is_feasible(s, scheme, v_new)[0]:
        return v_new
    for i in range(1, 9):
        cand = v_old.lerp(v_new, 0.5**i)
        if objective(s, scheme, cand).min_rate >= f_old - 1e-12 and is_feasible(s, scheme, cand)[0]:
            return cand
    return v_old
