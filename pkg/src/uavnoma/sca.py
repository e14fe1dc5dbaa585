"""Outer path-following loop shared by the NOMA, DPC, OMA-1 and OMA-2 solvers."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from uavnoma.model import DesignPoint, SchemeKind, is_feasible, objective, tau_length, to_mbps
from uavnoma.scenario import Scenario
from uavnoma.solver import SolverOptions, safeguard_step, solve_subproblem
from uavnoma.surrogate import build_subproblem

log = logging.getLogger(__name__)


class InfeasibleScenario(ValueError):
    """No altitude/beamwidth in the boxes covers the cell."""


@dataclass(frozen=True)
class ScaOptions:
    max_outer_iters: int = 200
    rel_tol: float = 1e-5
    initial_beamwidth: float = math.pi / 4
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.max_outer_iters <= 0 or self.rel_tol <= 0 or self.initial_beamwidth <= 0:
            raise ValueError("ScaOptions fields must be positive")


@dataclass(frozen=True)
class Locks:
    """Coordinates held fixed during a run.

    ``altitude``/``beamwidth`` pin sqrt(h) and sqrt(theta); ``equal_allocation``
    pins tau and p at the equal split.
    """

    altitude: Optional[float] = None
    beamwidth: Optional[float] = None
    equal_allocation: bool = False

    @property
    def groups(self) -> frozenset:
        out = set()
        if self.altitude is not None:
            out |= {"h", "theta"}
        if self.equal_allocation:
            out |= {"tau", "power"}
        return frozenset(out)


@dataclass
class IterationRecord:
    iteration: int
    objective_nats: float
    objective_mbps: float
    surrogate: float
    rates: list
    min_user: int
    status: str
    newton_steps: int
    wall_ms: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolveReport:
    scheme: SchemeKind
    scenario_digest: str
    v_final: DesignPoint
    trace: list
    termination: str

    @property
    def final_nats(self) -> float:
        return self.trace[-1].objective_nats

    @property
    def final_mbps(self) -> float:
        return self.trace[-1].objective_mbps

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "scenario_digest": self.scenario_digest,
            "termination": self.termination,
            "iterations": self.iterations,
            "final_nats": self.final_nats,
            "final_mbps": self.final_mbps,
            "v_final": self.v_final.to_dict(),
            "trace": [r.to_dict() for r in self.trace],
        }


def _initial_h(s: Scenario, beam: float) -> float:
    h_lo, h_hi = s.params.h_bounds
    return min(max((s.params.cell_radius / math.tan(beam)) ** 2, h_lo), h_hi)


def initialize(s: Scenario, scheme: SchemeKind, opts: ScaOptions = ScaOptions(),
               locks: Locks = Locks()) -> DesignPoint:
    """Equal power/bandwidth split, fixed beamwidth, lowest covering altitude.

    If no altitude in the box covers the cell at the starting beamwidth,
    the beamwidth is widened in 0.05 rad steps up to its maximum.
    """
    scheme = SchemeKind(scheme)
    prm = s.params
    K = s.num_users
    n_tau = tau_length(s, scheme)
    tau = np.full(n_tau, 1.0 / n_tau)
    power = np.full(K, prm.total_power / K)
    R = prm.cell_radius
    if locks.altitude is not None:
        beam = locks.beamwidth
        if locks.altitude * math.tan(beam) < R * (1 - 1e-12):
            raise InfeasibleScenario(
                f"fixed altitude {locks.altitude} m and beamwidth {beam} rad do not cover R = {R} m")
        return DesignPoint(tau, power, locks.altitude**2, beam**2)
    beam = min(max(opts.initial_beamwidth, prm.beamwidth_min), prm.beamwidth_max)
    while prm.altitude_max * math.tan(beam) < R:
        if beam >= prm.beamwidth_max:
            raise InfeasibleScenario(
                f"no altitude <= {prm.altitude_max} m and beamwidth <= {prm.beamwidth_max:.6g} rad "
                f"covers R = {R} m")
        beam = min(beam + 0.05, prm.beamwidth_max)
    return DesignPoint(tau, power, _initial_h(s, beam), beam**2)


def _record(s, scheme, v, kappa, surrogate, status, steps, wall_ms) -> IterationRecord:
    rb = objective(s, scheme, v)
    return IterationRecord(
        kappa, rb.min_rate, to_mbps(rb.min_rate, s.params.total_bandwidth), surrogate,
        rb.rates.tolist(), rb.min_user, status, steps, wall_ms,
    )


def run(s: Scenario, scheme: SchemeKind, opts: ScaOptions = ScaOptions(),
        locks: Locks = Locks(), v0: Optional[DesignPoint] = None,
        on_iterate: Optional[Callable[[int, DesignPoint], None]] = None) -> SolveReport:
    """Iterate convexify-solve-safeguard until the objective stalls.

    ``on_iterate(k, v)`` is called with every iterate, starting from the
    initial point at ``k = 0``.
    """
    scheme = SchemeKind(scheme)
    v = initialize(s, scheme, opts, locks) if v0 is None else v0
    ok, why = is_feasible(s, scheme, v)
    if not ok:
        raise InfeasibleScenario("initial point infeasible: " + "; ".join(why))
    groups = locks.groups
    f = objective(s, scheme, v).min_rate
    trace = [_record(s, scheme, v, 0, f, "init", 0, 0.0)]
    if on_iterate is not None:
        on_iterate(0, v)
    termination = "max-iters"
    for kappa in range(1, opts.max_outer_iters + 1):
        t0 = time.perf_counter()
        sp = build_subproblem(s, scheme, v, groups)
        sol = solve_subproblem(sp, v, opts.solver)
        v_new = safeguard_step(s, scheme, v, sol.point)
        wall = (time.perf_counter() - t0) * 1e3
        f_new = objective(s, scheme, v_new).min_rate
        trace.append(_record(s, scheme, v_new, kappa, sol.value, sol.status, sol.newton_steps, wall))
        if on_iterate is not None:
            on_iterate(kappa, v_new)
        if sol.status != "converged":
            log.info("%s iteration %d: subproblem status %s", scheme.value, kappa, sol.status)
        stalled = v_new is v
        v, f_prev, f = v_new, f, f_new
        if stalled:
            termination = "stalled"
            break
        if abs(f - f_prev) / max(1.0, abs(f_prev)) < opts.rel_tol:
            termination = "converged"
            break
    return SolveReport(scheme, s.digest(), v, trace, termination)
