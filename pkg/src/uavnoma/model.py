"""Exact rate functions, max-min objectives and feasibility checks.

Rates are in nats/s/Hz, already weighted by the bandwidth fraction, so a
user's throughput is ``rate * B`` nats/s.  Pair ``k`` (0-based) is near user
``k`` together with far user ``s.pairing[k]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from uavnoma.scenario import Scenario


class SchemeKind(str, enum.Enum):
    NOMA = "NOMA"
    DPC = "DPC"
    OMA1 = "OMA1"
    OMA2 = "OMA2"

    @classmethod
    def parse(cls, name: str) -> "SchemeKind":
        key = name.upper().replace("-", "").replace("_", "")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown scheme {name!r}; expected one of NOMA, DPC, OMA1, OMA2") from None


def tau_length(s: Scenario, scheme: SchemeKind) -> int:
    return s.num_users if scheme is SchemeKind.OMA1 else s.num_pairs


@dataclass(frozen=True, eq=False)
class DesignPoint:
    """One candidate allocation, in squared-variable form.

    ``tau`` are bandwidth fractions, ``power`` per-user powers (mW), ``h`` the
    squared altitude (m^2) and ``theta`` the squared beamwidth (rad^2).
    """

    tau: np.ndarray
    power: np.ndarray
    h: float
    theta: float

    def __post_init__(self):
        tau = np.array(self.tau, dtype=float).reshape(-1)
        power = np.array(self.power, dtype=float).reshape(-1)
        tau.setflags(write=False)
        power.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def altitude(self) -> float:
        return math.sqrt(self.h)

    @property
    def beamwidth(self) -> float:
        return math.sqrt(self.theta)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau.tolist(),
            "power_mw": self.power.tolist(),
            "h": self.h,
            "theta": self.theta,
            "altitude_m": self.altitude,
            "beamwidth_rad": self.beamwidth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DesignPoint":
        return cls(data["tau"], data["power_mw"], data["h"], data["theta"])

    def lerp(self, other: "DesignPoint", step: float) -> "DesignPoint":
        """Point ``self + step * (other - self)``."""
        return DesignPoint(
            self.tau + step * (other.tau - self.tau),
            self.power + step * (other.power - self.power),
            self.h + step * (other.h - self.h),
            self.theta + step * (other.theta - self.theta),
        )


@dataclass(frozen=True)
class RateBreakdown:
    """Per-user exact rates for one scheme at one design point.

    ``far_cross``/``far_own`` are the two NOMA far-user components (decoding
    at the near user, and at the far user itself), indexed by pair.
    """

    scheme: SchemeKind
    rates: np.ndarray
    min_rate: float
    min_user: int
    far_cross: Optional[np.ndarray] = field(default=None)
    far_own: Optional[np.ndarray] = field(default=None)


def channel_gain(d, h, theta, g):
    """Free-space LoS power gain ``g / (theta (d + h))``."""
    d = np.asarray(d, dtype=float)
    if np.any(np.asarray(theta) <= 0):
        raise ValueError("channel_gain: theta must be positive")
    if np.any(d + h <= 0):
        raise ValueError("channel_gain: d + h must be positive")
    out = g / (theta * (d + h))
    return float(out) if out.ndim == 0 else out


def link_rate(tau, p_sig, p_int, d, h, theta, g, sigma_b):
    """``tau ln(1 + g p_sig / (sigma_B tau theta (d + h) + g p_int))``.

    Vectorized over array arguments.  Returns the limit value 0 where
    ``tau == 0`` or ``p_sig == 0``.
    """
    if np.any(np.asarray(theta) <= 0):
        raise ValueError("link_rate: theta must be positive")
    tau = np.asarray(tau, dtype=float)
    p_sig = np.asarray(p_sig, dtype=float)
    den = sigma_b * tau * theta * (np.asarray(d, dtype=float) + h) + g * np.asarray(p_int, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = tau * np.log1p(g * p_sig / den)
    val = np.where((tau <= 0) | (p_sig <= 0), 0.0, val)
    return float(val) if val.ndim == 0 else val


def _parts(s: Scenario, k: int):
    return int(s.pairing[k]), s.params.ref_gain, s.noise_power_total


def rate_near(s: Scenario, v: DesignPoint, k: int) -> float:
    """Near user ``k`` after cancelling its partner's signal."""
    _, g, sb = _parts(s, k)
    return link_rate(v.tau[k], v.power[k], 0.0, s.sq_dist[k], v.h, v.theta, g, sb)


def rate_far_own(s: Scenario, v: DesignPoint, k: int) -> float:
    """Far user of pair ``k`` decoding its own message, near signal as noise."""
    j, g, sb = _parts(s, k)
    return link_rate(v.tau[k], v.power[j], v.power[k], s.sq_dist[j], v.h, v.theta, g, sb)


def rate_far_cross(s: Scenario, v: DesignPoint, k: int) -> float:
    """Near user ``k`` decoding its partner's message (the SIC step)."""
    j, g, sb = _parts(s, k)
    return link_rate(v.tau[k], v.power[j], v.power[k], s.sq_dist[k], v.h, v.theta, g, sb)


def rate_far(s: Scenario, v: DesignPoint, k: int) -> float:
    return min(rate_far_cross(s, v, k), rate_far_own(s, v, k))


def rate_oma_pair(s: Scenario, v: DesignPoint, k: int) -> tuple[float, float]:
    """(near, far) rates when a pair shares a slice without SIC."""
    j, g, sb = _parts(s, k)
    near = link_rate(v.tau[k], v.power[k], v.power[j], s.sq_dist[k], v.h, v.theta, g, sb)
    far = link_rate(v.tau[k], v.power[j], v.power[k], s.sq_dist[j], v.h, v.theta, g, sb)
    return near, far


def _check_dims(s: Scenario, scheme: SchemeKind, v: DesignPoint) -> None:
    n_tau = tau_length(s, scheme)
    if v.tau.shape != (n_tau,):
        raise ValueError(f"{scheme.value}: expected {n_tau} bandwidth fractions, got {v.tau.size}")
    if v.power.shape != (s.num_users,):
        raise ValueError(f"{scheme.value}: expected {s.num_users} powers, got {v.power.size}")


def objective(s: Scenario, scheme: SchemeKind, v: DesignPoint) -> RateBreakdown:
    """Exact per-user rates and the worst user for ``scheme`` at ``v``."""
    scheme = SchemeKind(scheme)
    _check_dims(s, scheme, v)
    g, sb, d, p = s.params.ref_gain, s.noise_power_total, s.sq_dist, v.power
    near = s.near_idx
    far = s.pairing
    rates = np.empty(s.num_users)
    cross = own = None
    if scheme is SchemeKind.OMA1:
        rates[:] = link_rate(v.tau, p, 0.0, d, v.h, v.theta, g, sb)
    elif scheme is SchemeKind.OMA2:
        rates[near] = link_rate(v.tau, p[near], p[far], d[near], v.h, v.theta, g, sb)
        rates[far] = link_rate(v.tau, p[far], p[near], d[far], v.h, v.theta, g, sb)
    else:
        rates[near] = link_rate(v.tau, p[near], 0.0, d[near], v.h, v.theta, g, sb)
        own = link_rate(v.tau, p[far], p[near], d[far], v.h, v.theta, g, sb)
        own = np.atleast_1d(own)
        if scheme is SchemeKind.NOMA:
            cross = np.atleast_1d(link_rate(v.tau, p[far], p[near], d[near], v.h, v.theta, g, sb))
            rates[far] = np.minimum(cross, own)
        else:
            rates[far] = own
    user = int(np.argmin(rates))
    return RateBreakdown(scheme, rates, float(rates[user]), user, cross, own)


def coverage_margin(s: Scenario, v: DesignPoint) -> float:
    """``sqrt(h) tan(sqrt(theta)) - R``; non-negative iff the cell is covered."""
    b = math.sqrt(v.theta)
    if b >= math.pi / 2:
        return math.inf
    return math.sqrt(v.h) * math.tan(b) - s.params.cell_radius


def is_feasible(s: Scenario, scheme: SchemeKind, v: DesignPoint, tol: float = 1e-8) -> tuple[bool, list[str]]:
    """Check simplex, power budget, boxes and coverage for ``v``."""
    scheme = SchemeKind(scheme)
    out = []
    try:
        _check_dims(s, scheme, v)
    except ValueError as exc:
        return False, [str(exc)]
    prm = s.params
    P = prm.total_power
    if abs(v.tau.sum() - 1.0) > tol:
        out.append(f"tau: sum is {v.tau.sum():.12g}, must equal 1")
    if np.any(v.tau < -tol):
        out.append("tau: negative bandwidth fraction")
    if abs(v.power.sum() - P) > tol * P:
        out.append(f"power: sum is {v.power.sum():.12g} mW, must equal P = {P:.12g} mW")
    if np.any(v.power < -tol * P):
        out.append("power: negative power")
    h_lo, h_hi = prm.h_bounds
    if not h_lo * (1 - tol) <= v.h <= h_hi * (1 + tol):
        out.append(f"h: {v.h:.12g} outside [{h_lo:.12g}, {h_hi:.12g}]")
    t_lo, t_hi = prm.theta_bounds
    if not t_lo * (1 - tol) <= v.theta <= t_hi * (1 + tol):
        out.append(f"theta: {v.theta:.12g} outside [{t_lo:.12g}, {t_hi:.12g}]")
    if v.theta > 0 and v.h > 0 and coverage_margin(s, v) < -tol * prm.cell_radius:
        out.append(
            f"coverage: sqrt(h) tan(sqrt(theta)) = {coverage_margin(s, v) + prm.cell_radius:.12g} "
            f"< R = {prm.cell_radius:.12g}"
        )
    return not out, out


def to_mbps(r, bandwidth: float):
    """nats/s/Hz (fraction-weighted) to Mbit/s over total bandwidth ``bandwidth`` Hz."""
    return r * bandwidth / math.log(2) / 1e6
