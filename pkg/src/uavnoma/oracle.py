"""Exhaustive grid search over the two-user problem, used to check the SCA loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from uavnoma.model import DesignPoint, SchemeKind
from uavnoma.scenario import Scenario


@dataclass(frozen=True)
class OracleResult:
    point: DesignPoint
    min_rate: float
    resolution: dict
    evaluations: int


def _rate(tau, p_sig, p_int, d, h, theta, g, sb):
    # written out independently of uavnoma.model on purpose
    with np.errstate(divide="ignore", invalid="ignore"):
        r = tau * np.log(1.0 + g * p_sig / (sb * tau * theta * (d + h) + g * p_int))
    return np.where((tau > 0) & (p_sig > 0), r, 0.0)


def _min_rate(s: Scenario, scheme: SchemeKind, tau1, frac, h, theta):
    prm = s.params
    g, sb, P = prm.ref_gain, prm.noise_density * prm.total_bandwidth, prm.total_power
    d_n, d_f = s.sq_dist[0], s.sq_dist[int(s.pairing[0])]
    p_n, p_f = frac * P, (1.0 - frac) * P
    if scheme is SchemeKind.OMA1:
        return np.minimum(_rate(tau1, p_n, 0.0, d_n, h, theta, g, sb),
                          _rate(1.0 - tau1, p_f, 0.0, d_f, h, theta, g, sb))
    if scheme is SchemeKind.OMA2:
        return np.minimum(_rate(1.0, p_n, p_f, d_n, h, theta, g, sb),
                          _rate(1.0, p_f, p_n, d_f, h, theta, g, sb))
    near = _rate(1.0, p_n, 0.0, d_n, h, theta, g, sb)
    far = _rate(1.0, p_f, p_n, d_f, h, theta, g, sb)
    if scheme is SchemeKind.NOMA:
        far = np.minimum(far, _rate(1.0, p_f, p_n, d_n, h, theta, g, sb))
    return np.minimum(near, far)


def _scan(s, scheme, tau_ax, frac_ax, beam_ax, alt_ax_unit):
    """Evaluate the grid; altitude runs over the covering part of its box for each beamwidth."""
    prm = s.params
    R = prm.cell_radius
    lo = np.maximum(prm.altitude_min, R / np.tan(beam_ax))
    ok = lo <= prm.altitude_max * (1 + 1e-12)
    beam = beam_ax[ok]
    lo = np.minimum(lo[ok], prm.altitude_max)
    alt = lo[:, None] + alt_ax_unit[None, :] * (prm.altitude_max - lo)[:, None]
    theta = (beam**2)[:, None] * np.ones_like(alt)
    h = alt**2
    best = (-math.inf, None)
    for t1 in tau_ax:
        vals = _min_rate(s, scheme, t1, frac_ax[:, None, None], h[None], theta[None])
        i = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i] > best[0]:
            best = (float(vals[i]), (t1, frac_ax[i[0]], alt[i[1], i[2]], beam[i[1]], alt_ax_unit[i[2]]))
    return best, len(tau_ax) * len(frac_ax) * alt.size


def brute_force_oracle(s: Scenario, scheme: SchemeKind, resolution: int = 60, refine: int = 3) -> OracleResult:
    """Grid-search the exact K=2 objective over power split, altitude, beamwidth (and tau for OMA-1).

    Each refinement pass re-grids a +/- two-cell window around the incumbent.
    Altitude is gridded over the covering part of its box at each beamwidth.
    """
    scheme = SchemeKind(scheme)
    if s.num_users != 2:
        raise ValueError(f"brute_force_oracle handles K=2 only, got K={s.num_users}")
    if resolution < 50:
        raise ValueError("brute_force_oracle: resolution must be >= 50 per axis")
    prm = s.params
    n = resolution
    oma1 = scheme is SchemeKind.OMA1
    ends = np.geomspace(1e-5, 0.5, n)
    axes = {
        "tau": np.linspace(0.0, 1.0, n) if oma1 else np.array([1.0]),
        # power splits far from 1/2 are common, so grid both ends geometrically too
        "frac": np.unique(np.concatenate([np.linspace(0.0, 1.0, n), ends, 1.0 - ends])),
        "beam": np.linspace(prm.beamwidth_min, prm.beamwidth_max, n),
        "alt": np.linspace(0.0, 1.0, n),
    }
    best_val, best_x = -math.inf, None
    total = 0
    for _ in range(refine + 1):
        (val, x), count = _scan(s, scheme, axes["tau"], axes["frac"], axes["beam"], axes["alt"])
        total += count
        if val > best_val:
            best_val, best_x = val, x
        t1, frac, alt, beam, unit = best_x
        for key, centre in (("tau", t1), ("frac", frac), ("beam", beam), ("alt", unit)):
            ax = axes[key]
            if len(ax) > 1:
                i = int(np.argmin(np.abs(ax - centre)))
                lo, hi = ax[max(i - 2, 0)], ax[min(i + 2, len(ax) - 1)]
                axes[key] = np.unique(np.append(np.linspace(lo, hi, n), centre))
    t1, frac, alt, beam, _ = best_x
    P = prm.total_power
    tau = [t1, 1.0 - t1] if oma1 else [1.0]
    point = DesignPoint(tau, [frac * P, (1.0 - frac) * P], alt**2, beam**2)
    return OracleResult(point, best_val, {"per_axis": n, "refinements": refine}, total)
