"""Problem instances: user layout, near/far pairing, physical constants."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

BEAMWIDTH_CEILING = math.pi / 2 - 1e-6


class ScenarioError(ValueError):
    """Raised for invalid scenario parameters or documents."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ScenarioParams:
    """Physical constants and bounds.

    Altitude and beamwidth bounds are given for the *unsquared* quantities
    (meters and radians); the optimizer works with their squares.
    Annuli default to [10, R/2] (near) and [R/2, R] (far).
    """

    seed: int = 0
    num_users: int = 20
    cell_radius: float = 300.0
    ref_gain: float = 3.24e-4
    total_bandwidth: float = 15e6
    noise_density: float = dbm_to_mw(-174.0)
    total_power: float = dbm_to_mw(3.0)
    altitude_min: float = 50.0
    altitude_max: float = 500.0
    beamwidth_min: float = 1e-3
    beamwidth_max: float = BEAMWIDTH_CEILING
    near_annulus: Optional[tuple[float, float]] = None
    far_annulus: Optional[tuple[float, float]] = None

    def __post_init__(self):
        R = self.cell_radius
        if self.near_annulus is None:
            object.__setattr__(self, "near_annulus", (10.0, R / 2))
        if self.far_annulus is None:
            object.__setattr__(self, "far_annulus", (R / 2, R))
        object.__setattr__(self, "near_annulus", tuple(float(x) for x in self.near_annulus))
        object.__setattr__(self, "far_annulus", tuple(float(x) for x in self.far_annulus))

    @property
    def noise_power_total(self) -> float:
        """Noise power over the whole band, sigma_B = sigma^2 * B (mW)."""
        return self.noise_density * self.total_bandwidth

    @property
    def h_bounds(self) -> tuple[float, float]:
        return self.altitude_min**2, self.altitude_max**2

    @property
    def theta_bounds(self) -> tuple[float, float]:
        return self.beamwidth_min**2, self.beamwidth_max**2

    def violations(self) -> list[str]:
        out = []
        K = self.num_users
        if not isinstance(K, (int, np.integer)) or K < 2 or K % 2:
            out.append(f"num_users: must be an even integer >= 2, got {K}")
        if int(self.seed) < 0:
            out.append(f"seed: must be non-negative, got {self.seed}")
        for name in ("cell_radius", "ref_gain", "total_bandwidth", "noise_density", "total_power"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                out.append(f"{name}: must be positive and finite, got {val}")
        if not 0 < self.altitude_min <= self.altitude_max:
            out.append(
                f"altitude_min/altitude_max: need 0 < min <= max, got "
                f"{self.altitude_min}, {self.altitude_max}"
            )
        if not 0 < self.beamwidth_min < self.beamwidth_max <= BEAMWIDTH_CEILING:
            out.append(
                f"beamwidth_min/beamwidth_max: need 0 < min < max <= pi/2 - 1e-6, got "
                f"{self.beamwidth_min}, {self.beamwidth_max}"
            )
        for name in ("near_annulus", "far_annulus"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi <= self.cell_radius:
                out.append(f"{name}: need 0 <= r_lo <= r_hi <= cell_radius, got [{lo}, {hi}]")
        return out

    def check(self) -> None:
        bad = self.violations()
        if bad:
            raise ScenarioError("; ".join(bad))

    def replace(self, **changes) -> "ScenarioParams":
        data = asdict(self)
        data.update(changes)
        return ScenarioParams(**data)


@dataclass(frozen=True, eq=False)
class Scenario:
    """An immutable problem instance.

    Users ``0 .. K/2-1`` are the near users; ``pairing[k]`` is the index of
    the far user sharing near user ``k``'s band.  ``sq_dist`` holds squared
    horizontal distances to the UAV projection.
    """

    params: ScenarioParams
    user_xy: np.ndarray
    uav_xy: np.ndarray
    pairing: np.ndarray
    sq_dist: np.ndarray = field(default=None)

    def __post_init__(self):
        xy = np.array(self.user_xy, dtype=float).reshape(-1, 2)
        uav = np.array(self.uav_xy, dtype=float).reshape(2)
        pairing = np.array(self.pairing, dtype=int).reshape(-1)
        d = self.sq_dist
        d = np.sum((xy - uav) ** 2, axis=1) if d is None else np.array(d, dtype=float)
        for arr in (xy, uav, pairing, d):
            arr.setflags(write=False)
        object.__setattr__(self, "user_xy", xy)
        object.__setattr__(self, "uav_xy", uav)
        object.__setattr__(self, "pairing", pairing)
        object.__setattr__(self, "sq_dist", d)

    @property
    def num_users(self) -> int:
        return len(self.user_xy)

    @property
    def num_pairs(self) -> int:
        return len(self.user_xy) // 2

    @property
    def near_idx(self) -> np.ndarray:
        return np.arange(self.num_pairs)

    @property
    def noise_power_total(self) -> float:
        return self.params.noise_power_total

    def with_params(self, **changes) -> "Scenario":
        """Same layout, different constants (e.g. bandwidth in a sweep)."""
        return Scenario(self.params.replace(**changes), self.user_xy, self.uav_xy, self.pairing)

    def to_dict(self) -> dict:
        params = asdict(self.params)
        params["near_annulus"] = list(params["near_annulus"])
        params["far_annulus"] = list(params["far_annulus"])
        return {
            "params": params,
            "user_xy": [[float(x), float(y)] for x, y in self.user_xy],
            "uav_xy": [float(v) for v in self.uav_xy],
            "pairing": [[int(k) + 1, int(j) + 1] for k, j in enumerate(self.pairing)],
        }

    def to_json(self) -> str:
        # repr-precision floats: 17 significant digits, exact round-trip
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        expected = {"params", "user_xy", "uav_xy", "pairing"}
        missing = expected - data.keys()
        if missing:
            raise ScenarioError(f"scenario document missing keys: {sorted(missing)}")
        extra = data.keys() - expected
        if extra:
            raise ScenarioError(f"scenario document has unknown keys: {sorted(extra)}")
        raw = dict(data["params"])
        for name in ("near_annulus", "far_annulus"):
            if raw.get(name) is not None:
                raw[name] = tuple(raw[name])
        try:
            params = ScenarioParams(**raw)
        except TypeError as exc:
            raise ScenarioError(f"params: {exc}") from None
        pairs = sorted((int(k), int(j)) for k, j in data["pairing"])
        if [k for k, _ in pairs] != list(range(1, len(pairs) + 1)):
            raise ScenarioError("pairing: near indices must be exactly 1..K/2")
        pairing = [j - 1 for _, j in pairs]
        return cls(params, data["user_xy"], data["uav_xy"], pairing)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def _annulus_points(rng: np.random.Generator, n: int, r_lo: float, r_hi: float) -> np.ndarray:
    # uniform in area: r = sqrt(u (r_hi^2 - r_lo^2) + r_lo^2)
    r = np.sqrt(rng.uniform(size=n) * (r_hi**2 - r_lo**2) + r_lo**2)
    phi = rng.uniform(0.0, 2 * math.pi, size=n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def generate_scenario(params: ScenarioParams) -> Scenario:
    """Draw a seeded two-ring layout with the UAV over the cell center.

    Near users are sorted by ascending distance, as are far users, and near
    user ``k`` is paired with far user ``k + K/2``.
    """
    params.check()
    K = params.num_users
    rng = np.random.default_rng(params.seed)
    near = _annulus_points(rng, K // 2, *params.near_annulus)
    far = _annulus_points(rng, K // 2, *params.far_annulus)
    near = near[np.argsort(np.sum(near**2, axis=1), kind="stable")]
    far = far[np.argsort(np.sum(far**2, axis=1), kind="stable")]
    xy = np.vstack([near, far])
    # keep boundary draws inside the cell despite rounding
    norms = np.hypot(xy[:, 0], xy[:, 1])
    over = norms > params.cell_radius
    xy[over] *= (params.cell_radius / norms[over])[:, None]
    pairing = np.arange(K // 2) + K // 2
    return Scenario(params, xy, np.zeros(2), pairing)


def validate_scenario(s: Scenario) -> list[str]:
    """Return a list of invariant violations; empty iff the scenario is valid."""
    out = list(s.params.violations())
    K = s.params.num_users
    if s.user_xy.shape != (K, 2):
        out.append(f"user_xy: expected {K} coordinates, got {len(s.user_xy)}")
        return out
    recomputed = np.sum((s.user_xy - s.uav_xy) ** 2, axis=1)
    scale = np.maximum(np.abs(recomputed), 1.0)
    if s.sq_dist.shape != recomputed.shape or np.any(np.abs(s.sq_dist - recomputed) > 1e-9 * scale):
        out.append("sq_dist: stored squared distances disagree with coordinates")
    R = s.params.cell_radius
    dist = np.sqrt(recomputed)
    for k in np.flatnonzero(dist > R * (1 + 1e-12)):
        out.append(f"cell_radius: user {k + 1} at distance {dist[k]:.6g} m exceeds R = {R:.6g} m")
    pairing = s.pairing
    far = set(range(K // 2, K))
    if len(pairing) != K // 2 or set(int(j) for j in pairing) != far:
        out.append(f"pairing: must be a bijection from near users 1..{K // 2} onto {K // 2 + 1}..{K}")
    else:
        for k, j in enumerate(pairing):
            if recomputed[j] < recomputed[k]:
                out.append(
                    f"pairing: far user {j + 1} (d={recomputed[j]:.6g}) is closer than "
                    f"its near user {k + 1} (d={recomputed[k]:.6g})"
                )
    return out
