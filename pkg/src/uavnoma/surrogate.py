"""Concave lower-bound models of the rates and the convex coverage cut.

Every rate in the problem has the form::

    tau_t * ln(1 + g p_s / (sigma_B tau_t theta (d + h) + g p_i))

for a bandwidth index ``t``, a signal power ``p_s``, an optional interfering
power ``p_i`` and a squared distance ``d``.  Writing it as
``tau ln(1 + 1/(x y))`` with ``x = sigma_B theta / (g p_s)`` and
``y = tau (d + h) + g p_i / (sigma_B theta)``, the first-order bound of the
convex function ``ln(1 + 1/(x y)) / t`` at ``(x̄, ȳ, 1/τ̄)`` gives

    tau ln(1 + 1/(xy)) >= a + b (2 - x/x̄ - y/ȳ) - c / tau

and the products ``x/x̄`` and ``y/ȳ`` are then bounded above by convex
quarter-squares, ``uv <= (u + v)^2 / 4``.  The result is concave in
``(tau, p, h, theta)`` and tight at the expansion point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from uavnoma.model import DesignPoint, SchemeKind, link_rate, tau_length
from uavnoma.scenario import Scenario


@dataclass(frozen=True)
class BoundCoeffs:
    a: float
    b: float
    c: float
    tau_bar: float
    x_bar: float
    y_bar: float

    def lower_bound(self, x, y, tau):
        """Right-hand side of the bound at ``(x, y, tau)``."""
        return self.a + self.b * (2 - x / self.x_bar - y / self.y_bar) - self.c / tau


def bound_coeffs(tau_bar: float, x_bar: float, y_bar: float) -> BoundCoeffs:
    if not (tau_bar > 0 and x_bar > 0 and y_bar > 0):
        raise ValueError(f"bound_coeffs: need positive inputs, got {tau_bar}, {x_bar}, {y_bar}")
    q = x_bar * y_bar
    L = math.log1p(1.0 / q)
    return BoundCoeffs(2 * tau_bar * L, tau_bar / (1 + q), tau_bar**2 * L, tau_bar, x_bar, y_bar)


def pi_term(theta, p, theta_bar, p_bar):
    """Quarter-square majorant of ``(p̄/θ̄)(θ/p)``."""
    return 0.25 * (theta / theta_bar + p_bar / p) ** 2


def phi_term(tau, h, tau_bar, h_bar, d):
    """Quarter-square majorant of ``tau (d + h) / (τ̄ (d + h̄))``."""
    return 0.25 * (tau / tau_bar + (d + h) / (d + h_bar)) ** 2


def interference_share(tau_bar, p_int_bar, h_bar, theta_bar, d, g, sigma_b):
    """Interference-to-noise ratio ``g p̄_i / (sigma_B θ̄ τ̄ (d + h̄))`` at the expansion point."""
    return g * p_int_bar / (sigma_b * theta_bar * tau_bar * (d + h_bar))


def nu_term(tau, p_int, h, theta, *, tau_bar, p_int_bar, h_bar, theta_bar, d, g, sigma_b):
    """Majorant of ``y/ȳ`` for an interference-loaded rate.

    ``y/ȳ`` splits into noise and interference parts weighted by
    ``1/(1+A)`` and ``A/(1+A)`` where ``A`` is the expansion-point INR;
    each part is a product bounded by its quarter-square.
    """
    if np.any(np.asarray(theta) <= 0):
        raise ValueError("nu_term: theta must be positive")
    A = interference_share(tau_bar, p_int_bar, h_bar, theta_bar, d, g, sigma_b)
    noise = 0.25 * (tau / tau_bar + (d + h) / (d + h_bar)) ** 2
    interf = 0.25 * (p_int / p_int_bar + theta_bar / theta) ** 2
    return noise / (1 + A) + interf * A / (1 + A)


def nu_exact(tau, p_int, h, theta, *, tau_bar, p_int_bar, h_bar, theta_bar, d, g, sigma_b):
    """The ratio ``y/ȳ`` that ``nu_term`` majorizes."""
    y = tau * (d + h) + g * p_int / (sigma_b * theta)
    y_bar = tau_bar * (d + h_bar) + g * p_int_bar / (sigma_b * theta_bar)
    return y / y_bar


@dataclass(frozen=True)
class RateForm:
    """One rate term: bandwidth index, signal/interferer users, geometry.

    ``interferer`` is -1 for interference-free (SIC) rates; ``geometry`` is
    the user whose squared distance enters the rate.
    """

    label: str
    owner: int
    tau_idx: int
    signal: int
    interferer: int
    geometry: int


def rate_forms(s: Scenario, scheme: SchemeKind) -> list[RateForm]:
    """The rate terms whose minimum is the scheme's objective."""
    scheme = SchemeKind(scheme)
    forms = []
    if scheme is SchemeKind.OMA1:
        for u in range(s.num_users):
            forms.append(RateForm("oma1", u, u, u, -1, u))
        return forms
    for k in range(s.num_pairs):
        j = int(s.pairing[k])
        if scheme is SchemeKind.OMA2:
            forms.append(RateForm("oma_near", k, k, k, j, k))
            forms.append(RateForm("oma_far", j, k, j, k, j))
            continue
        forms.append(RateForm("near", k, k, k, -1, k))
        forms.append(RateForm("far_own", j, k, j, k, j))
        if scheme is SchemeKind.NOMA:
            forms.append(RateForm("far_cross", j, k, j, k, k))
    return forms


# local variable slots: tau, p_signal, p_interferer, h, theta
NSLOT = 5


class SurrogateSet:
    """Concave minorants of a list of rate terms, expanded at ``v_bar``.

    Evaluation works on the flat natural-unit vector ``(tau, p, h, theta)``;
    ``derivatives`` returns per-term local gradients/Hessians over the five
    variables each term touches, plus their flat indices.
    """

    def __init__(self, s: Scenario, scheme: SchemeKind, v_bar: DesignPoint,
                 forms: Optional[Sequence[RateForm]] = None):
        self.scenario = s
        self.scheme = SchemeKind(scheme)
        self.v_bar = v_bar
        self.forms = list(rate_forms(s, self.scheme) if forms is None else forms)
        self.n_tau = tau_length(s, self.scheme)
        self.n_vars = self.n_tau + s.num_users + 2
        g, sb = s.params.ref_gain, s.noise_power_total
        self.g, self.sigma_b = g, sb

        ti = np.array([f.tau_idx for f in self.forms], dtype=int)
        si = np.array([f.signal for f in self.forms], dtype=int)
        ii = np.array([f.interferer for f in self.forms], dtype=int)
        gi = np.array([f.geometry for f in self.forms], dtype=int)
        has_int = ii >= 0
        ii_safe = np.where(has_int, ii, si)
        self.tau_idx, self.sig_idx, self.int_idx, self.has_int = ti, si, ii_safe, has_int
        self.d = s.sq_dist[gi]

        tau_bar = v_bar.tau[ti]
        ps_bar = v_bar.power[si]
        pi_bar = np.where(has_int, v_bar.power[ii_safe], 1.0)
        if np.any(tau_bar <= 0) or np.any(ps_bar <= 0) or np.any(pi_bar <= 0) or v_bar.theta <= 0:
            raise ValueError("SurrogateSet: expansion point must have positive tau, power and theta")
        self.tau_bar, self.ps_bar, self.pi_bar = tau_bar, ps_bar, pi_bar
        self.h_bar, self.theta_bar = v_bar.h, v_bar.theta
        self.D_bar = self.d + self.h_bar

        x_bar = sb * self.theta_bar / (g * ps_bar)
        y_bar = tau_bar * self.D_bar + np.where(has_int, g * pi_bar / (sb * self.theta_bar), 0.0)
        q = x_bar * y_bar
        L = np.log1p(1.0 / q)
        self.a = 2 * tau_bar * L
        self.b = tau_bar / (1 + q)
        self.c = tau_bar**2 * L
        A = np.where(has_int, g * pi_bar / (sb * self.theta_bar * tau_bar * self.D_bar), 0.0)
        self.w_noise = 1.0 / (1.0 + A)
        self.w_int = A / (1.0 + A)

        n_tau, K = self.n_tau, s.num_users
        self.var_index = np.column_stack([
            ti, n_tau + si, n_tau + ii_safe,
            np.full(len(ti), n_tau + K), np.full(len(ti), n_tau + K + 1),
        ])

    def __len__(self) -> int:
        return len(self.forms)

    @staticmethod
    def flatten(v: DesignPoint) -> np.ndarray:
        return np.concatenate([v.tau, v.power, [v.h, v.theta]])

    def unflatten(self, z: np.ndarray) -> DesignPoint:
        n = self.n_tau
        return DesignPoint(z[:n], z[n:-2], z[-2], z[-1])

    def _gather(self, z):
        n = self.n_tau
        tau = z[:n][self.tau_idx]
        p = z[n:-2]
        return tau, p[self.sig_idx], p[self.int_idx], z[-2], z[-1]

    def values_flat(self, z: np.ndarray) -> np.ndarray:
        tau, ps, pi, h, th = self._gather(z)
        pi_t = 0.25 * (th / self.theta_bar + self.ps_bar / ps) ** 2
        phi = 0.25 * (tau / self.tau_bar + (self.d + h) / self.D_bar) ** 2
        psi = 0.25 * (pi / self.pi_bar + self.theta_bar / th) ** 2
        return self.a + self.b * (2 - pi_t - self.w_noise * phi - self.w_int * psi) - self.c / tau

    def values(self, v: DesignPoint) -> np.ndarray:
        return self.values_flat(self.flatten(v))

    def exact(self, v: DesignPoint) -> np.ndarray:
        """Exact rates of the same terms, for tightness/domination checks."""
        p = v.power
        return np.atleast_1d(link_rate(
            v.tau[self.tau_idx], p[self.sig_idx], np.where(self.has_int, p[self.int_idx], 0.0),
            self.d, v.h, v.theta, self.g, self.sigma_b,
        ))

    def derivatives(self, z: np.ndarray):
        """Values, local gradients ``(m, 5)``, local Hessians ``(m, 5, 5)``."""
        tau, ps, pi, h, th = self._gather(z)
        m = len(tau)
        tb, psb, pib, thb, Db = self.tau_bar, self.ps_bar, self.pi_bar, self.theta_bar, self.D_bar
        A = th / thb + psb / ps
        B = tau / tb + (self.d + h) / Db
        C = pi / pib + thb / th
        b, wn, wi = self.b, self.w_noise, self.w_int
        val = self.a + b * (2 - 0.25 * A**2 - wn * 0.25 * B**2 - wi * 0.25 * C**2) - self.c / tau

        grad = np.zeros((m, NSLOT))
        grad[:, 0] = -b * wn * B / (2 * tb) + self.c / tau**2
        grad[:, 1] = b * A * psb / (2 * ps**2)
        grad[:, 2] = -b * wi * C / (2 * pib)
        grad[:, 3] = -b * wn * B / (2 * Db)
        grad[:, 4] = -b * (A / (2 * thb) - wi * C * thb / (2 * th**2))

        hess = np.zeros((m, NSLOT, NSLOT))
        hess[:, 0, 0] = -b * wn / (2 * tb**2) - 2 * self.c / tau**3
        hess[:, 0, 3] = hess[:, 3, 0] = -b * wn / (2 * tb * Db)
        hess[:, 3, 3] = -b * wn / (2 * Db**2)
        hess[:, 1, 1] = -b * (0.5 * psb**2 / ps**4 + A * psb / ps**3)
        hess[:, 1, 4] = hess[:, 4, 1] = b * psb / (2 * thb * ps**2)
        hess[:, 2, 2] = -b * wi / (2 * pib**2)
        hess[:, 2, 4] = hess[:, 4, 2] = b * wi * thb / (2 * pib * th**2)
        hess[:, 4, 4] = -b * (1 / (2 * thb**2) + wi * (0.5 * thb**2 / th**4 + C * thb / th**3))
        return val, grad, hess

    def gradient_matrix(self, v: DesignPoint) -> np.ndarray:
        """Dense ``(m, n_vars)`` Jacobian of the surrogate values."""
        _, grad, _ = self.derivatives(self.flatten(v))
        J = np.zeros((len(self), self.n_vars))
        rows = np.repeat(np.arange(len(self)), NSLOT)
        np.add.at(J, (rows, self.var_index.ravel()), grad.ravel())
        return J

    def hessians(self, v: DesignPoint) -> np.ndarray:
        """Dense ``(m, n_vars, n_vars)`` Hessians of the surrogate values."""
        _, _, hess = self.derivatives(self.flatten(v))
        m = len(self)
        H = np.zeros((m, self.n_vars, self.n_vars))
        vi = self.var_index
        for a in range(NSLOT):
            for c in range(NSLOT):
                np.add.at(H, (np.arange(m), vi[:, a], vi[:, c]), hess[:, a, c])
        return H

    def min_value(self, v: DesignPoint) -> float:
        return float(np.min(self.values(v)))


def _single(s, scheme, v, v_bar, label, k):
    forms = [f for f in rate_forms(s, scheme) if f.label == label and f.tau_idx == k]
    if len(forms) != 1:
        raise ValueError(f"no {label!r} term for index {k} under {SchemeKind(scheme).value}")
    return float(SurrogateSet(s, scheme, v_bar, forms).values(v)[0])


def surrogate_near(s: Scenario, v: DesignPoint, v_bar: DesignPoint, k: int,
                   scheme: SchemeKind = SchemeKind.NOMA) -> float:
    """Minorant of the interference-free rate of near user ``k``.

    Under OMA-1 ``k`` is any user index and uses its own bandwidth share.
    """
    label = "oma1" if SchemeKind(scheme) is SchemeKind.OMA1 else "near"
    return _single(s, scheme, v, v_bar, label, k)


def surrogate_far2(s: Scenario, v: DesignPoint, v_bar: DesignPoint, k: int) -> float:
    """Minorant of the far user's own-decoding rate in pair ``k``."""
    return _single(s, SchemeKind.DPC, v, v_bar, "far_own", k)


def surrogate_far1(s: Scenario, v: DesignPoint, v_bar: DesignPoint, k: int) -> float:
    """Minorant of the near user's decoding rate of its partner's message."""
    return _single(s, SchemeKind.NOMA, v, v_bar, "far_cross", k)


def surrogate_oma(s: Scenario, v: DesignPoint, v_bar: DesignPoint, k: int) -> tuple[float, float]:
    return (_single(s, SchemeKind.OMA2, v, v_bar, "oma_near", k),
            _single(s, SchemeKind.OMA2, v, v_bar, "oma_far", k))


@dataclass(frozen=True)
class CoverageCut:
    """Convex inner approximation ``R <= gamma + alpha h + delta sqrt(h theta)``."""

    alpha: float
    gamma: float
    delta: float
    radius: float
    h_bar: float
    theta_bar: float

    def rhs(self, h, theta):
        return self.gamma + self.alpha * h + self.delta * np.sqrt(h * theta)

    def slack(self, h, theta):
        """Normalized slack ``rhs/R - 1``; non-negative on the cut's feasible set."""
        return self.rhs(h, theta) / self.radius - 1.0

    def slack_derivatives(self, h: float, theta: float):
        r = math.sqrt(h * theta)
        R = self.radius
        val = (self.gamma + self.alpha * h + self.delta * r) / R - 1.0
        grad = np.array([self.alpha + 0.5 * self.delta * theta / r, 0.5 * self.delta * h / r]) / R
        hh = -0.25 * self.delta * math.sqrt(theta) * h**-1.5
        ht = 0.25 * self.delta / r
        tt = -0.25 * self.delta * math.sqrt(h) * theta**-1.5
        return val, grad, np.array([[hh, ht], [ht, tt]]) / R


def coverage_cut(h_bar: float, theta_bar: float, radius: float) -> CoverageCut:
    """Tangent of ``tan`` in the beamwidth plus an AM-GM bound on ``sqrt(h)``."""
    sb = math.sqrt(theta_bar)
    if not 0 < sb < math.pi / 2 or h_bar <= 0:
        raise ValueError(f"coverage_cut: need h > 0 and sqrt(theta) in (0, pi/2), got {h_bar}, {theta_bar}")
    cos2 = math.cos(sb) ** 2
    lead = (math.sin(sb) * math.cos(sb) - sb) / cos2
    rh = math.sqrt(h_bar)
    return CoverageCut(lead / (2 * rh), lead * rh / 2, 1.0 / cos2, radius, h_bar, theta_bar)


def build_subproblem(s: Scenario, scheme: SchemeKind, v_bar: DesignPoint, locks=None):
    """Assemble the epigraph-form convex program expanded at ``v_bar``.

    ``locks`` is an optional set of coordinate groups held at their
    ``v_bar`` values: ``{"h", "theta"}`` and/or ``{"tau", "power"}``.
    """
    from uavnoma.solver import ConvexSubproblem

    scheme = SchemeKind(scheme)
    locks = frozenset(locks or ())
    sur = SurrogateSet(s, scheme, v_bar)
    cut = None
    if not {"h", "theta"} <= locks:
        cut = coverage_cut(v_bar.h, v_bar.theta, s.params.cell_radius)
    return ConvexSubproblem(s, scheme, sur, cut, v_bar, locks)
