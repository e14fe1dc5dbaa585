import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_point
from uavnoma.model import DesignPoint, SchemeKind, objective
from uavnoma.surrogate import (
    SurrogateSet,
    bound_coeffs,
    build_subproblem,
    coverage_cut,
    nu_exact,
    nu_term,
    phi_term,
    pi_term,
    rate_forms,
    surrogate_far1,
    surrogate_far2,
    surrogate_near,
    surrogate_oma,
)

FORMS = [
    (SchemeKind.NOMA, "near"),
    (SchemeKind.NOMA, "far_cross"),
    (SchemeKind.NOMA, "far_own"),
    (SchemeKind.DPC, "far_own"),
    (SchemeKind.OMA2, "oma_near"),
    (SchemeKind.OMA2, "oma_far"),
    (SchemeKind.OMA1, "oma1"),
]


def test_bound_coeffs_values():
    c = bound_coeffs(0.1, 1.0, 1.0)
    assert c.a == pytest.approx(0.138629, abs=1e-6)
    assert c.b == pytest.approx(0.05, abs=1e-12)
    assert c.c == pytest.approx(0.00693147, abs=1e-8)


def test_bound_coeffs_rejects_nonpositive():
    with pytest.raises(ValueError):
        bound_coeffs(0.0, 1.0, 1.0)


def test_log_bound_random_draws():
    rng = np.random.default_rng(0)
    n = 100_000
    lg = lambda: 10 ** rng.uniform(-3, 3, n)
    x, y, tau, xb, yb, tb = lg(), lg(), rng.uniform(1e-3, 1, n), lg(), lg(), rng.uniform(1e-3, 1, n)
    q = xb * yb
    L = np.log1p(1 / q)
    lower = 2 * tb * L + tb / (1 + q) * (2 - x / xb - y / yb) - tb**2 * L / tau
    exact = tau * np.log1p(1 / (x * y))
    assert np.all(exact - lower >= -1e-12 * np.maximum(1.0, np.abs(exact)))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_log_bound_tight_at_expansion(tb, xb, yb):
    c = bound_coeffs(tb, xb, yb)
    exact = tb * math.log1p(1 / (xb * yb))
    assert c.lower_bound(xb, yb, tb) == pytest.approx(exact, rel=1e-9)


def test_pi_term_displaced_value():
    assert pi_term(2.0, 1.0, 1.0, 1.0) == pytest.approx(2.25)


def test_quarter_square_majorants():
    rng = np.random.default_rng(1)
    n = 10_000
    th, p, thb, pb = (10 ** rng.uniform(-2, 1, n) for _ in range(4))
    assert np.all(pi_term(th, p, thb, pb) >= (pb / thb) * (th / p) * (1 - 1e-12))
    tau, tb = rng.uniform(1e-3, 1, n), rng.uniform(1e-3, 1, n)
    h, hb, d = (10 ** rng.uniform(3, 5.5, n) for _ in range(3))
    assert np.all(phi_term(tau, h, tb, hb, d) >= tau * (d + h) / (tb * (d + hb)) * (1 - 1e-12))
    pi, pib = 10 ** rng.uniform(-3, 0, n), 10 ** rng.uniform(-3, 0, n)
    kw = dict(tau_bar=tb, p_int_bar=pib, h_bar=hb, theta_bar=thb, d=d, g=3.24e-4, sigma_b=6e-11)
    assert np.all(nu_term(tau, pi, h, th, **kw) >= nu_exact(tau, pi, h, th, **kw) * (1 - 1e-12))
    # equal at the expansion point
    kw0 = dict(kw)
    np.testing.assert_allclose(nu_term(tb, pib, hb, thb, **kw0), 1.0, rtol=1e-12)


def test_rate_form_counts(scen20):
    assert len(rate_forms(scen20, SchemeKind.NOMA)) == 30
    assert len(rate_forms(scen20, SchemeKind.DPC)) == 20
    assert len(rate_forms(scen20, SchemeKind.OMA1)) == 20
    assert len(rate_forms(scen20, SchemeKind.OMA2)) == 20


def _subset(s, scheme, v_bar, label):
    forms = [f for f in rate_forms(s, scheme) if f.label == label]
    return SurrogateSet(s, scheme, v_bar, forms)


@pytest.mark.parametrize("scheme, label", FORMS)
def test_tight_at_expansion(scen20, rng, scheme, label):
    for _ in range(5):
        vb = random_point(scen20, scheme, rng)
        sur = _subset(scen20, scheme, vb, label)
        np.testing.assert_allclose(sur.values(vb), sur.exact(vb), rtol=1e-9)


@pytest.mark.parametrize("scheme, label", FORMS)
def test_dominated_by_exact(scen20, rng, scheme, label):
    vb = random_point(scen20, scheme, rng)
    sur = _subset(scen20, scheme, vb, label)
    for _ in range(500):
        v = random_point(scen20, scheme, rng, floor=1e-4)
        gap = sur.exact(v) - sur.values(v)
        assert np.all(gap >= -1e-12 * np.maximum(1.0, np.abs(sur.exact(v))))


@pytest.mark.parametrize("scheme, label", FORMS)
def test_gradients_match_finite_differences(scen20, rng, scheme, label):
    vb = random_point(scen20, scheme, rng)
    sur = _subset(scen20, scheme, vb, label)
    v = random_point(scen20, scheme, rng)
    z = sur.flatten(v)
    J = sur.gradient_matrix(v)
    for i in range(len(z)):
        step = 1e-6 * abs(z[i])
        zp, zm = z.copy(), z.copy()
        zp[i] += step
        zm[i] -= step
        fd = (sur.values_flat(zp) - sur.values_flat(zm)) / (2 * step)
        # relative to each row's largest scaled partial, so tiny cross terms do not dominate
        row_scale = np.max(np.abs(J * z), axis=1) / abs(z[i])
        assert np.all(np.abs(fd - J[:, i]) <= 1e-5 * np.maximum(np.abs(J[:, i]), 1e-3 * row_scale))


@pytest.mark.parametrize("scheme", list(SchemeKind))
def test_hessians_match_and_are_concave(scen20, rng, scheme):
    vb = random_point(scen20, scheme, rng)
    sur = SurrogateSet(scen20, scheme, vb)
    v = random_point(scen20, scheme, rng)
    H = sur.hessians(v)
    z = sur.flatten(v)
    # check second derivative against differences of the analytic gradient
    for i in (0, len(z) - 2, len(z) - 1):
        step = 1e-6 * abs(z[i])
        zp, zm = z.copy(), z.copy()
        zp[i] += step
        zm[i] -= step
        Jp = sur.gradient_matrix(sur.unflatten(zp))
        Jm = sur.gradient_matrix(sur.unflatten(zm))
        fd = (Jp - Jm) / (2 * step)
        np.testing.assert_allclose(fd, H[:, :, i], rtol=1e-4, atol=1e-6 * np.max(np.abs(H[:, :, i])))
    # concavity: every Hessian is negative semidefinite in scaled coordinates
    D = np.diag(z)
    for Hm in H:
        eig = np.linalg.eigvalsh(D @ Hm @ D)
        assert eig.max() <= 1e-9 * max(1.0, np.abs(eig).max())


def test_wrapper_functions(scen20, rng):
    vb = random_point(scen20, SchemeKind.NOMA, rng)
    v = random_point(scen20, SchemeKind.NOMA, rng)
    full = SurrogateSet(scen20, SchemeKind.NOMA, vb).values(v)
    assert surrogate_near(scen20, v, vb, 0) == pytest.approx(full[0])
    assert surrogate_far2(scen20, v, vb, 0) == pytest.approx(full[1])
    assert surrogate_far1(scen20, v, vb, 0) == pytest.approx(full[2])
    vo = random_point(scen20, SchemeKind.OMA2, rng)
    near, far = surrogate_oma(scen20, vo, vo, 3)
    rb = objective(scen20, SchemeKind.OMA2, vo)
    assert near == pytest.approx(rb.rates[3], rel=1e-9)
    assert far == pytest.approx(rb.rates[scen20.pairing[3]], rel=1e-9)
    v1 = random_point(scen20, SchemeKind.OMA1, rng)
    assert surrogate_near(scen20, v1, v1, 15, scheme=SchemeKind.OMA1) == pytest.approx(
        objective(scen20, SchemeKind.OMA1, v1).rates[15], rel=1e-9)


def test_expansion_point_must_be_positive(scen20):
    v = DesignPoint(np.full(10, 0.1), np.r_[0.0, np.full(19, 0.105)], 9e4, 0.6)
    with pytest.raises(ValueError):
        SurrogateSet(scen20, SchemeKind.NOMA, v)


def test_cut_identity_worked_example():
    cut = coverage_cut(200.0**2, (math.pi / 4) ** 2, 300.0)
    assert cut.rhs(200.0**2, (math.pi / 4) ** 2) == pytest.approx(200.0, rel=1e-12)
    assert cut.alpha < 0 and cut.gamma < 0 and cut.delta == pytest.approx(2.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(50.0, 500.0), st.floats(0.01, 1.55))
def test_cut_tight_at_expansion(alt, beam):
    cut = coverage_cut(alt**2, beam**2, 300.0)
    assert cut.rhs(alt**2, beam**2) == pytest.approx(alt * math.tan(beam), rel=1e-9)


def test_cut_implies_coverage():
    rng = np.random.default_rng(5)
    found = 0
    while found < 10_000:
        ab, bb = rng.uniform(50, 500), rng.uniform(0.05, 1.5)
        cut = coverage_cut(ab**2, bb**2, 300.0)
        alt = rng.uniform(50, 500, 2000)
        beam = rng.uniform(1e-3, math.pi / 2 - 1e-6, 2000)
        ok = cut.slack(alt**2, beam**2) >= 0
        assert np.all(alt[ok] * np.tan(beam[ok]) >= 300.0 * (1 - 1e-12))
        found += int(ok.sum())


def test_cut_slack_derivatives():
    cut = coverage_cut(300.0**2, 0.8**2, 300.0)
    h, th = 280.0**2, 0.85**2
    val, g, H = cut.slack_derivatives(h, th)
    assert val == pytest.approx(cut.slack(h, th))
    eps = 1e-4
    fd = [(cut.slack(h * (1 + eps), th) - cut.slack(h * (1 - eps), th)) / (2 * eps * h),
          (cut.slack(h, th * (1 + eps)) - cut.slack(h, th * (1 - eps))) / (2 * eps * th)]
    np.testing.assert_allclose(g, fd, rtol=1e-6)
    assert np.linalg.eigvalsh(H).max() <= 1e-15


def test_build_subproblem_drops_cut_when_geometry_locked(scen20, rng):
    v = random_point(scen20, SchemeKind.NOMA, rng)
    assert build_subproblem(scen20, SchemeKind.NOMA, v).cut is not None
    assert build_subproblem(scen20, SchemeKind.NOMA, v, {"h", "theta"}).cut is None
