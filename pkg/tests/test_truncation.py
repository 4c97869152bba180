import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sddej.errors import DomainError, InvalidParamError
from sddej.models import cubic_delay_benchmark, eval_coefficients
from sddej.truncation import (
    EmpiricalPhi,
    PowerPhi,
    Regime,
    TruncationConfig,
    alpha,
    fit_empirical_phi,
    pi_delta,
    project_to_ball,
    truncated_coefficients,
    truncation_radius,
)

PHI53 = PowerPhi(5.0, 3.0)


def _cfg(phi=PHI53, eps=0.125, k0=None, regime=Regime.FG):
    return TruncationConfig(phi=phi, epsilon=eps, regime=regime, k0=k0)


# ---------------------------------------------------------------------------
# alpha / radius
# ---------------------------------------------------------------------------


def test_alpha_values():
    assert alpha(_cfg(k0=5.0), 2.0 ** -8) == pytest.approx(10.0, rel=1e-14)
    assert alpha(_cfg(PowerPhi(1.0, 1.0), eps=0.25, k0=1.0), 1.0 / 16) == \
        pytest.approx(2.0, rel=1e-14)


def test_alpha_rejects_bad_step():
    with pytest.raises(DomainError):
        alpha(_cfg(), 1.5)
    with pytest.raises(DomainError):
        alpha(_cfg(), 0.0)


def test_radius_values():
    # phi(r) = 5 r^3, K0 = 5: R = (alpha/5)^{1/3} = Delta^{-eps/3}
    cfg = _cfg(k0=5.0)
    assert truncation_radius(cfg, 1.0) == pytest.approx(1.0, rel=1e-14)
    assert truncation_radius(cfg, 2.0 ** -24) == pytest.approx(2.0, rel=1e-14)


def test_default_k0_keeps_radius_defined():
    cfg = _cfg()  # K0 defaults to max(1, phi(1)) = 5
    assert cfg.k0 == 5.0
    for d in (1.0, 0.5, 2.0 ** -20):
        assert truncation_radius(cfg, d) >= 1.0 - 1e-12


def test_small_k0_makes_radius_unreachable():
    # alpha(1) = 1 < phi(1) = 5: nothing to invert
    cfg = _cfg(k0=1.0)
    with pytest.raises(DomainError):
        truncation_radius(cfg, 1.0)
    # fine enough steps recover: alpha(2^-40) = 2^5 = 32 > 5
    assert truncation_radius(cfg, 2.0 ** -40) > 1.0


def test_k0_below_one_rejected():
    with pytest.raises(InvalidParamError):
        _cfg(k0=0.5)
    with pytest.raises(InvalidParamError):
        _cfg(eps=0.3)
    with pytest.raises(InvalidParamError):
        _cfg(eps=0.0)


@given(st.floats(min_value=1e-6, max_value=1.0),
       st.floats(min_value=1e-6, max_value=1.0))
@settings(max_examples=60, deadline=None)
def test_alpha_grows_as_step_shrinks(d1, d2):
    cfg = _cfg(k0=2.0, eps=0.2)
    lo, hi = min(d1, d2), max(d1, d2)
    assert alpha(cfg, lo) >= alpha(cfg, hi) - 1e-12


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def test_projection_classic_triangle():
    out = project_to_ball(np.array([3.0, 4.0]), 1.0)
    assert out == pytest.approx([0.6, 0.8], rel=1e-15)


def test_projection_identity_inside():
    x = np.array([0.1, -0.2])
    np.testing.assert_array_equal(project_to_ball(x, 1.0), x)


def test_pi_delta_uses_derived_radius():
    cfg = _cfg(k0=5.0)
    delta = 2.0 ** -24  # truncation radius exactly 2
    np.testing.assert_allclose(pi_delta(cfg, delta, [30.0, 40.0]),
                               [1.2, 1.6], rtol=1e-14)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=4),
       st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=120, deadline=None)
def test_projection_properties(vals, radius):
    x = np.array(vals)
    px = project_to_ball(x, radius)
    # inside the ball (1e-12 slack: the radial scale factor rounds)
    assert np.linalg.norm(px) <= radius * (1 + 1e-12)
    # idempotent
    np.testing.assert_allclose(project_to_ball(px, radius), px,
                               rtol=1e-12, atol=0)


@given(st.lists(st.floats(-1e5, 1e5), min_size=2, max_size=2),
       st.lists(st.floats(-1e5, 1e5), min_size=2, max_size=2),
       st.floats(min_value=1e-2, max_value=1e2))
@settings(max_examples=120, deadline=None)
def test_projection_nonexpansive(a, b, radius):
    x, y = np.array(a), np.array(b)
    dist_before = np.linalg.norm(x - y)
    dist_after = np.linalg.norm(
        project_to_ball(x, radius) - project_to_ball(y, radius)
    )
    assert dist_after <= dist_before * (1 + 1e-12) + 1e-15


def test_project_batch_rows():
    pts = np.array([[3.0, 4.0], [0.1, 0.0], [-6.0, 8.0]])
    out = project_to_ball(pts, 1.0)
    np.testing.assert_allclose(out[0], [0.6, 0.8], rtol=1e-15)
    np.testing.assert_array_equal(out[1], pts[1])
    np.testing.assert_allclose(out[2], [-0.6, 0.8], rtol=1e-15)


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------


def test_power_phi_inverse_roundtrip():
    for r in (0.5, 1.0, 7.0, 123.4):
        assert PHI53.inverse(PHI53(r)) == pytest.approx(r, rel=1e-12)


def test_cubic_envelope_dominates_benchmark():
    # phi(r) = 5 r^3 bounds |f| and |g| over the sampled shells; this holds
    # on r in [1, 1e3] (far outside any radius a usable step produces) even
    # though the delayed |y|^{5/4} term wins in the far field.
    model, _ = cubic_delay_benchmark()
    rng = np.random.default_rng(3)
    for r in np.geomspace(1.0, 1e3, 25):
        for _ in range(8):
            x = rng.uniform(-r, r, size=1)
            y = rng.uniform(-r, r, size=1)
            f, g, _h = eval_coefficients(model, x, y)
            bound = PHI53(r)
            assert abs(f[0]) <= bound + 1e-9
            assert abs(g[0, 0]) <= bound + 1e-9


def test_fit_empirical_phi_matches_analytic_shape():
    model, _ = cubic_delay_benchmark()
    emp = fit_empirical_phi(model, Regime.FG, shells=48, r_max=64.0)
    assert isinstance(emp, EmpiricalPhi)
    # nondecreasing by construction
    rs = np.geomspace(1.0, 60.0, 40)
    vals = [emp(r) for r in rs]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    # grows like r^3 in the bulk: log-log slope close to 3
    slope = (math.log(emp(50.0)) - math.log(emp(5.0))) / math.log(10.0)
    assert 2.5 < slope < 3.5
    # inverse really inverts
    for v in (emp(2.0), emp(10.0), emp(40.0)):
        assert emp(emp.inverse(v)) == pytest.approx(v, rel=1e-6)


def test_empirical_phi_inverse_below_range():
    emp = fit_empirical_phi(cubic_delay_benchmark()[0], Regime.FG, shells=16)
    with pytest.raises(DomainError):
        emp.inverse(emp(1.0) * 0.01)


# ---------------------------------------------------------------------------
# truncated coefficient maps
# ---------------------------------------------------------------------------


def test_truncated_coefficients_projects_inputs():
    model, _ = cubic_delay_benchmark()
    cfg = _cfg(k0=5.0)
    delta = 2.0 ** -24  # radius exactly 2
    big = np.array([1e3])
    f, g, h = truncated_coefficients(cfg, model, delta, big, big)
    f2, g2, h2 = eval_coefficients(model, np.array([2.0]), np.array([2.0]))
    assert f == pytest.approx(f2)
    assert g == pytest.approx(g2)
    # FG: jump sees the raw state
    assert h == pytest.approx(2e3)
    assert h2 == pytest.approx(4.0)


def test_truncated_coefficients_fgh_truncates_jump():
    model, _ = cubic_delay_benchmark()
    cfg = _cfg(k0=5.0, regime=Regime.FGH)
    big = np.array([1e3])
    _f, _g, h = truncated_coefficients(cfg, model, 2.0 ** -24, big, big)
    assert h == pytest.approx(4.0)


def test_truncated_coefficients_fg_survives_huge_state():
    # raw jump evaluation must not drag the cubic drift along
    model, _ = cubic_delay_benchmark()
    cfg = _cfg(k0=5.0)
    huge = np.array([1e120])
    f, _g, h = truncated_coefficients(cfg, model, 0.25, huge, huge)
    assert np.isfinite(f).all()
    assert h == pytest.approx(2e120)
