import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tidaldrag import lmadt
from tidaldrag.errors import DegenerateWake, InvalidCt, ValidationError

# Oracle values from a 40-digit mpmath solve of the unreduced system (channel
# continuity, channel momentum and disc pressure drop in u3, u4, A3), u0 = 1.
UNREDUCED_ORACLE = {
    (0.8, 0.1): dict(u4=1.0654053283502576, u3=0.57886830426023516, A3=1.3443032104820012, u1=0.77817451986330601),
    (0.6, 0.2): dict(u4=1.0763771006560927, u3=0.74738722414610235, A3=1.160781928403401, u1=0.86755358330837755),
}


def bisect_quartic(Ct, eps, lo=1.0, hi=2.0):
    """Plain bisection on the first sign change of the quartic scanned over [lo, hi]."""

    def q(r):
        s2 = (r - 1) ** 2
        return 0.25 * (Ct * eps - s2) ** 2 - s2 * (r * r - Ct)

    grid = np.linspace(lo, hi, 20001)
    vals = [q(r) for r in grid]
    k = next(i for i in range(1, len(grid)) if vals[i] <= 0 < vals[i - 1])
    a, b = grid[k - 1], grid[k]
    for _ in range(200):
        m = 0.5 * (a + b)
        if q(m) > 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def test_zero_blockage_and_zero_thrust_leave_bypass_speed():
    assert lmadt.solve_u4(lmadt.DiscProblem(1.0, 0.6, 0.0)) == 1.0
    assert lmadt.solve_u4(lmadt.DiscProblem(1.0, 0.0, 0.2)) == 1.0


@pytest.mark.parametrize("Ct,eps", sorted(UNREDUCED_ORACLE))
def test_finite_blockage_matches_unreduced_system(Ct, eps):
    ref = UNREDUCED_ORACLE[Ct, eps]
    sol = lmadt.solve(lmadt.DiscProblem(1.0, Ct, eps))
    for key in ref:
        assert getattr(sol, key) == pytest.approx(ref[key], rel=1e-12)


def test_bypass_ratio_matches_brute_force_bisection():
    p = lmadt.DiscProblem(1.0, 0.8, 0.1)
    r = lmadt.solve_u4(p)
    assert r == pytest.approx(bisect_quartic(0.8, 0.1), abs=1e-12)
    assert abs(lmadt.quartic_u4(r, 0.8, 0.1)) < 1e-12
    # back-substitution into channel continuity
    u3, A3, _ = lmadt.recover_wake(p, r)
    a3 = 0.1 * A3
    assert a3 * u3 + (1 - a3) * r == pytest.approx(1.0, abs=1e-12)


def test_recover_wake_closed_forms():
    u3, A3, u1 = lmadt.recover_wake(lmadt.DiscProblem(1.0, 0.6), 1.0)
    assert u3 == pytest.approx(0.632456, abs=1e-6)
    assert u1 == pytest.approx(0.816228, abs=1e-6)
    assert u1 == pytest.approx(lmadt.u1_zero_blockage(1.0, 0.6), rel=1e-14)
    assert lmadt.recover_wake(lmadt.DiscProblem(1.0, 0.0), 1.0) == (1.0, 1.0, 1.0)


def test_turbine_speed_at_channel_speed():
    sol = lmadt.solve(lmadt.DiscProblem(3.055, 0.6))
    assert sol.u1 == pytest.approx(2.49, abs=0.01)
    assert lmadt.u1_zero_blockage(3.055, 0.6) == pytest.approx(2.4936, abs=1e-4)


def test_zero_blockage_velocity_examples():
    assert lmadt.u1_zero_blockage(2.7, 0.0) == 2.7
    assert lmadt.u1_zero_blockage(1.0, 8 / 9) == pytest.approx(2 / 3, rel=1e-15)
    with pytest.raises(InvalidCt):
        lmadt.u1_zero_blockage(1.0, 1.01)
    with pytest.raises(InvalidCt):
        lmadt.u1_zero_blockage(1.0, -0.1)


def test_power_zero_blockage():
    _, cp = lmadt.power_zero_blockage(lmadt.DiscProblem(1.0, 8 / 9))
    assert cp == pytest.approx(16 / 27, abs=1e-15)
    assert lmadt.power_zero_blockage(lmadt.DiscProblem(1.0, 0.0))[0] == 0.0
    p = lmadt.DiscProblem(3.055, 0.6, 0.0, At=201.06, rho=1000.0)
    P, _ = lmadt.power_zero_blockage(p)
    assert P == pytest.approx(0.25 * 1.632456 * 0.6 * 201.06 * 1000 * 3.055**3, rel=1e-6)
    F = 0.5 * 1000 * 201.06 * 0.6 * 3.055**2
    assert P == pytest.approx(F * lmadt.u1_zero_blockage(3.055, 0.6), rel=1e-14)


def test_betz_maximum():
    ct, cp = lmadt.max_power_coefficient()
    assert abs(ct - 8 / 9) < 1e-6
    assert abs(cp - 16 / 27) < 1e-9


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        lmadt.DiscProblem(0.0, 0.5)
    with pytest.raises(InvalidCt):
        lmadt.DiscProblem(1.0, 1.2)
    with pytest.raises(ValidationError):
        lmadt.DiscProblem(1.0, 0.5, 1.0)


def test_degenerate_wake_and_inadmissible_bypass():
    p = lmadt.DiscProblem(1.0, 0.0)
    with pytest.raises(DegenerateWake):
        lmadt.recover_wake(p, 0.1)
    with pytest.raises(ValidationError):
        lmadt.recover_wake(lmadt.DiscProblem(1.0, 0.8), 0.5)


def test_level_drop_across_disc():
    sol = lmadt.solve(lmadt.DiscProblem(2.0, 0.7, 0.15))
    assert sol.eta1_minus_eta2 == pytest.approx((sol.u4**2 - sol.u3**2) / (2 * 9.81), rel=1e-14)


GRID = [(ct, eps) for ct in np.round(np.arange(0.1, 0.95, 0.1), 2) for eps in np.round(np.arange(0, 0.31, 0.05), 2)]


@pytest.mark.parametrize("Ct,eps", GRID)
def test_seven_equations_on_grid(Ct, eps):
    p = lmadt.DiscProblem(1.7, Ct, eps, At=50.0)
    sol = lmadt.solve(p)
    res = lmadt.residuals(p, sol)
    assert len(res) == 7
    assert max(res.values()) < 1e-10
    assert 0 < sol.u3 <= sol.u1 <= p.u0 <= sol.u4
    assert sol.A3 >= p.At
    assert sol.power_mixing >= 0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.0, 0.9), st.floats(0.0, 0.3))
def test_u1_non_increasing_in_ct(c1, c2, eps):
    lo, hi = sorted((c1, c2))
    a = lmadt.solve(lmadt.DiscProblem(1.0, lo, eps)).u1
    b = lmadt.solve(lmadt.DiscProblem(1.0, hi, eps)).u1
    assert b <= a + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.0, 0.3), st.floats(0.0, 0.3))
def test_u4_non_decreasing_in_blockage(ct, e1, e2):
    lo, hi = sorted((e1, e2))
    a = lmadt.solve_u4(lmadt.DiscProblem(1.0, ct, lo))
    b = lmadt.solve_u4(lmadt.DiscProblem(1.0, ct, hi))
    assert b >= a - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.1, 5.0))
def test_small_blockage_limit(ct, u0):
    sol = lmadt.solve(lmadt.DiscProblem(u0, ct, 1e-6))
    assert abs(sol.u1 / u0 - 0.5 * (1 + math.sqrt(1 - ct))) < 1e-4
