import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from suspflow.analysis import cocycle_residual, linear_rank
from suspflow.flow import (
    BaseMap,
    FlowSystem,
    SuspensionPoint,
    dist_to_p,
    fast_time,
    slow_advance,
    slow_time,
    suspension_advance,
)
from suspflow.profiles import BoundsSchedule, PowerBump, ThetaFamily, construct_omega, eval_profile

SYSTEMS = {ell: FlowSystem(BaseMap.default(4), PowerBump(ell)) for ell in (1, 2, 3)}

unit = st.floats(0.0, 1.0, exclude_max=True)
points = st.builds(lambda b, h: SuspensionPoint(np.array(b), h), st.lists(unit, min_size=4, max_size=4), unit)
radius = st.floats(0.0, 3.0)
# below ~1e-50 the powers underflow to exactly zero
positive_radius = st.floats(1e-6, 3.0)
core_frac = st.floats(1e-4, 1.0, exclude_max=True)
# fast times below the height's float resolution are not representable
fast = st.one_of(st.just(0.0), st.floats(1e-9, 8.0))


def off_p(pt):
    # slow flow preconditions: pt is not p
    return dist_to_p(SYSTEMS[1], pt) > 1e-9
theta = st.floats(0.01, 0.99)
prop_settings = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(st.integers(1, 6), radius)
def test_power_range(ell, r):
    v = eval_profile(PowerBump(ell), r)
    assert 0.0 <= v <= 1.0


@given(st.integers(1, 6), positive_radius)
def test_power_positive_off_zero(ell, r):
    assert eval_profile(PowerBump(ell), r) > 0.0


@given(theta, radius, radius)
def test_theta_monotone_in_r(th, r1, r2):
    lo, hi = sorted((r1, r2))
    p = ThetaFamily(th)
    assert eval_profile(p, lo) <= eval_profile(p, hi)


@given(theta, core_frac)
def test_theta_below_square(th, frac):
    r = frac * th / 2
    assert eval_profile(ThetaFamily(th), r) < r * r


@given(theta, theta, core_frac)
def test_theta_family_increases(t1, t2, frac):
    lo, hi = sorted((t1, t2))
    if hi - lo < 1e-6:
        return
    tau = frac * lo / 2
    assert eval_profile(ThetaFamily(lo), tau) < eval_profile(ThetaFamily(hi), tau)


@given(st.lists(st.floats(1e-6, 0.99), min_size=1, max_size=8, unique=True), radius)
def test_omega_pins_bound(vals, r):
    betas = (1.0,) + tuple(sorted(vals, reverse=True))
    om = construct_omega(BoundsSchedule(betas))
    v = eval_profile(om, r)
    assert 0 <= v <= 1
    for i in range(len(betas) - 1):
        if r <= 1.0 / (i + 1):
            assert v <= betas[i]


@prop_settings
@given(st.sampled_from([1, 2, 3]), points, st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_cocycle_law(ell, pt, s, t):
    assume(off_p(pt))
    sys = SYSTEMS[ell]
    assert cocycle_residual(sys, pt, s, t) <= 1e-8 * (1 + s + t)


@prop_settings
@given(st.sampled_from([1, 2, 3]), points, fast)
def test_slowdown(ell, pt, s):
    assume(off_p(pt))
    assert slow_time(SYSTEMS[ell], pt, s) >= s * (1 - 1e-14)


@prop_settings
@given(st.sampled_from([1, 2, 3]), points, st.floats(0.0, 6.0))
def test_round_trip(ell, pt, s):
    assume(off_p(pt))
    sys = SYSTEMS[ell]
    tau = slow_time(sys, pt, s)
    assert abs(slow_time(sys, pt, fast_time(sys, pt, tau)) - tau) <= 1e-8 * (1 + tau)


@prop_settings
@given(st.sampled_from([1, 2, 3]), points, st.floats(0.0, 20.0))
def test_slow_advance_on_orbit(ell, pt, tau):
    assume(off_p(pt))
    sys = SYSTEMS[ell]
    q = slow_advance(sys, pt, tau)
    s = fast_time(sys, pt, tau)
    r = suspension_advance(sys, pt, s)
    assert q.height == pytest.approx(r.height, abs=1e-9)
    assert s <= tau + 1e-12


@given(points, st.floats(0.0, 3.0))
def test_identification_consistent(pt, s):
    sys = SYSTEMS[1]
    q = suspension_advance(sys, pt, s)
    # approaching the same point from just below the next wrap
    if q.height < 1e-9:
        return
    back = suspension_advance(sys, q, q.height, backward=True)
    assert back.height == 0.0 or back.height > 1 - 1e-9
    assert abs(dist_to_p(sys, back) - dist_to_p(sys, suspension_advance(sys, back, 0.0))) < 1e-12


@given(st.permutations([0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]), st.integers(0, 4))
def test_rank_permutation(radii, dup):
    profs = [PowerBump(l) for l in range(1, 6)]
    assert linear_rank(profs, list(radii) + list(radii[:dup])) == 5
