import math

import mpmath
import numpy as np
import pytest

from oracles import orbit_distance, riemann_slow_time
from suspflow.flow import (
    BaseMap,
    FlowSystem,
    HermanCocycle,
    HorizonExceeded,
    PointFixedUnderSlowFlow,
    SuspensionPoint,
    base_apply,
    dist_to_p,
    fast_time,
    gamma,
    gamma_many,
    slow_advance,
    slow_time,
    slow_times_at,
    suspension_advance,
)
from suspflow.profiles import PowerBump, ThetaFamily, UnitProfile, construct_omega, default_schedule


def test_base_apply_identity_rotation():
    m = BaseMap(np.zeros(3))
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(base_apply(m, x, 5), x)


def test_base_apply_quarter_turn():
    assert base_apply(BaseMap([0.25]), [0.5], 2)[0] == 0.0


def test_base_apply_matches_high_precision():
    mpmath.mp.dps = 50
    phi = (1 + mpmath.sqrt(5)) / 2
    n = 10**6
    exact = float(mpmath.frac(n * mpmath.frac(phi)))
    got = base_apply(BaseMap([float(mpmath.frac(phi))]), [0.0], n)[0]
    d = abs(got - exact)
    assert min(d, 1 - d) < 1e-9


def test_base_apply_composes(base4, rng):
    x = rng.random(4)
    a, b = 137, 2**20
    lhs = base_apply(base4, base_apply(base4, x, a), b)
    rhs = base_apply(base4, x, a + b)
    d = np.abs(lhs - rhs)
    assert np.all(np.minimum(d, 1 - d) < 1e-9)


def test_suspension_point_validation():
    with pytest.raises(ValueError):
        SuspensionPoint([0.1], 1.0)
    pt = SuspensionPoint([1.25], 0.5)
    assert pt.base[0] == 0.25


def test_flow_system_validation(base4):
    with pytest.raises(ValueError):
        FlowSystem(base4, r_v=0.3)  # r_tilde = 0.6 too large
    with pytest.raises(ValueError):
        FlowSystem(base4, p_base=[0.0, 0.0])


@pytest.mark.parametrize("h,ds,expect_h,wraps", [(0.2, 0.3, 0.5, 0), (0.9, 0.2, 0.1, 1), (0.0, 3.0, 0.0, 3)])
def test_suspension_advance(unit_sys, h, ds, expect_h, wraps):
    x = np.array([0.1, 0.2, 0.3, 0.4])
    out = suspension_advance(unit_sys, SuspensionPoint(x, h), ds)
    assert out.height == pytest.approx(expect_h, abs=1e-12)
    assert np.allclose(out.base, unit_sys.base_map.apply(x, wraps))


def test_suspension_flow_property(unit_sys, rng):
    for _ in range(50):
        pt = SuspensionPoint(rng.random(4), rng.random())
        a, b = rng.random(2) * 7
        one = suspension_advance(unit_sys, suspension_advance(unit_sys, pt, a), b)
        two = suspension_advance(unit_sys, pt, a + b)
        assert one.height == pytest.approx(two.height, abs=1e-12)
        d = np.abs(one.base - two.base)
        assert np.all(np.minimum(d, 1 - d) < 1e-12)


def test_backward_inverts_forward(unit_sys):
    pt = SuspensionPoint([0.3, 0.1, 0.7, 0.2], 0.4)
    back = suspension_advance(unit_sys, suspension_advance(unit_sys, pt, 2.7), 2.7, backward=True)
    assert back.height == pytest.approx(0.4, abs=1e-12)
    assert np.allclose(back.base, pt.base)


def test_dist_examples(unit_sys):
    x0 = unit_sys.p_base
    assert dist_to_p(unit_sys, SuspensionPoint(x0, 0.0)) == 0.0
    assert dist_to_p(unit_sys, SuspensionPoint(x0, 0.1)) == pytest.approx(0.1)
    assert dist_to_p(unit_sys, SuspensionPoint(unit_sys.p_preimage, 0.9)) == pytest.approx(0.1)


def test_dist_continuous_across_identification(unit_sys, rng):
    for _ in range(50):
        x = rng.random(4)
        below = SuspensionPoint(x, 1 - 1e-13)
        above = suspension_advance(unit_sys, below, 2e-13)
        assert abs(dist_to_p(unit_sys, below) - dist_to_p(unit_sys, above)) < 1e-12


def test_dist_matches_oracle(power_sys, rng):
    sys = power_sys(1)
    pt = SuspensionPoint(rng.random(4), 0.3)
    for u in (0.0, 0.5, 1.2, 7.9):
        d = dist_to_p(sys, suspension_advance(sys, pt, u))
        assert d == pytest.approx(orbit_distance(sys.base_map, sys.p_base, pt.base, pt.height, [u])[0], abs=1e-12)


def test_unit_slow_time(unit_sys):
    assert slow_time(unit_sys, SuspensionPoint([0.3] * 4, 0.2), 2.5) == pytest.approx(2.5, abs=1e-12)


def test_profile_one_off_ball_gives_exact_time(power_sys):
    sys = power_sys(1)
    # base coordinate 0.5 keeps every floor at distance >= 0.5 - 2*max rotation step? check directly
    pt = SuspensionPoint([0.5, 0.5, 0.5, 0.5], 0.0)
    d = orbit_distance(sys.base_map, sys.p_base, pt.base, 0.0, np.linspace(0, 1, 1001))
    assert d.min() > sys.r_v
    assert slow_time(sys, pt, 1.0) == 1.0


def _passing_point(sys, dist):
    """Start point half a floor below a pass at ``dist`` from p."""
    off = np.zeros(sys.base_map.dimension)
    off[0] = dist
    return SuspensionPoint(sys.base_map.apply(sys.p_base + off, -1), 0.5)


def test_slow_time_matches_riemann(power_sys):
    sys = power_sys(1)
    pt = _passing_point(sys, 0.1)
    ref = riemann_slow_time(sys, pt, 1.0, step=1e-6)
    assert slow_time(sys, pt, 1.0) == pytest.approx(ref, rel=1e-6)
    assert ref > 1.5


def test_fast_time_examples(unit_sys, half_speed_sys):
    pt = SuspensionPoint([0.2, 0.4, 0.6, 0.8], 0.3)
    assert fast_time(unit_sys, pt, 1.7) == pytest.approx(1.7)
    assert fast_time(half_speed_sys, pt, 2.0) == pytest.approx(1.0, abs=1e-12)


def test_fast_time_round_trip(power_sys):
    sys = power_sys(2)
    pt = _passing_point(sys, 0.08)
    s = 1.3
    tau = slow_time(sys, pt, s)
    assert fast_time(sys, pt, tau) == pytest.approx(s, abs=1e-8)


def test_fast_time_horizon(unit_sys):
    sys = FlowSystem(unit_sys.base_map, PowerBump(1), max_fast=5.0)
    with pytest.raises(HorizonExceeded):
        fast_time(sys, SuspensionPoint([0.5] * 4, 0.0), 100.0)


def test_slow_advance_examples(power_sys, unit_sys):
    sys = power_sys(1)
    assert sys.is_p(slow_advance(sys, sys.p, 3.0))
    pt = SuspensionPoint([0.5] * 4, 0.0)
    a = slow_advance(unit_sys, pt, 2.25)
    b = suspension_advance(unit_sys, pt, 2.25)
    assert a.height == pytest.approx(b.height) and np.allclose(a.base, b.base)
    # orbit of length 5 from (0.5,...) avoids the slow ball
    d = orbit_distance(sys.base_map, sys.p_base, pt.base, 0.0, np.linspace(0, 5, 5001))
    if d.min() > sys.r_v:
        c = slow_advance(sys, pt, 5.0)
        e = suspension_advance(sys, pt, 5.0)
        assert c.height == pytest.approx(e.height, abs=1e-9)


def test_slow_time_from_p_raises(power_sys):
    sys = power_sys(1)
    with pytest.raises(PointFixedUnderSlowFlow):
        slow_time(sys, sys.p, 1.0)


def test_orbit_into_p_raises(power_sys):
    sys = power_sys(1)
    with pytest.raises(PointFixedUnderSlowFlow):
        slow_time(sys, SuspensionPoint(sys.p_preimage, 0.5), 1.0)


def test_slow_time_cap_gives_inf(base4):
    sys = FlowSystem(base4, PowerBump(3), cap=10.0)
    assert slow_time(sys, _passing_point(sys, 0.01), 1.0) == math.inf


def test_slow_times_at_consistent(power_sys, rng):
    sys = power_sys(2)
    pt = _passing_point(sys, 0.05)
    s = np.sort(rng.random(20) * 6)
    batch = slow_times_at(sys, pt, s)
    single = np.array([slow_time(sys, pt, float(v)) for v in s])
    assert np.allclose(batch, single, rtol=1e-10, atol=1e-12)


def test_gamma_examples(unit_sys, base4):
    assert gamma(unit_sys, [0.1, 0.2, 0.3, 0.4]) == 1.0
    sys = FlowSystem(base4, PowerBump(1))
    assert gamma(sys, [0.5, 0.5, 0.5, 0.5]) == 1.0
    assert gamma(sys, sys.p_base) == math.inf
    assert gamma(sys, sys.p_preimage) == math.inf
    assert gamma(unit_sys, unit_sys.p_preimage) == 1.0


def test_gamma_many_matches_gamma(base4, rng):
    sys = FlowSystem(base4, PowerBump(2))
    xs = (sys.p_preimage + 0.05 * (rng.random((20, 4)) - 0.5)) % 1.0
    many = gamma_many(sys, xs)
    assert np.allclose(many, [gamma(sys, x) for x in xs], rtol=1e-10)


def test_gamma_lemma_bound_example(base4, rng):
    sch = default_schedule()
    sys = FlowSystem(base4, construct_omega(sch), cap=1e300)
    j = sch.base_index + 1
    v = rng.standard_normal((100, 4))
    v *= (0.999 / j) * rng.random((100, 1)) ** 0.25 / np.linalg.norm(v, axis=1, keepdims=True)
    g = gamma_many(sys, (sys.p_preimage + v) % 1.0)
    assert np.all(g >= j / sch.deltas[0])


def test_herman_matrix_unimodular():
    c = HermanCocycle(3.0, 0.3)
    for th in np.linspace(0, 1, 17):
        assert np.linalg.det(c.matrix(th)) == pytest.approx(1.0, abs=1e-12)


def test_theta_profile_system_allowed(base4):
    sys = FlowSystem(base4, ThetaFamily(0.3))
    assert sys.slow_radius == pytest.approx(0.075)
