"""Diagnostics for the time-changed suspension flow.

Occupation fractions near ``p``, nested-ball hitting sequences, return-time
Birkhoff means, ball visit frequencies of the base map, the top Lyapunov
exponent of the Herman cocycle, reparameterisation residuals and rank
witnesses for the profile family.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import flow
from .flow import (
    FlowSystem,
    HermanCocycle,
    HorizonExceeded,
    PointFixedUnderSlowFlow,
    SuspensionPoint,
    BaseMap,
    slow_time,
    slow_times_at,
    suspension_advance,
    torus_dist,
)
from .profiles import TimeProfile


ENTER_OUTER, ENTER_INNER, EXIT_INNER, EXIT_OUTER = "enter_d2", "enter_d1", "exit_d1", "exit_d2"
BLOCK_PATTERN = (ENTER_OUTER, ENTER_INNER, EXIT_INNER, EXIT_OUTER)


class TruncatedSequence(RuntimeError):
    """Fast-time cap reached before all requested blocks were found."""

    def __init__(self, message, events):
        super().__init__(message)
        self.events = events


class DegenerateSamples(ValueError):
    pass


@dataclass(frozen=True)
class HitEvent:
    kind: str
    fast_time: float
    slow_time: float
    point: SuspensionPoint


@dataclass(frozen=True)
class OccupationReport:
    delta: float
    horizon: float
    inside_time: float
    fraction: float
    truncated: bool = False
    fast_time: float = math.nan


@dataclass(frozen=True)
class GammaSeries:
    n: int
    checkpoints: tuple[int, ...]
    partial_means: tuple[float, ...]
    infinities_hit: int
    slope: float

    @property
    def diverges(self) -> bool:
        return self.slope > 0.05


@dataclass(frozen=True)
class FirstHitReport:
    min_slow_time: float
    witness: SuspensionPoint
    lower_bound: float
    times: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class LyapunovEstimate:
    exponent: float
    tail_gap: float
    n: int


# -- occupation -------------------------------------------------------------

def occupation_fraction(sys: FlowSystem, pt: SuspensionPoint, horizon: float, delta: float) -> OccupationReport:
    """Fraction of the first ``horizon`` units of slow time spent in ``B(p, delta)``."""
    if not (horizon > 0 and delta > 0):
        raise ValueError("horizon and delta must be positive")
    if delta >= sys.r_tilde:
        raise ValueError("delta must be below r_tilde")
    if sys.p_is_fixed and sys.is_p(pt):
        return OccupationReport(delta, horizon, horizon, 1.0)
    radii = flow._split_radii(sys, [delta])
    elapsed = 0.0
    inside = 0.0
    try:
        for ch in flow._scan(sys, pt, radii):
            cum = elapsed + np.cumsum(ch.piece_slow)
            is_in = ch.piece_dmid < delta
            if cum[-1] >= horizon:
                j = int(np.searchsorted(cum, horizon, side="left"))
                inside += float(ch.piece_slow[:j][is_in[:j]].sum())
                start = cum[j - 1] if j > 0 else elapsed
                if is_in[j]:
                    inside += horizon - start
                k = int(ch.piece_floor[j])
                local = flow._invert_in_floor(sys, ch, k, horizon - start + _slow_before_piece(ch, j), radii)
                return OccupationReport(delta, horizon, float(inside), float(inside / horizon),
                                        fast_time=float(ch.t0[k] + local))
            inside += float(ch.piece_slow[is_in].sum())
            elapsed = float(cum[-1])
    except HorizonExceeded:
        frac = inside / elapsed if elapsed > 0 else 0.0
        return OccupationReport(delta, elapsed, float(inside), float(frac), truncated=True)
    raise AssertionError("unreachable")  # pragma: no cover


def _slow_before_piece(ch, j):
    """Slow time on piece ``j``'s floor before piece ``j`` starts."""
    k = ch.piece_floor[j]
    first = int(np.searchsorted(ch.piece_floor, k, side="left"))
    return float(ch.piece_slow[first:j].sum())


def ball_volume_fraction(delta: float, dim: int) -> float:
    """Normalised volume of ``B(p, delta)`` in the (unit volume) suspension space."""
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * delta**dim


# -- hitting sequences --------------------------------------------------------

def _crossings(ch, delta):
    """Fast times and kinds (+1 enter, -1 exit) of sphere crossings in a chunk."""
    with np.errstate(invalid="ignore"):
        h_exit = np.sqrt(delta * delta - ch.a * ch.a)
        h_enter = 1.0 - np.sqrt(delta * delta - ch.b * ch.b)
    ex = (ch.a < delta) & (h_exit > ch.lo) & (h_exit <= ch.hi)
    en = (ch.b < delta) & (h_enter > ch.lo) & (h_enter <= ch.hi)
    t = np.concatenate([ch.t0[ex] + h_exit[ex], ch.t0[en] + h_enter[en]])
    kind = np.concatenate([-np.ones(ex.sum(), int), np.ones(en.sum(), int)])
    return t, kind


def _raw_events(sys, pt, d1, d2, blocks, max_fast=None):
    """Scan floors until ``blocks`` complete nested visits are seen."""
    sys_scan = sys if max_fast is None else _with_max_fast(sys, max_fast)
    events: list[tuple[float, str]] = []
    found = 0
    try:
        for ch in flow._scan(sys_scan, pt, np.empty(0)):
            t1, k1 = _crossings(ch, d1)
            t2, k2 = _crossings(ch, d2)
            t = np.concatenate([t1, t2])
            names = np.concatenate([
                np.where(k1 > 0, ENTER_INNER, EXIT_INNER),
                np.where(k2 > 0, ENTER_OUTER, EXIT_OUTER),
            ]) if t.size else np.empty(0, dtype=object)
            # ties cannot occur for d1 < d2; order: inner exit before outer exit
            for i in np.argsort(t, kind="stable"):
                events.append((float(t[i]), str(names[i])))
            found = _count_blocks([e[1] for e in events])
            if found >= blocks:
                break
    except HorizonExceeded:
        return events, False
    return events, True


def _with_max_fast(sys, max_fast):
    from dataclasses import replace
    return replace(sys, max_fast=max_fast)


def _block_starts(kinds):
    starts = []
    i = 0
    n = len(kinds)
    while i + 3 < n:
        if tuple(kinds[i:i + 4]) == BLOCK_PATTERN:
            starts.append(i)
            i += 4
        else:
            i += 1
    return starts


def _count_blocks(kinds):
    return len(_block_starts(kinds))


def hitting_sequence(sys: FlowSystem, pt: SuspensionPoint, d1: float, d2: float, blocks: int,
                     max_fast: float | None = None) -> list[HitEvent]:
    """First ``blocks`` nested visits ``a < b < b' < a'`` of ``B(p,d1)`` inside ``B(p,d2)``.

    A block is an ``d2``-visit that contains a ``d1``-visit; ``d2``-visits
    that miss the inner ball are skipped.  Each event carries fast and slow
    time.
    """
    if not (0 < d1 < d2 < sys.r_tilde):
        raise ValueError("need 0 < d1 < d2 < r_tilde")
    if flow.dist_to_p(sys, pt) <= d2:
        raise ValueError("start point must lie outside the closed d2 ball")
    raw, complete = _raw_events(sys, pt, d1, d2, blocks, max_fast)
    kinds = [k for _, k in raw]
    chosen = []
    for i in _block_starts(kinds)[:blocks]:
        chosen.extend(raw[i:i + 4])
    events = _attach_slow_times(sys, pt, chosen)
    if not complete:
        raise TruncatedSequence(f"found {len(events) // 4} of {blocks} blocks", events)
    return events


def _attach_slow_times(sys, pt, raw):
    if not raw:
        return []
    fast = np.array([t for t, _ in raw])
    slow = slow_times_at(sys, pt, fast)
    return [HitEvent(k, float(t), float(tau), suspension_advance(sys, pt, float(t)))
            for (t, k), tau in zip(raw, slow)]


# -- first hitting time ---------------------------------------------------------

def sphere_points(sys: FlowSystem, radius: float, samples: int, seed: int = 0) -> list[SuspensionPoint]:
    """Uniform samples on the sphere ``dist_to_p == radius`` (``radius < 1/2``)."""
    rng = np.random.default_rng(seed)
    d = sys.base_map.dimension
    v = rng.standard_normal((samples, d + 1))
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    pts = []
    for row in v:
        off, h = row[:d], row[d]
        if h >= 0:
            pts.append(SuspensionPoint(sys.p_base + off, h))
        else:
            pts.append(SuspensionPoint(sys.p_preimage + off, 1.0 + h))
    return pts


def _exit_duration(sys, pt, radius):
    """Fast time from ``pt`` (inside the ball) to the next crossing of the ``radius`` sphere."""
    a = float(torus_dist(pt.base, sys.p_base))
    b = float(torus_dist(pt.base, sys.p_preimage))
    h = pt.height
    if math.hypot(a, h) <= math.hypot(b, 1.0 - h):
        return max(math.sqrt(max(radius * radius - a * a, 0.0)) - h, 0.0)
    return (1.0 - h) + math.sqrt(max(radius * radius - b * b, 0.0))


def first_hit_slow_time(sys: FlowSystem, d1: float, d2: float, samples: int, seed: int = 0) -> FirstHitReport:
    """Minimum slow time from the ``d1`` sphere to the ``d2`` sphere over sampled starts."""
    if d1 > d2:
        raise ValueError("need d1 <= d2")
    pts = sphere_points(sys, d1, samples, seed)
    times = np.empty(len(pts))
    for i, pt in enumerate(pts):
        try:
            times[i] = slow_time(sys, pt, _exit_duration(sys, pt, d2))
        except PointFixedUnderSlowFlow:
            times[i] = math.inf
    j = int(np.argmin(times))
    top = float(sys.alpha(d2))
    bound = (d2 - d1) / top if top > 0 else math.inf
    return FirstHitReport(float(times[j]), pts[j], bound, times)


def scan_first_hit(sys: FlowSystem, d2_start: float | None = None, ratio: float = 0.5,
                   shrink: float = 0.8, threshold: float = 2.0, samples: int = 200,
                   seed: int = 0, max_steps: int = 200):
    """Shrink ``d2`` (with ``d1 = ratio * d2``) until every sampled first hit exceeds ``threshold``."""
    d2 = 0.99 * sys.r_tilde if d2_start is None else d2_start
    for _ in range(max_steps):
        report = first_hit_slow_time(sys, ratio * d2, d2, samples, seed)
        if report.min_slow_time > threshold:
            return ratio * d2, d2, report
        d2 *= shrink
    raise RuntimeError("no admissible radii found")


# -- return times -----------------------------------------------------------------

def birkhoff_gamma_mean(sys: FlowSystem, x, decades: int, chunk: int = 1 << 15) -> GammaSeries:
    """Partial means of the return time along the base orbit at ``n = 10 .. 10**decades``."""
    if decades < 1:
        raise ValueError("decades must be >= 1")
    x = np.asarray(x, dtype=float)
    checkpoints = [10**k for k in range(1, decades + 1)]
    n = checkpoints[-1]
    total = 0.0
    count = 0
    infinite = 0
    means = []
    ci = 0
    for k0 in range(0, n, chunk):
        k1 = min(k0 + chunk, n)
        g = flow.gamma_many(sys, sys.base_map.apply(x, np.arange(k0, k1)))
        fin = np.isfinite(g)
        csum = total + np.cumsum(np.where(fin, g, 0.0))
        ccount = count + np.cumsum(fin)
        while ci < len(checkpoints) and checkpoints[ci] <= k1:
            j = checkpoints[ci] - k0 - 1
            means.append(float(csum[j] / ccount[j]) if ccount[j] else math.inf)
            ci += 1
        total, count = float(csum[-1]), int(ccount[-1])
        infinite += int((~fin).sum())
    slope = _loglog_slope(checkpoints, means)
    return GammaSeries(n, tuple(checkpoints), tuple(means), infinite, slope)


def _loglog_slope(ns, means):
    if len(ns) < 2:
        return 0.0
    lx = np.log(np.asarray(ns, dtype=float))
    ly = np.log(np.asarray(means, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def gamma_lower_bound(schedule, i: int) -> float:
    """``(i0+i) / delta(i0+i)``: the return-time floor near ``f^-1(x0)`` at level ``i``."""
    j = schedule.base_index + i
    return j / schedule.deltas[i - 1]


# -- base map statistics ------------------------------------------------------------

def visit_frequencies(base_map: BaseMap, x, n: int, eps: float, centers) -> np.ndarray:
    """``(1/n) #{k < n : d(f^k x, c) < eps}`` for each centre ``c``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    orbit = base_map.apply(x, np.arange(n))
    out = np.empty(len(centers))
    for i, c in enumerate(centers):
        out[i] = np.count_nonzero(torus_dist(orbit, c) < eps) / n
    return out


def ball_frequency_floor(base_map: BaseMap, x, n: int, eps: float, centers: int, seed: int = 0) -> float:
    """Smallest visit frequency over ``centers`` random balls of radius ``eps``."""
    rng = np.random.default_rng(seed)
    cs = rng.random((centers, base_map.dimension))
    return float(visit_frequencies(base_map, x, n, eps, cs).min())


# -- Herman cocycle -------------------------------------------------------------------

def lyapunov_top(cocycle: HermanCocycle, n: int) -> LyapunovEstimate:
    """Top exponent by projective iteration with per-step renormalisation.

    ``tail_gap`` is the difference between the averages of the two halves of
    the log-growth sequence.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    lam, inv = cocycle.lam, 1.0 / cocycle.lam
    v0, v1 = cocycle.direction
    logs = np.empty(n)
    chunk = 1 << 16
    log = math.log
    hypot = math.hypot
    for k0 in range(0, n, chunk):
        k1 = min(k0 + chunk, n)
        ang = 2.0 * np.pi * ((cocycle.angle + np.arange(k0, k1) * cocycle.chi) % 1.0)
        cs = np.cos(ang).tolist()
        sn = np.sin(ang).tolist()
        out = logs[k0:k1]
        for i in range(k1 - k0):
            c, s = cs[i], sn[i]
            u0, u1 = lam * v0, inv * v1
            w0 = c * u0 - s * u1
            w1 = s * u0 + c * u1
            r = hypot(w0, w1)
            out[i] = log(r)
            v0, v1 = w0 / r, w1 / r
    half = n // 2
    gap = abs(float(logs[:half].mean()) - float(logs[half:].mean()))
    return LyapunovEstimate(float(logs.mean()), gap, n)


# -- reparameterisation checks ------------------------------------------------------------

def cocycle_residual(sys: FlowSystem, pt: SuspensionPoint, s: float, t: float) -> float:
    """``|T(pt, s+t) - T(pt, s) - T(psi_s pt, t)|`` for the slow time ``T``."""
    whole = slow_time(sys, pt, s + t)
    first = slow_time(sys, pt, s)
    second = slow_time(sys, suspension_advance(sys, pt, s), t)
    return abs(whole - first - second)


def linear_rank(profiles: list[TimeProfile], samples, sys: FlowSystem | None = None, rtol: float = 1e-10) -> int:
    """Numerical rank of the profile-by-sample value matrix.

    ``samples`` are suspension points (chart radius taken from ``sys``) or
    chart radii given directly as floats.
    """
    radii = []
    for s in samples:
        if isinstance(s, SuspensionPoint):
            if sys is None:
                raise ValueError("suspension point samples need a FlowSystem")
            radii.append(flow.dist_to_p(sys, s) / sys.r_v)
        else:
            radii.append(float(s))
    radii = np.asarray(radii)
    if radii.size == 0 or np.all(radii >= max(p.outer_radius for p in profiles)):
        raise DegenerateSamples("every sample lies where all profiles equal 1")
    m = np.array([np.atleast_1d(p(radii)) for p in profiles])
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > rtol * sv[0]))


def linear_growth_constant(sys: FlowSystem, d1: float, grid: int = 4001) -> float:
    """``1 / min alpha`` over ``dist >= d1``; valid for radially nondecreasing profiles."""
    if d1 <= 0:
        raise ValueError("d1 must be positive")
    r0 = d1 / sys.r_v
    outer = sys.profile.outer_radius
    if r0 >= outer:
        return 1.0
    r = np.linspace(r0, outer, grid)
    vals = np.atleast_1d(sys.profile(r))
    if np.any(np.diff(vals) < -1e-15):
        raise ValueError("profile is not radially monotone")
    return float(1.0 / vals.min())
