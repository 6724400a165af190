"""Suspension flow over a torus translation and its time change.

The phase space is ``M x [0,1] / (x,1) ~ (f(x),0)`` with ``M`` a flat torus
and ``f`` a translation.  The standard suspension moves the height at unit
speed; the time-changed flow moves along the same orbits with speed
``alpha = profile(dist_to_p / r_V)``.  Slow (time-changed) time is the
integral of ``1/alpha`` along the suspension orbit, which is known exactly,
so no ODE integration is needed.

Along one floor ``{x_k} x [0,1)`` the distance to ``p = (x0, 0)`` is
``min(hypot(a_k, h), hypot(b_k, 1-h))`` with ``a_k = d(x_k, x0)`` and
``b_k = d(x_{k+1}, x0)``; it increases then decreases in ``h``, which is
what makes ball crossings and quadrature breakpoints closed-form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .profiles import TimeProfile, UnitProfile
from .quadrature import integrate_many

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
EXACT_TOL = 1e-13
CHUNK = 4096


class PointFixedUnderSlowFlow(ArithmeticError):
    """The orbit segment runs into ``p``, which the slow flow never leaves or reaches."""


class HorizonExceeded(RuntimeError):
    """Requested slow time not reached inside the fast-time search window."""


def torus_delta(x, y):
    return (np.asarray(x, dtype=float) - np.asarray(y, dtype=float) + 0.5) % 1.0 - 0.5


def torus_dist(x, y):
    """Flat distance on the unit torus (last axis = coordinates)."""
    return np.sqrt(np.sum(torus_delta(x, y) ** 2, axis=-1))


def default_rotation(dim: int = 4) -> np.ndarray:
    """Fractional parts of sqrt2, sqrt3, the golden mean, sqrt6, ... (rationally independent)."""
    pool = [math.sqrt(2.0), math.sqrt(3.0), GOLDEN, math.sqrt(6.0),
            math.sqrt(7.0), math.sqrt(10.0), math.sqrt(11.0), math.sqrt(13.0)]
    if dim > len(pool):
        raise ValueError("no default rotation for dimension > 8")
    return np.array([v % 1.0 for v in pool[:dim]])


@dataclass(frozen=True, eq=False)
class BaseMap:
    """Translation ``x -> x + rotation (mod 1)`` of the flat torus."""

    rotation: np.ndarray

    def __post_init__(self):
        rot = np.atleast_1d(np.asarray(self.rotation, dtype=float)) % 1.0
        if rot.ndim != 1 or rot.size == 0 or not np.all(np.isfinite(rot)):
            raise ValueError("rotation must be a finite nonempty vector")
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def default(cls, dim: int = 4) -> "BaseMap":
        return cls(default_rotation(dim))

    @property
    def dimension(self) -> int:
        return self.rotation.size

    def apply(self, x, n=1):
        """``f^n(x)``; ``n`` may be an integer array (broadcast over a leading axis)."""
        n = np.asarray(n)
        if n.ndim:
            n = n[..., None]
        return (np.asarray(x, dtype=float) + n * self.rotation) % 1.0


def base_apply(base_map: BaseMap, x, n: int):
    return base_map.apply(x, n)


@dataclass(frozen=True, eq=False)
class SuspensionPoint:
    base: np.ndarray
    height: float = 0.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.base, dtype=float)) % 1.0
        x.setflags(write=False)
        object.__setattr__(self, "base", x)
        h = float(self.height)
        if not (0.0 <= h < 1.0):
            raise ValueError("height must lie in [0, 1)")
        object.__setattr__(self, "height", h)

    def __repr__(self):
        return f"SuspensionPoint(base={self.base.tolist()}, height={self.height!r})"


@dataclass(frozen=True, eq=False)
class HermanCocycle:
    """Skew product ``(angle, v) -> (angle + chi, A_angle v)`` on circle x projective line.

    ``A_angle = R(2 pi angle) diag(lam, 1/lam)`` with ``R`` the rotation
    matrix, so every ``A_angle`` has determinant one.
    """

    lam: float
    chi: float
    angle: float = 0.0
    direction: tuple[float, float] = (1.0, 0.0)
    log_norm: float = 0.0

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError("lam must be >= 1")
        object.__setattr__(self, "chi", float(self.chi) % 1.0)
        object.__setattr__(self, "angle", float(self.angle) % 1.0)
        v = np.asarray(self.direction, dtype=float)
        nv = math.hypot(*v)
        if nv == 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", (v[0] / nv, v[1] / nv))

    def matrix(self, angle=None) -> np.ndarray:
        t = 2.0 * math.pi * (self.angle if angle is None else angle)
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -s], [s, c]]) @ np.diag([self.lam, 1.0 / self.lam])


@dataclass(frozen=True, eq=False)
class FlowSystem:
    """Everything needed to run the fast (suspension) and slow (time-changed) flows.

    ``strict=False`` skips the check that the profile is one outside the
    ``r_v`` ball; only test fixtures with non-compact profiles need it.
    """

    base_map: BaseMap
    profile: TimeProfile = field(default_factory=UnitProfile)
    p_base: np.ndarray | None = None
    r_v: float = 0.25
    r_tilde: float | None = None
    quad_tol: float = 1e-12
    cap: float = 1e12
    max_fast: float = 1e7
    strict: bool = True

    def __post_init__(self):
        d = self.base_map.dimension
        p = np.zeros(d) if self.p_base is None else np.atleast_1d(np.asarray(self.p_base, dtype=float)) % 1.0
        if p.shape != (d,):
            raise ValueError(f"p base point must have {d} coordinates")
        p.setflags(write=False)
        object.__setattr__(self, "p_base", p)
        rt = 2.0 * self.r_v if self.r_tilde is None else float(self.r_tilde)
        object.__setattr__(self, "r_tilde", rt)
        if not (0.0 < self.r_v < rt <= 0.5):
            raise ValueError("need 0 < r_v < r_tilde <= 1/2")
        if self.strict and self.profile.outer_radius > 1.0:
            raise ValueError("profile must equal 1 outside the r_v ball")
        if not (self.quad_tol > 0 and self.cap > 0 and self.max_fast > 0):
            raise ValueError("quad_tol, cap and max_fast must be positive")

    # -- geometry -------------------------------------------------------
    @property
    def p(self) -> SuspensionPoint:
        return SuspensionPoint(self.p_base, 0.0)

    @property
    def p_preimage(self) -> np.ndarray:
        return self.base_map.apply(self.p_base, -1)

    @property
    def slow_radius(self) -> float:
        """Physical radius outside of which alpha == 1."""
        return self.r_v * self.profile.outer_radius

    def alpha(self, dist):
        return self.profile(np.asarray(dist, dtype=float) / self.r_v)

    @property
    def p_is_fixed(self) -> bool:
        return float(self.alpha(0.0)) == 0.0

    def is_p(self, pt: SuspensionPoint) -> bool:
        return pt.height == 0.0 and float(torus_dist(pt.base, self.p_base)) < EXACT_TOL


def suspension_advance(sys: FlowSystem, pt: SuspensionPoint, ds: float, backward: bool = False) -> SuspensionPoint:
    """``psi_ds(pt)``: raise the height by ``ds``, applying ``f`` at every wrap."""
    if ds < 0:
        raise ValueError("ds must be nonnegative; use backward=True")
    total = pt.height - ds if backward else pt.height + ds
    n = math.floor(total)
    h = total - n
    if h >= 1.0:
        n, h = n + 1, 0.0
    return SuspensionPoint(sys.base_map.apply(pt.base, n), h)


def dist_to_p(sys: FlowSystem, pt: SuspensionPoint) -> float:
    a = float(torus_dist(pt.base, sys.p_base))
    b = float(torus_dist(pt.base, sys.p_preimage))
    return min(math.hypot(a, pt.height), math.hypot(b, 1.0 - pt.height))


# -- floor decomposition --------------------------------------------------

@dataclass
class _Chunk:
    """Consecutive floors ``k0 .. k0+n-1`` of an orbit and their monotone pieces."""

    k0: int
    a: np.ndarray          # distance of floor base to x0
    b: np.ndarray          # distance of next floor base to x0
    lo: np.ndarray         # local height window per floor
    hi: np.ndarray
    t0: np.ndarray         # fast time at local height 0 of each floor
    floor_slow: np.ndarray
    floor_excess: np.ndarray  # floor_slow minus floor width, integrated directly
    piece_floor: np.ndarray
    piece_lo: np.ndarray
    piece_hi: np.ndarray
    piece_slow: np.ndarray
    piece_dmid: np.ndarray


def _floor_distance(a, b, h):
    return np.minimum(np.hypot(a, h), np.hypot(b, 1.0 - h))


def _integrand(sys: FlowSystem):
    def f(h, a, b):
        al = sys.alpha(_floor_distance(a, b, h))
        with np.errstate(divide="ignore"):
            return 1.0 / al
    return f


def _split_radii(sys: FlowSystem, extra=()) -> np.ndarray:
    radii = [sys.r_v * k for k in sys.profile.knots() if k > 0]
    radii += [float(r) for r in extra if r > 0]
    return np.unique(np.array(radii, dtype=float))


def _split_floors(a, b, lo, hi, radii):
    """Cut each floor window at the branch switch and at every radius crossing."""
    n = a.size
    hstar = np.clip(0.5 * (1.0 + b * b - a * a), 0.0, 1.0)
    cols = [lo, hi, hstar]
    for rho in radii:
        with np.errstate(invalid="ignore"):
            ha = np.sqrt(rho * rho - a * a)
            hb = 1.0 - np.sqrt(rho * rho - b * b)
        cols.append(np.where((a < rho) & (ha < hstar), ha, np.nan))
        cols.append(np.where((b < rho) & (hb > hstar), hb, np.nan))
    pts = np.column_stack(cols)
    inside = (pts >= lo[:, None]) & (pts <= hi[:, None])
    pts = np.where(inside, pts, np.nan)
    pts = np.sort(pts, axis=1)  # nan sorts last
    plo, phi = pts[:, :-1], pts[:, 1:]
    ok = np.isfinite(plo) & np.isfinite(phi) & (phi > plo)
    rows = np.broadcast_to(np.arange(n)[:, None], plo.shape)
    return rows[ok], plo[ok], phi[ok]


def _excess_integrand(sys: FlowSystem):
    # 1/alpha - 1 >= 0 exactly in floating point, so slow time never undercuts fast time
    def f(h, a, b):
        al = sys.alpha(_floor_distance(a, b, h))
        with np.errstate(divide="ignore"):
            return 1.0 / al - 1.0
    return f


def _piece_excess(sys, a, b, plo, phi):
    """Integral of ``1/alpha - 1`` over each piece; zero where alpha == 1 throughout."""
    out = np.zeros(plo.shape)
    if isinstance(sys.profile, UnitProfile) or a.size == 0:
        return out
    dmin = np.minimum(_floor_distance(a, b, plo), _floor_distance(a, b, phi))
    need = dmin < sys.slow_radius
    if np.any(need):
        # absolute part keeps the error relative to the full slow time when the excess is small
        vals, _ = integrate_many(_excess_integrand(sys), plo[need], phi[need],
                                 args=(a[need], b[need]), rtol=sys.quad_tol, atol=sys.quad_tol)
        out[need] = vals
    return out


def _piece_integrals(sys, a, b, plo, phi):
    """Slow time over each piece."""
    return (phi - plo) + _piece_excess(sys, a, b, plo, phi)


def _make_chunk(sys, pt, k0, k1, radii, h_end=None) -> _Chunk:
    ks = np.arange(k0, k1 + 1)
    bases = sys.base_map.apply(pt.base, ks)
    dist = torus_dist(bases, sys.p_base)
    a, b = dist[:-1], dist[1:]
    n = k1 - k0
    lo = np.zeros(n)
    hi = np.ones(n)
    if k0 == 0:
        lo[0] = pt.height
    if h_end is not None:
        hi[-1] = h_end
    t0 = ks[:-1] - pt.height
    thresh = max(sys.slow_radius, radii.max() if radii.size else 0.0)
    hard = np.minimum(a, b) < thresh
    floor_slow = hi - lo
    floor_excess = np.zeros(n)
    pf = [np.flatnonzero(~hard)]
    plo = [lo[~hard]]
    phi = [hi[~hard]]
    pslow = [hi[~hard] - lo[~hard]]
    pd = [np.full(pf[0].size, np.inf)]
    if np.any(hard):
        idx = np.flatnonzero(hard)
        rows, l, h = _split_floors(a[idx], b[idx], lo[idx], hi[idx], radii)
        fl = idx[rows]
        ex = _piece_excess(sys, a[fl], b[fl], l, h)
        sl = (h - l) + ex
        np.add.at(floor_excess, fl, ex)
        floor_slow = floor_slow + floor_excess
        pf.append(fl)
        plo.append(l)
        phi.append(h)
        pslow.append(sl)
        pd.append(_floor_distance(a[fl], b[fl], 0.5 * (l + h)))
    pf = np.concatenate(pf)
    order = np.lexsort((np.concatenate(plo), pf))
    return _Chunk(
        k0=k0, a=a, b=b, lo=lo, hi=hi, t0=t0, floor_slow=floor_slow,
        floor_excess=floor_excess,
        piece_floor=pf[order],
        piece_lo=np.concatenate(plo)[order],
        piece_hi=np.concatenate(phi)[order],
        piece_slow=np.concatenate(pslow)[order],
        piece_dmid=np.concatenate(pd)[order],
    )


def _scan(sys, pt, radii=np.empty(0), end_fast=None, chunk=CHUNK):
    """Yield chunks of floors along the forward orbit of ``pt``.

    With ``end_fast`` the scan stops exactly at that fast time; otherwise it
    runs until ``sys.max_fast`` and then raises :class:`HorizonExceeded`.
    """
    if end_fast is not None:
        end_total = pt.height + end_fast
        last = max(int(math.ceil(end_total)) - 1, 0)
        h_end = end_total - last
        if end_fast == 0:
            return
    else:
        last, h_end = None, None
    k = 0
    while True:
        if last is None:
            if k - pt.height >= sys.max_fast:
                raise HorizonExceeded(f"no result within fast time {sys.max_fast:g}")
            room = math.ceil(sys.max_fast + pt.height) - k
            k1 = k + max(1, min(chunk, room))
            yield _make_chunk(sys, pt, k, k1, radii)
        else:
            k1 = min(k + chunk, last + 1)
            yield _make_chunk(sys, pt, k, k1, radii, h_end if k1 == last + 1 else None)
            if k1 == last + 1:
                return
        k = k1


def _check_contact(sys, chunk: _Chunk) -> bool:
    """Does the scanned window touch ``p`` (a floor start or end on ``(x0, 0)``)?"""
    if not sys.p_is_fixed:
        return False
    start = (chunk.lo == 0.0) & (chunk.a < EXACT_TOL)
    end = (chunk.hi == 1.0) & (chunk.b < EXACT_TOL)
    return bool(np.any(start | end))


def slow_time(sys: FlowSystem, pt: SuspensionPoint, s: float) -> float:
    """Slow time needed to cover fast time ``s`` from ``pt``; ``inf`` beyond ``sys.cap``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if sys.p_is_fixed and sys.is_p(pt):
        raise PointFixedUnderSlowFlow("p is fixed by the slow flow")
    if s == 0:
        return 0.0
    radii = _split_radii(sys)
    excess = 0.0
    for ch in _scan(sys, pt, radii, end_fast=s):
        if _check_contact(sys, ch):
            raise PointFixedUnderSlowFlow("orbit segment runs into p")
        excess += float(ch.floor_excess.sum())
        if not s + excess <= sys.cap:
            return math.inf
    return s + excess


def slow_times_at(sys: FlowSystem, pt: SuspensionPoint, s_values) -> np.ndarray:
    """Slow times at several fast times along one orbit (one pass over the floors)."""
    s_values = np.asarray(s_values, dtype=float)
    out = np.empty(s_values.shape)
    if s_values.size == 0:
        return out
    flat = s_values.ravel()
    order = np.argsort(flat, kind="stable")
    res = np.empty(flat.size)
    smax = float(flat.max())
    if smax == 0:
        return np.zeros(s_values.shape)
    radii = _split_radii(sys)
    before = 0.0
    j = 0
    for ch in _scan(sys, pt, radii, end_fast=smax):
        if _check_contact(sys, ch):
            raise PointFixedUnderSlowFlow("orbit segment runs into p")
        cum = before + np.concatenate([[0.0], np.cumsum(ch.floor_excess)])
        t_end = ch.t0[-1] + ch.hi[-1]
        while j < flat.size and flat[order[j]] <= t_end:
            s = flat[order[j]]
            if s == 0:
                res[order[j]] = 0.0
                j += 1
                continue
            k = int(np.searchsorted(ch.t0 + ch.lo, s, side="right")) - 1
            k = max(k, 0)
            h = s - ch.t0[k]
            res[order[j]] = s + cum[k] + _partial_excess(sys, ch, k, h, radii)
            j += 1
        before = cum[-1]
        if j >= flat.size:
            break
    if j < flat.size:
        res[order[j:]] = flat[order[j:]] + before
    res[res > sys.cap] = math.inf
    out[...] = res.reshape(s_values.shape)
    return out


def _partial_excess(sys, ch: _Chunk, k: int, h: float, radii) -> float:
    """Excess slow time from the start of floor ``k`` of ``ch`` up to local height ``h``."""
    lo = ch.lo[k]
    if h <= lo:
        return 0.0
    if h >= ch.hi[k]:
        return float(ch.floor_excess[k])
    a, b = ch.a[k:k + 1], ch.b[k:k + 1]
    rows, l, hh = _split_floors(a, b, np.array([lo]), np.array([h]), radii)
    return float(_piece_excess(sys, a[rows], b[rows], l, hh).sum())


def _invert_in_floor(sys, ch: _Chunk, k: int, target: float, radii) -> float:
    """Local height on floor ``k`` where the slow time from the floor start equals ``target``."""
    sel = np.flatnonzero(ch.piece_floor == k)
    cum = np.concatenate([[0.0], np.cumsum(ch.piece_slow[sel])])
    j = int(np.searchsorted(cum[1:], target, side="left"))
    j = min(j, sel.size - 1)
    p = sel[j]
    plo, phi = ch.piece_lo[p], ch.piece_hi[p]
    rem = target - cum[j]
    if rem <= 0:
        return plo
    width = phi - plo
    if ch.piece_slow[p] == width and ch.piece_dmid[p] >= sys.slow_radius:
        return min(plo + rem, phi)
    a, b = ch.a[k:k + 1], ch.b[k:k + 1]
    f = _integrand(sys)

    def g(h):
        if h <= plo:
            return -rem
        v, _ = integrate_many(f, [plo], [h], args=(a, b), rtol=sys.quad_tol)
        return float(v[0]) - rem

    if g(phi) <= 0:
        return phi
    return brentq(g, plo, phi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def fast_time(sys: FlowSystem, pt: SuspensionPoint, tau: float) -> float:
    """Fast time ``s`` with ``slow_time(pt, s) == tau`` (monotone inversion)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if sys.p_is_fixed and sys.is_p(pt):
        raise PointFixedUnderSlowFlow("p is fixed by the slow flow")
    if tau == 0:
        return 0.0
    if isinstance(sys.profile, UnitProfile):
        if tau > sys.max_fast:
            raise HorizonExceeded(f"no result within fast time {sys.max_fast:g}")
        return float(tau)
    radii = _split_radii(sys)
    before = 0.0
    for ch in _scan(sys, pt, radii):
        cum = before + np.cumsum(ch.floor_slow)
        if cum[-1] >= tau:
            k = int(np.searchsorted(cum, tau, side="left"))
            start = cum[k - 1] if k > 0 else before
            h = _invert_in_floor(sys, ch, k, tau - start, radii)
            return float(ch.t0[k] + h)
        before = float(cum[-1])
    raise AssertionError("unreachable")  # pragma: no cover


def slow_advance(sys: FlowSystem, pt: SuspensionPoint, tau: float) -> SuspensionPoint:
    """Time-changed flow: same orbit as the suspension, reparameterised time."""
    if sys.p_is_fixed and sys.is_p(pt):
        return sys.p
    return suspension_advance(sys, pt, fast_time(sys, pt, tau))


def gamma(sys: FlowSystem, x) -> float:
    """Slow time from ``(x, 0)`` to ``(f(x), 0)``; ``inf`` on the exceptional points."""
    x = np.asarray(x, dtype=float)
    if sys.p_is_fixed:
        a = float(torus_dist(x, sys.p_base))
        b = float(torus_dist(sys.base_map.apply(x, 1), sys.p_base))
        if min(a, b) < EXACT_TOL:
            return math.inf
    return slow_time(sys, SuspensionPoint(x, 0.0), 1.0)


def gamma_many(sys: FlowSystem, xs) -> np.ndarray:
    """Vectorised :func:`gamma` over rows of ``xs``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float)) % 1.0
    a = torus_dist(xs, sys.p_base)
    b = torus_dist(sys.base_map.apply(xs, 1), sys.p_base)
    out = np.ones(len(xs))
    exceptional = ((a < EXACT_TOL) | (b < EXACT_TOL)) & sys.p_is_fixed
    out[exceptional] = math.inf
    radii = _split_radii(sys)
    hard = (np.minimum(a, b) < sys.slow_radius) & ~exceptional
    if np.any(hard):
        idx = np.flatnonzero(hard)
        rows, l, h = _split_floors(a[idx], b[idx], np.zeros(idx.size), np.ones(idx.size), radii)
        vals = _piece_excess(sys, a[idx][rows], b[idx][rows], l, h)
        tot = np.ones(idx.size)
        np.add.at(tot, rows, vals)
        tot[tot > sys.cap] = math.inf
        out[idx] = tot
    return out
