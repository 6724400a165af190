"""Radial speed profiles used to slow the suspension flow down near ``p``.

Every profile is a function of the *chart radius* ``r >= 0`` (distance to
``p`` divided by the neighbourhood radius ``r_V``), takes values in
``[0, 1]``, vanishes only at ``r = 0`` and is identically one beyond its
``outer_radius``.  Evaluation is vectorised over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ProfileError(ValueError):
    """Raised when a profile or bounds schedule is malformed."""


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, all derivatives flat at both ends."""
    t = np.asarray(t, dtype=float)
    a = _g(t)
    b = _g(1.0 - t)
    return a / (a + b)


def _glue_to_one(inner, t):
    # inner + (1 - inner) * s(t): monotone whenever inner is, flat joins at t=0 and t=1
    s = smooth_step(t)
    return inner + (1.0 - inner) * s


class TimeProfile:
    """Base class.  Subclasses implement ``_eval`` on a float array."""

    kind = "base"
    outer_radius = 1.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("chart radius must be nonnegative")
        out = self._eval(np.abs(r))
        return out if out.ndim else float(out)

    def _eval(self, r: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def knots(self) -> tuple[float, ...]:
        """Chart radii where the piecewise definition switches formula."""
        return ()

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class UnitProfile(TimeProfile):
    """alpha == 1: the time change is the identity."""

    kind = "unit"
    outer_radius = 0.0

    def _eval(self, r):
        return np.ones_like(r)


@dataclass(frozen=True)
class PowerBump(TimeProfile):
    """``r**(2*ell)`` on ``[0, 1/2]``, smoothly glued to 1 on ``[1/2, 1]``."""

    ell: int
    kind = "power"
    outer_radius = 1.0

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise ProfileError("ell must be a positive integer")

    def _eval(self, r):
        inner = np.minimum(r, 1.0) ** (2 * self.ell)
        return np.where(r >= 1.0, 1.0, _glue_to_one(inner, 2.0 * r - 1.0))

    def knots(self):
        return (0.5, 1.0)

    def describe(self):
        return {"kind": self.kind, "ell": int(self.ell)}


@dataclass(frozen=True)
class ThetaFamily(TimeProfile):
    """Member of the one-parameter family used for the connected path.

    Core ``(1 - exp(-theta)) * r**2`` on ``[0, theta/2]``, glued to 1 on
    ``[theta/2, theta]``.  The core coefficient increases with ``theta``,
    which gives strict monotonicity of the family on the core.
    """

    theta: float
    kind = "theta"

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ProfileError("theta must lie in (0,1)")

    @property
    def outer_radius(self):
        return self.theta

    @property
    def coefficient(self) -> float:
        return -math.expm1(-self.theta)

    def _eval(self, r):
        th = self.theta
        inner = self.coefficient * np.minimum(r, th) ** 2
        return np.where(r >= th, 1.0, _glue_to_one(inner, 2.0 * r / th - 1.0))

    def knots(self):
        return (self.theta / 2.0, self.theta)

    def describe(self):
        return {"kind": self.kind, "theta": float(self.theta)}


@dataclass(frozen=True)
class BoundsSchedule:
    """Strictly decreasing bounds ``1 = beta_{-1} > beta_0 > beta_1 > ...``.

    ``betas[j]`` holds ``beta_{j-1}``, so ``betas[0] == 1``.  When built by
    :meth:`from_rule` the generating data ``(i0, ells, deltas)`` is kept, with
    ``ells[i-1] = l_{i0+i}`` and ``deltas[i-1] = delta(i0+i)`` for ``i >= 1``.
    """

    betas: tuple[float, ...]
    base_index: int | None = None
    ells: tuple[float, ...] = ()
    deltas: tuple[float, ...] = ()

    def __post_init__(self):
        b = tuple(float(x) for x in self.betas)
        object.__setattr__(self, "betas", b)
        if len(b) < 2:
            raise ProfileError("schedule needs beta_{-1}=1 and at least beta_0")
        if b[0] != 1.0:
            raise ProfileError("first schedule entry beta_{-1} must equal 1")
        if any(not (x > 0) or not math.isfinite(x) for x in b):
            raise ProfileError("schedule entries must be positive and finite")
        if any(b[j + 1] >= b[j] for j in range(len(b) - 1)):
            raise ProfileError("schedule must be strictly decreasing")
        if self.deltas and any(not (0 < d <= 1) for d in self.deltas):
            raise ProfileError("deltas must lie in (0,1]")
        if self.ells and any(not (l > 0) for l in self.ells):
            raise ProfileError("ells must be positive")

    @classmethod
    def from_rule(
        cls,
        i0: int,
        terms: int,
        ell: Callable[[int], float],
        delta: Callable[[int], float],
    ) -> "BoundsSchedule":
        """Build ``beta_{i-1} = l_{i0+i} / (i0+i) * delta(i0+i)`` for ``i = 1..terms``."""
        if i0 < 1 or terms < 1:
            raise ProfileError("i0 and terms must be positive")
        idx = [i0 + i for i in range(1, terms + 1)]
        ells = tuple(float(ell(j)) for j in idx)
        deltas = tuple(float(delta(j)) for j in idx)
        betas = (1.0,) + tuple(l / j * d for l, j, d in zip(ells, idx, deltas))
        return cls(betas=betas, base_index=i0, ells=ells, deltas=deltas)

    def beta(self, i: int) -> float:
        """``beta_i`` for ``i >= -1``."""
        return self.betas[i + 1]

    def __len__(self):
        return len(self.betas)


def torus_ball_measure(radius: float, dim: int) -> float:
    """Lebesgue measure of a flat-torus ball; exact while ``radius <= 1/2``."""
    if radius > 0.5:
        raise ValueError("ball wraps around the torus")
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim


@dataclass(frozen=True)
class LemmaOmega(TimeProfile):
    """Profile pinned below the schedule bounds.

    At chart radius ``1/(i+1)`` the value is ``beta_{i-1}/2``; consecutive pins
    are joined by smooth steps and the profile is 1 for ``r >= 1``.  Below the
    last pin it decays like ``r**m`` to its only zero at the origin, ``m`` the
    even exponent matching the decay of the last two pins.
    """

    schedule: BoundsSchedule
    kind = "omega"
    outer_radius = 1.0
    _radii: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)
    tail_power: int = field(init=False, compare=False)

    def __post_init__(self):
        n = len(self.schedule.betas) - 1
        # pins at r = 1/(n+1), ..., 1/2, 1 in increasing order
        radii = np.array([1.0 / (i + 1) for i in range(n, -1, -1)])
        values = np.array(
            [0.5 * self.schedule.beta(i - 1) for i in range(n, 0, -1)] + [1.0]
        )
        slope = math.log(values[1] / values[0]) / math.log(radii[1] / radii[0])
        power = max(2, 2 * math.ceil(slope / 2))
        object.__setattr__(self, "_radii", radii)
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "tail_power", power)

    def _eval(self, r):
        radii, values = self._radii, self._values
        out = np.ones_like(r)
        r_min, v_min = radii[0], values[0]
        tail = r < r_min
        if np.any(tail):
            u = r[tail] / r_min
            um = u**self.tail_power
            out[tail] = v_min * (um + (1.0 - um) * smooth_step(u))
        mid = (~tail) & (r < 1.0)
        if np.any(mid):
            rm = r[mid]
            j = np.clip(np.searchsorted(radii, rm, side="right") - 1, 0, len(radii) - 2)
            lo, hi = radii[j], radii[j + 1]
            vlo, vhi = values[j], values[j + 1]
            out[mid] = vlo + (vhi - vlo) * smooth_step((rm - lo) / (hi - lo))
        return out

    def knots(self):
        # inner pins are C-infinity joins; adaptive quadrature handles them
        return (0.5, 1.0)

    def pins(self) -> tuple[np.ndarray, np.ndarray]:
        return self._radii.copy(), self._values.copy()

    def describe(self):
        return {"kind": self.kind, "betas": list(self.schedule.betas)}


def eval_profile(profile: TimeProfile, r):
    """Value of ``profile`` at chart radius ``r`` (scalar or array)."""
    return profile(r)


def construct_omega(schedule: BoundsSchedule) -> LemmaOmega:
    return LemmaOmega(schedule)


def family_path(theta_grid: Sequence[float]) -> list[ThetaFamily]:
    """Theta-family profiles along a strictly increasing grid in (0, 1)."""
    grid = [float(t) for t in theta_grid]
    if not grid:
        raise ProfileError("theta grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ProfileError("theta grid must be strictly increasing")
    return [ThetaFamily(t) for t in grid]


def profile_from_dict(block: dict, base_dimension: int = 4) -> TimeProfile:
    """Build a profile from a config block such as ``{"kind": "power", "ell": 3}``.

    An ``omega`` block gives either explicit ``betas`` or ``i0``/``terms``;
    the latter uses ``l_i = ell_scale * ell_ratio**(i - i0 - 1) / i`` and
    ``delta(i)`` equal to the measure of the radius ``1/i`` ball of the base
    torus (the unique invariant measure of a minimal translation).
    """
    kind = str(block.get("kind", "")).lower()
    if kind == "unit":
        return UnitProfile()
    if kind == "power":
        return PowerBump(int(block["ell"]))
    if kind == "theta":
        return ThetaFamily(float(block["theta"]))
    if kind == "omega":
        if "betas" in block:
            return LemmaOmega(BoundsSchedule(tuple(float(b) for b in block["betas"])))
        return LemmaOmega(default_schedule(
            int(block.get("i0", 20)),
            int(block.get("terms", 200)),
            base_dimension,
            float(block.get("ell_scale", 0.5)),
            float(block.get("ell_ratio", 1.0)),
        ))
    raise ProfileError(f"unknown profile kind {kind!r}")


def default_schedule(
    i0: int = 20,
    terms: int = 200,
    dim: int = 4,
    ell_scale: float = 0.5,
    ell_ratio: float = 1.0,
) -> BoundsSchedule:
    i0 = int(i0)
    return BoundsSchedule.from_rule(
        i0,
        terms,
        ell=lambda j: ell_scale * ell_ratio ** (j - i0 - 1) / j,
        delta=lambda j: torus_ball_measure(1.0 / j, dim),
    )
