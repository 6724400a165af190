"""Experiment configuration: YAML loading, validation and system construction."""
from __future__ import annotations

import copy
import hashlib
import itertools
import re
from dataclasses import dataclass, field
from decimal import Decimal, getcontext
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .flow import BaseMap, FlowSystem
from .profiles import ProfileError, profile_from_dict

EXPERIMENTS = (
    "occupation",
    "hitting",
    "gamma-divergence",
    "ball-floor",
    "lyapunov",
    "cocycle-check",
    "rank",
    "family-scan",
    "first-hit",
)

# parameters each experiment understands, with defaults
EXPERIMENT_PARAMS: dict[str, dict[str, Any]] = {
    "occupation": {"delta": 0.1, "horizons": [100.0], "points": 1},
    "hitting": {"d1": 0.15, "d2": 0.2, "blocks": 10, "points": 1, "max_fast": 1e6},
    "gamma-divergence": {"decades": 4, "points": 1},
    "ball-floor": {"n": 10000, "eps": 0.1, "centers": 100},
    "lyapunov": {"lam": 2.0, "chi": "golden", "n": 100000, "angle": 0.0},
    "cocycle-check": {"samples": 10, "smax": 5.0},
    "rank": {"ells": [1, 2, 3, 4, 5, 6], "radii": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]},
    "family-scan": {"thetas": [0.4, 0.2, 0.1, 0.05], "delta": 0.1, "horizon": 100.0, "points": 1},
    "first-hit": {"d1": None, "d2": None, "samples": 200, "ratio": 0.5, "shrink": 0.8, "threshold": 2.0},
}

# dotted system keys a sweep may address
SYSTEM_KEYS = (
    "base.dimension",
    "profile.ell",
    "profile.theta",
    "p.base_coords",
    "radii.r_v",
    "radii.r_tilde",
    "quad.tol",
    "quad.cap",
)

_SYMBOL = re.compile(r"^sqrt(\d+)$")


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    field: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.level}: {where}{self.field}: {self.message}"


@dataclass
class ExperimentConfig:
    raw: dict
    text: bytes
    experiment: str
    params: dict
    sweep: dict | None
    output: str
    workers: int
    seed: int
    lines: dict = field(default_factory=dict, repr=False)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text).hexdigest()


def _frac_text(x: Decimal) -> str:
    return format(x - int(x), ".17g") if x >= 1 else format(x, ".17g")


def expand_symbol(token) -> float:
    """Numeric value of a rotation entry.  ``sqrtN`` and ``golden`` mean fractional parts."""
    if isinstance(token, bool):
        raise ValueError(f"not a number: {token!r}")
    if isinstance(token, (int, float)):
        return float(token)
    t = str(token).strip().lower()
    getcontext().prec = 40
    if t == "golden":
        return float(_frac_text((1 + Decimal(5).sqrt()) / 2))
    m = _SYMBOL.match(t)
    if m:
        return float(_frac_text(Decimal(int(m.group(1))).sqrt()))
    try:
        return float(Decimal(t))
    except ArithmeticError:
        raise ValueError(f"not a number or known symbol: {token!r}") from None


def _line_map(text: str) -> dict[str, int]:
    """Dotted key -> 1-based line number, from the YAML node tree."""
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)

    if root is not None:
        walk(root, "")
    return out


def _get(d: dict, dotted: str, default=None):
    cur = d
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def _set(d: dict, dotted: str, value):
    parts = dotted.split(".")
    cur = d
    for part in parts[:-1]:
        cur = cur.setdefault(part, {})
    cur[parts[-1]] = value


def _rotation(raw: dict) -> np.ndarray | None:
    rot = _get(raw, "base.rotation")
    if rot is None:
        return None
    return np.array([expand_symbol(r) for r in rot], dtype=float)


def has_integer_relation(rotation, tol: float = 1e-9, budget: int = 200_000) -> bool:
    """True when ``k . rotation`` is (nearly) an integer for a small nonzero ``k``.

    A torus translation is minimal iff no such relation exists; only
    coefficients up to a size fitting ``budget`` candidates are tried.
    """
    rot = np.asarray(rotation, dtype=float) % 1.0
    d = rot.size
    bound = max(1, int((budget ** (1.0 / d) - 1) // 2))
    rng = range(-bound, bound + 1)
    for ks in itertools.product(rng, repeat=d):
        if not any(ks):
            continue
        v = float(np.dot(ks, rot))
        if abs(v - round(v)) < tol:
            return True
    return False


def validate_dict(raw, lines: dict | None = None) -> list[Diagnostic]:
    lines = lines or {}
    diags: list[Diagnostic] = []

    def err(fld, msg, level="error"):
        diags.append(Diagnostic(level, fld, msg, lines.get(fld)))

    if not isinstance(raw, dict):
        err("<root>", "config must be a mapping")
        return diags

    dim = _get(raw, "base.dimension", 4)
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        err("base.dimension", "must be a positive integer")
        dim = None
    rot = None
    try:
        rot = _rotation(raw)
    except (ValueError, ArithmeticError, TypeError):
        err("base.rotation", "entries must be decimals or sqrt2/sqrt3/golden/sqrtN tokens")
    if rot is not None and dim is not None:
        if rot.size != dim:
            err("base.rotation", f"expected {dim} entries, got {rot.size}")
        elif has_integer_relation(rot):
            err("base.rotation", "base map not minimal", level="warning")

    prof = _get(raw, "profile", {"kind": "unit"})
    if not isinstance(prof, dict):
        err("profile", "must be a mapping")
    else:
        try:
            profile_from_dict(prof, dim or 4)
        except ProfileError as e:
            err("profile", str(e))
        except (KeyError, TypeError, ValueError) as e:
            err("profile", f"malformed profile block ({e})")

    pc = _get(raw, "p.base_coords")
    if pc is not None:
        try:
            arr = np.array([float(Decimal(str(v))) for v in pc])
            if dim is not None and arr.size != dim:
                err("p.base_coords", f"expected {dim} entries")
        except (ArithmeticError, TypeError, ValueError):
            err("p.base_coords", "entries must be decimals")

    for key, lo_open in (("radii.r_v", 0.0), ("radii.r_tilde", 0.0), ("quad.tol", 0.0), ("quad.cap", 0.0)):
        v = _get(raw, key)
        if v is not None:
            try:
                if not float(v) > lo_open:
                    err(key, "must be positive")
            except (TypeError, ValueError):
                err(key, "must be a number")
    try:
        rv = float(_get(raw, "radii.r_v", 0.25))
        rt = _get(raw, "radii.r_tilde")
        rt = 2 * rv if rt is None else float(rt)
        if not (0 < rv < rt <= 0.5):
            err("radii", "need 0 < r_v < r_tilde <= 1/2")
    except (TypeError, ValueError):
        pass

    name = raw.get("experiment")
    if name not in EXPERIMENTS:
        err("experiment", f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")
        known = {}
    else:
        known = EXPERIMENT_PARAMS[name]
    params = raw.get("params", {}) or {}
    if not isinstance(params, dict):
        err("params", "must be a mapping")
        params = {}
    for k in params:
        if known and k not in known and k != "seed":
            err(f"params.{k}", f"not a parameter of {name}")
    if name == "lyapunov":
        try:
            if not float(params.get("lam", 2.0)) >= 1.0:
                err("params.lam", "lam must be >= 1")
            expand_symbol(params.get("chi", "golden"))
        except (TypeError, ValueError, ArithmeticError):
            err("params", "lam and chi must be numbers")
    if name == "family-scan":
        thetas = params.get("thetas", EXPERIMENT_PARAMS["family-scan"]["thetas"])
        if any(not (0 < float(t) < 1) for t in thetas):
            err("params.thetas", "theta must lie in (0,1)")

    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or "name" not in sweep or "values" not in sweep:
            err("sweep", "needs 'name' and 'values'")
        else:
            sname = str(sweep["name"])
            if sname not in known and sname not in SYSTEM_KEYS:
                err("sweep.name", f"{sname!r} is not a parameter of this run")
            vals = sweep["values"]
            if not isinstance(vals, list) or not vals:
                err("sweep.values", "must be a nonempty list")
            elif sname == "profile.theta" and any(not (0 < float(t) < 1) for t in vals):
                err("sweep.values", "theta must lie in (0,1)")

    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        err("workers", "must be a positive integer")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        err("seed", "must be a nonnegative integer")
    out = raw.get("output", "results")
    if not isinstance(out, str) or not out:
        err("output", "must be a directory path")
    return diags


def read_text(path) -> bytes:
    return Path(path).read_bytes()


def validate(path) -> list[Diagnostic]:
    """All problems with the config at ``path``; an empty list means valid."""
    try:
        data = read_text(path)
    except OSError as e:
        return [Diagnostic("error", "<file>", f"cannot read config: {e}")]
    text = data.decode("utf-8", errors="replace")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        return [Diagnostic("error", "<syntax>", str(getattr(e, "problem", e)), line)]
    return validate_dict(raw, _line_map(text))


def load(path) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` if any error-level diagnostic is found."""
    diags = validate(path)
    errors = [d for d in diags if d.level == "error"]
    if errors:
        raise ConfigError(errors)
    data = read_text(path)
    text = data.decode("utf-8")
    raw = yaml.safe_load(text)
    name = raw["experiment"]
    params = dict(EXPERIMENT_PARAMS[name])
    params.update(raw.get("params", {}) or {})
    return ExperimentConfig(
        raw=raw,
        text=data,
        experiment=name,
        params=params,
        sweep=raw.get("sweep"),
        output=str(raw.get("output", "results")),
        workers=int(raw.get("workers", 1)),
        seed=int(raw.get("seed", 0)),
        lines=_line_map(text),
    )


def with_override(raw: dict, dotted: str, value) -> dict:
    """Deep copy of ``raw`` with one dotted system key replaced."""
    out = copy.deepcopy(raw)
    _set(out, dotted, value)
    return out


def build_system(raw: dict) -> FlowSystem:
    dim = int(_get(raw, "base.dimension", 4))
    rot = _rotation(raw)
    base = BaseMap.default(dim) if rot is None else BaseMap(rot)
    prof = profile_from_dict(_get(raw, "profile", {"kind": "unit"}), dim)
    pc = _get(raw, "p.base_coords")
    p_base = None if pc is None else np.array([float(Decimal(str(v))) for v in pc])
    rt = _get(raw, "radii.r_tilde")
    return FlowSystem(
        base,
        prof,
        p_base=p_base,
        r_v=float(_get(raw, "radii.r_v", 0.25)),
        r_tilde=None if rt is None else float(rt),
        quad_tol=float(_get(raw, "quad.tol", 1e-12)),
        cap=float(_get(raw, "quad.cap", 1e12)),
    )

