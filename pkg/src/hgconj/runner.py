"""Run configuration, map construction, batch evaluation, and verification suites."""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .conjugacy import BACKWARD, FORWARD, build_global, build_local
from .cutoff import BALL, NONE, THRESHOLD, CutoffSpec
from .errors import (ConfigError, Diverged, HGError, LeftDomain, NotInRegionOfAttraction)
from .field_model import AnalyticExample, VectorField, builtin_examples, get_example, load_field
from .quadrature import QuadratureConfig
from .verification import (VerificationReport, check_conjugacy, check_equilibrium_collapse,
                           check_identity_jacobian, check_oracle, check_roundtrip, sample_ball)

__all__ = ["RunConfig", "resolve_system", "build_map", "evaluate_point", "grid_points",
           "evaluate_grid", "format_csv", "run_suite", "status_of"]

DEFAULT_M = 0.5
DEFAULT_EPS = 0.25

OK = "ok"
OUTSIDE_ROA = "outside_roa"
DIVERGED = "diverged"
ERROR = "error"


@dataclass
class RunConfig:
    system: str = "example1"
    mode: str = "local"
    cutoff: Optional[str] = None
    M: Optional[float] = None
    eps: Optional[float] = None
    quad_tol: float = 1e-8
    flow_tol: float = 1e-10
    t_max: Optional[float] = None
    seed: int = 42
    stable_direction: Optional[str] = None
    unstable_direction: Optional[str] = None
    samples: int = 20

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        clean = {}
        for key, value in data.items():
            k = key.replace("-", "_")
            if k not in names:
                continue
            clean[k] = value
        return cls(**clean)

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_system(name: str) -> tuple[VectorField, Optional[AnalyticExample]]:
    """Builtin registry name or path to a polynomial field file."""
    if name in {ex.name for ex in builtin_examples()}:
        ex = get_example(name)
        return ex.field, ex
    if Path(name).exists():
        return load_field(name), None
    raise ConfigError(f"{name!r} is neither a builtin system nor a field file")


def _resolved(cfg: RunConfig, example: Optional[AnalyticExample]) -> RunConfig:
    """Fill unset options from the example hints, then generic defaults."""
    if cfg.mode not in ("local", "global"):
        raise ConfigError(f"mode must be local or global, got {cfg.mode!r}")
    hints = dict(example.hints) if example is not None else {}
    if cfg.mode == "global" and "cutoff_global" in hints:
        hints = {"cutoff": hints["cutoff_global"]}
    elif cfg.mode == "global":
        hints = {}
    out = RunConfig(**cfg.to_dict())
    if out.cutoff is None:
        out.cutoff = hints.get("cutoff", BALL)
    if out.cutoff not in (BALL, THRESHOLD, NONE):
        raise ConfigError(f"unknown cutoff {out.cutoff!r}")
    if out.M is None:
        out.M = hints.get("M", DEFAULT_M) if out.cutoff != NONE else None
    if out.eps is None and out.cutoff == BALL:
        out.eps = DEFAULT_EPS
    if out.stable_direction is None:
        out.stable_direction = hints.get("stable_direction",
                                         FORWARD if (cfg.mode == "global" and out.cutoff == NONE)
                                         else BACKWARD)
    if out.unstable_direction is None:
        out.unstable_direction = FORWARD
    for d in (out.stable_direction, out.unstable_direction):
        if d not in (FORWARD, BACKWARD):
            raise ConfigError(f"direction must be forward or backward, got {d!r}")
    if not (out.quad_tol > 0 and out.flow_tol > 0):
        raise ConfigError("tolerances must be positive")
    if out.t_max is not None and not out.t_max > 0:
        raise ConfigError("t_max must be positive")
    return out


def _cutoff_spec(cfg: RunConfig) -> CutoffSpec:
    if cfg.cutoff == BALL:
        return CutoffSpec.ball(cfg.M, cfg.eps)
    if cfg.cutoff == THRESHOLD:
        return CutoffSpec.threshold(cfg.M)
    return CutoffSpec.none()


def build_map(cfg: RunConfig):
    """Resolve the config and build the conjugacy context.

    Returns ``(ctx, resolved_config, example_or_None)``. Spectral rejections
    propagate unchanged; inconsistent options raise ``ConfigError``.
    """
    field, example = resolve_system(cfg.system)
    rc = _resolved(cfg, example)
    spec = _cutoff_spec(rc)
    quad = QuadratureConfig(tol=rc.quad_tol)
    if rc.mode == "local":
        ctx = build_local(field, spec, quad, rc.flow_tol, stable_direction=rc.stable_direction,
                          unstable_direction=rc.unstable_direction)
    else:
        if rc.cutoff == THRESHOLD:
            raise ConfigError("global mode supports a ball cutoff or none")
        form = "cutoff" if rc.cutoff == BALL else rc.stable_direction
        ctx = build_global(field, spec, quad, rc.flow_tol, rc.t_max, form=form)
    return ctx, rc, example


def status_of(exc: Exception) -> str:
    if isinstance(exc, NotInRegionOfAttraction):
        return OUTSIDE_ROA
    if isinstance(exc, (Diverged, LeftDomain)):
        return DIVERGED
    return ERROR


def evaluate_point(ctx, x) -> tuple[np.ndarray, str, str]:
    """``(y, status, message)``; ``y`` is NaN unless the status is ok."""
    x = np.asarray(x, dtype=float)
    try:
        return np.asarray(ctx(x), dtype=float), OK, ""
    except HGError as exc:
        return np.full(x.shape, np.nan), status_of(exc), f"{type(exc).__name__}: {exc}"


def grid_points(box, steps) -> np.ndarray:
    """Row-major grid (last coordinate fastest) over ``box = [(lo, hi), ...]``."""
    box = [(float(lo), float(hi)) for lo, hi in box]
    steps = [int(s) for s in steps]
    if len(steps) == 1:
        steps = steps * len(box)
    if len(steps) != len(box) or any(s < 1 for s in steps):
        raise ConfigError("steps must be positive, one value or one per dimension")
    axes = [np.linspace(lo, hi, s) if s > 1 else np.array([0.5 * (lo + hi)])
            for (lo, hi), s in zip(box, steps)]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(box))


def evaluate_grid(ctx, points) -> list[tuple[np.ndarray, np.ndarray, str]]:
    rows = []
    for x in points:
        y, status, _ = evaluate_point(ctx, x)
        rows.append((x, y, status))
    return rows


def _num(v: float) -> str:
    return format(float(v), ".17g")


def format_csv(rows, dim: int) -> str:
    header = [f"x{i + 1}" for i in range(dim)] + [f"y{i + 1}" for i in range(dim)] + ["status"]
    lines = [",".join(header)]
    for x, y, status in rows:
        lines.append(",".join([_num(v) for v in x] + [_num(v) for v in y] + [status]))
    return "\n".join(lines) + "\n"


def _oracle_applies(rc: RunConfig, example: Optional[AnalyticExample]) -> bool:
    if example is None or example.closed_H is None:
        return False
    hints = example.hints
    if rc.mode == "local" and "cutoff" in hints:
        return (rc.cutoff == hints["cutoff"] and rc.M == hints.get("M", rc.M)
                and rc.stable_direction == hints.get("stable_direction", BACKWARD))
    if rc.mode == "global" and hints.get("cutoff_global") == NONE:
        return rc.cutoff == NONE and rc.stable_direction == FORWARD
    return False


def _roa_radius(example: Optional[AnalyticExample]) -> Optional[float]:
    if example is None or example.roa_descriptor is None:
        return None
    hi = example.roa_descriptor.strip("() ").split(",")[1].strip()
    return math.pi if hi == "pi" else float(hi)


def run_suite(cfg: RunConfig, t_grid=(0.25, 0.5, 1.0)) -> VerificationReport:
    """Full verification suite for one configuration.

    Checks: conjugacy on seeded samples, identity Jacobian at 0, equilibrium
    collapse, closed-form oracle (builtin examples whose hints match the
    configuration) and inverse round trip (global mode).
    """
    start = time.perf_counter()
    ctx, rc, example = build_map(cfg)
    field = ctx.field
    n = field.dim
    rng = np.random.default_rng(rc.seed)
    report = VerificationReport(metadata={
        "system": rc.system,
        "mode": rc.mode,
        "cutoff": ctx.cutoff.describe() + ("" if rc.cutoff != NONE or rc.mode == "local"
                                           else f" ({rc.stable_direction} form)"),
        "quad_tol": rc.quad_tol,
        "flow_tol": rc.flow_tol,
        "seed": rc.seed,
    })
    if rc.mode == "local":
        radius = 0.8 * rc.M if rc.cutoff in (BALL, THRESHOLD) else 0.8
        restrict = rc.M if rc.cutoff in (BALL, THRESHOLD) else None
    else:
        radius = ctx.cert.radius_r
        restrict = None
    pts = sample_ball(n, radius, rc.samples, rng)
    report.add(check_conjugacy(ctx, field, field.A, pts, t_grid, restrict_to_ball=restrict,
                               flow_tol=rc.flow_tol))
    report.add(check_identity_jacobian(ctx, n))
    eqs = [np.zeros(n)]
    if example is not None and rc.mode == "local" and rc.cutoff == BALL:
        eqs += [np.asarray(e, dtype=float) for e in example.equilibria
                if 0 < np.linalg.norm(e) < rc.M]
    for rec in check_equilibrium_collapse(ctx, field, eqs):
        report.add(rec)
    if _oracle_applies(rc, example):
        roa = _roa_radius(example)
        half = 0.8 if roa is None else 0.8 * roa
        grid = rng.uniform(-half, half, (10, n))
        if example.name == "example2":
            closed = lambda x: example.closed_H(x, rc.M)  # noqa: E731
        else:
            closed = example.closed_H
        report.add(check_oracle(ctx, closed, grid))
    if rc.mode == "global":
        xs = pts[:5]
        ys = np.asarray([ctx(x) for x in xs])[::-1] * 1.5
        report.add(check_roundtrip(ctx, ctx.inverse, xs, ys))
    report.wall_time = time.perf_counter() - start
    return report


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data
