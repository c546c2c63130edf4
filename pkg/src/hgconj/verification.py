"""Invariant checks and oracle comparisons collected into JSON reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import NotEquilibrium
from .field_model import VectorField
from .flow_engine import DEFAULT_TOL, HORIZON, integrate
from .spectral import expm

__all__ = [
    "CheckRecord",
    "VerificationReport",
    "check_conjugacy",
    "check_equilibrium_collapse",
    "check_identity_jacobian",
    "check_oracle",
    "check_roundtrip",
    "sample_ball",
]

DEFAULT_TOLERANCES = {
    "conjugacy": 1e-5,
    "equilibrium_collapse": 1e-6,
    "identity_jacobian": 1e-4,
    "oracle": 1e-5,
    "roundtrip": 1e-6,
}


@dataclass
class CheckRecord:
    name: str
    samples: int
    max_residual: float
    mean_residual: float
    tolerance: float
    passed: bool

    @classmethod
    def from_residuals(cls, name: str, residuals: Iterable[float], tolerance: float) -> "CheckRecord":
        r = np.asarray(list(residuals), dtype=float)
        if r.size == 0:
            return cls(name, 0, 0.0, 0.0, float(tolerance), True)
        mx = float(np.max(r))
        # NaN residuals never pass
        ok = bool(np.all(np.isfinite(r)) and mx <= tolerance)
        return cls(name, int(r.size), mx, float(np.mean(r)), float(tolerance), ok)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CheckRecord":
        return cls(d["name"], int(d["samples"]), float(d["max_residual"]),
                   float(d["mean_residual"]), float(d["tolerance"]), bool(d["pass"]))


@dataclass
class VerificationReport:
    """Check records plus run metadata.

    ``wall_time`` is kept out of the serialized form unless requested so
    that identical runs produce byte-identical files.
    """

    checks: list = dc_field(default_factory=list)
    metadata: dict = dc_field(default_factory=dict)
    wall_time: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, record: CheckRecord) -> CheckRecord:
        self.checks.append(record)
        return record

    def to_dict(self, include_wall_time: bool = False) -> dict:
        meta = dict(self.metadata)
        if include_wall_time and self.wall_time is not None:
            meta["wall_time"] = self.wall_time
        return {"checks": [c.to_dict() for c in self.checks], "metadata": meta,
                "pass": self.passed}

    def to_json(self, include_wall_time: bool = False) -> str:
        return json.dumps(self.to_dict(include_wall_time), indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        d = json.loads(text)
        meta = dict(d.get("metadata", {}))
        wall = meta.pop("wall_time", None)
        return cls([CheckRecord.from_dict(c) for c in d["checks"]], meta, wall)

    def summary(self) -> str:
        failed = [c.name for c in self.checks if not c.passed]
        head = "PASS" if self.passed else "FAIL"
        tail = f" failed: {', '.join(failed)}" if failed else ""
        timing = f" in {self.wall_time:.2f}s" if self.wall_time is not None else ""
        return f"{head}: {len(self.checks) - len(failed)}/{len(self.checks)} checks{timing}{tail}"


def _points(arr, dim: Optional[int] = None) -> np.ndarray:
    """Rows of sample states; a flat array is a list of scalar states unless ``dim`` says otherwise."""
    a = np.asarray(arr, dtype=float)
    if dim is not None:
        return a.reshape(-1, dim)
    return a.reshape(-1, 1) if a.ndim <= 1 else a


def sample_ball(dim: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points uniform in the closed ball, shape ``(count, dim)``."""
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / dim)
    return g * r[:, None]


def check_conjugacy(H: Callable, field: VectorField, A, sample_points, t_grid: Sequence[float],
                    restrict_to_ball: Optional[float] = None, tolerance: Optional[float] = None,
                    flow_tol: float = DEFAULT_TOL) -> CheckRecord:
    """Residuals ``||H(phi_t x) - e^{At} H(x)||``.

    With ``restrict_to_ball`` only pairs whose orbit segment ``phi_[0,t] x``
    stays in the closed ball of that radius are evaluated.
    """
    tol = DEFAULT_TOLERANCES["conjugacy"] if tolerance is None else tolerance
    A = np.asarray(A, dtype=float)
    ts = sorted(float(t) for t in t_grid)
    props = {t: expm(A, t) for t in ts}
    res = []
    for x in _points(sample_points, field.dim):
        if restrict_to_ball is not None and np.linalg.norm(x) > restrict_to_ball:
            continue
        ball = None if restrict_to_ball is None else (restrict_to_ball, "exit")
        traj = integrate(field, x, ts[-1], flow_tol, ball=ball)
        valid = [t for t in ts if t <= traj.t_end] if traj.termination != HORIZON else ts
        if not valid:
            continue
        Hx = H(x)
        for t in valid:
            res.append(float(np.linalg.norm(H(traj(t)) - props[t] @ Hx)))
    return CheckRecord.from_residuals("conjugacy", res, tol)


def check_equilibrium_collapse(H: Callable, field: VectorField, equilibria,
                               tolerance: Optional[float] = None,
                               eq_tol: float = 1e-8) -> list:
    """``||H(x_eq)||`` for each equilibrium, plus the algebraic cross-check
    ``x_eq + A^{-1} W(x_eq)`` (which equals ``A^{-1} f(x_eq)``)."""
    tol = DEFAULT_TOLERANCES["equilibrium_collapse"] if tolerance is None else tolerance
    A = np.asarray(field.A, dtype=float)
    direct, formula = [], []
    for xe in _points(equilibria, field.dim):
        fx = field(xe)
        if np.linalg.norm(fx) > eq_tol:
            raise NotEquilibrium(f"||f({xe})|| = {np.linalg.norm(fx):.2e}")
        direct.append(float(np.linalg.norm(H(xe))))
        W = fx - A @ xe
        formula.append(float(np.linalg.norm(xe + np.linalg.solve(A, W))))
    return [CheckRecord.from_residuals("equilibrium_collapse", direct, tol),
            CheckRecord.from_residuals("equilibrium_collapse_formula", formula, tol)]


def fd_jacobian(H: Callable, x, step: float = 1e-3) -> np.ndarray:
    """Central-difference Jacobian of ``H`` at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (np.asarray(H(x + e)) - np.asarray(H(x - e))) / (2.0 * step)
    return J


def check_identity_jacobian(H: Callable, dim: int, tolerance: Optional[float] = None,
                            step: float = 1e-3) -> CheckRecord:
    """``||DH(0) - I||_2`` with a central-difference Jacobian."""
    tol = DEFAULT_TOLERANCES["identity_jacobian"] if tolerance is None else tolerance
    J = fd_jacobian(H, np.zeros(dim), step)
    return CheckRecord.from_residuals("identity_jacobian", [np.linalg.norm(J - np.eye(dim), 2)], tol)


def check_oracle(H: Callable, closed_H: Callable, grid, tolerance: Optional[float] = None) -> CheckRecord:
    tol = DEFAULT_TOLERANCES["oracle"] if tolerance is None else tolerance
    res = [float(np.linalg.norm(np.asarray(H(x)) - np.asarray(closed_H(x))))
           for x in _points(grid)]
    return CheckRecord.from_residuals("oracle", res, tol)


def check_roundtrip(H: Callable, inverse: Callable, xs=(), ys=(),
                    tolerance: Optional[float] = None) -> CheckRecord:
    """``||H^{-1}(H(x)) - x||`` over ``xs`` and ``||H(H^{-1}(y)) - y||`` over ``ys``."""
    tol = DEFAULT_TOLERANCES["roundtrip"] if tolerance is None else tolerance
    res = []
    for x in np.asarray(xs, dtype=float).reshape(-1, _dim(xs, ys)):
        res.append(float(np.linalg.norm(inverse(H(x)) - x)))
    for y in np.asarray(ys, dtype=float).reshape(-1, _dim(xs, ys)):
        res.append(float(np.linalg.norm(H(inverse(y)) - y)))
    return CheckRecord.from_residuals("roundtrip", res, tol)


def _dim(xs, ys) -> int:
    for arr in (xs, ys):
        a = np.asarray(arr, dtype=float)
        if a.size:
            return a.shape[-1] if a.ndim > 1 else 1
    return 1

