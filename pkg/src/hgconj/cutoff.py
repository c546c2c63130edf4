"""Modified nonlinear part W-hat: smooth ball cutoff, value threshold, or none."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UnboundedModification
from .field_model import NonlinearPart, VectorField
from .flow_engine import sphere_samples

__all__ = ["CutoffSpec", "alpha", "w_hat", "w_hat_bound", "smooth_step"]

BALL = "ball"
THRESHOLD = "threshold"
NONE = "none"


@dataclass(frozen=True)
class CutoffSpec:
    kind: str = NONE
    M: float = math.inf
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in (BALL, THRESHOLD, NONE):
            raise ConfigError(f"unknown cutoff {self.kind!r}")
        if self.kind == BALL and not (self.M > 0 and self.eps > 0):
            raise ConfigError("ball cutoff needs M > 0 and eps > 0")
        if self.kind == THRESHOLD and not self.M > 0:
            raise ConfigError("threshold cutoff needs M > 0")

    @classmethod
    def ball(cls, M: float, eps: float) -> "CutoffSpec":
        return cls(BALL, float(M), float(eps))

    @classmethod
    def threshold(cls, M: float) -> "CutoffSpec":
        return cls(THRESHOLD, float(M), 0.0)

    @classmethod
    def none(cls) -> "CutoffSpec":
        return cls(NONE)

    @property
    def support_radius(self) -> float:
        return self.M + self.eps if self.kind == BALL else math.inf

    def validate(self, field: VectorField) -> None:
        if self.kind == BALL and self.M + self.eps > field.domain_radius:
            raise ConfigError(f"M + eps = {self.M + self.eps:g} exceeds the domain radius "
                              f"{field.domain_radius:g}")

    def describe(self) -> str:
        if self.kind == BALL:
            return f"ball(M={self.M:g}, eps={self.eps:g})"
        if self.kind == THRESHOLD:
            return f"threshold(M={self.M:g})"
        return "none"


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    gu = _g(u)
    return gu / (gu + _g(1.0 - np.asarray(u, dtype=float)))


def alpha(x, M: float, eps: float):
    """Smooth radial cutoff, 1 on ||x|| <= M and 0 on ||x|| >= M + eps.

    ``x`` may be a single state ``(n,)`` or a batch ``(n, k)``.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=0)
    a = smooth_step((M + eps - r) / eps)
    return float(a) if x.ndim == 1 else a


def w_hat(W: NonlinearPart, spec: CutoffSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.kind == BALL:
        return W(alpha(x, spec.M, spec.eps) * x)
    w = W(x)
    if spec.kind == THRESHOLD:
        return np.where(np.abs(w) <= spec.M, w, 0.0)
    return w


def _ball_points(n: int, radius: float, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dirs = sphere_samples(n, count, seed)
    shells = np.linspace(0.0, 1.0, 21)[1:] * radius
    pts = (shells[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    inner = rng.standard_normal((count, n))
    inner *= (radius * rng.random(count) ** (1.0 / n) / np.linalg.norm(inner, axis=1))[:, None]
    return np.vstack([pts, inner]).T


def w_hat_bound(W: NonlinearPart, spec: CutoffSpec, samples: int = 256, seed: int = 0) -> float:
    """Sampled sup of ||W-hat||."""
    n = W.base.dim
    if spec.kind == THRESHOLD:
        return spec.M * math.sqrt(n)
    if spec.kind == BALL:
        X = _ball_points(n, spec.M + spec.eps, samples, seed)
        return float(np.max(np.linalg.norm(W(X), axis=0)))
    sups = []
    for radius in (1.0, 10.0, 100.0, 1000.0):
        if radius > W.base.domain_radius:
            break
        X = _ball_points(n, radius, samples, seed)
        with np.errstate(over="ignore", invalid="ignore"):
            sups.append(float(np.max(np.linalg.norm(W(X), axis=0))))
    if not sups or max(sups) == 0.0:
        return 0.0
    if not np.all(np.isfinite(sups)) or sups[-1] > 1.01 * sups[0]:
        raise UnboundedModification("W grows without a cutoff")
    return max(sups)
