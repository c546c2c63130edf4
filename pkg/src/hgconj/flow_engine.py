"""Flows of x' = f(x) in both time directions, ball events, and region-of-attraction checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (Diverged, Inconclusive, LeftDomain, NoCertifiedBall, NoEntry,
                     NotStableSpectrum, StepUnderflow)
from .field_model import VectorField

__all__ = [
    "Trajectory",
    "RoaCertificate",
    "integrate",
    "flow",
    "flow_until_ball",
    "certify_dominance_ball",
    "in_region_of_attraction",
    "default_t_max",
    "sphere_samples",
]

DEFAULT_TOL = 1e-10
BLOWUP = 1e8

# termination reasons
HORIZON = "reached horizon"
ENTERED = "entered ball"
EXITED = "exited ball"
DIVERGED = "diverged"
LEFT_DOMAIN = "left domain"
UNDERFLOW = "step underflow"


@dataclass
class Trajectory:
    """Dense solution on [t_start, t_end] (t_end may be below t_start)."""

    x0: np.ndarray
    t_start: float
    t_end: float
    tol: float
    termination: str
    sol: object = None
    x_end: Optional[np.ndarray] = None
    nfev: int = 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.sol is None or self.t_end == self.t_start:
            if t.ndim == 0:
                return self.x0.copy()
            return np.repeat(self.x0[:, None], t.size, axis=1)
        return self.sol(t)

    @property
    def span(self) -> float:
        return abs(self.t_end - self.t_start)


def _norm_event(radius: float, direction: int):
    def ev(t, y):
        return math.sqrt(float(np.dot(y, y))) - radius
    ev.terminal = True
    ev.direction = direction
    return ev


def integrate(field: VectorField, x, t_end: float, tol: float = DEFAULT_TOL, *,
              t_start: float = 0.0, blowup: float = BLOWUP,
              ball: Optional[tuple[float, str]] = None,
              dense: bool = True) -> Trajectory:
    """Integrate from ``x`` at ``t_start`` to ``t_end`` with DOP853.

    Never raises for divergence; the reason integration stopped is recorded in
    ``termination``. ``ball=(radius, "enter"|"exit")`` adds a terminal event on
    ``||x|| = radius``.
    """
    x = np.array(x, dtype=float).reshape(field.dim)
    if t_end == t_start:
        return Trajectory(x, t_start, t_end, tol, HORIZON, None, x.copy())

    def rhs(t, y):
        return field(y)

    events = [_norm_event(blowup, 1)]
    kinds = [DIVERGED]
    if math.isfinite(field.domain_radius):
        events.append(_norm_event(field.domain_radius, 1))
        kinds.append(LEFT_DOMAIN)
    if ball is not None:
        radius, mode = ball
        events.append(_norm_event(radius, -1 if mode == "enter" else 1))
        kinds.append(ENTERED if mode == "enter" else EXITED)
    with np.errstate(over="ignore", invalid="ignore"):
        res = solve_ivp(rhs, (t_start, t_end), x, method="DOP853", rtol=tol,
                        atol=tol * 1e-2, dense_output=dense, events=events)
    if res.status == 1:
        hit = [i for i, te in enumerate(res.t_events) if len(te)]
        # earliest event along the integration direction
        sgn = 1.0 if t_end > t_start else -1.0
        i = min(hit, key=lambda j: sgn * res.t_events[j][0])
        termination = kinds[i]
        t_stop = float(res.t_events[i][0])
        x_end = np.array(res.y_events[i][0])
    elif res.status == 0:
        termination = HORIZON
        t_stop = float(res.t[-1])
        x_end = res.y[:, -1].copy()
    else:
        t_stop = float(res.t[-1])
        x_end = res.y[:, -1].copy()
        # step collapse with large growth is a finite-time blow-up
        grown = np.linalg.norm(x_end) >= 1e3 * (1.0 + np.linalg.norm(x))
        termination = DIVERGED if grown else UNDERFLOW
    return Trajectory(x, t_start, t_stop, tol, termination, res.sol, x_end, res.nfev)


def _raise_for(traj: Trajectory) -> None:
    if traj.termination == DIVERGED:
        raise Diverged(f"state norm exceeded blow-up bound at t={traj.t_end:.6g}")
    if traj.termination == LEFT_DOMAIN:
        raise LeftDomain(f"left the domain ball at t={traj.t_end:.6g}")
    if traj.termination == UNDERFLOW:
        raise StepUnderflow(f"step size underflow at t={traj.t_end:.6g}")


def flow(field: VectorField, x, t: float, tol: float = DEFAULT_TOL,
         blowup: float = BLOWUP) -> np.ndarray:
    """phi_t(x); negative ``t`` integrates backward."""
    traj = integrate(field, x, float(t), tol, blowup=blowup, dense=False)
    _raise_for(traj)
    return traj.x_end


def flow_until_ball(field: VectorField, x, radius: float, t_max: float,
                    tol: float = DEFAULT_TOL, blowup: float = BLOWUP):
    """First time the forward orbit of ``x`` reaches the closed ball of ``radius``.

    Returns ``(t_entry, state)``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = np.array(x, dtype=float).reshape(field.dim)
    if np.linalg.norm(x) <= radius:
        return 0.0, x
    traj = integrate(field, x, t_max, tol, blowup=blowup, ball=(radius, "enter"), dense=False)
    if traj.termination == ENTERED:
        return traj.t_end, traj.x_end
    if traj.termination == HORIZON:
        err = NoEntry(f"no entry into ball of radius {radius:g} before t={t_max:g}")
        err.state = traj.x_end
        raise err
    _raise_for(traj)


@dataclass(frozen=True)
class RoaCertificate:
    radius_r: float
    decay_checked: bool = True
    samples: int = 0


def sphere_samples(n: int, count: int = 128, seed: int = 0) -> np.ndarray:
    """Unit vectors, shape ``(count', n)``, including the coordinate axes."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, n))
    axes = np.vstack([np.eye(n), -np.eye(n)])
    pts = np.vstack([axes, pts])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _radial_ok(field: VectorField, r: float, dirs: np.ndarray, shells: int) -> bool:
    for j in range(1, shells + 1):
        X = (r * j / shells) * dirs.T
        F = field.batch(X)
        if not np.all(np.einsum("ik,ik->k", X, F) < 0.0):
            return False
    return True


def certify_dominance_ball(field: VectorField, r_init: float, samples: int = 128,
                           shells: int = 16, seed: int = 0) -> RoaCertificate:
    """Largest ``r = r_init / 2^j`` with <x, f(x)> < 0 on sampled spheres of radius <= r.

    Every shell radius ``r*i/shells`` is tested, so the certified set is the
    ball and not just its boundary sphere.
    """
    eig = np.linalg.eigvals(field.A)
    if np.any(eig.real >= 0):
        raise NotStableSpectrum(f"Df(0) has eigenvalues off the open left half-plane: {eig}")
    dirs = sphere_samples(field.dim, samples, seed)
    r = float(min(r_init, 0.999 * field.domain_radius))
    floor = 1e-8 * r_init
    while r >= floor:
        if _radial_ok(field, r, dirs, shells):
            return RoaCertificate(radius_r=r, decay_checked=True, samples=len(dirs) * shells)
        r *= 0.5
    raise NoCertifiedBall(f"no dominance ball down to radius {floor:.1e}")


def default_t_max(field: VectorField) -> float:
    eig = np.linalg.eigvals(field.A)
    slow = float(np.max(eig.real))
    return 50.0 / abs(slow) if slow < 0 else 50.0


def in_region_of_attraction(field: VectorField, x, cert: RoaCertificate,
                            t_max: Optional[float] = None, tol: float = DEFAULT_TOL,
                            stall_tol: float = 1e-9) -> bool:
    """Whether the forward orbit of ``x`` is captured by the certified ball.

    A horizon miss that ends at a point with ``||f|| <= stall_tol (1+||x||)``
    is reported as ``False`` (the orbit settled on another equilibrium);
    any other horizon miss raises ``Inconclusive``.
    """
    if t_max is None:
        t_max = default_t_max(field)
    try:
        flow_until_ball(field, x, cert.radius_r, t_max, tol)
        return True
    except (Diverged, LeftDomain):
        return False
    except NoEntry as exc:
        end = exc.state
        if np.linalg.norm(field(end)) <= stall_tol * (1.0 + np.linalg.norm(end)):
            return False
        raise Inconclusive(f"orbit neither captured nor diverged by t={t_max:g}") from exc
