"""Linearizing conjugacies y = H(x): the local cutoff construction, the global
stable-case map H = id + h, its simplified one-sided forms, and the inverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .cutoff import BALL, NONE, THRESHOLD, CutoffSpec, w_hat, w_hat_bound
from .errors import (ConfigError, Diverged, HGError, HorizonExceeded, Inconclusive, LeftDomain,
                     NewtonDiverged, NoEntry, NotInRegionOfAttraction, NotStableSpectrum,
                     StepUnderflow, UnboundedModification)
from .field_model import NonlinearPart, VectorField, nonlinear_part
from .flow_engine import (DIVERGED, ENTERED, EXITED, HORIZON, LEFT_DOMAIN, RoaCertificate,
                          certify_dominance_ball, default_t_max, flow, in_region_of_attraction,
                          integrate)
from .quadrature import QuadratureConfig, estimate_decay, gauss_kronrod, quad_expdecay
from .spectral import SpectralSplit, _BatchExp, decay_margin, expm, split_spectrum

__all__ = [
    "QuadratureConfig",
    "LocalConjugacy",
    "GlobalConjugacy",
    "build_local",
    "build_global",
    "quad_expdecay",
    "local_H",
    "global_h",
    "global_H",
    "simplified_h",
    "inverse_H",
]

FORWARD = "forward"
BACKWARD = "backward"
ORBIT_BLOWUP = 1e30
# with a ball cutoff an orbit reaching this multiple of the support radius is
# treated as gone for good; beyond it W-hat is zero and polynomial fields
# turn stiff
ESCAPE_FACTOR = 10.0


class _Orbit:
    """Lazily extended orbit of ``x`` in one time direction.

    Calling it with signed times returns ``(states, valid)``; states past the
    point where integration terminated are flagged invalid.
    """

    def __init__(self, field: VectorField, x: np.ndarray, sign: float, tol: float,
                 blowup: float = ORBIT_BLOWUP, step: float = 8.0):
        self.field = field
        self.x = x
        self.sign = sign
        self.tol = tol
        self.blowup = blowup
        self.step = step
        self.pieces = []
        self.reach = 0.0
        self.end = math.inf
        self.termination = None
        self._last = x

    def extend_to(self, T: float) -> None:
        while self.reach < T and self.end == math.inf:
            target = max(T, self.reach + self.step)
            tr = integrate(self.field, self._last, self.sign * target, self.tol,
                           t_start=self.sign * self.reach, blowup=self.blowup)
            self.pieces.append((self.reach, abs(tr.t_end), tr))
            self._last = tr.x_end
            if tr.termination == HORIZON:
                self.reach = target
            else:
                self.end = abs(tr.t_end)
                self.reach = self.end
                self.termination = tr.termination

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        self.extend_to(float(a.max()) if a.size else 0.0)
        X = np.zeros((self.field.dim, t.size))
        valid = a <= self.end
        for lo, hi, tr in self.pieces:
            m = valid & (a >= lo) & (a <= hi)
            if np.any(m):
                X[:, m] = tr(t[m]).reshape(self.field.dim, -1)
        return X, valid


# ---------------------------------------------------------------------------
# local construction

@dataclass(frozen=True)
class LocalConjugacy:
    """Context for the local map with stable/unstable block integrals.

    ``directions`` maps block name ("P"/"N") to "forward" (integrate
    +e^{-Bs} W-hat over s >= 0) or "backward" (minus the integral over
    s <= 0). The default is P forward, N backward.
    """

    field: VectorField
    W: NonlinearPart
    split: SpectralSplit
    cutoff: CutoffSpec
    quad: QuadratureConfig = QuadratureConfig()
    flow_tol: float = 1e-10
    directions: dict = dc_field(default_factory=lambda: {"P": FORWARD, "N": BACKWARD})
    blowup: float = ORBIT_BLOWUP
    _cache: dict = dc_field(default_factory=dict, compare=False, repr=False)

    @property
    def A(self) -> np.ndarray:
        return self.W.A

    def __call__(self, x) -> np.ndarray:
        return local_H(self, x)

    def inverse(self, y) -> np.ndarray:
        return inverse_H(self, y)

    def _kernel(self, block: str) -> _BatchExp:
        key = ("kernel", block)
        if key not in self._cache:
            self._cache[key] = _BatchExp(-self.split.block(block))
        return self._cache[key]

    def _bound(self) -> Optional[float]:
        if "bound" not in self._cache:
            try:
                b = w_hat_bound(self.W, self.cutoff) if self.cutoff.kind != NONE else None
            except UnboundedModification:
                b = None
            self._cache["bound"] = b
        return self._cache["bound"]

    def _rate(self, blocks: list[str]) -> Optional[tuple[float, float]]:
        """A-priori (C, mu) for a group of blocks, or None if unknown."""
        if self.cutoff.kind == NONE:
            return None
        for b in blocks:
            natural = FORWARD if b == "P" else BACKWARD
            if self.directions[b] != natural:
                return None
        key = ("rate", tuple(blocks))
        if key not in self._cache:
            bound = self._bound()
            mus, cs = [], []
            for b in blocks:
                mu, C = decay_margin(self.split, self.directions[b], b)
                mus.append(mu)
                cs.append(C)
            # factor 2 covers the sampled (not proven) sup of W-hat
            C_tot = math.sqrt(sum(c * c for c in cs)) * np.linalg.norm(self.split.T, 2) * 2.0 * bound
            self._cache[key] = (max(C_tot, 1e-300), min(mus))
        return self._cache[key]


def build_local(field: VectorField, cutoff: CutoffSpec = CutoffSpec(),
                quad: QuadratureConfig = QuadratureConfig(), flow_tol: float = 1e-10,
                stable_direction: str = BACKWARD, unstable_direction: str = FORWARD,
                hyperbolicity_tol: Optional[float] = None) -> LocalConjugacy:
    field.check_equilibrium()
    cutoff.validate(field)
    for d in (stable_direction, unstable_direction):
        if d not in (FORWARD, BACKWARD):
            raise ConfigError(f"direction must be forward or backward, got {d!r}")
    W = nonlinear_part(field)
    split = split_spectrum(W.A, hyperbolicity_tol)
    return LocalConjugacy(field, W, split, cutoff, quad, flow_tol,
                          {"P": unstable_direction, "N": stable_direction})


def _check_truncation(ctx, orbit: _Orbit, integrand, rate, direction: str) -> None:
    """Validate an orbit that stopped before the quadrature horizon."""
    if orbit.end == math.inf:
        return
    if orbit.termination not in (DIVERGED, LEFT_DOMAIN):
        raise StepUnderflow(f"orbit integration failed at |s|={orbit.end:.6g}")
    cutoff = getattr(ctx, "cutoff", CutoffSpec())
    if cutoff.kind == BALL:
        # the orbit has left the support of W-hat for good
        return
    tol = ctx.quad.tol
    sd = orbit.end
    if rate is not None:
        C, mu = rate
        tail = C * math.exp(-mu * sd) / mu
    else:
        sgn = 1.0 if direction == FORWARD else -1.0

        def g(s):
            return integrand(sgn * np.asarray(s))
        env, mu = estimate_decay(g, 0.5 * sd, sd * (1.0 - 1e-9))
        tail = 0.0 if env == 0.0 else (env / mu if mu > 0 else math.inf)
    if tail > 0.5 * tol:
        raise Diverged(f"orbit diverged at |s|={sd:.4g} with integral tail {tail:.2e}")


def _threshold_crossings(ctx: LocalConjugacy, orbit: _Orbit, sign: float, a: float, b: float,
                         spacing: float = 0.02) -> list[float]:
    """Times |s| in [a, b] where some |w_i(phi_s x)| crosses the threshold M."""
    k = max(2, int(math.ceil((b - a) / spacing)) + 1)
    grid = np.linspace(a, b, k)

    def gap(s):
        X, valid = orbit(sign * np.atleast_1d(s))
        g = np.abs(ctx.W(X)) - ctx.cutoff.M
        g[:, ~valid] = -1.0
        return g

    G = gap(grid)
    out = []
    for i in range(G.shape[0]):
        for j in np.nonzero(np.sign(G[i, :-1]) != np.sign(G[i, 1:]))[0]:
            lo, hi = grid[j], grid[j + 1]
            try:
                out.append(brentq(lambda s: gap(s)[i, 0], lo, hi, xtol=1e-14, rtol=1e-14))
            except ValueError:
                out.append(0.5 * (lo + hi))
    return sorted(out)


def _local_group(ctx: LocalConjugacy, x: np.ndarray, blocks: list[str], direction: str):
    sign = 1.0 if direction == FORWARD else -1.0
    blowup = ctx.blowup
    if ctx.cutoff.kind == BALL:
        blowup = min(blowup, ESCAPE_FACTOR * ctx.cutoff.support_radius)
    orbit = _Orbit(ctx.field, x, sign, ctx.flow_tol, blowup)
    T = ctx.split.T
    slices = [ctx.split.block_slice(b) for b in blocks]
    kernels = [ctx._kernel(b) for b in blocks]

    def integrand(s):
        s = np.asarray(s, dtype=float)
        X, valid = orbit(s)
        Wh = w_hat(ctx.W, ctx.cutoff, X)
        Wh[:, ~valid] = 0.0
        Wu = T @ Wh
        parts = [np.einsum("kij,jk->ki", K(s), Wu[sl]) for K, sl in zip(kernels, slices)]
        return np.concatenate(parts, axis=1)

    rate = ctx._rate(blocks)
    if rate is not None:
        C, mu = rate
        orbit.extend_to(max(math.log(max(2.0 * C / (mu * ctx.quad.tol), 1.0)) / mu, 1.0))
    jumps = None
    if ctx.cutoff.kind == THRESHOLD:
        def jumps(a, b):
            return _threshold_crossings(ctx, orbit, sign, a, b)
    res = quad_expdecay(integrand, direction, rate, ctx.quad, full_output=True, breakpoints=jumps)
    _check_truncation(ctx, orbit, integrand, rate, direction)
    val = np.asarray(res.value, dtype=float).reshape(-1)
    return (val if direction == FORWARD else -val), slices


def local_H(ctx: LocalConjugacy, x) -> np.ndarray:
    """Local conjugacy in original coordinates."""
    x = np.array(x, dtype=float).reshape(ctx.field.dim)
    if not np.any(x):
        return np.zeros_like(x)
    u = ctx.split.T @ x
    yu = u.copy()
    for direction in (FORWARD, BACKWARD):
        blocks = [b for b in ("P", "N")
                  if ctx.split.block(b).shape[0] and ctx.directions[b] == direction]
        if not blocks:
            continue
        val, slices = _local_group(ctx, x, blocks, direction)
        i = 0
        for sl in slices:
            width = sl.stop - sl.start
            yu[sl] += val[i:i + width]
            i += width
    return ctx.split.T_inv @ yu


# ---------------------------------------------------------------------------
# global construction

CUTOFF_FORM = "cutoff"


@dataclass(frozen=True)
class GlobalConjugacy:
    """Context for the global map on the region of attraction.

    ``form`` selects the cutoff construction ("cutoff", requires a ball
    cutoff with M + eps inside the certified dominance ball) or one of the
    one-sided forms without cutoff ("forward", "backward").
    """

    field: VectorField
    W: NonlinearPart
    A: np.ndarray
    cutoff: CutoffSpec
    quad: QuadratureConfig
    cert: RoaCertificate
    t_max: float
    flow_tol: float = 1e-10
    form: str = CUTOFF_FORM
    blowup: float = ORBIT_BLOWUP
    _cache: dict = dc_field(default_factory=dict, compare=False, repr=False)

    def __call__(self, x) -> np.ndarray:
        return global_H(self, x)

    def inverse(self, y) -> np.ndarray:
        return inverse_H(self, y)

    @property
    def kernel(self) -> _BatchExp:
        if "kernel" not in self._cache:
            self._cache["kernel"] = _BatchExp(-self.A)
        return self._cache["kernel"]

    @property
    def relay_radius(self) -> float:
        if self.form == CUTOFF_FORM:
            return 0.5 * self.cutoff.M
        return 0.5 * self.cert.radius_r


def build_global(field: VectorField, cutoff: CutoffSpec = CutoffSpec(),
                 quad: QuadratureConfig = QuadratureConfig(), flow_tol: float = 1e-10,
                 t_max: Optional[float] = None, form: Optional[str] = None,
                 r_init: Optional[float] = None) -> GlobalConjugacy:
    """Validate the stable spectrum, certify a dominance ball, and build the context.

    ``form`` defaults to "cutoff" for a ball cutoff and "forward" without one.
    """
    field.check_equilibrium()
    W = nonlinear_part(field)
    A = np.array(W.A)
    eig = np.linalg.eigvals(A)
    if np.any(eig.real >= 0):
        raise NotStableSpectrum(f"global map needs a stable spectrum, got {eig}")
    if form is None:
        form = CUTOFF_FORM if cutoff.kind == BALL else FORWARD
    if form == CUTOFF_FORM:
        if cutoff.kind != BALL:
            raise ConfigError("the global cutoff form needs a ball cutoff")
        cutoff.validate(field)
        need = cutoff.M + cutoff.eps
        cert = certify_dominance_ball(field, need if r_init is None else r_init)
        if cert.radius_r < need * (1 - 1e-12):
            raise ConfigError(f"M + eps = {need:g} exceeds the certified dominance radius "
                              f"{cert.radius_r:g}")
    elif form in (FORWARD, BACKWARD):
        if cutoff.kind not in (NONE,):
            raise ConfigError("one-sided global forms take no cutoff")
        r0 = r_init if r_init is not None else min(1.0, 0.5 * field.domain_radius)
        cert = certify_dominance_ball(field, r0)
    else:
        raise ConfigError(f"unknown global form {form!r}")
    if t_max is None:
        t_max = default_t_max(field)
    return GlobalConjugacy(field, W, A, cutoff, quad, cert, float(t_max), flow_tol, form)


def _finite_leg(ctx: GlobalConjugacy, traj, t0: float, t1: float, which: str) -> np.ndarray:
    """Integral of e^{-tA} (W-hat or W - W-hat)(phi_t x) over [t0, t1] along ``traj``."""

    def integrand(t):
        t = np.asarray(t, dtype=float)
        X = traj(t).reshape(ctx.field.dim, -1)
        Wh = w_hat(ctx.W, ctx.cutoff, X)
        V = Wh if which == "hat" else ctx.W(X) - Wh
        return np.einsum("kij,jk->ki", ctx.kernel(t), V)

    if t1 == t0:
        return np.zeros(ctx.field.dim)
    val, _, _ = gauss_kronrod(integrand, t0, t1, 0.25 * ctx.quad.tol,
                              max_panels=ctx.quad.max_panels)
    return val


def global_h(ctx: GlobalConjugacy, x) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(ctx.field.dim)
    if ctx.form != CUTOFF_FORM:
        return simplified_h(ctx, x, ctx.form)
    if not np.any(x):
        return np.zeros_like(x)
    M, R = ctx.cutoff.M, ctx.cutoff.M + ctx.cutoff.eps
    h = np.zeros_like(x)
    r = float(np.linalg.norm(x))
    # forward leg: W - W-hat vanishes once the orbit is in N_M, which it never leaves
    if r >= M:
        traj = integrate(ctx.field, x, ctx.t_max, ctx.flow_tol, ball=(M, "enter"))
        if traj.termination != ENTERED:
            _raise_outside(ctx, traj)
        h += _finite_leg(ctx, traj, 0.0, traj.t_end, "difference")
    # backward leg: W-hat vanishes once the backward orbit leaves the ball of radius M + eps
    if r < R:
        traj = integrate(ctx.field, x, -ctx.quad.max_horizon, ctx.flow_tol,
                         ball=(R, "exit"), blowup=ctx.blowup)
        if traj.termination not in (EXITED, DIVERGED, LEFT_DOMAIN):
            raise HorizonExceeded("backward orbit did not leave the cutoff support")
        h -= _finite_leg(ctx, traj, traj.t_end, 0.0, "hat")
    return h


def _raise_outside(ctx: GlobalConjugacy, traj) -> None:
    if traj.termination in (DIVERGED, LEFT_DOMAIN):
        raise NotInRegionOfAttraction("forward orbit diverged")
    if traj.termination == HORIZON:
        end = traj.x_end
        if np.linalg.norm(ctx.field(end)) <= 1e-9 * (1.0 + np.linalg.norm(end)):
            raise NotInRegionOfAttraction("forward orbit settled on another equilibrium")
        raise Inconclusive(f"orbit not captured by t_max={ctx.t_max:g}")
    raise StepUnderflow("forward orbit integration failed")


def global_H(ctx: GlobalConjugacy, x) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(ctx.field.dim)
    return x + global_h(ctx, x)


def simplified_h(ctx, x, form: str = FORWARD) -> np.ndarray:
    """One-sided h without cutoff.

    forward: int_0^inf e^{-tA} W(phi_t x) dt;
    backward: -int_{-inf}^0 e^{-tA} W(phi_t x) dt.
    Works with either context type; the global context also checks that
    ``x`` lies in the region of attraction.
    """
    field, W, A = ctx.field, ctx.W, np.asarray(ctx.A)
    x = np.array(x, dtype=float).reshape(field.dim)
    if form not in (FORWARD, BACKWARD):
        raise ConfigError(f"form must be forward or backward, got {form!r}")
    if isinstance(ctx, GlobalConjugacy):
        if not in_region_of_attraction(field, x, ctx.cert, ctx.t_max, ctx.flow_tol):
            raise NotInRegionOfAttraction(f"{x} is outside the region of attraction")
        kernel = ctx.kernel
    else:
        key = ("kernel", "A")
        if key not in ctx._cache:
            ctx._cache[key] = _BatchExp(-A)
        kernel = ctx._cache[key]
    if not np.any(x):
        return np.zeros_like(x)
    sign = 1.0 if form == FORWARD else -1.0
    orbit = _Orbit(field, x, sign, ctx.flow_tol, ctx.blowup)

    def integrand(s):
        s = np.asarray(s, dtype=float)
        X, valid = orbit(s)
        V = W(X)
        V[:, ~valid] = 0.0
        return np.einsum("kij,jk->ki", kernel(s), V)

    res = quad_expdecay(integrand, form, None, ctx.quad, full_output=True)
    _check_truncation(ctx, orbit, integrand, None, form)
    val = np.asarray(res.value, dtype=float).reshape(-1)
    return val if form == FORWARD else -val


# ---------------------------------------------------------------------------
# inverse

def _fd_jacobian(H: Callable, x: np.ndarray, step: float) -> np.ndarray:
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (H(x + e) - H(x - e)) / (2.0 * step)
    return J


def _newton(H: Callable, target: np.ndarray, x0: np.ndarray, contract: float,
            max_iter: int = 50) -> np.ndarray:
    """Damped Newton for H(x) = target with central-difference Jacobians."""
    step = 1e-6 * (1.0 + np.linalg.norm(target))
    x = np.array(x0, dtype=float)
    r = H(x) - target
    nr = float(np.linalg.norm(r))
    goal = 0.01 * contract
    for _ in range(max_iter):
        if nr <= goal:
            return x
        try:
            dx = np.linalg.solve(_fd_jacobian(H, x, step), -r)
        except (np.linalg.LinAlgError, HGError) as exc:
            if nr <= contract:
                return x
            raise NewtonDiverged(f"Jacobian failure: {exc}") from exc
        lam = 1.0
        while True:
            xn = x + lam * dx
            try:
                rn = H(xn) - target
                nrn = float(np.linalg.norm(rn))
            except HGError:
                nrn = math.inf
            if nrn < nr:
                break
            lam *= 0.5
            if lam < 1e-4:
                if nr <= contract:
                    return x
                raise NewtonDiverged(f"line search stalled at residual {nr:.2e}")
        x, r, nr = xn, rn, nrn
    if nr <= contract:
        return x
    raise NewtonDiverged(f"no convergence in {max_iter} iterations (residual {nr:.2e})")


def inverse_H(ctx, y, r_small: Optional[float] = None) -> np.ndarray:
    """H^{-1}(y).

    Global context: relay through the linear flow, x = phi_{-t}(H^{-1}(e^{At} y))
    with ``||e^{At} y|| <= r_small``, then a Newton polish on H(x) = y.
    Local context: Newton from the identity guess (y near 0).
    Residual contract: ``||H(x) - y|| <= 1e-8 (1 + ||y||)``.
    """
    n = ctx.field.dim
    y = np.array(y, dtype=float).reshape(n)
    if not np.any(y):
        return np.zeros(n)
    contract = 1e-8 * (1.0 + np.linalg.norm(y))
    H = ctx.__call__
    if isinstance(ctx, LocalConjugacy):
        return _newton(H, y, y, contract)
    A = np.asarray(ctx.A)
    rho = ctx.relay_radius if r_small is None else r_small
    last = None
    for _ in range(5):
        t = 0.0
        z = y
        while np.linalg.norm(z) > rho:
            t += 0.5
            if t > ctx.quad.max_horizon:
                raise HorizonExceeded("linear flow did not reach the relay ball")
            z = expm(A, t) @ y
        try:
            xs = _newton(H, z, z, 1e-8 * (1.0 + np.linalg.norm(z)))
            x = flow(ctx.field, xs, -t, ctx.flow_tol) if t > 0 else xs
            return _newton(H, y, x, contract, max_iter=20)
        except (NewtonDiverged, Diverged, LeftDomain, StepUnderflow,
                NotInRegionOfAttraction, NoEntry) as exc:
            last = exc
            rho *= 0.5
    raise NewtonDiverged(f"relay inverse failed: {last}")
