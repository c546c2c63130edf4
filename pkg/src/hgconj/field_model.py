"""Autonomous vector fields, their nonlinear parts, and the analytic example registry."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainExceeded, NotEquilibrium

__all__ = [
    "VectorField",
    "NonlinearPart",
    "AnalyticExample",
    "polynomial_field",
    "field_from_dict",
    "load_field",
    "translate_to_origin",
    "jacobian_fd",
    "nonlinear_part",
    "builtin_examples",
    "get_example",
    "random_hyperbolic_field",
]

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class VectorField:
    """Right-hand side of x' = f(x).

    ``eval`` must accept a state of shape ``(n,)``; when ``vectorized`` is
    true it must also accept a batch of shape ``(n, k)`` and return the same
    shape.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    jacobian_origin: Optional[np.ndarray] = None
    domain_radius: float = math.inf
    name: str = ""
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = True
    spec: Optional[dict] = dc_field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if not self.domain_radius > 0:
            raise ConfigError("domain_radius must be positive")
        if self.jacobian_origin is not None:
            A = np.array(self.jacobian_origin, dtype=float).reshape(self.dim, self.dim)
            A.setflags(write=False)
            object.__setattr__(self, "jacobian_origin", A)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float)

    def batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on columns of an ``(n, k)`` array."""
        X = np.asarray(X, dtype=float)
        if self.vectorized:
            return np.asarray(self.eval(X), dtype=float).reshape(X.shape)
        return np.stack([self(X[:, j]) for j in range(X.shape[1])], axis=1)

    @property
    def A(self) -> np.ndarray:
        """Df(0), stored or finite-difference."""
        if self.jacobian_origin is not None:
            return self.jacobian_origin
        if self.jacobian is not None:
            return np.asarray(self.jacobian(np.zeros(self.dim)), dtype=float)
        return jacobian_fd(self, np.zeros(self.dim))

    def check_equilibrium(self, scale: float = 1.0, tol: float = 1e-12) -> None:
        r = float(np.linalg.norm(self(np.zeros(self.dim))))
        if r > tol * (1.0 + scale):
            raise NotEquilibrium(f"|f(0)| = {r:.3e} for field {self.name!r}")


# ---------------------------------------------------------------------------
# polynomial fields

def _compile_terms(dim: int, terms: Sequence[dict]):
    comp = np.array([int(t["component"]) for t in terms], dtype=int)
    coeff = np.array([float(t["coeff"]) for t in terms], dtype=float)
    exps = np.array([list(t["exponents"]) for t in terms], dtype=int).reshape(len(terms), dim)
    if np.any(comp < 0) or np.any(comp >= dim):
        raise ConfigError("term component out of range (components are 0-based)")
    if np.any(exps < 0):
        raise ConfigError("negative exponent")
    return comp, coeff, exps


def polynomial_field(
    dim: int,
    terms: Sequence[dict],
    jacobian: Optional[Sequence] = None,
    domain_radius: float = math.inf,
    name: str = "polynomial",
) -> VectorField:
    """Build a field from ``{component, coeff, exponents}`` monomial terms.

    Components are 0-based. The Jacobian at the origin is read off the
    degree-one terms unless ``jacobian`` (row-major) is given.
    """
    if not terms:
        comp = np.zeros(0, dtype=int)
        coeff = np.zeros(0)
        exps = np.zeros((0, dim), dtype=int)
    else:
        comp, coeff, exps = _compile_terms(dim, terms)

    def f(x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x.reshape(dim, -1)
        if len(coeff) == 0:
            out = np.zeros_like(X)
        else:
            mono = np.prod(X[None, :, :] ** exps[:, :, None], axis=1) * coeff[:, None]
            out = np.zeros_like(X)
            np.add.at(out, comp, mono)
        return out[:, 0] if single else out

    def jac(x):
        x = np.asarray(x, dtype=float)
        J = np.zeros((dim, dim))
        for c, a, e in zip(comp, coeff, exps):
            for j in range(dim):
                if e[j] == 0:
                    continue
                ej = e.copy()
                ej[j] -= 1
                J[c, j] += a * e[j] * np.prod(x ** ej)
        return J

    if jacobian is None:
        A = jac(np.zeros(dim))
    else:
        A = np.asarray(jacobian, dtype=float).reshape(dim, dim)
    spec = {
        "dimension": dim,
        "terms": [
            {"component": int(c), "coeff": float(a), "exponents": [int(v) for v in e]}
            for c, a, e in zip(comp, coeff, exps)
        ],
        "domain_radius": domain_radius,
    }
    if jacobian is not None:
        spec["jacobian"] = [float(v) for v in A.ravel()]
    return VectorField(dim=dim, eval=f, jacobian_origin=A, domain_radius=domain_radius,
                       name=name, jacobian=jac, vectorized=True, spec=spec)


def field_from_dict(data: dict, name: str = "polynomial") -> VectorField:
    try:
        dim = int(data["dimension"])
        terms = data["terms"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"polynomial field needs 'dimension' and 'terms': {exc}") from exc
    jac = data.get("jacobian")
    radius = data.get("domain_radius")
    radius = math.inf if radius is None else float(radius)
    try:
        return polynomial_field(dim, terms, jacobian=jac, domain_radius=radius,
                                name=data.get("name", name))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed polynomial field: {exc}") from exc


def load_field(path) -> VectorField:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read field file {path}: {exc}") from exc
    return field_from_dict(data, name=path.stem)


# ---------------------------------------------------------------------------
# operations

def translate_to_origin(field: VectorField, x0, tol: float = 1e-8, scale: float = 1.0) -> VectorField:
    x0 = np.asarray(x0, dtype=float).reshape(field.dim)
    r = float(np.linalg.norm(field(x0)))
    if r > tol * scale:
        raise NotEquilibrium(f"|f(x0)| = {r:.3e} exceeds {tol * scale:.1e}")
    if not np.any(x0):
        return field
    radius = field.domain_radius - float(np.linalg.norm(x0))
    if radius <= 0:
        raise DomainExceeded("x0 lies outside the domain ball")
    base = field

    def g(u):
        u = np.asarray(u, dtype=float)
        shift = x0 if u.ndim == 1 else x0[:, None]
        return base.eval(u + shift)

    jac = None
    A = None
    if base.jacobian is not None:
        jac = lambda u: base.jacobian(np.asarray(u, dtype=float) + x0)  # noqa: E731
        A = jac(np.zeros(field.dim))
    return VectorField(dim=field.dim, eval=g, jacobian_origin=A, domain_radius=radius,
                       name=f"{field.name}@shifted", jacobian=jac,
                       vectorized=base.vectorized)


def jacobian_fd(field: VectorField, point, step: Optional[float] = None) -> np.ndarray:
    """Central-difference Jacobian of ``field`` at ``point``."""
    x = np.asarray(point, dtype=float).reshape(field.dim)
    if step is None:
        step = _FD_STEP * (1.0 + np.linalg.norm(x))
    if np.linalg.norm(x) + step > field.domain_radius:
        raise DomainExceeded("finite-difference stencil leaves the domain ball")
    n = field.dim
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (field(x + e) - field(x - e)) / (2.0 * step)
    return J


@dataclass(frozen=True)
class NonlinearPart:
    """W(x) = f(x) - A x with A = Df(0)."""

    base: VectorField
    A: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.base(x) - self.A @ x
        return self.base.batch(x) - self.A @ x


def nonlinear_part(field: VectorField) -> NonlinearPart:
    A = np.array(field.A, dtype=float)
    A.setflags(write=False)
    return NonlinearPart(base=field, A=A)


def _random_monomials(dim: int, rng: np.random.Generator, per_component: int,
                      coeff_bound: float) -> list[dict]:
    terms = []
    for c in range(dim):
        for _ in range(per_component):
            degree = int(rng.integers(2, 4))
            exps = np.zeros(dim, dtype=int)
            for j in rng.integers(0, dim, size=degree):
                exps[j] += 1
            terms.append({"component": c, "coeff": float(rng.uniform(-coeff_bound, coeff_bound)),
                          "exponents": exps.tolist()})
    return terms


def random_hyperbolic_field(seed: int, dim: int, spectrum: str = "stable",
                            coeff_bound: float = 0.2, per_component: int = 2) -> VectorField:
    """Seeded polynomial field with a hyperbolic linear part and quadratic/cubic terms.

    ``stable`` fields have A = -S + K with S symmetric positive definite and
    K skew, so the symmetric part of A is negative definite and a dominance
    ball exists. ``saddle`` fields have A = Q diag(lam) Q^T with eigenvalues of
    both signs (dim >= 2). All eigenvalue magnitudes lie in [0.5, 1.5].
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    mags = rng.uniform(0.5, 1.5, dim)
    if spectrum == "stable":
        S = Q @ np.diag(mags) @ Q.T
        K = np.zeros((dim, dim))
        if dim > 1:
            G = rng.uniform(-0.3, 0.3, (dim, dim))
            K = 0.5 * (G - G.T)
        A = -S + K
    elif spectrum == "saddle":
        if dim < 2:
            raise ConfigError("a saddle needs dim >= 2")
        signs = -np.ones(dim)
        n_unstable = int(rng.integers(1, dim))
        signs[rng.permutation(dim)[:n_unstable]] = 1.0
        A = Q @ np.diag(signs * mags) @ Q.T
    else:
        raise ConfigError(f"unknown spectrum kind {spectrum!r}")
    terms = []
    for i in range(dim):
        for j in range(dim):
            exps = [0] * dim
            exps[j] = 1
            terms.append({"component": i, "coeff": float(A[i, j]), "exponents": exps})
    terms += _random_monomials(dim, rng, per_component, coeff_bound)
    return polynomial_field(dim, terms, jacobian=A.ravel().tolist(),
                            name=f"random-{spectrum}-{dim}d-{seed}")


# ---------------------------------------------------------------------------
# analytic examples

@dataclass(frozen=True)
class AnalyticExample:
    name: str
    field: VectorField
    closed_flow: Optional[Callable] = None
    closed_H: Optional[Callable] = None
    roa_descriptor: Optional[str] = None
    closed_H_inverse: Optional[Callable] = None
    equilibria: tuple = ()
    # default run settings that reproduce the printed construction
    hints: dict = dc_field(default_factory=dict)

    @property
    def oracles(self) -> list[str]:
        names = []
        if self.closed_flow is not None:
            names.append("flow")
        if self.closed_H is not None:
            names.append("H")
        if self.closed_H_inverse is not None:
            names.append("H_inverse")
        return names


def _example1() -> AnalyticExample:
    field = polynomial_field(3, [
        {"component": 0, "coeff": 1.0, "exponents": [1, 0, 0]},
        {"component": 0, "coeff": 1.0, "exponents": [0, 2, 0]},
        {"component": 1, "coeff": -1.0, "exponents": [0, 1, 0]},
        {"component": 1, "coeff": 1.0, "exponents": [0, 0, 2]},
        {"component": 2, "coeff": -1.0, "exponents": [0, 0, 1]},
    ], name="example1")

    def flow(t, x):
        x1, x2, x3 = np.asarray(x, dtype=float)
        e = math.exp
        y1 = (e(t) * (x1 + x2 ** 2 / 3 + x3 ** 2 * x2 / 6 + x3 ** 4 / 30)
              - e(-2 * t) / 3 * (x2 ** 2 + 2 * x3 ** 2 * x2 + x3 ** 4)
              + e(-3 * t) / 2 * (x3 ** 2 * x2 + x3 ** 4)
              - e(-4 * t) / 5 * x3 ** 4)
        y2 = e(-t) * (x2 + x3 ** 2) - e(-2 * t) * x3 ** 2
        y3 = e(-t) * x3
        return np.array([y1, y2, y3])

    def H(x):
        x1, x2, x3 = np.asarray(x, dtype=float)
        return np.array([x1 + x2 ** 2 / 3 + x2 * x3 ** 2 / 6 + x3 ** 4 / 30,
                         x2 + x3 ** 2, x3])

    return AnalyticExample("example1", field, flow, H, roa_descriptor=None,
                           equilibria=((0.0, 0.0, 0.0),),
                           hints={"cutoff": "none", "stable_direction": "forward"})


def _example2() -> AnalyticExample:
    field = polynomial_field(3, [
        {"component": 0, "coeff": 1.0, "exponents": [1, 0, 0]},
        {"component": 1, "coeff": -1.0, "exponents": [0, 1, 0]},
        {"component": 1, "coeff": 1.0, "exponents": [1, 0, 2]},
        {"component": 2, "coeff": -1.0, "exponents": [0, 0, 1]},
    ], name="example2")

    def flow(t, x):
        x1, x2, x3 = np.asarray(x, dtype=float)
        return np.array([math.exp(t) * x1,
                         math.exp(-t) * (x2 + x1 * x3 ** 2 * t),
                         math.exp(-t) * x3])

    def H(x, M: float = 1.0):
        # value of the thresholded backward integral; the log form holds for
        # |x1 x3^2| <= M and the correction vanishes when x1 x3^2 = 0 or |.| > M
        x1, x2, x3 = np.asarray(x, dtype=float)
        c = x1 * x3 ** 2
        if c == 0.0 or abs(c) > M:
            return np.array([x1, x2, x3])
        return np.array([x1, x2 - c * math.log(M / abs(c)), x3])

    return AnalyticExample("example2", field, flow, H, equilibria=((0.0, 0.0, 0.0),),
                           hints={"cutoff": "threshold", "M": 1.0})


def _sin_ratio(p: float) -> float:
    # (p - sin p) / (1 - cos p), removable singularity at 0
    if abs(p) < 1e-3:
        return p / 3.0 + p ** 3 / 90.0
    return (p - math.sin(p)) / (2.0 * math.sin(p / 2.0) ** 2)


def sin1d_closed_H(x: float) -> float:
    """x + tan(x/2) * int_0^x (p - sin p)/(1 - cos p) dp on (-pi, pi)."""
    x = float(x)
    if x == 0.0:
        return 0.0
    val, _ = integrate.quad(_sin_ratio, 0.0, x, epsabs=1e-14, epsrel=1e-13, limit=200)
    return x + math.tan(x / 2.0) * val


def _sin1d() -> AnalyticExample:
    def f(x):
        return -np.sin(x)

    field = VectorField(dim=1, eval=f, jacobian_origin=np.array([[-1.0]]), name="sin1d",
                        jacobian=lambda x: np.array([[-math.cos(float(np.ravel(x)[0]))]]))

    def flow(t, x):
        x = float(np.ravel(x)[0])
        return np.array([2.0 * math.atan(math.tan(x / 2.0) * math.exp(-t))])

    return AnalyticExample("sin1d", field, flow,
                           lambda x: np.array([sin1d_closed_H(np.ravel(x)[0])]),
                           roa_descriptor="(-pi, pi)",
                           equilibria=((0.0,), (math.pi,), (-math.pi,)),
                           hints={"cutoff_global": "none"})


def _cubic1d() -> AnalyticExample:
    field = polynomial_field(1, [
        {"component": 0, "coeff": -1.0, "exponents": [1]},
        {"component": 0, "coeff": 1.0, "exponents": [3]},
    ], name="cubic1d")

    def flow(t, x):
        x = float(np.ravel(x)[0])
        return np.array([math.exp(-t) * x / math.sqrt(1.0 - x * x * (1.0 - math.exp(-2 * t)))])

    def H(x):
        x = float(np.ravel(x)[0])
        return np.array([x / math.sqrt(1.0 - x * x)])

    def H_inv(y):
        y = float(np.ravel(y)[0])
        return np.array([y / math.sqrt(1.0 + y * y)])

    return AnalyticExample("cubic1d", field, flow, H, roa_descriptor="(-1, 1)",
                           closed_H_inverse=H_inv,
                           equilibria=((0.0,), (1.0,), (-1.0,)),
                           hints={"cutoff_global": "none"})


def builtin_examples() -> list[AnalyticExample]:
    return [_example1(), _example2(), _sin1d(), _cubic1d()]


def get_example(name: str) -> AnalyticExample:
    for ex in builtin_examples():
        if ex.name == name:
            return ex
    raise ConfigError(f"unknown builtin system {name!r}")
