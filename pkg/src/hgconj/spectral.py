"""Stable/unstable block splitting of Df(0) and matrix exponentials."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import EmptyBlock, MatrixOverflow, NotHyperbolic

__all__ = ["SpectralSplit", "split_spectrum", "expm", "expm_batch", "decay_margin"]


@dataclass(frozen=True)
class SpectralSplit:
    """Real change of basis u = T x with T A T^{-1} = blockdiag(P, N)."""

    T: np.ndarray
    T_inv: np.ndarray
    P: np.ndarray
    N: np.ndarray
    mu_P: Optional[float]
    mu_N: Optional[float]
    A: np.ndarray

    @property
    def k(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.N.shape[0]

    @property
    def n(self) -> int:
        return self.k + self.m

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.T))

    def block(self, name: str) -> np.ndarray:
        return self.P if name == "P" else self.N

    def block_slice(self, name: str) -> slice:
        return slice(0, self.k) if name == "P" else slice(self.k, self.n)


def split_spectrum(A, hyperbolicity_tol: Optional[float] = None) -> SpectralSplit:
    """Split ``A`` into its unstable block P and stable block N.

    Uses the real Schur form sorted with the right half-plane first, then
    decouples the off-diagonal coupling with a Sylvester solve.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("A has non-finite entries")
    n = A.shape[0]
    normA = np.linalg.norm(A, 2)
    if hyperbolicity_tol is None:
        hyperbolicity_tol = 1e-8 * normA
    eig = np.linalg.eigvals(A)
    if np.any(np.abs(eig.real) <= hyperbolicity_tol):
        raise NotHyperbolic(f"eigenvalue with |Re| <= {hyperbolicity_tol:.2e}: {eig}")

    S, Z, k = sla.schur(A, output="real", sort="rhp")
    S11, S12, S22 = S[:k, :k], S[:k, k:], S[k:, k:]
    if 0 < k < n:
        X = sla.solve_sylvester(S11, -S22, -S12)
    else:
        X = np.zeros((k, n - k))
    Sinv = np.eye(n)
    Sinv[:k, k:] = -X
    Sfwd = np.eye(n)
    Sfwd[:k, k:] = X
    T = Sinv @ Z.T
    T_inv = Z @ Sfwd
    P = S11.copy()
    N = S22.copy()
    mu_P = float(np.min(np.linalg.eigvals(P).real)) if k else None
    mu_N = float(np.max(np.linalg.eigvals(N).real)) if n - k else None
    for arr in (T, T_inv, P, N, A):
        arr.setflags(write=False)
    return SpectralSplit(T=T, T_inv=T_inv, P=P, N=N, mu_P=mu_P, mu_N=mu_N, A=A)


def expm(A, t: float = 1.0) -> np.ndarray:
    """e^{At} by scaling and squaring (Pade)."""
    A = np.asarray(A, dtype=float)
    with np.errstate(over="raise", invalid="raise"):
        try:
            E = sla.expm(A * t)
        except FloatingPointError as exc:
            raise MatrixOverflow(str(exc)) from exc
    if not np.all(np.isfinite(E)):
        raise MatrixOverflow("matrix exponential overflowed")
    return E


class _BatchExp:
    """Vectorized t -> e^{Bt} for a fixed small matrix B."""

    def __init__(self, B: np.ndarray):
        self.B = np.asarray(B, dtype=float)
        m = self.B.shape[0]
        self.m = m
        self.V = None
        if m == 0:
            return
        lam, V = np.linalg.eig(self.B)
        if np.linalg.cond(V) < 1e6:
            self.lam = lam
            self.V = V
            self.Vinv = np.linalg.inv(V)

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.m == 0:
            return np.zeros((t.size, 0, 0))
        if self.V is not None:
            D = np.exp(np.multiply.outer(t, self.lam))
            E = np.einsum("ij,kj,jl->kil", self.V, D, self.Vinv)
            return E.real
        return sla.expm(self.B[None, :, :] * t[:, None, None])


def expm_batch(B, t) -> np.ndarray:
    """Stack of e^{B t_j}, shape ``(len(t), m, m)``."""
    return _BatchExp(B)(t)


def decay_margin(split: SpectralSplit, direction: str = "default", block: str = "P",
                 window: Optional[float] = None, samples: int = 401) -> tuple[float, float]:
    """Return ``(mu, C)`` with ``||e^{-B s}|| <= C e^{-mu |s|}`` on the convergent side.

    The convergent side is forward (s >= 0) for P and backward (s <= 0) for
    N; ``direction`` is accepted for symmetry but must match. C is the sup of
    ``||e^{-B s}|| e^{mu |s|}`` over a transient window of length ``20/mu``.
    """
    B = split.block(block)
    if B.shape[0] == 0:
        raise EmptyBlock(f"block {block} is empty")
    expected = "forward" if block == "P" else "backward"
    if direction not in ("default", expected):
        raise ValueError(f"block {block} kernel only decays {expected}")
    mu = split.mu_P if block == "P" else -split.mu_N
    if window is None:
        window = 20.0 / mu
    s = np.linspace(0.0, window, samples)
    # e^{-Ps} for s >= 0, e^{-N s} for s <= 0, i.e. e^{N|s|}
    K = expm_batch(-B if block == "P" else B, s)
    norms = np.linalg.norm(K, ord=2, axis=(1, 2)) * np.exp(mu * s)
    C = max(1.0, float(np.max(norms)))
    return float(mu), C
