"""Dispersal of low-mode mass by the one-parameter group ``exp(K B)``.

On the torus ``B`` multiplies by ``-i cos(theta)``, so ``exp(K B)`` is the
pointwise phase ``exp(-i K cos(theta))``.  Two independent routes are given:
the exponential of the tridiagonal compression (primary) and sampling on a
uniform grid followed by sine-mode quadrature (oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .engine import ControlSchedule
from .errors import DomainError, NotFoundError, TruncationError
from .model import ModelSpec, QuantumState, TOY

MARGIN_TOL = 1e-8


@lru_cache(maxsize=16)
def _toy_eig(n: int):
    # i*B^(n) = J, the Jacobi matrix with 1/2 off the diagonal
    from scipy.linalg import eigh_tridiagonal

    w, v = eigh_tridiagonal(np.zeros(n), np.full(n - 1, 0.5))
    return w, v


def _eig(n: int, spec: ModelSpec | None):
    if spec is None or spec.mode == TOY:
        return _toy_eig(n)
    g = 1j * spec.coupling_matrix(n)
    return np.linalg.eigh(g)


def _expKB_dense(x: np.ndarray, K: float, spec: ModelSpec | None) -> np.ndarray:
    w, v = _eig(len(x), spec)
    return v @ (np.exp(-1j * K * w) * (v.conj().T @ x))


def default_truncation(psi: QuantumState, K: float) -> int:
    return max(8, psi.last_index + math.ceil(1.2 * abs(K)) + 32)


def apply_expKB(psi: QuantumState, K: float, trunc: int | None = None,
                spec: ModelSpec | None = None, check: bool = True) -> QuantumState:
    """``exp(K B^(trunc)) psi``; with ``check`` the result must survive doubling."""
    if not math.isfinite(K):
        raise DomainError("K must be finite")
    if trunc is None:
        trunc = default_truncation(psi, K)
        while True:
            try:
                return apply_expKB(psi, K, trunc, spec, check=True)
            except TruncationError:
                trunc *= 2
                if trunc > 1 << 16:
                    raise
    if trunc < psi.last_index and psi.support and psi.support[1] > trunc:
        raise DomainError("truncation below the support of psi")
    x = psi.to_dense(trunc)
    if K == 0:
        return QuantumState(x)
    y = _expKB_dense(x, K, spec)
    if check and K != 0:
        if spec is not None and spec.max_level is not None and 2 * trunc > spec.max_level:
            return QuantumState(y)
        y2 = _expKB_dense(psi.to_dense(2 * trunc), K, spec)
        gap = math.hypot(np.linalg.norm(y2[:trunc] - y), np.linalg.norm(y2[trunc:]))
        if gap >= MARGIN_TOL:
            raise TruncationError(f"truncation {trunc} changes exp(KB) by {gap:.3g} on doubling",
                                  gap=gap)
    return QuantumState(y)


def grid_expKB(psi: QuantumState, K: float, n_out: int, points: int = 4096) -> QuantumState:
    """Oracle: multiply ``psi(theta)`` by ``exp(-i K cos theta)`` on a grid, re-project.

    ``psi(theta) = sum_k x_k sin(k theta)/sqrt(pi)``; the trapezoidal rule on a
    uniform periodic grid is exact for the band-limited parts.
    """
    theta = 2 * math.pi * np.arange(points) / points
    k = np.arange(psi.offset, psi.last_index + 1)
    f = (np.sin(np.outer(theta, k)) @ psi.coeffs) / math.sqrt(math.pi)
    g = f * np.exp(-1j * K * np.cos(theta))
    F = np.fft.fft(g)  # F_m = sum_j g_j exp(-i m theta_j)
    m = np.arange(1, n_out + 1)
    # sum_j g_j sin(m theta_j) = (F_{-m} - F_m) / (2i)
    s = (F[(-m) % points] - F[m % points]) / 2j
    return QuantumState(s * (2 * math.pi / points) / math.sqrt(math.pi))


@dataclass(frozen=True)
class DispersalResult:
    K: float
    low_mass: float
    P: int
    tail_mass: float
    dispersed: QuantumState
    truncation: int
    N0: int

    def to_dict(self) -> dict:
        return {"K": self.K, "low_mass": self.low_mass, "P": self.P, "tail_mass": self.tail_mass,
                "truncation": self.truncation, "N0": self.N0}


def _scan(psi: QuantumState, N0: int, Ks: np.ndarray, trunc: int, spec, chunk: int = 512):
    w, v = _eig(trunc, spec)
    c = v.conj().T @ psi.to_dense(trunc)
    low = v[:N0]
    out = np.empty(len(Ks))
    for i in range(0, len(Ks), chunk):
        ph = np.exp(-1j * np.outer(Ks[i:i + chunk], w)) * c
        out[i:i + chunk] = np.linalg.norm(ph @ low.T, axis=1)
    return out


def dispersal_curve(psi: QuantumState, N0: int, K_max: float, grid: int = 10_000,
                    spec: ModelSpec | None = None, trunc: int | None = None):
    """``(K, ||pi_N0 exp(K B) psi||)`` on a uniform grid of [0, K_max]."""
    if K_max < 0 or grid < 2:
        raise DomainError("need K_max >= 0 and grid >= 2")
    trunc = trunc or default_truncation(psi, K_max)
    # the largest K is the hardest case for the truncation margin
    apply_expKB(psi, K_max, trunc, spec)
    Ks = np.linspace(0.0, K_max, grid)
    return Ks, _scan(psi, N0, Ks, trunc, spec)


def tail_cut(x: np.ndarray, eps: float, minimum: int = 1) -> tuple[int, float]:
    """Smallest P >= minimum with ``||(1 - pi_P) x|| < eps``."""
    tails = np.sqrt(np.cumsum(np.abs(x[::-1]) ** 2))[::-1]  # tails[i] = ||x[i:]||
    tails = np.append(tails, 0.0)
    for P in range(minimum, len(x) + 1):
        if tails[P] < eps:
            return P, float(tails[P])
    return len(x), 0.0


def find_dispersal(psi: QuantumState, N0: int, eps: float, K_max: float = 100.0,
                   grid: int = 10_000, spec: ModelSpec | None = None,
                   trunc: int | None = None) -> DispersalResult:
    """Smallest grid K with ``||pi_N0 exp(K B) psi|| < eps``, plus its tail cut."""
    if eps <= 0:
        raise DomainError("eps must be > 0")
    if N0 < 1:
        raise DomainError("N0 must be >= 1")
    trunc = trunc or default_truncation(psi, K_max)
    Ks, mass = dispersal_curve(psi, N0, K_max, grid, spec, trunc)
    hits = np.flatnonzero(mass < eps)
    if hits.size == 0:
        i = int(np.argmin(mass))
        raise NotFoundError(f"no K <= {K_max} brings the low-mode mass below {eps}",
                            best=(float(Ks[i]), float(mass[i])))
    K = float(Ks[hits[0]])
    y = apply_expKB(psi, K, trunc, spec).to_dense(trunc)
    P, tail = tail_cut(y, eps, minimum=N0)
    low = float(np.linalg.norm(y[:N0]))
    return DispersalResult(K, low, P, tail, QuantumState(y[:P]), trunc, N0)


def impulsive_schedule(K: float, eta: float) -> ControlSchedule:
    """Constant control ``K/eta`` on ``[0, eta]``; tends to ``exp(K B)`` as eta -> 0."""
    if not eta > 0:
        raise DomainError("eta must be > 0")
    return ControlSchedule.constant(K / eta, eta, f"impulse(K={K:.6g})")
