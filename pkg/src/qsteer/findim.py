"""Finite-dimensional diagnostics: Lie rank, Killing norm, orbit distances.

Matrices here are skew-Hermitian (the generators themselves, not ``i`` times
them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import ModelSpec, galerkin

SKEW_TOL = 1e-12


def _is_skew(m: np.ndarray, tol: float = SKEW_TOL) -> bool:
    return bool(np.allclose(m, -m.conj().T, atol=tol * max(1.0, np.abs(m).max()), rtol=0))


@dataclass(frozen=True)
class MatrixPair:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        a = np.array(self.A, dtype=complex)
        b = np.array(self.B, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
            raise DomainError("A and B must be square matrices of the same size")
        if not (_is_skew(a) and _is_skew(b)):
            raise DomainError("A and B must be skew-Hermitian")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def traceless(self) -> "MatrixPair":
        return MatrixPair(normalize_traceless(self.A), normalize_traceless(self.B))

    @classmethod
    def from_model(cls, spec: ModelSpec, n: int) -> "MatrixPair":
        g = galerkin(spec, n)
        return cls(1j * np.diag(g.a_diag), g.b_mat)

    @classmethod
    def random(cls, rng: np.random.Generator, n: int) -> "MatrixPair":
        return cls(normalize_traceless(random_skew(rng, n)), normalize_traceless(random_skew(rng, n)))

    def to_dict(self) -> dict:
        enc = lambda m: [[[z.real, z.imag] for z in row] for row in m]
        return {"A": enc(self.A), "B": enc(self.B)}

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixPair":
        dec = lambda rows: np.array([[complex(*z) for z in row] for row in rows])
        return cls(dec(data["A"]), dec(data["B"]))


def random_skew(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (z - z.conj().T) / 2


def normalize_traceless(m: np.ndarray) -> np.ndarray:
    """``m - tr(m)/n I``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("matrix must be square")
    return m - np.trace(m) / m.shape[0] * np.eye(m.shape[0])


def _vec(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m.real.ravel(), m.imag.ravel()])


def lie_rank(pair: MatrixPair, tol: float = 1e-9) -> int:
    """Dimension of the real Lie algebra generated by A and B.

    Closes the span of the generators under ``ad_A`` and ``ad_B``.  Each
    bracket ``[g, x]`` is Gram-Schmidt reduced against the current basis and
    kept when its residual exceeds ``tol * ||g|| ||x||``, so brackets that
    cancel to rounding level are not mistaken for new directions.  Brackets
    are taken of the orthonormal residuals, which keeps the iteration well
    conditioned when A and B differ in scale.
    """
    n = pair.n
    gens = [g for g in (pair.A, pair.B) if np.linalg.norm(g) > 0]
    basis: list[np.ndarray] = []

    def add(m, scale):
        v = _vec(m) / scale
        for _ in range(2):
            for q in basis:
                v = v - (q @ v) * q
        r = np.linalg.norm(v)
        if r <= tol:
            return None
        basis.append(v / r)
        return (v[:n * n] + 1j * v[n * n:]).reshape(n, n) / r

    queue = [x for g in gens if (x := add(g, np.linalg.norm(g))) is not None]
    limit = max(n * n - 1, 1)
    while queue and len(basis) < limit:
        x = queue.pop(0)
        for g in gens:
            y = add(g @ x - x @ g, 2 * np.linalg.norm(g))
            if y is not None:
                queue.append(y)
    return len(basis)


def killing_norm(m: np.ndarray, c: float | None = None) -> float:
    """``sqrt(-c Re tr(m^2))``, default scale ``c = 2n``."""
    m = np.asarray(m, dtype=complex)
    if c is None:
        c = 2.0 * m.shape[0]
    if c <= 0:
        raise DomainError("Killing scale must be positive")
    val = -c * float(np.trace(m @ m).real)
    if val < -1e-12 * max(1.0, c * float(np.linalg.norm(m) ** 2)):
        raise DomainError("matrix is not skew-Hermitian (negative radicand)")
    return math.sqrt(max(val, 0.0))


def torus_orbit_distance(B: np.ndarray, psi0, psi1, K_max: float = 20.0, grid: int = 2001) -> float:
    """Grid estimate of ``min_{K,K'} ||exp(K B) psi0 - exp(K' B) psi1||``.

    Only ``K' - K`` matters, so the search runs over grid differences.
    """
    B = np.asarray(B, dtype=complex)
    if not _is_skew(B):
        raise DomainError("B must be skew-Hermitian")
    w, v = np.linalg.eigh(1j * B)  # exp(K B) = v exp(-i K w) v^*
    p = v.conj().T @ np.asarray(psi0, dtype=complex)
    q = v.conj().T @ np.asarray(psi1, dtype=complex)
    Ks = np.linspace(0.0, K_max, grid)
    D = np.concatenate([-Ks[:0:-1], Ks])
    cross = (np.exp(-1j * np.outer(D, w)) * (p.conj() * q)).sum(axis=1).real
    d2 = np.vdot(p, p).real + np.vdot(q, q).real - 2 * cross
    return float(math.sqrt(max(0.0, d2.min())))


def rho_lower_bound(pair: MatrixPair, psi0, psi1, K_max: float = 20.0, grid: int = 2001,
                    eigenvector=None) -> float:
    """Orbit distance over ``||A||``; with ``eigenvector`` v of B, the v-variant.

    The orbit distance is itself a grid upper estimate, so the returned value
    estimates the lower bound from above.
    """
    if eigenvector is not None:
        v = np.asarray(eigenvector, dtype=complex)
        av = float(np.linalg.norm(pair.A @ v))
        if av == 0:
            raise DomainError("A v = 0: bound is degenerate")
        gap = abs(abs(np.vdot(v, psi0)) - abs(np.vdot(v, psi1)))
        return gap / av
    a = float(np.linalg.norm(pair.A, 2))
    if a == 0:
        raise DomainError("||A|| = 0: bound is degenerate")
    return torus_orbit_distance(pair.B, psi0, psi1, K_max, grid) / a


def coupling_constant_estimate(spec: ModelSpec, k: float, n: int) -> float:
    """Smallest c with ``|Re <|A|^k psi, B psi>| <= c <|A|^k psi, psi>`` on span(phi_1..phi_n)."""
    g = galerkin(spec, n)
    d = np.abs(g.a_diag) ** k
    if np.any(d == 0):
        raise DomainError("|A| must be injective on the truncation")
    s = (d[:, None] * g.b_mat + (d[:, None] * g.b_mat).conj().T) / 2
    r = 1 / np.sqrt(d)
    return float(np.max(np.abs(np.linalg.eigvalsh(r[:, None] * s * r[None, :]))))


def diagnostics(pair: MatrixPair, psi0=None, psi1=None, K_max: float = 20.0, grid: int = 2001) -> dict:
    """Rank, norms and bounds for one pair, as reported by the CLI."""
    tl = pair.traceless()
    rank = lie_rank(tl)
    out = {
        "n": pair.n,
        "lie_rank": rank,
        "su_dimension": pair.n * pair.n - 1,
        "controllable_lift": rank == pair.n * pair.n - 1,
        "killing_norm_A": killing_norm(tl.A),
        "killing_norm_B": killing_norm(tl.B),
        "operator_norm_A": float(np.linalg.norm(pair.A, 2)),
    }
    if psi0 is not None and psi1 is not None:
        d = torus_orbit_distance(pair.B, psi0, psi1, K_max, grid)
        out["orbit_distance_estimate"] = d
        out["rho_lower_bound_estimate"] = rho_lower_bound(pair, psi0, psi1, K_max, grid)
    return out
