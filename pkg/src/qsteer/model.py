"""Spectral data of the control pair (A, B), states and Galerkin compressions.

Everything lives in coefficient space over the eigenbasis ``phi_1, phi_2, ...``
of the drift, with ``A phi_k = i lambda_k phi_k``.  Indices start at 1.  The
toy model is the odd subspace of the torus: ``phi_k = sin(k theta)/sqrt(pi)``,
``lambda_k = k**(2 alpha)`` and ``B`` the multiplication by ``-i cos(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

NORM_TOL = 1e-10
TOY = "toy-torus"
TABLE = "explicit-table"
# Operator norm of B quoted for the torus model; the measured one tends to 1.
REFERENCE_B_NORM = math.sqrt(2) / 2


def eigenvalue(k: int, alpha: float) -> float:
    """Return ``k**(2 alpha)``, the k-th drift frequency of the toy model."""
    if k < 1:
        raise DomainError(f"basis index must be >= 1, got {k}")
    return float(k) ** (2.0 * alpha)


def coupling(j: int, k: int) -> complex:
    """Return ``<phi_j, B phi_k>`` for the toy model."""
    if j < 1 or k < 1:
        raise DomainError(f"basis indices must be >= 1, got ({j}, {k})")
    return -0.5j if abs(j - k) == 1 else 0j


@dataclass(frozen=True)
class ModelSpec:
    """The pair (A, B), either the torus toy model or an explicit table.

    For ``mode='explicit-table'`` ``lam`` holds ``lambda_1..lambda_m`` and
    ``table`` the m x m matrix of ``<phi_j, B phi_k>`` (skew-Hermitian).
    """

    alpha: float = 3.0
    mode: str = TOY
    lam: tuple[float, ...] | None = None
    table: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in (TOY, TABLE):
            raise DomainError(f"unknown model mode {self.mode!r}")
        if not math.isfinite(self.alpha):
            raise DomainError("alpha must be finite")
        if self.mode == TABLE:
            if self.lam is None or self.table is None:
                raise DomainError("explicit-table mode needs 'lambda' and 'coupling'")
            lam = tuple(float(x) for x in self.lam)
            table = np.array(self.table, dtype=complex)
            if table.shape != (len(lam), len(lam)):
                raise DomainError(
                    f"coupling table shape {table.shape} does not match "
                    f"{len(lam)} eigenvalues"
                )
            if not np.allclose(table, -table.conj().T, atol=1e-12, rtol=0):
                raise DomainError("coupling table must satisfy b_jk = -conj(b_kj)")
            table.setflags(write=False)
            object.__setattr__(self, "lam", lam)
            object.__setattr__(self, "table", table)

    @property
    def max_level(self) -> int | None:
        return None if self.mode == TOY else len(self.lam)

    def eigenvalue(self, k: int) -> float:
        if self.mode == TOY:
            return eigenvalue(k, self.alpha)
        if not 1 <= k <= len(self.lam):
            raise DomainError(f"index {k} outside the explicit table")
        return self.lam[k - 1]

    def coupling(self, j: int, k: int) -> complex:
        if self.mode == TOY:
            return coupling(j, k)
        if not (1 <= j <= len(self.lam) and 1 <= k <= len(self.lam)):
            raise DomainError(f"indices ({j}, {k}) outside the explicit table")
        return complex(self.table[j - 1, k - 1])

    def eigenvalues(self, n: int) -> np.ndarray:
        if self.mode == TOY:
            return np.arange(1, n + 1, dtype=float) ** (2.0 * self.alpha)
        self._check_size(n)
        return np.array(self.lam[:n])

    def coupling_matrix(self, n: int) -> np.ndarray:
        if self.mode == TOY:
            b = np.zeros((n, n), dtype=complex)
            idx = np.arange(n - 1)
            b[idx, idx + 1] = -0.5j
            b[idx + 1, idx] = -0.5j
            return b
        self._check_size(n)
        return np.array(self.table[:n, :n])

    def _check_size(self, n):
        if n > len(self.lam):
            raise DomainError(f"truncation {n} exceeds explicit table size {len(self.lam)}")

    def to_dict(self) -> dict:
        out = {"alpha": self.alpha, "mode": self.mode}
        if self.mode == TABLE:
            out["lambda"] = list(self.lam)
            out["coupling"] = [[[z.real, z.imag] for z in row] for row in self.table]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        if "alpha" not in data:
            raise DomainError("model config is missing 'alpha'")
        mode = data.get("mode", TOY)
        if mode == TABLE:
            table = [[complex(*pair) for pair in row] for row in data.get("coupling", [])]
            return cls(float(data["alpha"]), mode, tuple(data.get("lambda", ())), np.array(table))
        return cls(float(data["alpha"]), mode)


@dataclass(frozen=True)
class QuantumState:
    """Coefficients of ``phi_offset, phi_offset+1, ...``; zero elsewhere."""

    coeffs: np.ndarray
    offset: int = 1

    def __post_init__(self):
        if self.offset < 1:
            raise DomainError("state offset must be >= 1")
        c = np.array(self.coeffs, dtype=complex).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def basis(cls, k: int) -> "QuantumState":
        return cls(np.ones(1, dtype=complex), offset=k)

    @classmethod
    def from_dense(cls, vec: Sequence[complex], offset: int = 1) -> "QuantumState":
        return cls(np.asarray(vec, dtype=complex), offset)

    @classmethod
    def random(cls, rng: np.random.Generator, first: int, last: int) -> "QuantumState":
        """Haar-like random unit state supported on levels first..last."""
        m = last - first + 1
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        return cls(z / np.linalg.norm(z), offset=first)

    @property
    def support(self) -> tuple[int, int] | None:
        nz = np.flatnonzero(self.coeffs)
        if nz.size == 0:
            return None
        return self.offset + int(nz[0]), self.offset + int(nz[-1])

    @property
    def last_index(self) -> int:
        return self.offset + len(self.coeffs) - 1

    def coefficient(self, k: int) -> complex:
        i = k - self.offset
        return complex(self.coeffs[i]) if 0 <= i < len(self.coeffs) else 0j

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> "QuantumState":
        nrm = self.norm()
        if nrm == 0:
            raise DomainError("cannot normalize the zero state")
        return QuantumState(self.coeffs / nrm, self.offset)

    def conj(self) -> "QuantumState":
        return QuantumState(self.coeffs.conj(), self.offset)

    def to_dense(self, n: int) -> np.ndarray:
        """Coefficients of ``phi_1..phi_n``; nonzero mass above n is an error."""
        sup = self.support
        if sup is not None and sup[1] > n:
            raise DomainError(f"state has support up to {sup[1]}, beyond truncation {n}")
        out = np.zeros(n, dtype=complex)
        m = max(0, min(len(self.coeffs), n - self.offset + 1))
        out[self.offset - 1:self.offset - 1 + m] = self.coeffs[:m]
        return out

    def window(self, first: int, last: int) -> np.ndarray:
        return np.array([self.coefficient(k) for k in range(first, last + 1)])

    def inner(self, other: "QuantumState") -> complex:
        """``<self, other>``, antilinear in ``self``."""
        n = max(self.last_index, other.last_index)
        return complex(np.vdot(self.to_dense_unchecked(n), other.to_dense_unchecked(n)))

    def to_dense_unchecked(self, n: int) -> np.ndarray:
        out = np.zeros(max(n, self.last_index), dtype=complex)
        out[self.offset - 1:self.last_index] = self.coeffs
        return out[:n]

    def distance(self, other: "QuantumState") -> float:
        n = max(self.last_index, other.last_index)
        return float(np.linalg.norm(self.to_dense_unchecked(n) - other.to_dense_unchecked(n)))

    def to_dict(self) -> dict:
        return {"offset": self.offset, "coeffs": [[z.real, z.imag] for z in self.coeffs]}

    @classmethod
    def from_dict(cls, data: dict) -> "QuantumState":
        if "basis" in data:
            return cls.basis(int(data["basis"]))
        coeffs = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in data["coeffs"]]
        return cls(np.array(coeffs, dtype=complex), int(data.get("offset", 1)))


def project(psi: QuantumState, n: int) -> QuantumState:
    """Orthogonal projection onto span(phi_1..phi_n)."""
    keep = max(0, min(len(psi.coeffs), n - psi.offset + 1))
    if keep == 0:
        return QuantumState(np.zeros(1, dtype=complex), 1)
    return QuantumState(psi.coeffs[:keep], psi.offset)


def band(psi: QuantumState, first: int, last: int) -> QuantumState:
    """Restriction of ``psi`` to levels first..last (no renormalization)."""
    return QuantumState(psi.window(first, last), first)


def weighted_norm(psi: QuantumState, spec: ModelSpec, s: float) -> float:
    """``|| |A|^s psi ||`` computed on the finite support."""
    if s < 0:
        raise DomainError("weight exponent must be non-negative")
    k = np.arange(psi.offset, psi.last_index + 1)
    lam = np.abs(np.array([spec.eigenvalue(int(i)) for i in k]))
    return float(np.sqrt(np.sum(lam ** (2 * s) * np.abs(psi.coeffs) ** 2)))


@dataclass(frozen=True)
class GalerkinPair:
    """Order-n compressions: ``A = i diag(a_diag)`` and ``B = b_mat``."""

    n: int
    a_diag: np.ndarray
    b_mat: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_diag, dtype=float)
        b = np.array(self.b_mat, dtype=complex)
        if a.shape != (self.n,) or b.shape != (self.n, self.n):
            raise DomainError("Galerkin pair shapes do not match its order")
        hb = 1j * b
        if not np.allclose(hb, hb.conj().T, atol=1e-13, rtol=0):
            raise DomainError("i*B must be Hermitian")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_diag", a)
        object.__setattr__(self, "b_mat", b)

    def hamiltonian(self, u: float) -> np.ndarray:
        """Hermitian H with ``A + u B = i H``."""
        h = -1j * u * self.b_mat
        h[np.diag_indices(self.n)] += self.a_diag
        return h

    @property
    def is_real(self) -> bool:
        """True when H(u) has real entries (time reversal by conjugation)."""
        return bool(np.all((1j * self.b_mat).imag == 0))

    def b_norm(self) -> float:
        return float(np.linalg.norm(self.b_mat, 2))

    def shifted(self, c: float) -> "GalerkinPair":
        return GalerkinPair(self.n, self.a_diag - c, self.b_mat)


def galerkin(spec: ModelSpec, n: int) -> GalerkinPair:
    if n < 2:
        raise DomainError(f"truncation order must be >= 2, got {n}")
    return GalerkinPair(n, spec.eigenvalues(n), spec.coupling_matrix(n))


def coupling_norm_report(spec: ModelSpec, orders: Iterable[int] = range(2, 51)) -> dict:
    """Measured ``||B^(N)||`` over ``orders`` and how it compares to sqrt(2)/2."""
    orders = list(orders)
    values = [galerkin(spec, n).b_norm() for n in orders]
    monotone = all(b >= a - 1e-14 for a, b in zip(values, values[1:]))
    report = {
        "orders": orders,
        "norms": values,
        "monotone_nondecreasing": monotone,
        "max_norm": max(values) if values else None,
        "bounded_by_one": all(v <= 1 + 1e-14 for v in values),
        "discrepancies": [],
    }
    if spec.mode == TOY and values and max(values) > REFERENCE_B_NORM + 1e-12:
        report["discrepancies"].append({
            "quantity": "operator norm of B",
            "reference_value": REFERENCE_B_NORM,
            "measured_value": max(values),
            "measured_at_order": orders[int(np.argmax(values))],
            "note": "truncated norms exceed sqrt(2)/2 and approach sup|cos| = 1; "
                    "bounds use the measured value",
        })
    return report
