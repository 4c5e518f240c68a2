"""Exact propagation of Galerkin systems under piecewise-constant controls.

A :class:`ControlSchedule` is a list of blocks; each block is a short run of
``(u, dt)`` segments repeated ``repeat`` times.  Sampled cosine pulses repeat
the same samples every period, so one block propagator raised to a power
replaces millions of matrix-vector products.  Expanding the blocks gives the
plain segment list used for serialization and bookkeeping.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg as la

from .errors import DomainError, TruncationError
from .model import GalerkinPair, ModelSpec, QuantumState, galerkin, weighted_norm

PREFETCH_CHUNK = 256  # Hamiltonians decomposed per stacked eigh call


@dataclass(frozen=True)
class Block:
    values: np.ndarray
    durations: np.ndarray
    repeat: int = 1

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        d = np.array(self.durations, dtype=float).ravel()
        if v.shape != d.shape:
            raise DomainError("block values and durations differ in length")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(d))):
            raise DomainError("control values and durations must be finite")
        if np.any(d < 0):
            raise DomainError("segment durations must be >= 0")
        if self.repeat < 0:
            raise DomainError("block repeat count must be >= 0")
        v.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "durations", d)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Block):
            return NotImplemented
        return (self.repeat == other.repeat and np.array_equal(self.values, other.values)
                and np.array_equal(self.durations, other.durations))

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.durations.tobytes(), self.repeat))

    def reversed(self) -> "Block":
        return Block(self.values[::-1], self.durations[::-1], self.repeat)


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant control: ordered segments ``(value, duration)``."""

    blocks: tuple[Block, ...] = ()
    label: str = ""

    @classmethod
    def from_segments(cls, values: Sequence[float], durations: Sequence[float],
                      label: str = "") -> "ControlSchedule":
        if len(values) == 0:
            return cls((), label)
        return cls((Block(values, durations),), label)

    @classmethod
    def constant(cls, u: float, dt: float, label: str = "") -> "ControlSchedule":
        return cls.from_segments([u], [dt], label)

    @property
    def n_segments(self) -> int:
        return sum(len(b.values) * b.repeat for b in self.blocks)

    def total_duration_exact(self) -> Fraction:
        """Exact sum of the (binary floating point) segment durations."""
        total = Fraction(0)
        for b in self.blocks:
            total += b.repeat * sum((Fraction(float(d)) for d in b.durations), Fraction(0))
        return total

    @property
    def total_duration(self) -> float:
        return float(self.total_duration_exact())

    @property
    def l1_norm(self) -> float:
        return math.fsum(b.repeat * math.fsum(np.abs(b.values) * b.durations) for b in self.blocks)

    def segments(self) -> Iterator[tuple[float, float]]:
        for b in self.blocks:
            for _ in range(b.repeat):
                yield from zip(b.values.tolist(), b.durations.tolist())

    def __add__(self, other: "ControlSchedule") -> "ControlSchedule":
        label = "+".join(x for x in (self.label, other.label) if x)
        return ControlSchedule(self.blocks + other.blocks, label)

    def reversed(self) -> "ControlSchedule":
        return ControlSchedule(tuple(b.reversed() for b in reversed(self.blocks)), self.label)

    def to_records(self) -> dict:
        return {
            "label": self.label,
            "blocks": [
                {"repeat": b.repeat,
                 "segments": [{"u": u, "dt": dt} for u, dt in zip(b.values.tolist(), b.durations.tolist())]}
                for b in self.blocks
            ],
        }

    def flat_records(self) -> list[dict]:
        return [{"u": u, "dt": dt} for u, dt in self.segments()]

    @classmethod
    def from_records(cls, data) -> "ControlSchedule":
        """Accepts the block form, ``{"segments": [...]}`` or a bare list."""
        if isinstance(data, list):
            data = {"segments": data}
        label = data.get("label", "")
        if "blocks" in data:
            blocks = []
            for rec in data["blocks"]:
                segs = rec["segments"]
                blocks.append(Block([float(s["u"]) for s in segs], [float(s["dt"]) for s in segs],
                                    int(rec.get("repeat", 1))))
            return cls(tuple(b for b in blocks if len(b.values)), label)
        segs = data.get("segments", [])
        return cls.from_segments([float(s["u"]) for s in segs], [float(s["dt"]) for s in segs], label)


@dataclass(frozen=True)
class PropagationResult:
    final_state: QuantumState
    truncation: int
    unitarity_defect: float
    step_count: int


def _unitary_power(m: np.ndarray, r: int) -> np.ndarray:
    if r == 1:
        return m
    t, z = la.schur(m, output="complex")
    d = np.diag(t)
    phases = np.exp(1j * r * np.angle(d))
    return (z * phases) @ z.conj().T


class Propagator:
    """Exponentials of ``A + u B`` for one Galerkin pair, cached per ``u``.

    Reads of the cache are safe from several threads; at worst two threads
    compute the same decomposition and one insertion wins.
    """

    def __init__(self, pair: GalerkinPair, cache_bytes: float = 2e8):
        self.pair = pair
        self._real = pair.is_real
        self._eig: OrderedDict = OrderedDict()
        self._max = max(16, int(cache_bytes // (16 * pair.n * pair.n)))

    @property
    def n(self) -> int:
        return self.pair.n

    def eig(self, u: float):
        key = float(u)
        hit = self._eig.get(key)
        if hit is not None:
            return hit
        h = self.pair.hamiltonian(key)
        w, v = np.linalg.eigh(h.real if self._real else h)
        self._eig[key] = (w, v)
        if len(self._eig) > self._max:
            self._eig.popitem(last=False)
        return w, v

    def prefetch(self, values: Sequence[float]) -> None:
        """Decompose every uncached ``u`` in ``values`` with stacked eigh calls.

        ``A + u B`` is affine in ``u``, so the Hamiltonians are built by
        broadcasting and LAPACK loops over the stack without Python overhead.
        """
        keys = [k for k in dict.fromkeys(map(float, values)) if k not in self._eig]
        if len(keys) < 2:
            return
        h0 = self.pair.hamiltonian(0.0)
        h1 = self.pair.hamiltonian(1.0) - h0
        if self._real:
            h0, h1 = h0.real, h1.real
        for i in range(0, len(keys), PREFETCH_CHUNK):
            chunk = keys[i:i + PREFETCH_CHUNK]
            w, v = np.linalg.eigh(h0 + np.asarray(chunk)[:, None, None] * h1)
            for k, wk, vk in zip(chunk, w, v):
                self._eig[k] = (wk, vk)
        while len(self._eig) > self._max:
            self._eig.popitem(last=False)

    def unitary(self, u: float, dt: float) -> np.ndarray:
        w, v = self.eig(u)
        return (v * np.exp(1j * w * dt)) @ v.conj().T

    def apply(self, u: float, dt: float, x: np.ndarray) -> np.ndarray:
        if dt == 0:
            return x
        w, v = self.eig(u)
        ph = np.exp(1j * w * dt)
        y = (v.T if self._real else v.conj().T) @ x  # conj() of a real array is a copy
        y = ph[:, None] * y if y.ndim == 2 else ph * y
        return v @ y

    def block_matrix(self, block: Block) -> np.ndarray:
        if not self._real:
            m = np.eye(self.n, dtype=complex)
            for u, dt in zip(block.values.tolist(), block.durations.tolist()):
                if dt:
                    m = self.unitary(u, dt) @ m
            return m
        # Real eigenbases: carry the product in the current eigenbasis and move
        # between consecutive bases with real overlaps V_i^T V_{i-1}.  The
        # complex state is kept as [re | im] so every product is a real GEMM.
        n = self.n
        prev = None
        m = None
        for u, dt in zip(block.values.tolist(), block.durations.tolist()):
            if not dt:
                continue
            w, v = self.eig(u)
            if prev is None:
                m = np.hstack([v.T, np.zeros((n, n))])
            else:
                m = (v.T @ prev) @ m
            c, s_ = np.cos(w * dt)[:, None], np.sin(w * dt)[:, None]
            re, im = m[:, :n], m[:, n:]
            m = np.hstack([c * re - s_ * im, c * im + s_ * re])
            prev = v
        if m is None:
            return np.eye(n, dtype=complex)
        return prev @ m[:, :n] + 1j * (prev @ m[:, n:])

    def evolve(self, schedule: ControlSchedule, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=complex)
        for block in schedule.blocks:
            if block.repeat == 0:
                continue
            if block.repeat == 1:
                us, dts = block.values.tolist(), block.durations.tolist()
                for i in range(0, len(us), PREFETCH_CHUNK):
                    self.prefetch(us[i:i + PREFETCH_CHUNK])
                    for u, dt in zip(us[i:i + PREFETCH_CHUNK], dts[i:i + PREFETCH_CHUNK]):
                        x = self.apply(u, dt, x)
            else:
                x = _unitary_power(self.block_matrix(block), block.repeat) @ x
        return x

    def propagator(self, schedule: ControlSchedule) -> np.ndarray:
        return self.evolve(schedule, np.eye(self.n, dtype=complex))


def _check_finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise DomainError("control value and duration must be finite")


def step(pair: GalerkinPair, u: float, t: float, psi: QuantumState) -> QuantumState:
    """``exp(t (A + u B)) psi`` on the order-``pair.n`` Galerkin system."""
    _check_finite(u, t)
    if t < 0:
        raise DomainError("duration must be >= 0")
    x = psi.to_dense(pair.n)
    return QuantumState(Propagator(pair).apply(u, t, x))


def propagate(pair: GalerkinPair, sched: ControlSchedule, psi0: QuantumState,
              propagator: Propagator | None = None) -> PropagationResult:
    prop = propagator or Propagator(pair)
    x0 = psi0.to_dense(pair.n)
    x = prop.evolve(sched, x0)
    defect = abs(float(np.linalg.norm(x)) - float(np.linalg.norm(x0)))
    return PropagationResult(QuantumState(x), pair.n, defect, sched.n_segments)


def sample_cosine(amplitude: float, frequency: float, phase: float, divisor: float,
                  duration: float, steps_per_period: int = 64, label: str = "cosine") -> ControlSchedule:
    """Midpoint sampling of ``t -> (amplitude/divisor) cos(frequency t + phase)``.

    Sub-intervals have length ``period/steps_per_period``; the last one is
    shortened to end exactly at ``duration`` and sampled at its own midpoint.
    """
    if not frequency > 0:
        raise DomainError("frequency must be > 0")
    if divisor < 1:
        raise DomainError("divisor must be >= 1")
    if steps_per_period < 4:
        raise DomainError("steps_per_period must be >= 4")
    if duration < 0:
        raise DomainError("duration must be >= 0")
    if duration == 0:
        return ControlSchedule((), label)
    amp = amplitude / divisor
    period = 2 * math.pi / frequency
    h = period / steps_per_period
    mids = (np.arange(steps_per_period) + 0.5) * h
    vals = amp * np.cos(frequency * mids + phase)
    durs = np.full(steps_per_period, h)

    full = int(math.floor(duration / period))
    rem = duration - full * period
    if rem < 0:
        full, rem = full - 1, rem + period
    blocks = []
    if full:
        blocks.append(Block(vals, durs, full))
    m = int(math.floor(rem / h))
    m = min(m, steps_per_period)
    tail_v, tail_d = list(vals[:m]), list(durs[:m])
    last = rem - m * h
    if last > 1e-15 * period:
        tail_v.append(amp * math.cos(frequency * (m * h + last / 2) + phase))
        tail_d.append(last)
    if tail_v:
        blocks.append(Block(tail_v, tail_d, 1))
    return ControlSchedule(tuple(blocks), label)


@dataclass(frozen=True)
class TruncationChoice:
    n: int
    gap: float
    tested: tuple = field(default=())


def stress_schedule(K: float, seed: int = 0, segments: int = 8) -> ControlSchedule:
    """Seeded random piecewise-constant control with L1 norm exactly ``K``."""
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-1, 1, segments)
    durs = rng.uniform(0.05, 0.15, segments)
    l1 = float(np.sum(np.abs(vals) * durs))
    return ControlSchedule.from_segments(vals * (K / l1), durs, f"stress(K={K}, seed={seed})")


def select_truncation(spec: ModelSpec, states: Sequence[QuantumState], K: float, eps: float,
                      cap: int = 2 ** 12, seed: int = 0, s: float = 0.0,
                      stress: ControlSchedule | None = None) -> TruncationChoice:
    """Smallest N on the doubling ladder where orders N and 2N agree to eps/2.

    An empirical surrogate: the stress control has L1 norm ``K`` and the
    comparison is in the ``|A|^s``-weighted norm.
    """
    if eps <= 0 or K < 0:
        raise DomainError("need eps > 0 and K >= 0")
    sched = stress if stress is not None else stress_schedule(K, seed)
    n = max([2] + [st.support[1] for st in states if st.support])
    tested = []
    while True:
        if 2 * n > cap:
            last = tested[-1][1] if tested else float("nan")
            raise TruncationError(f"no truncation <= {cap} met eps/2 = {eps / 2}", gap=last)
        lo, hi = Propagator(galerkin(spec, n)), Propagator(galerkin(spec, 2 * n))
        w = np.abs(spec.eigenvalues(2 * n)) ** s
        gap = 0.0
        for st in states:
            x_lo = np.zeros(2 * n, dtype=complex)
            x_lo[:n] = lo.evolve(sched, _dense_projected(st, n))
            x_hi = hi.evolve(sched, _dense_projected(st, 2 * n))
            gap = max(gap, float(np.linalg.norm(w * (x_lo - x_hi))))
        tested.append((n, gap))
        if gap < eps / 2:
            return TruncationChoice(n, gap, tuple(tested))
        n *= 2


def _dense_projected(psi: QuantumState, n: int) -> np.ndarray:
    return psi.to_dense_unchecked(n)


@dataclass(frozen=True)
class NormGrowthReport:
    ratio: float
    bound: float
    l1_norm: float
    passed: bool
    truncation: int


def norm_growth_check(spec: ModelSpec, sched: ControlSchedule, psi0: QuantumState, k: float,
                      c: float, truncation: int | None = None) -> NormGrowthReport:
    """Compare ``||psi_T||_{k/2} / ||psi_0||_{k/2}`` with ``exp(c K)``."""
    n = truncation or max(8, 2 * psi0.last_index + 8)
    res = propagate(galerkin(spec, n), sched, psi0)
    before = weighted_norm(psi0, spec, k / 2)
    after = weighted_norm(res.final_state, spec, k / 2)
    ratio = after / before
    K = sched.l1_norm
    bound = math.exp(c * K)
    return NormGrowthReport(ratio, bound, K, ratio <= bound * (1 + 1e-12), n)
