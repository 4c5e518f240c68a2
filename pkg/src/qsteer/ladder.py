"""Ladder steering inside a spectral window [N0, P].

``concentrate`` pushes the mass of a state down the ladder, one resonant
pulse per rung, until it sits on level N0.  ``steer_in_window`` joins the
concentration of the source, a free drift fixing the phase on level N0, and
the time reverse of the concentration of the (conjugated) target.  The
Galerkin Hamiltonians of the torus model are real, so running a schedule
backwards maps ``conj(end)`` to ``conj(start)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .engine import ControlSchedule, Propagator, propagate
from .errors import DomainError, StageError
from .model import ModelSpec, QuantumState, TOY, galerkin
from .pulse import averaged_propagator, synthesize_transition


def time_bound(alpha: float, eps: float, N0: int) -> float:
    """Explicit upper bound on the window steering time."""
    if alpha <= 2.5:
        raise DomainError(f"time bound needs alpha > 5/2, got {alpha}")
    if eps <= 0:
        raise DomainError("eps must be > 0")
    if N0 < 2:
        raise DomainError("N0 must be >= 2")
    return (604.0 / (alpha ** 2 * eps * (2 * alpha - 5)) / (N0 - 1) ** (2 * alpha - 4)
            + 2 * math.pi / N0 ** (2 * alpha))


def rung_eta(N: int, N0: int, eps: float) -> float:
    return N0 * eps / (4 * N * N)


def working_truncation(P: int) -> int:
    return P + math.ceil(P / 2) + 2


@dataclass(frozen=True)
class PlanEntry:
    level: int
    theta: float
    phi: float
    K: float
    C: float
    eta: float
    n: float
    tau: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class PulsePlan:
    entries: tuple[PlanEntry, ...] = ()

    def to_dict(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]


@dataclass(frozen=True)
class Stage:
    name: str
    duration: Fraction
    K: float = 0.0
    eta: float = 0.0
    error: float = 0.0
    bound: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "duration": float(self.duration), "K": self.K,
                "eta": self.eta, "measured_error": self.error, "bound": self.bound}


@dataclass(frozen=True)
class Concentration:
    schedule: ControlSchedule
    theta0: float
    plan: PulsePlan
    stages: tuple[Stage, ...]
    final_state: QuantumState
    mass_on_N0: float
    outside_mass: float
    truncation: int
    passed: bool
    within_budget: bool


@dataclass
class SteeringReport:
    fidelity: float
    distance: float
    total_time: float
    bound_time: float | None
    stages: list[Stage]
    truncation: int
    verify_truncation: int
    eps: float
    window: tuple[int, int]
    passed: bool
    synthesis_fidelity: float = float("nan")
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fidelity": self.fidelity, "distance": self.distance,
            "synthesis_fidelity": self.synthesis_fidelity,
            "total_time": self.total_time, "time_bound": self.bound_time,
            "eps": self.eps, "window": list(self.window),
            "truncation": self.truncation, "verify_truncation": self.verify_truncation,
            "passed": self.passed, "notes": self.notes,
            "stages": [s.to_dict() for s in self.stages],
        }


def _window_of(states, N0, P):
    sups = [s.support for s in states if s.support is not None]
    if not sups:
        raise DomainError("states must be nonzero")
    lo = min(s[0] for s in sups) if N0 is None else N0
    hi = max(s[1] for s in sups) if P is None else P
    for s in sups:
        if s[0] < lo or s[1] > hi:
            raise DomainError(f"state support {s} not inside window [{lo}, {hi}]")
    return lo, max(hi, lo)


def _check_alpha(spec: ModelSpec):
    if spec.mode == TOY and spec.alpha <= 2.5:
        raise DomainError(f"ladder steering needs alpha > 5/2, got {spec.alpha}")


def concentrate(spec: ModelSpec, psi0: QuantumState, eps: float, N0: int | None = None,
                P: int | None = None, truncation: int | None = None,
                steps_per_period: int | None = None, propagator: Propagator | None = None,
                label: str = "concentrate") -> Concentration:
    """Move all mass of ``psi0`` (supported on [N0, P]) onto level N0."""
    _check_alpha(spec)
    if eps <= 0:
        raise DomainError("eps must be > 0")
    if not psi0.is_normalized():
        raise DomainError("concentrate needs a unit state")
    N0, P = _window_of([psi0], N0, P)
    n1 = truncation or working_truncation(P)
    if n1 <= P:
        raise DomainError("working truncation must exceed the window top")
    prop = propagator or Propagator(galerkin(spec, n1))
    b_norm = prop.pair.b_norm()
    x = psi0.to_dense(n1)

    sched = ControlSchedule((), label)
    entries, stages = [], []
    eta_total = 0.0
    err_total = 0.0
    for N in range(P - 1, N0 - 1, -1):
        eta = rung_eta(N, N0, eps)
        pulse = synthesize_transition(spec, n1, N + 1, N, (x[N], x[N - 1]), eta,
                                      steps_per_period=steps_per_period, b_norm=b_norm)
        if pulse.schedule.n_segments == 0:
            continue
        ideal = averaged_propagator(spec, n1, pulse) @ x
        x = prop.evolve(pulse.schedule, x)
        err = float(np.linalg.norm(x - ideal))
        eta_total += eta
        err_total += err
        entries.append(PlanEntry(N, pulse.theta, pulse.phi, pulse.K, pulse.C, eta,
                                 pulse.divisor, pulse.duration))
        stages.append(Stage(f"{label}: level {N + 1}->{N}", pulse.schedule.total_duration_exact(),
                            pulse.K, eta, err, pulse.bound))
        sched = sched + pulse.schedule

    mass = float(abs(x[N0 - 1]) ** 2)
    outside = float(math.sqrt(max(0.0, 1 - mass)))
    return Concentration(
        schedule=ControlSchedule(sched.blocks, label),
        theta0=float(np.angle(x[N0 - 1])) if mass > 0 else 0.0,
        plan=PulsePlan(tuple(entries)),
        stages=tuple(stages),
        final_state=QuantumState(x),
        mass_on_N0=mass,
        outside_mass=outside,
        truncation=n1,
        passed=mass >= 1 - eps / 2,
        within_budget=err_total <= eta_total + 1e-12,
    )


def phase_align(theta0: float, theta1: float, lambda_N0: float) -> ControlSchedule:
    """Zero control long enough to turn phase theta0 into theta1 on level N0."""
    if lambda_N0 <= 0:
        raise DomainError("lambda_N0 must be > 0")
    dphi = (theta1 - theta0) % (2 * math.pi)
    return ControlSchedule.constant(0.0, dphi / lambda_N0, "phase-align")


def reverse_schedule(sched: ControlSchedule) -> ControlSchedule:
    return sched.reversed()


def steer_in_window(spec: ModelSpec, psi0: QuantumState, psi1: QuantumState, eps: float,
                    N0: int | None = None, P: int | None = None, truncation: int | None = None,
                    verify_truncation: int | None = None,
                    steps_per_period: int | None = None) -> tuple[ControlSchedule, SteeringReport]:
    """Steer ``psi0`` to an eps-neighbourhood of ``psi1`` (both on [N0, P])."""
    _check_alpha(spec)
    if not (psi0.is_normalized() and psi1.is_normalized()):
        raise DomainError("steering endpoints must be unit states")
    N0, P = _window_of([psi0, psi1], N0, P)
    n1 = truncation or working_truncation(P)
    prop = Propagator(galerkin(spec, n1))
    try:
        c0 = concentrate(spec, psi0, eps, N0, P, n1, steps_per_period, prop, "source")
    except Exception as exc:
        raise StageError("concentrate source", exc) from exc
    try:
        c1 = concentrate(spec, psi1.conj(), eps, N0, P, n1, steps_per_period, prop, "target")
    except Exception as exc:
        raise StageError("concentrate target", exc) from exc

    align = phase_align(c0.theta0, -c1.theta0, spec.eigenvalue(N0))
    sched = c0.schedule
    stages = list(c0.stages)
    if align.total_duration > 0:
        sched = sched + align
        stages.append(Stage("phase-align", align.total_duration_exact()))
    back = reverse_schedule(c1.schedule)
    sched = ControlSchedule((sched + back).blocks, "steer-window")
    stages += [Stage("reverse " + s.name, s.duration, s.K, s.eta, s.error, s.bound)
               for s in reversed(c1.stages)]

    nv = verify_truncation or max(math.ceil(1.5 * n1), n1 + 1)
    final = propagate(galerkin(spec, nv), sched, psi0).final_state
    synth = prop.evolve(sched, psi0.to_dense(n1))
    target_v = psi1.to_dense(nv)
    fidelity = abs(np.vdot(target_v, final.to_dense(nv)))
    distance = float(np.linalg.norm(final.to_dense(nv) - target_v))
    total = sum((s.duration for s in stages), Fraction(0))
    notes = []
    if not (c0.within_budget and c1.within_budget):
        notes.append("measured rung errors exceed the summed eta budget")
    bound = None
    if spec.mode == TOY and N0 >= 2:
        bound = time_bound(spec.alpha, eps, N0)
    report = SteeringReport(
        fidelity=float(fidelity), distance=distance, total_time=float(total),
        bound_time=bound, stages=stages, truncation=n1, verify_truncation=nv, eps=eps,
        window=(N0, P), passed=bool(fidelity >= 1 - eps),
        synthesis_fidelity=float(abs(np.vdot(psi1.to_dense(n1), synth))), notes=notes,
    )
    return sched, report
