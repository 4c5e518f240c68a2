"""Small-time steering between arbitrary unit states of the torus model.

Stages: an impulsive kick ``exp(K0 B)`` that empties the low modes of the
source, ladder steering inside the window [N0, P], and the time reverse of an
impulsive kick dispersing the (conjugated) target.  Budget split used here:
half of T for the window steering, T/8 for each kick, the rest is slack;
eps/4 for each dispersal, eps/4 for the ladder, eps/4 verification slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .disperse import DispersalResult, apply_expKB, find_dispersal, impulsive_schedule
from .engine import ControlSchedule, Propagator
from .errors import DomainError, NotFoundError, QSteerError
from .ladder import SteeringReport, steer_in_window, time_bound, working_truncation
from .model import ModelSpec, QuantumState, TOY, band, galerkin

MIN_KICK = 1e-15
MAX_N0 = 100_000


def choose_N0(alpha: float, eps: float, allowance: float) -> int | None:
    """Smallest N0 >= 2 whose window time bound is below ``allowance``."""
    lo = 2
    if time_bound(alpha, eps, lo) < allowance:
        return lo
    hi = 4
    while time_bound(alpha, eps, hi) >= allowance:
        hi *= 2
        if hi > MAX_N0:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if time_bound(alpha, eps, mid) < allowance:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class Kick:
    K: float
    eta: float
    gap: float
    schedule: ControlSchedule
    state: np.ndarray  # simulated image at the synthesis truncation

    def to_dict(self) -> dict:
        return {"K": self.K, "eta": self.eta, "gap_to_exp_KB": self.gap}


@dataclass
class SmallTimePlan:
    feasible: bool
    eps: float
    T: float
    N0: int | None = None
    P: int | None = None
    truncation: int | None = None
    predicted_bound: float | None = None
    dispersal_in: DispersalResult | None = None
    dispersal_out: DispersalResult | None = None
    kick_in: Kick | None = None
    kick_out: Kick | None = None
    window_schedule: ControlSchedule = field(default_factory=ControlSchedule)
    window_report: SteeringReport | None = None
    schedule: ControlSchedule = field(default_factory=ControlSchedule)
    residual_in: float = 0.0
    residual_out: float = 0.0
    diagnosis: str = ""
    limiting_stage: str | None = None

    @property
    def total_time_exact(self) -> Fraction:
        return self.schedule.total_duration_exact()

    @property
    def total_time(self) -> float:
        return float(self.total_time_exact)

    def stage_durations(self) -> dict:
        out = {}
        if self.kick_in:
            out["dispersal-in"] = self.kick_in.eta
        out["window"] = self.window_schedule.total_duration
        if self.kick_out:
            out["dispersal-out"] = self.kick_out.eta
        return out

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible, "eps": self.eps, "T": self.T, "N0": self.N0, "P": self.P,
            "truncation": self.truncation, "predicted_window_bound": self.predicted_bound,
            "window_allowance": self.T / 2,
            "total_time": self.total_time, "stage_durations": self.stage_durations(),
            "dispersal_in": self.dispersal_in.to_dict() if self.dispersal_in else None,
            "dispersal_out": self.dispersal_out.to_dict() if self.dispersal_out else None,
            "kick_in": self.kick_in.to_dict() if self.kick_in else None,
            "kick_out": self.kick_out.to_dict() if self.kick_out else None,
            "window": self.window_report.to_dict() if self.window_report else None,
            "residual_in": self.residual_in, "residual_out": self.residual_out,
            "n_segments": self.schedule.n_segments,
            "diagnosis": self.diagnosis, "limiting_stage": self.limiting_stage,
            "budget_split": {"window_time": "T/2", "each_kick_start": "T/8",
                             "dispersal_tol": "eps/4", "ladder_tol": "eps/4",
                             "kick_gap_tol": "eps/8", "verification_slack": "eps/4"},
        }


def _kick(prop: Propagator, x: np.ndarray, K: float, start: float, tol: float) -> Kick:
    ideal = apply_expKB(QuantumState(x), K, prop.n, check=False).to_dense(prop.n)
    eta = start
    while True:
        sched = impulsive_schedule(K, eta)
        y = prop.evolve(sched, x)
        gap = float(np.linalg.norm(y - ideal))
        if gap < tol or K == 0:
            return Kick(K, eta, gap, sched, y)
        eta /= 2
        if eta < MIN_KICK:
            raise NotFoundError(f"impulsive kick K={K} never came within {tol} of exp(KB)",
                                best=(eta * 2, gap))


def _check_inputs(spec, psi0, psi1, eps, T):
    if spec.mode != TOY:
        raise DomainError("small-time steering is built for the torus model")
    if spec.alpha <= 2.5:
        raise DomainError(f"zero-diameter construction needs alpha > 5/2, got {spec.alpha}")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if not T > 0:
        raise DomainError("T must be > 0")
    if not (psi0.is_normalized() and psi1.is_normalized()):
        raise DomainError("endpoints must be unit states")


def plan_small_time(spec: ModelSpec, psi0: QuantumState, psi1: QuantumState, eps: float, T: float,
                    K_max: float | None = None, grid: int = 10_000, max_truncation: int = 600,
                    steps_per_period: int | None = None) -> SmallTimePlan:
    _check_inputs(spec, psi0, psi1, eps, T)
    plan = SmallTimePlan(feasible=False, eps=eps, T=T)
    if psi0.distance(psi1) <= 1e-12:
        plan.feasible = True
        plan.diagnosis = "endpoints coincide"
        return plan

    eps_d = eps_l = eps / 4
    N0 = choose_N0(spec.alpha, eps_l, T / 2)
    if N0 is None:
        plan.diagnosis, plan.limiting_stage = f"no N0 <= {MAX_N0} meets the time bound", "window"
        return plan
    plan.N0 = N0
    plan.predicted_bound = time_bound(spec.alpha, eps_l, N0)
    floor = 2 * working_truncation(N0 + 1)  # P > N0, so no window can need less
    if floor > max_truncation:
        plan.diagnosis = f"window from N0={N0} needs truncation >= {floor} > {max_truncation}"
        plan.limiting_stage = "truncation"
        return plan
    kmax = K_max if K_max is not None else max(100.0, 16.0 * N0)
    try:
        plan.dispersal_in = find_dispersal(psi0, N0, eps_d, kmax, grid)
        plan.dispersal_out = find_dispersal(psi1.conj(), N0, eps_d, kmax, grid)
    except NotFoundError as exc:
        plan.diagnosis, plan.limiting_stage = str(exc), "dispersal"
        return plan

    P = max(plan.dispersal_in.P, plan.dispersal_out.P, N0 + 1)
    n_s = working_truncation(P)
    plan.P, plan.truncation = P, n_s
    if 2 * n_s > max_truncation:
        plan.diagnosis = f"window [{N0}, {P}] needs truncation {2 * n_s} > {max_truncation}"
        plan.limiting_stage = "truncation"
        return plan

    prop = Propagator(galerkin(spec, n_s))
    try:
        plan.kick_in = _kick(prop, psi0.to_dense(n_s), plan.dispersal_in.K, T / 8, eps / 8)
        plan.kick_out = _kick(prop, psi1.conj().to_dense(n_s), plan.dispersal_out.K, T / 8, eps / 8)
    except NotFoundError as exc:
        plan.diagnosis, plan.limiting_stage = str(exc), "impulse"
        return plan

    x0 = QuantumState(plan.kick_in.state)
    x1 = QuantumState(plan.kick_out.state)
    b0, b1 = band(x0, N0, P), band(x1, N0, P)
    plan.residual_in = math.sqrt(max(0.0, x0.norm() ** 2 - b0.norm() ** 2))
    plan.residual_out = math.sqrt(max(0.0, x1.norm() ** 2 - b1.norm() ** 2))
    try:
        wsched, wrep = steer_in_window(spec, b0.normalized(), b1.conj().normalized(), eps_l,
                                       N0, P, truncation=n_s, steps_per_period=steps_per_period)
    except QSteerError as exc:
        plan.diagnosis, plan.limiting_stage = str(exc), "window"
        return plan
    plan.window_schedule, plan.window_report = wsched, wrep
    plan.schedule = ControlSchedule(
        (plan.kick_in.schedule + wsched + plan.kick_out.schedule.reversed()).blocks, "small-time")
    if plan.total_time_exact < Fraction(T):
        plan.feasible = True
        plan.diagnosis = "ok"
    else:
        plan.diagnosis = f"total time {plan.total_time:.6g} >= budget {T}"
        plan.limiting_stage = "window"
    return plan


@dataclass
class SmallTimeReport:
    verdict: str
    distance: float
    fidelity: float
    total_time: float
    T: float
    eps: float
    verify_truncations: tuple[int, int]
    truncation_disagreement: float
    certificate_sum: float
    composition_ok: bool
    plan: SmallTimePlan

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict, "distance": self.distance, "fidelity": self.fidelity,
            "total_time": self.total_time, "T": self.T, "eps": self.eps,
            "verify_truncations": list(self.verify_truncations),
            "truncation_disagreement": self.truncation_disagreement,
            "certificate_sum": self.certificate_sum, "composition_ok": self.composition_ok,
            "plan": self.plan.to_dict(),
        }


def execute_and_verify(spec: ModelSpec, plan: SmallTimePlan, psi0: QuantumState, psi1: QuantumState,
                       verify_truncation: int | None = None) -> SmallTimeReport:
    """Re-simulate the whole plan at two truncations above the synthesis one."""
    if not plan.feasible:
        raise DomainError(f"plan is infeasible: {plan.diagnosis}")
    n_s = plan.truncation or max(2, psi0.last_index, psi1.last_index)
    n_v = verify_truncation or max(math.ceil(1.5 * n_s), n_s + 1)
    if plan.truncation and n_v < 1.5 * n_s:
        raise DomainError("verification truncation must be at least 1.5x the synthesis truncation")
    n_w = n_v + max(2, math.ceil(n_s / 2))
    n_v = max(n_v, psi0.last_index, psi1.last_index)
    n_w = max(n_w, n_v + 1)
    finals = []
    for n in (n_v, n_w):
        finals.append(Propagator(galerkin(spec, n)).evolve(plan.schedule, psi0.to_dense(n)))
    a = np.zeros(n_w, dtype=complex)
    a[:n_v] = finals[0]
    disagreement = float(np.linalg.norm(a - finals[1]))
    target = psi1.to_dense(n_v)
    distance = float(np.linalg.norm(finals[0] - target))
    fidelity = float(abs(np.vdot(target, finals[0])))

    window_err = plan.window_report.distance if plan.window_report else 0.0
    cert = window_err + 2 * (plan.residual_in + plan.residual_out) + disagreement + 1e-9
    if disagreement > plan.eps / 10:
        verdict = "inconclusive"
    elif distance < plan.eps and plan.total_time_exact < Fraction(plan.T):
        verdict = "pass"
    else:
        verdict = "fail"
    return SmallTimeReport(verdict, distance, fidelity, plan.total_time, plan.T, plan.eps,
                           (n_v, n_w), disagreement, cert, distance <= cert, plan)


@dataclass
class SweepEntry:
    T: float
    feasible: bool
    verdict: str | None
    distance: float | None
    total_time: float | None
    N0: int | None
    P: int | None
    truncation: int | None
    diagnosis: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def diameter_sweep(spec: ModelSpec, psi0: QuantumState, psi1: QuantumState, eps: float,
                   T_list: Sequence[float], **plan_kwargs) -> dict:
    """Plan and verify for each budget; report the smallest verified steering time."""
    rows = []
    for T in T_list:
        try:
            plan = plan_small_time(spec, psi0, psi1, eps, T, **plan_kwargs)
            if plan.feasible:
                rep = execute_and_verify(spec, plan, psi0, psi1)
                rows.append(SweepEntry(T, True, rep.verdict, rep.distance, rep.total_time,
                                       plan.N0, plan.P, plan.truncation, plan.diagnosis))
            else:
                rows.append(SweepEntry(T, False, None, None, None, plan.N0, plan.P,
                                       plan.truncation, plan.diagnosis))
        except QSteerError as exc:
            rows.append(SweepEntry(T, False, None, None, None, None, None, None, str(exc)))
    verified = [r for r in rows if r.verdict == "pass"]
    return {
        "eps": eps,
        "rows": [r.to_dict() for r in rows],
        "achieved_time": min((r.total_time for r in verified), default=None),
        "achieved_budget": min((r.T for r in verified), default=None),
    }
