import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsteer.engine import ControlSchedule, Propagator, propagate
from qsteer.errors import DomainError, StageError
from qsteer.ladder import (concentrate, phase_align, reverse_schedule, rung_eta, steer_in_window,
                           time_bound, working_truncation)
from qsteer.model import ModelSpec, QuantumState, galerkin
from qsteer.pulse import sampling_error_estimate


# -- time bound

def test_time_bound_reference_value():
    hand = 604 / (9 * 0.1 * 1) / 9 ** 2 + 2 * math.pi / 10 ** 6
    assert time_bound(3.0, 0.1, 10) == pytest.approx(hand, rel=1e-14)
    assert abs(time_bound(3.0, 0.1, 10) - 8.2856) <= 5e-4


def test_time_bound_decreasing_in_N0():
    vals = [time_bound(3.0, 0.1, N0) for N0 in range(3, 200)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_time_bound_near_critical_alpha():
    v = time_bound(2.6, 0.1, 100)
    assert 0 < v < math.inf


@pytest.mark.parametrize("args", [(2.5, 0.1, 10), (3.0, 0.0, 10), (3.0, 0.1, 1)])
def test_time_bound_domain(args):
    with pytest.raises(DomainError):
        time_bound(*args)


# -- concentrate

def test_concentrate_already_there(toy3):
    c = concentrate(toy3, QuantumState.basis(3), 0.1, 3, 3)
    assert c.schedule.n_segments == 0 and c.theta0 == 0.0 and c.mass_on_N0 == 1.0


def test_concentrate_single_rung(toy3):
    N0, eps = 3, 0.1
    c = concentrate(toy3, QuantumState.basis(N0 + 1), eps, N0, N0 + 1, truncation=N0 + 3)
    (entry,) = c.plan.entries
    assert entry.K == pytest.approx(4.0)
    res = propagate(galerkin(toy3, N0 + 3), c.schedule, QuantumState.basis(N0 + 1))
    assert abs(res.final_state.coefficient(N0)) ** 2 >= 1 - eps


def test_concentrate_three_levels(toy3):
    psi = QuantumState(np.ones(3) / math.sqrt(3), offset=2)
    eps, N0 = 0.1, 2
    c = concentrate(toy3, psi, eps, N0, 4)
    assert c.mass_on_N0 >= 0.95
    e3, e2 = c.plan.entries
    assert (e3.level, e2.level) == (3, 2)
    assert e3.theta == pytest.approx(math.pi / 4, abs=1e-12)
    assert e2.theta == pytest.approx(math.atan(1 / math.sqrt(2)), abs=0.02)
    b = galerkin(toy3, c.truncation).b_norm()
    for e in c.plan.entries:
        assert e.eta == rung_eta(e.level, N0, eps) == N0 * eps / (4 * e.level ** 2)
        assert e.K == pytest.approx(4 * (math.pi - 2 * e.theta) / math.pi, abs=1e-12)
        w = toy3.eigenvalue(e.level + 1) - toy3.eigenvalue(e.level)
        assert e.tau == pytest.approx(math.pi * e.K * e.n / (2 * w), rel=1e-12)
        assert e.tau <= 8 * math.pi * (1 + 2 * e.K * b) * (e.C + 1) * b / (w * e.eta) * (1 + 1e-12)
    assert sum(s.duration for s in c.stages) == c.schedule.total_duration_exact()
    # per-stage mass certificate
    for s in c.stages:
        assert s.error <= s.eta + sampling_error_estimate(s.K, 0.5, 4096) + 1e-9
    assert c.within_budget


def test_concentrate_requires_supercritical_alpha():
    with pytest.raises(DomainError):
        concentrate(ModelSpec(2.5), QuantumState.basis(3), 0.1, 2, 3)


def test_concentrate_requires_unit_state(toy3):
    with pytest.raises(DomainError):
        concentrate(toy3, QuantumState(np.array([0.5, 0.5]), 2), 0.1)


# -- phase alignment and reversal

def test_phase_align_examples():
    assert phase_align(0.4, 0.4, 64.0).total_duration == 0.0
    assert phase_align(0.0, math.pi, 64.0).total_duration == pytest.approx(math.pi / 64)
    with pytest.raises(DomainError):
        phase_align(0.0, 1.0, 0.0)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.5, 1e4))
def test_phase_align_duration_bound(t0, t1, lam):
    assert 0 <= phase_align(t0, t1, lam).total_duration < 2 * math.pi / lam


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_phase_align_bookkeeping(t0, t1):
    spec = ModelSpec(3.0)
    g = galerkin(spec, 4)
    psi = QuantumState(np.array([np.exp(1j * t0)]), offset=2)
    sched = phase_align(t0, t1, spec.eigenvalue(2))
    out = propagate(g, sched, psi).final_state
    assert abs(out.coefficient(2) - np.exp(1j * t1)) <= 1e-12
    dt = sched.total_duration
    assert out.coefficient(2) == pytest.approx(np.exp(1j * (t0 + 64 * dt)), abs=1e-15)


def test_reverse_schedule_involution_and_empty(rng):
    s = ControlSchedule.from_segments(rng.uniform(-1, 1, 9), rng.uniform(0, 1, 9))
    assert reverse_schedule(reverse_schedule(s)) == s
    assert reverse_schedule(ControlSchedule()).n_segments == 0


def test_reverse_schedule_steers_conjugate_back(toy3):
    target = QuantumState(np.array([0.6, 0.8j]), offset=2)
    c = concentrate(toy3, target.conj(), 0.05, 2, 3)
    forward = reverse_schedule(c.schedule)
    n = c.truncation
    prop = Propagator(galerkin(toy3, n))
    psi = prop.evolve(forward, c.final_state.conj().to_dense(n))
    back = prop.evolve(reverse_schedule(forward), psi.conj())
    assert abs(np.vdot(c.final_state.to_dense(n), back)) >= 1 - 1e-9


# -- window steering

def test_steer_identical_on_N0(toy3):
    sched, rep = steer_in_window(toy3, QuantumState.basis(2), QuantumState.basis(2), 0.1)
    assert sched.n_segments == 0 and rep.fidelity == pytest.approx(1.0) and rep.total_time == 0


def test_steer_phi3_to_phi2(toy3):
    sched, rep = steer_in_window(toy3, QuantumState.basis(3), QuantumState.basis(2), 0.1, 2, 3)
    assert rep.fidelity >= 0.9 and rep.passed
    assert rep.total_time > 0 and rep.bound_time == time_bound(3.0, 0.1, 2)
    assert rep.verify_truncation >= 1.5 * rep.truncation
    assert rep.total_time == float(sum(s.duration for s in rep.stages))
    assert sum(s.duration for s in rep.stages) == sched.total_duration_exact()
    d = rep.to_dict()
    assert {"fidelity", "total_time", "time_bound", "stages"} <= d.keys()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_steer_random_pairs(toy3, seed):
    rng = np.random.default_rng(seed)
    psi0, psi1 = QuantumState.random(rng, 2, 5), QuantumState.random(rng, 2, 5)
    _, rep = steer_in_window(toy3, psi0, psi1, 0.1, 2, 5)
    assert rep.fidelity >= 0.9
    assert rep.synthesis_fidelity == pytest.approx(rep.fidelity, abs=1e-6)


def test_steer_stage_attribution():
    # equally spaced explicit spectrum: every rung is degenerate
    n = 10
    table = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        table[i, i + 1] = table[i + 1, i] = -0.5j
    spec = ModelSpec(3.0, "explicit-table", tuple(float(k) for k in range(1, n + 1)), table)
    with pytest.raises(StageError) as info:
        steer_in_window(spec, QuantumState.basis(3), QuantumState.basis(2), 0.1, 2, 3)
    assert info.value.stage == "concentrate source"


def test_working_truncation():
    assert working_truncation(5) == 10
    assert working_truncation(44) == 68
