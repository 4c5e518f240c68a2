"""Resonant single-transition pulses and their averaging error certificate.

A pulse ``u(t) = (w/n) cos(w t + psi)`` with ``w = |lambda_k - lambda_j|``
acts, to first order in ``1/n`` and in the frame rotating with the drift, as
the two-level rotation ``exp(K M)`` where ``M`` has the single entry
``pi b_jk e^{i phi}/4`` at ``(j, k)`` (and ``-conj`` of it at ``(k, j)``) and
``K`` is the L1 norm of the control.  The pulse phase is ``psi = -phi`` when
``lambda_k > lambda_j`` and ``psi = phi`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import ControlSchedule, Propagator, sample_cosine
from .errors import BudgetError, DegenerateTransitionError, DomainError
from .model import ModelSpec, galerkin

AVERAGING_I = 4.0  # L1 norm of w*cos over one period, any w
INT_TOL = 1e-9


def _wrap(x: float) -> float:
    """Map an angle into (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


@dataclass(frozen=True)
class RotationTarget:
    theta: float
    alpha1: float
    beta1: float
    phi: float
    K: float


def rotation_parameters(a: complex, b: complex, coupling: complex = 0.5) -> RotationTarget:
    """Phase and L1 norm such that ``exp(K M) (a, b)`` is colinear to ``(0, 1)``.

    ``coupling`` is the matrix element ``b_12`` of the pair being rotated.
    With a real positive coupling the phase reduces to ``alpha1 - beta1 - pi``.
    """
    na, nb = abs(a), abs(b)
    if na == 0 and nb == 0:
        raise DomainError("cannot rotate the zero vector")
    if abs(na * na + nb * nb - 1) > 1e-10:
        raise DomainError("rotation input must be a unit vector")
    if coupling == 0:
        raise DomainError("coupling must be nonzero")
    theta = math.atan2(nb, na)
    alpha1 = _wrap(np.angle(a)) if na else 0.0
    beta1 = _wrap(np.angle(b)) if nb else 0.0
    phi = _wrap(alpha1 - beta1 + math.pi - np.angle(coupling))
    r = math.pi * abs(coupling) / 4
    K = (math.pi / 2 - theta) / r
    return RotationTarget(theta, alpha1, beta1, phi, K)


def effective_rotation(K: float, phi: float, b12: complex) -> np.ndarray:
    """Closed form of ``exp(K M)`` for the 2x2 averaged generator ``M``."""
    z = math.pi * b12 * np.exp(1j * phi) / 4
    r = abs(z)
    if r == 0:
        return np.eye(2, dtype=complex)
    c, s = math.cos(r * K), math.sin(r * K)
    e = z / r
    return np.array([[c, e * s], [-np.conj(e) * s, c]], dtype=complex)


def pulse_phase(spec: ModelSpec, j: int, k: int, phi: float) -> float:
    """Phase of the driving cosine that realizes rotation phase ``phi`` on (j, k)."""
    return -phi if spec.eigenvalue(k) > spec.eigenvalue(j) else phi


def _primitive(x: float, T: float) -> complex:
    """``int_0^T exp(i x t) dt``."""
    if abs(x) * T < 1e-12:
        return complex(T)
    return (np.exp(1j * x * T) - 1) / (1j * x)


def leakage_pairs(spec: ModelSpec, n_trunc: int, j: int, k: int) -> list[tuple[int, int]]:
    """Coupled pairs touching {j, k} whose gap is off the resonance comb.

    Raises :class:`DegenerateTransitionError` when a competing pair is resonant.
    """
    w = abs(spec.eigenvalue(k) - spec.eigenvalue(j))
    lam = spec.eigenvalues(n_trunc)
    b = spec.coupling_matrix(n_trunc)
    out = []
    for l in range(1, n_trunc + 1):
        for m in range(1, n_trunc + 1):
            if l == m or b[l - 1, m - 1] == 0 or {l, m} == {j, k}:
                continue
            q = abs(lam[l - 1] - lam[m - 1]) / w
            on_comb = abs(q - round(q)) <= INT_TOL * max(1.0, q)
            touches = bool({l, m} & {j, k})
            if on_comb and (touches or round(q) == 1):
                raise DegenerateTransitionError(j, k, (l, m))
            if touches:
                out.append((l, m))
    return out


def compute_C(spec: ModelSpec, n_trunc: int, j: int, k: int, phase: float | None = None) -> float:
    """Resonance-leakage constant of the (j, k) transition.

    Sup over the leakage pairs ``(l, m)`` of
    ``|int_0^T u(t) e^{i(lambda_l - lambda_m)t} dt / sin(pi |lambda_l - lambda_m|/w)|``
    for ``u(t) = w cos(w t + phase)``, ``T = 2 pi/w``.  With ``phase=None`` the
    sup also runs over the phase, which makes the value valid for any pulse.
    """
    if n_trunc < max(j, k):
        raise DomainError("truncation must contain both levels of the transition")
    if spec.coupling(j, k) == 0:
        raise DomainError(f"levels {j} and {k} are not coupled")
    w = abs(spec.eigenvalue(k) - spec.eigenvalue(j))
    T = 2 * math.pi / w
    best = 0.0
    for l, m in leakage_pairs(spec, n_trunc, j, k):
        wp = spec.eigenvalue(l) - spec.eigenvalue(m)
        plus, minus = _primitive(w + wp, T), _primitive(wp - w, T)
        if phase is None:
            num = 0.5 * w * (abs(plus) + abs(minus))
        else:
            num = abs(0.5 * w * (np.exp(1j * phase) * plus + np.exp(-1j * phase) * minus))
        den = abs(math.sin(math.pi * abs(wp) / w))
        best = max(best, num / den)
    return best


def averaging_bound(C: float, b_norm: float, K: float, n: float) -> float:
    """Certified operator-norm distance to the averaged evolution."""
    return AVERAGING_I * (C + 1) * b_norm * (1 + 2 * K * b_norm) / n


def sampling_error_estimate(K: float, coupling: complex, steps_per_period: int) -> float:
    """Rotation-angle deficit caused by midpoint sampling (sinc attenuation)."""
    x = math.pi / steps_per_period
    return (1 - math.sin(x) / x) * math.pi * abs(coupling) * K / 4


@dataclass(frozen=True)
class TransitionPulse:
    j: int
    k: int
    phi: float
    pulse_phase: float
    divisor: float
    amplitude: float
    duration: float
    K: float
    C: float
    b_norm: float
    bound: float
    steps_per_period: int
    theta: float = 0.0
    schedule: ControlSchedule = field(default_factory=ControlSchedule, compare=False)

    @property
    def l1_norm(self) -> float:
        return self.schedule.l1_norm

    def certificate(self) -> dict:
        return {
            "j": self.j, "k": self.k, "theta": self.theta, "phi": self.phi,
            "pulse_phase": self.pulse_phase, "n": self.divisor, "amplitude": self.amplitude,
            "tau": self.duration, "K": self.K, "l1_norm": self.l1_norm, "C": self.C,
            "b_norm": self.b_norm, "bound": self.bound, "steps_per_period": self.steps_per_period,
        }


def make_pulse(spec: ModelSpec, n_trunc: int, j: int, k: int, K: float, phi: float, n: float,
               steps_per_period: int = 64, b_norm: float | None = None,
               C: float | None = None, theta: float = 0.0) -> TransitionPulse:
    """Sampled pulse of divisor ``n`` realizing ``exp(K M)`` with phase ``phi``."""
    if n < 1:
        raise DomainError("divisor must be >= 1")
    if K < 0:
        raise DomainError("K must be >= 0")
    w = abs(spec.eigenvalue(k) - spec.eigenvalue(j))
    if w == 0:
        raise DegenerateTransitionError(j, k, (j, k))
    psi = pulse_phase(spec, j, k, phi)
    if C is None:
        C = compute_C(spec, n_trunc, j, k, phase=psi)
    if b_norm is None:
        b_norm = galerkin(spec, n_trunc).b_norm()
    tau = math.pi * K * n / (2 * w)
    sched = sample_cosine(w, w, psi, n, tau, steps_per_period, label=f"pulse({j},{k})")
    return TransitionPulse(j, k, phi, psi, n, w, tau, K, C, b_norm,
                           averaging_bound(C, b_norm, K, n), steps_per_period, theta, sched)


def adaptive_steps(K: float, coupling: complex, eta: float, base: int = 64, cap: int = 4096) -> int:
    steps = base
    while steps < cap and sampling_error_estimate(K, coupling, steps) > eta / 4:
        steps *= 2
    return steps


def synthesize_transition(spec: ModelSpec, n_trunc: int, j: int, k: int, state2, eta: float,
                          steps_per_period: int | None = None, b_norm: float | None = None,
                          max_duration: float | None = None) -> TransitionPulse:
    """Pulse emptying level ``j`` into level ``k`` for the pair ``state2 = (x_j, x_k)``.

    The divisor is chosen so the averaging certificate equals ``eta``.
    """
    if eta <= 0:
        raise DomainError("eta must be > 0")
    a, b = complex(state2[0]), complex(state2[1])
    nrm = math.hypot(abs(a), abs(b))
    bjk = spec.coupling(j, k)
    if b_norm is None:
        b_norm = galerkin(spec, n_trunc).b_norm()
    if nrm == 0 or abs(a) <= 1e-15 * nrm:
        C = compute_C(spec, n_trunc, j, k)
        return TransitionPulse(j, k, 0.0, 0.0, 1.0, abs(spec.eigenvalue(k) - spec.eigenvalue(j)),
                               0.0, 0.0, C, b_norm, 0.0, steps_per_period or 64, math.pi / 2,
                               ControlSchedule((), f"pulse({j},{k})"))
    rot = rotation_parameters(a / nrm, b / nrm, coupling=bjk)
    psi = pulse_phase(spec, j, k, rot.phi)
    C = compute_C(spec, n_trunc, j, k, phase=psi)
    n = max(1.0, AVERAGING_I * (1 + 2 * rot.K * b_norm) * (C + 1) * b_norm / eta)
    steps = steps_per_period or adaptive_steps(rot.K, bjk, eta)
    w = abs(spec.eigenvalue(k) - spec.eigenvalue(j))
    tau = math.pi * rot.K * n / (2 * w)
    if max_duration is not None and tau > max_duration:
        raise BudgetError(f"pulse ({j},{k}) needs duration {tau:.6g} > budget {max_duration:.6g}")
    return make_pulse(spec, n_trunc, j, k, rot.K, rot.phi, n, steps, b_norm, C, rot.theta)


def averaged_propagator(spec: ModelSpec, n_trunc: int, pulse: TransitionPulse) -> np.ndarray:
    """``exp(tau A) exp(K M)`` on the order-``n_trunc`` system."""
    rot = np.eye(n_trunc, dtype=complex)
    r2 = effective_rotation(pulse.K, pulse.phi, spec.coupling(pulse.j, pulse.k))
    idx = [pulse.j - 1, pulse.k - 1]
    rot[np.ix_(idx, idx)] = r2
    drift = np.exp(1j * spec.eigenvalues(n_trunc) * pulse.duration)
    return drift[:, None] * rot


def measure_deviation(spec: ModelSpec, n_trunc: int, pulse: TransitionPulse,
                      propagator: Propagator | None = None) -> float:
    """Operator norm of (simulated pulse propagator - averaged propagator)."""
    prop = propagator or Propagator(galerkin(spec, n_trunc))
    x = prop.propagator(pulse.schedule)
    return float(np.linalg.norm(x - averaged_propagator(spec, n_trunc, pulse), 2))
