import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from qsteer.errors import DomainError
from qsteer.findim import (MatrixPair, coupling_constant_estimate, diagnostics, killing_norm, lie_rank,
                           normalize_traceless, random_skew, rho_lower_bound, torus_orbit_distance)
from qsteer.model import ModelSpec, galerkin

seeds = st.integers(0, 2 ** 32 - 1)
TWO_LEVEL_B = 1j * np.diag([1.0, -1.0])
PSI0, PSI1 = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)


def word_rank(A, B, depth=5):
    """Oracle: SVD rank of all normalized nested brackets of length <= depth."""
    level = [A, B]
    level = [m / np.linalg.norm(m) for m in level]
    mats = list(level)
    for _ in range(depth - 1):
        level = [g @ x - x @ g for g in (A, B) for x in level]
        level = [m / np.linalg.norm(m) for m in level if np.linalg.norm(m) > 1e-12]
        mats += level
    V = np.array([np.concatenate([m.real.ravel(), m.imag.ravel()]) for m in mats])
    return int(np.linalg.matrix_rank(V, tol=1e-8))


def conj(U, M):
    return U @ M @ U.conj().T


# -- traceless normalization

def test_normalize_traceless_examples(rng):
    m = normalize_traceless(random_skew(rng, 4))
    np.testing.assert_array_equal(normalize_traceless(m), m)
    np.testing.assert_allclose(normalize_traceless(1j * np.eye(2)), np.zeros((2, 2)), atol=0)
    r = normalize_traceless(random_skew(rng, 3))
    assert abs(np.trace(r)) < 1e-13
    np.testing.assert_allclose(r, -r.conj().T, atol=1e-15)


# -- Lie rank

def test_lie_rank_abelian():
    A = normalize_traceless(random_skew(np.random.default_rng(1), 3))
    assert lie_rank(MatrixPair(A, A)) == 1


@pytest.mark.parametrize("seed", range(20))
def test_lie_rank_generic_su3(seed):
    pair = MatrixPair.random(np.random.default_rng(seed), 3)
    assert lie_rank(pair) == 8 == word_rank(pair.A, pair.B)


def test_lie_rank_two_level_toy():
    pair = MatrixPair.from_model(ModelSpec(3.0), 2).traceless()
    assert lie_rank(pair) == 3 == word_rank(pair.A, pair.B)


def test_lie_rank_toy_ladder_matches_word_oracle():
    pair = MatrixPair.from_model(ModelSpec(3.0), 4).traceless()
    assert lie_rank(pair) == word_rank(pair.A, pair.B, depth=9) == 15


@given(seeds, st.integers(2, 4))
def test_lie_rank_order_and_conjugation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    # a structured pair whose rank is below n^2 - 1
    A = normalize_traceless(1j * np.diag(rng.standard_normal(n)))
    B = np.zeros((n, n), dtype=complex)
    B[0, 1], B[1, 0] = 1, -1
    pair = MatrixPair(A, B)
    r = lie_rank(pair)
    assert r <= n * n - 1
    assert lie_rank(MatrixPair(B, A)) == r
    U = unitary_group.rvs(n, random_state=seed % 2 ** 31)
    assert lie_rank(MatrixPair(conj(U, A), conj(U, B))) == r


# -- Killing norm

def test_killing_norm_examples(rng):
    assert killing_norm(np.zeros((3, 3))) == 0
    m = normalize_traceless(random_skew(rng, 3))
    assert killing_norm(m, 12.0) == pytest.approx(math.sqrt(2) * killing_norm(m, 6.0))
    # for skew-Hermitian m, -tr(m^2) is the squared Frobenius norm
    assert killing_norm(m) == pytest.approx(math.sqrt(6) * np.linalg.norm(m))


@given(seeds)
def test_killing_norm_adjoint_invariant(seed):
    rng = np.random.default_rng(seed)
    m = normalize_traceless(random_skew(rng, 4))
    U = unitary_group.rvs(4, random_state=seed % 2 ** 31)
    assert killing_norm(conj(U, m)) == pytest.approx(killing_norm(m), abs=1e-10)


def test_killing_norm_rejects_hermitian():
    with pytest.raises(DomainError):
        killing_norm(np.diag([1.0, -1.0]))
    with pytest.raises(DomainError):
        killing_norm(np.zeros((2, 2)), c=0)


# -- orbit distances and bounds

def test_orbit_distance_two_level():
    assert torus_orbit_distance(TWO_LEVEL_B, PSI0, PSI1) == pytest.approx(math.sqrt(2), abs=1e-9)


def test_orbit_distance_same_orbit(rng):
    B = random_skew(rng, 4)
    psi0 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    psi0 /= np.linalg.norm(psi0)
    w, v = np.linalg.eigh(1j * B)
    K = 3.0  # a grid point of linspace(0, 20, 2001)
    psi1 = v @ (np.exp(-1j * K * w) * (v.conj().T @ psi0))
    assert torus_orbit_distance(B, psi0, psi1) <= 1e-7  # sqrt of a rounding-level residual


def test_orbit_distance_refinement(rng):
    B = random_skew(rng, 3)
    p0 = np.array([1, 0, 0], dtype=complex)
    p1 = np.array([0, 0.6, 0.8j])
    coarse = torus_orbit_distance(B, p0, p1, 10.0, 101)
    fine = torus_orbit_distance(B, p0, p1, 10.0, 201)  # superset grid
    assert fine <= coarse + 1e-15


def test_rho_bounds_two_level():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])  # operator norm 1
    pair = MatrixPair(A, TWO_LEVEL_B)
    assert rho_lower_bound(pair, PSI0, PSI1) == pytest.approx(math.sqrt(2), abs=1e-9)
    assert rho_lower_bound(pair, PSI0, PSI0) == pytest.approx(0.0, abs=1e-12)
    assert rho_lower_bound(pair, PSI0, PSI1, eigenvector=PSI0) == pytest.approx(1.0)
    plus, minus = np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)
    assert rho_lower_bound(pair, plus, minus, eigenvector=PSI0) == pytest.approx(0.0, abs=1e-15)


def test_rho_degenerate():
    with pytest.raises(DomainError):
        rho_lower_bound(MatrixPair(np.zeros((2, 2)), TWO_LEVEL_B), PSI0, PSI1)


@given(seeds)
def test_diagnostics_conjugation_invariant(seed):
    rng = np.random.default_rng(seed)
    pair = MatrixPair.random(rng, 3)
    p0 = np.array([1, 0, 0], dtype=complex)
    p1 = np.array([0, 1, 0], dtype=complex)
    U = unitary_group.rvs(3, random_state=seed % 2 ** 31)
    d = diagnostics(pair, p0, p1, K_max=5.0, grid=201)
    e = diagnostics(MatrixPair(conj(U, pair.A), conj(U, pair.B)), U @ p0, U @ p1, K_max=5.0, grid=201)
    for key in ("lie_rank", "killing_norm_A", "killing_norm_B", "orbit_distance_estimate",
                "rho_lower_bound_estimate"):
        assert e[key] == pytest.approx(d[key], abs=1e-9)
    assert d["controllable_lift"] == (d["lie_rank"] == 8)


# -- pair type

def test_matrix_pair_validation_and_roundtrip(rng):
    with pytest.raises(DomainError):
        MatrixPair(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        MatrixPair(np.zeros((2, 2)), np.zeros((3, 3)))
    pair = MatrixPair.random(rng, 3)
    back = MatrixPair.from_dict(pair.to_dict())
    np.testing.assert_array_equal(back.A, pair.A)
    np.testing.assert_array_equal(back.B, pair.B)


@given(seeds, st.sampled_from([0.5, 1.0, 2.0]))
def test_coupling_constant_estimate_is_valid(seed, k):
    spec, n = ModelSpec(3.0), 8
    c = coupling_constant_estimate(spec, k, n)
    g = galerkin(spec, n)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    Ak = g.a_diag ** k
    lhs = abs(np.vdot(Ak * x, g.b_mat @ x).real)
    assert lhs <= c * np.vdot(Ak * x, x).real * (1 + 1e-12)
