import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsteer.errors import DomainError
from qsteer.model import (REFERENCE_B_NORM, GalerkinPair, ModelSpec, QuantumState, band, coupling,
                          coupling_norm_report, eigenvalue, galerkin, project, weighted_norm)


# -- spectrum and couplings

@pytest.mark.parametrize("k, alpha, expected", [(1, 3, 1.0), (2, 3, 64.0), (3, 1, 9.0)])
def test_eigenvalue_examples(k, alpha, expected):
    assert eigenvalue(k, alpha) == expected


def test_eigenvalue_rejects_index_zero():
    with pytest.raises(DomainError):
        eigenvalue(0, 3.0)


@pytest.mark.parametrize("j, k, expected", [(1, 2, -0.5j), (2, 1, -0.5j), (3, 3, 0j), (1, 4, 0j)])
def test_coupling_examples(j, k, expected):
    assert coupling(j, k) == expected


@given(st.integers(1, 60), st.integers(1, 60))
def test_coupling_skew_adjoint(j, k):
    assert coupling(j, k) == -np.conj(coupling(k, j))


@given(st.floats(0.1, 5.0), st.integers(1, 40))
def test_toy_spectrum_strictly_increasing(alpha, k):
    spec = ModelSpec(alpha)
    assert spec.eigenvalue(k + 1) > spec.eigenvalue(k)


# -- Galerkin compressions

def test_galerkin_alpha3_order2():
    g = galerkin(ModelSpec(3.0), 2)
    np.testing.assert_array_equal(g.a_diag, [1.0, 64.0])
    np.testing.assert_array_equal(g.b_mat, [[0, -0.5j], [-0.5j, 0]])


def test_galerkin_alpha1_order3():
    np.testing.assert_array_equal(galerkin(ModelSpec(1.0), 3).a_diag, [1.0, 4.0, 9.0])


def test_galerkin_rejects_small_order():
    with pytest.raises(DomainError):
        galerkin(ModelSpec(3.0), 1)


def test_explicit_table_passthrough():
    table = np.array([[0.3j, 1 - 2j], [-1 - 2j, -0.7j]])
    spec = ModelSpec.from_dict({"alpha": 1.0, "mode": "explicit-table", "lambda": [2.0, 5.0],
                                "coupling": [[[z.real, z.imag] for z in row] for row in table]})
    g = galerkin(spec, 2)
    np.testing.assert_array_equal(g.a_diag, [2.0, 5.0])
    np.testing.assert_array_equal(g.b_mat, table)
    assert not g.is_real


def test_explicit_table_must_be_skew():
    with pytest.raises(DomainError):
        GalerkinPair(2, np.array([1.0, 2.0]), np.array([[0, 1], [1, 0]], dtype=complex))


@given(st.integers(2, 30))
def test_toy_galerkin_structure(n):
    g = galerkin(ModelSpec(3.0), n)
    h = 1j * g.b_mat
    assert np.allclose(h, h.conj().T, atol=0)
    assert np.all(np.diag(g.b_mat) == 0)
    assert not np.any(np.triu(g.b_mat, 2))
    assert g.is_real


def test_b_norm_matches_jacobi_closed_form():
    # i B^(N) is the Jacobi matrix with 1/2 off the diagonal: eigenvalues cos(k pi/(N+1))
    spec = ModelSpec(3.0)
    for n in range(2, 51):
        assert galerkin(spec, n).b_norm() == pytest.approx(math.cos(math.pi / (n + 1)), abs=1e-13)


def test_coupling_norm_report_flags_reference_value():
    rep = coupling_norm_report(ModelSpec(3.0))
    assert rep["orders"] == list(range(2, 51))
    assert rep["monotone_nondecreasing"] and rep["bounded_by_one"]
    (entry,) = rep["discrepancies"]
    assert entry["reference_value"] == pytest.approx(REFERENCE_B_NORM)
    assert entry["measured_value"] > REFERENCE_B_NORM


def test_coupling_norm_report_no_flag_when_below_reference():
    # only N = 2 (norm 1/2) is below sqrt(2)/2; N = 3 equals it
    assert coupling_norm_report(ModelSpec(3.0), [2, 3])["discrepancies"] == []


# -- states, norms and projections

def test_weighted_norm_examples():
    spec = ModelSpec(3.0)
    assert weighted_norm(QuantumState.basis(2), spec, 0.5) == pytest.approx(8.0)
    assert weighted_norm(QuantumState.basis(1), ModelSpec(1.7), 2.3) == pytest.approx(1.0)
    psi = QuantumState.random(np.random.default_rng(1), 1, 7)
    assert weighted_norm(psi, spec, 0.0) == pytest.approx(1.0)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 2), st.floats(0, 2))
def test_weighted_norm_monotone_in_s(seed, s1, s2):
    psi = QuantumState.random(np.random.default_rng(seed), 2, 6)
    lo, hi = sorted((s1, s2))
    spec = ModelSpec(1.3)
    assert weighted_norm(psi, spec, lo) <= weighted_norm(psi, spec, hi) * (1 + 1e-12)


def test_project_examples():
    assert project(QuantumState.basis(3), 2).norm() == 0
    assert project(QuantumState.basis(1), 5).distance(QuantumState.basis(1)) == 0
    psi = QuantumState(np.array([1, 0, 1]) / math.sqrt(2))
    p = project(psi, 2)
    assert p.distance(QuantumState(np.array([1 / math.sqrt(2)]))) == 0
    assert p.norm() == pytest.approx(1 / math.sqrt(2))


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.integers(1, 12))
def test_project_idempotent_and_contractive(seed, first, n):
    psi = QuantumState.random(np.random.default_rng(seed), first, first + 5)
    p = project(psi, n)
    assert project(p, n).distance(p) == 0
    assert p.norm() <= psi.norm() + 1e-15


def test_state_support_and_dense():
    psi = QuantumState(np.array([0, 0.6, 0.8j, 0]), offset=3)
    assert psi.support == (4, 5)
    assert psi.is_normalized()
    np.testing.assert_array_equal(psi.to_dense(5), [0, 0, 0, 0.6, 0.8j])
    with pytest.raises(DomainError):
        psi.to_dense(4)
    assert band(psi, 5, 6).coeffs.tolist() == [0.8j, 0]


def test_state_roundtrip_dict():
    psi = QuantumState.random(np.random.default_rng(3), 2, 9)
    back = QuantumState.from_dict(psi.to_dict())
    assert back.offset == psi.offset
    np.testing.assert_array_equal(back.coeffs, psi.coeffs)


def test_model_dict_roundtrip_and_missing_alpha():
    spec = ModelSpec(2.75)
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(DomainError, match="alpha"):
        ModelSpec.from_dict({"mode": "toy-torus"})
