import numpy as np
import pytest
from hypothesis import given, strategies as st

from sqfilter.errors import StructuralError, TruncationError
from sqfilter.hilbert import (
    ConditionalState,
    annihilator,
    coherent_state,
    dag,
    expectation,
    gaussian_moment_closure,
    gaussian_state,
    mode_moments,
    number_operator,
    vacuum_state,
)


def test_annihilator_dim2():
    assert np.array_equal(annihilator(2), [[0, 1], [0, 0]])


def test_annihilator_rejects_small_dim():
    with pytest.raises(StructuralError):
        annihilator(1)


def test_commutator_away_from_cutoff():
    a = annihilator(10)
    comm = a @ dag(a) - dag(a) @ a
    assert np.allclose(np.diag(comm)[:-1], 1.0)


def test_coherent_zero_is_vacuum():
    assert np.array_equal(coherent_state(8, 0.0), vacuum_state(8))


def test_coherent_moments():
    rho = coherent_state(20, 0.5)
    m = mode_moments(rho, annihilator(20))
    assert abs(m.mean - 0.5) < 1e-10
    assert abs(m.v_cov) < 1e-10
    assert abs(m.w_cov) < 1e-10


def test_coherent_leakage_error():
    with pytest.raises(TruncationError):
        coherent_state(6, 2.0)


def test_expectation_examples():
    assert expectation(vacuum_state(5), number_operator(5)) == 0
    assert expectation(coherent_state(20, 0.5), annihilator(20)) == pytest.approx(0.5, abs=1e-10)


@given(st.complex_numbers(max_magnitude=1.5))
def test_identity_expectation_is_one(alpha):
    rho = coherent_state(30, alpha)
    assert expectation(rho, np.eye(30)) == pytest.approx(1.0, abs=1e-12)


def test_expectation_dimension_mismatch():
    with pytest.raises(StructuralError):
        expectation(vacuum_state(3), np.eye(4))


def test_closure_trivial_cases():
    assert gaussian_moment_closure(0.0, 0.7, 0.2 - 0.1j).a3 == 0
    alpha = 0.3 - 0.4j
    third = gaussian_moment_closure(alpha, 0.0, 0.0)
    assert third.adag_a2 == pytest.approx(np.conj(alpha) * alpha**2)
    assert third.a3 == pytest.approx(alpha**3)


def test_closure_against_brute_force():
    dim = 40
    rho = gaussian_state(dim, 0.5, 0.2, 0.1j)
    a = annihilator(dim)
    third = gaussian_moment_closure(0.5, 0.2, 0.1j)
    assert abs(expectation(rho, dag(a) @ a @ a) - third.adag_a2) < 1e-6
    assert abs(expectation(rho, a @ a @ a) - third.a3) < 1e-6


@given(st.complex_numbers(max_magnitude=0.8), st.floats(0.0, 0.6), st.floats(0.0, 1.0), st.floats(0, 2 * np.pi))
def test_gaussian_state_has_requested_moments(mean, v, frac, phase):
    w = frac * np.sqrt(v * (v + 1)) * np.exp(1j * phase)
    rho = gaussian_state(40, mean, v, w)
    m = mode_moments(rho, annihilator(40))
    assert abs(m.mean - mean) < 1e-7
    assert abs(m.v_cov - v) < 1e-7
    assert abs(m.w_cov - w) < 1e-7
    assert np.linalg.eigvalsh(rho)[0] > -1e-10


def test_gaussian_state_rejects_unphysical():
    with pytest.raises(ValueError):
        gaussian_state(20, 0, 0.1, 0.5)


def test_conditional_state_diagnostics():
    st_ = ConditionalState(coherent_state(10, 0.2))
    assert st_.problems() == []
    bad = ConditionalState(np.diag([0.5, 0.6, 0.0]).astype(complex))
    assert any("trace" in p for p in bad.problems())
