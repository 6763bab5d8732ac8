import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqfilter.errors import NonCommutingObservationError, PhysicalityError, StructuralError
from sqfilter.models import ObservationSpec
from sqfilter.noise import (
    CorrelationMatrix,
    ScalarSqueezing,
    SqueezingSpec,
    build_example_K,
    build_general_K,
    build_quadrature_covariance,
    kossakowski_matrix,
    sample_correlated_increments,
    validate_squeezing,
)
from sqfilter.sde import derive_stream

S2 = 1 / np.sqrt(2)
MIXED_OBS = ObservationSpec([[S2], [-1j * S2]], [[S2], [1j * S2]])


def physical_scalar():
    return st.tuples(
        st.floats(0.0, 5.0), st.floats(0.0, 1.0), st.floats(0.0, 2 * np.pi)
    ).map(lambda x: ScalarSqueezing(x[0], np.sqrt(x[0] * (x[0] + 1)) * x[1] * np.exp(1j * x[2])))


def test_validate_vacuum_ok():
    rep = validate_squeezing(SqueezingSpec.scalar(0.0, 0.0))
    assert rep.ok
    assert rep.margin == 0.0


def test_validate_boundary_case():
    rep = validate_squeezing(SqueezingSpec.scalar(1.0, np.sqrt(2)))
    assert rep.ok
    assert abs(rep.margin) < 1e-12


def test_validate_violation_margin():
    rep = validate_squeezing(SqueezingSpec.scalar(0.0, 0.1))
    assert not rep.ok
    assert rep.margin == pytest.approx(-0.01)
    with pytest.raises(PhysicalityError):
        rep.raise_if_invalid()


def test_shape_mismatch_is_structural():
    with pytest.raises(StructuralError):
        validate_squeezing(SqueezingSpec(np.zeros((2, 2)), np.zeros((1, 1))))


def test_quadrature_covariance_examples():
    assert np.allclose(build_quadrature_covariance(SqueezingSpec.scalar(0, 0)), np.eye(2))
    c = build_quadrature_covariance(SqueezingSpec.scalar(1.0, 1.0))
    assert np.allclose(c, [[5, 0], [0, 1]])
    c = build_quadrature_covariance(SqueezingSpec.scalar(1.0, 1j))
    assert c[0, 1] == pytest.approx(2.0)
    assert c[1, 0] == pytest.approx(2.0)


@given(physical_scalar())
def test_physical_scalar_passes_and_covariance_is_psd(s):
    rep = validate_squeezing(s.to_spec())
    assert rep.ok
    c = build_quadrature_covariance(s.to_spec())
    assert np.allclose(c, c.T)
    assert rep.min_eigenvalue > -1e-9 * (1 + np.abs(c).max())


@given(st.floats(0.01, 3.0), st.floats(1.01, 3.0), st.floats(0, 2 * np.pi))
def test_unphysical_scalar_rejected(n, scale, phase):
    m = scale * np.sqrt(n * (n + 1)) * np.exp(1j * phase)
    assert not validate_squeezing(SqueezingSpec.scalar(n, m)).ok


def test_multimode_two_mode_squeezed_vacuum():
    # two-mode squeezing: N = sinh^2 r I, M off-diagonal sinh r cosh r
    r = 0.6
    n_mat = np.sinh(r) ** 2 * np.eye(2)
    m_mat = np.sinh(r) * np.cosh(r) * np.array([[0, 1], [1, 0]])
    assert validate_squeezing(SqueezingSpec(n_mat, m_mat)).ok
    assert not validate_squeezing(SqueezingSpec(n_mat, 1.2 * m_mat)).ok


def test_example_K_values():
    assert np.allclose(build_example_K(ScalarSqueezing(0, 0)).k_mat, np.eye(2))
    k = build_example_K(ScalarSqueezing(1, 1))
    assert np.allclose(k.k_mat, [[3, 0], [0, 1]])
    assert np.linalg.det(k.k_mat) == pytest.approx(3)
    k = build_example_K(ScalarSqueezing(1, 1j))
    assert np.allclose(k.k_mat, [[2, 1], [1, 2]])
    assert np.linalg.det(k.k_mat) == pytest.approx(3)


def test_general_K_mixed_vacuum_is_identity():
    assert np.allclose(build_general_K(MIXED_OBS, SqueezingSpec.vacuum()).k_mat, np.eye(2), atol=1e-12)


@given(st.floats(0.0, 4.0), st.floats(-1.0, 1.0))
def test_general_K_matches_example_for_real_m(n, frac):
    s = ScalarSqueezing(n, frac * np.sqrt(n * (n + 1)))
    k = build_general_K(MIXED_OBS, s.to_spec()).k_mat
    assert np.max(np.abs(k - build_example_K(s).k_mat)) < 1e-12


@given(physical_scalar(), st.floats(0.0, np.pi))
def test_general_K_single_quadrature(s, theta):
    obs = ObservationSpec(np.zeros((1, 0)), [[np.exp(-1j * theta)]])
    k = build_general_K(obs, s.to_spec()).k_mat[0, 0]
    m = complex(s.m)
    expected = 1 + 2 * s.n + 2 * (m.real * np.cos(2 * theta) + m.imag * np.sin(2 * theta))
    assert k == pytest.approx(expected, abs=1e-10)


@settings(max_examples=200)
@given(physical_scalar(), st.floats(0.0, np.pi))
def test_K_symmetric_positive(s, theta):
    obs = ObservationSpec(np.zeros((1, 0)), [[np.exp(1j * theta)]])
    for k in (build_example_K(s), build_general_K(obs, s.to_spec())):
        assert np.array_equal(k.k_mat, k.k_mat.T)
        assert np.linalg.eigvalsh(k.k_mat)[0] > 0


def test_non_commuting_observation_rejected():
    with pytest.raises(NonCommutingObservationError):
        ObservationSpec([[1.0, 0.0], [1j, 1.0]], np.zeros((2, 0)))


def test_kossakowski_matrix_is_psd_for_physical_spec():
    s = SqueezingSpec.scalar(0.5, 0.3 + 0.2j)
    c = kossakowski_matrix(s)
    assert np.allclose(c, c.conj().T)
    assert np.linalg.eigvalsh(c)[0] >= -1e-12


def test_singular_K_factorisation_fails():
    with pytest.raises(PhysicalityError):
        CorrelationMatrix.from_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])).cholesky()


def test_increments_identity_are_standard_normals():
    rng = derive_stream(1, 0).generator()
    x = sample_correlated_increments(CorrelationMatrix.from_matrix(np.eye(2)), 1.0, rng, size=200_000)
    assert np.allclose(x.mean(axis=0), 0, atol=0.01)
    assert np.allclose(np.cov(x.T), np.eye(2), atol=0.01)


def test_increment_covariance_monte_carlo():
    k = CorrelationMatrix.from_matrix(np.array([[3.0, 0.0], [0.0, 1.0]]))
    rng = derive_stream(42, 0).generator()
    x = sample_correlated_increments(k, 0.01, rng, size=1_000_000)
    cov = x.T @ x / len(x)
    assert cov[0, 0] == pytest.approx(0.03, rel=0.01)
    assert cov[1, 1] == pytest.approx(0.01, rel=0.01)
    assert abs(cov[0, 1]) < 0.01 * 0.01


def test_increments_reproducible():
    k = CorrelationMatrix.from_matrix(np.array([[2.0, 0.5], [0.5, 1.0]]))
    a = sample_correlated_increments(k, 0.1, derive_stream(42, 0).generator(), size=50)
    b = sample_correlated_increments(k, 0.1, derive_stream(42, 0).generator(), size=50)
    assert np.array_equal(a, b)
