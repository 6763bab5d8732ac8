import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from sqfilter.errors import PhysicalityError, StructuralError
from sqfilter.hilbert import annihilator, dag
from sqfilter.models import (
    InputMeans,
    ObservationSpec,
    SLHModel,
    build_k_operators,
    build_ltilde,
    build_rtilde,
    cavity_direct_model,
    cavity_mixed_model,
    raise_obs_index,
)
from sqfilter.noise import CorrelationMatrix, ScalarSqueezing, SqueezingSpec, build_example_K


def random_hermitian(rng, dim, norm):
    x = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    x = x + dag(x)
    return norm * x / np.linalg.norm(x, 2)


def two_channel_model(dim=6, squeeze=SqueezingSpec.scalar(0.4, 0.2 + 0.1j)):
    a = annihilator(dim)
    return SLHModel(
        s_mat=np.eye(dim)[None, None],
        l_ops=0.5 * a[None],
        r_ops=0.7 * a[None] + 0.1 * dag(a)[None],
        h_op=0.3 * dag(a) @ a,
        squeeze=squeeze,
    )


def ito_oracle_k_a(model):
    """Half the Ito product dG^* dG / dt for dG = R_j dA_j^* - R_j^* dA_j, expanded term by term."""
    n_mat, m_mat = model.squeeze.n_mat, model.squeeze.m_mat
    r = model.r_ops
    out = np.zeros((model.dim, model.dim), dtype=complex)
    for j in range(model.m_sq):
        for k in range(model.m_sq):
            # dA_j dA_k^* = (delta + N_kj), dA_j dA_k = M_jk, dA_j^* dA_k^* = M*_kj, dA_j^* dA_k = N_jk
            out += dag(r[j]) @ r[k] * ((j == k) + n_mat[k, j])
            out -= dag(r[j]) @ dag(r[k]) * m_mat[j, k]
            out -= r[j] @ r[k] * np.conj(m_mat[k, j])
            out += r[j] @ dag(r[k]) * n_mat[j, k]
    return 0.5 * out


def test_k_a_vanishes_without_r():
    sc = cavity_mixed_model(6, 1.0, 0.0, 0.0, (0.5, 0.3))
    assert np.array_equal(build_k_operators(sc.model).k_a, np.zeros((6, 6)))


def test_k_b_for_damped_cavity():
    sc = cavity_mixed_model(10, 2.0, 0.0, 0.0, (0.0, 0.0))
    a = annihilator(10)
    assert np.allclose(build_k_operators(sc.model).k_b, dag(a) @ a)


@settings(max_examples=30)
@given(st.floats(0.0, 2.0), st.floats(0.0, 1.0), st.floats(0.0, 2 * np.pi))
def test_k_a_matches_ito_oracle(n, frac, phase):
    m = frac * np.sqrt(n * (n + 1)) * np.exp(1j * phase)
    model = two_channel_model(squeeze=SqueezingSpec.scalar(n, m))
    ops = build_k_operators(model)
    assert np.max(np.abs(ops.k_a - ito_oracle_k_a(model))) < 1e-12
    assert ops.dissipative


def test_k_a_direct_cavity_real_m():
    n, m, g = 0.5, 0.3, 1.7
    sc = cavity_direct_model(8, g, 0.0, 0.0, (n, m))
    a = annihilator(8)
    ad = dag(a)
    expected = 0.5 * g * ((1 + n) * ad @ a + n * a @ ad - m * ad @ ad - m * a @ a)
    assert np.allclose(build_k_operators(sc.model).k_a, expected)


def test_k_a_direct_cavity_complex_m():
    n, m, g = 0.5, 0.3 + 0.2j, 1.0
    sc = cavity_direct_model(8, g, 0.0, 0.0, (n, m))
    a = annihilator(8)
    ad = dag(a)
    expected = 0.5 * g * ((1 + n) * ad @ a + n * a @ ad - m * ad @ ad - np.conj(m) * a @ a)
    assert np.allclose(build_k_operators(sc.model).k_a, expected)


def test_hermitian_perturbation_of_h_accepted():
    rng = np.random.default_rng(0)
    model = two_channel_model()
    for norm in (1e-6, 1e-3):
        SLHModel(model.s_mat, model.l_ops, model.r_ops, model.h_op + random_hermitian(rng, 6, norm), model.squeeze)


def test_non_hermitian_perturbation_of_h_rejected():
    rng = np.random.default_rng(1)
    model = two_channel_model()
    bad = model.h_op + 1j * random_hermitian(rng, 6, 1e-3)
    with pytest.raises(PhysicalityError):
        SLHModel(model.s_mat, model.l_ops, model.r_ops, bad, model.squeeze)


def test_unitary_perturbation_of_s_accepted_general_rejected():
    rng = np.random.default_rng(2)
    model = two_channel_model()
    x = random_hermitian(rng, 6, 1.0)
    s_ok = (expm(1e-6j * x) @ model.s_mat[0, 0])[None, None]
    SLHModel(s_ok, model.l_ops, model.r_ops, model.h_op, model.squeeze)
    s_bad = ((np.eye(6) + 1e-3 * x) @ model.s_mat[0, 0])[None, None]
    with pytest.raises(PhysicalityError):
        SLHModel(s_bad, model.l_ops, model.r_ops, model.h_op, model.squeeze)


def test_unphysical_squeezing_rejected():
    with pytest.raises(PhysicalityError):
        two_channel_model(squeeze=SqueezingSpec.scalar(0.0, 0.1))


def test_squeeze_size_mismatch():
    a = annihilator(4)
    with pytest.raises(StructuralError):
        SLHModel(np.zeros((0, 0, 4, 4)), np.zeros((0, 4, 4)), np.stack([a, a]), np.zeros((4, 4)),
                 SqueezingSpec.scalar(0.1))


def test_ltilde_plain_coupling():
    dim = 5
    a = annihilator(dim)
    model = SLHModel(np.eye(dim)[None, None], a[None], np.zeros((0, dim, dim)), np.zeros((dim, dim)),
                     SqueezingSpec(np.zeros((0, 0)), np.zeros((0, 0))))
    obs = ObservationSpec([[1.0]], np.zeros((1, 0)))
    lt = build_ltilde(model, InputMeans.zero(0, 1), obs, 0.0)
    assert np.array_equal(lt[0], a)


def test_ltilde_mixed_cavity():
    sc = cavity_mixed_model(8, 1.3, 0.2, 0.0, (0.5, 0.3))
    lt = build_ltilde(sc.model, sc.means, sc.obs, 0.0)
    assert np.allclose(lt[0], np.sqrt(1.3 / 2) * annihilator(8))


def test_rtilde_zero_cases():
    sc = cavity_mixed_model(6, 1.0, 0.0, 0.0, (0.5, 0.3))
    assert np.array_equal(build_rtilde(sc.model, sc.obs), np.zeros((2, 6, 6)))
    vac = two_channel_model(squeeze=SqueezingSpec.vacuum())
    obs = ObservationSpec([[0.0]], [[1.0]])
    assert np.array_equal(build_rtilde(vac, obs), np.zeros((1, 6, 6)))


def test_rtilde_direct_cavity():
    n, m, theta = 0.5, 0.3 + 0.2j, 0.4
    sc = cavity_direct_model(6, 1.0, 0.0, theta, (n, m))
    u = np.exp(1j * theta)
    expected = annihilator(6) * (u * n + np.conj(u) * np.conj(m))
    assert np.allclose(build_rtilde(sc.model, sc.obs)[0], expected)


@given(st.floats(0.0, 3.0), st.floats(-1.0, 1.0))
def test_raise_index_round_trip(n, frac):
    k = build_example_K(ScalarSqueezing(n, frac * np.sqrt(n * (n + 1))))
    rng = np.random.default_rng(3)
    ops = rng.standard_normal((2, 4, 4)) + 1j * rng.standard_normal((2, 4, 4))
    back = np.einsum("ab,b...->a...", k.k_mat, raise_obs_index(k, ops))
    assert np.max(np.abs(back - ops)) < 1e-12


def test_raise_index_identity():
    ops = np.arange(8.0).reshape(2, 2, 2)
    assert np.array_equal(raise_obs_index(CorrelationMatrix.from_matrix(np.eye(2)), ops), ops)


def test_mixed_model_K_examples():
    assert np.allclose(cavity_mixed_model(4, 1.0, 0.0, 0.0, (0, 0)).correlation().k_mat, np.eye(2))
    assert np.allclose(cavity_mixed_model(4, 1.0, 0.0, 0.0, (1, 1)).correlation().k_mat, [[3, 0], [0, 1]])


@given(st.floats(0.0, 4.0), st.floats(-1.0, 1.0))
def test_mixed_model_K_matches_example(n, frac):
    s = ScalarSqueezing(n, frac * np.sqrt(n * (n + 1)))
    k = cavity_mixed_model(3, 1.0, 0.0, 0.0, s).correlation().k_mat
    assert np.max(np.abs(k - build_example_K(s).k_mat)) < 1e-12


def test_direct_model_K_examples():
    assert cavity_direct_model(4, 1.0, 0.0, 0.0, (0, 0)).correlation().k_mat[0, 0] == pytest.approx(1)
    assert cavity_direct_model(4, 1.0, 0.0, 0.0, (1, 1)).correlation().k_mat[0, 0] == pytest.approx(5)
    assert cavity_direct_model(4, 1.0, 0.0, np.pi / 2, (1, 1)).correlation().k_mat[0, 0] == pytest.approx(1)


def test_piecewise_means():
    means = InputMeans.piecewise([0.0, 1.0], [[0.0], [1.0 + 1j]], [[2.0], [3.0]])
    assert means.alpha(0.5)[0] == 0
    assert means.alpha(1.0)[0] == 1 + 1j
    assert means.beta(5.0)[0] == 3
    with pytest.raises(StructuralError):
        InputMeans.piecewise([1.0, 0.0], [[0.0], [1.0]], [[0.0], [0.0]])


def test_means_length_checked():
    means = InputMeans.constant([1.0, 2.0], [])
    with pytest.raises(StructuralError):
        InputMeans(means.alpha_fn, means.beta_fn, 1, 0).alpha(0.0)


def test_observation_rows_independent():
    with pytest.raises(StructuralError):
        ObservationSpec([[1.0], [2.0]], [[0.0], [0.0]])
