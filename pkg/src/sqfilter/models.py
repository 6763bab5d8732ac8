"""System models (S, L, H, R), input means, observation specs and filter coefficients.

Channel bookkeeping: Fock channels ``B_1..B_mFock`` come first, squeezed
channels ``A_1..A_msq`` second; observation rows are kept in declaration order.
Operators are stacked arrays: ``s_mat`` has shape ``(m_fock, m_fock, dim, dim)``,
``l_ops`` ``(m_fock, dim, dim)`` and ``r_ops`` ``(m_sq, dim, dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PhysicalityError, StructuralError
from .hilbert import annihilator, dag
from .noise import (
    CorrelationMatrix,
    ScalarSqueezing,
    SqueezingSpec,
    build_general_K,
    check_z_symmetry,
    validate_squeezing,
    z_matrix,
)

OPERATOR_TOL = 1e-10


@dataclass(frozen=True)
class SLHModel:
    s_mat: np.ndarray
    l_ops: np.ndarray
    r_ops: np.ndarray
    h_op: np.ndarray
    squeeze: SqueezingSpec

    def __post_init__(self):
        h = np.asarray(self.h_op, dtype=complex)
        dim = h.shape[0]
        if h.shape != (dim, dim):
            raise StructuralError(f"H must be square, got {h.shape}")
        l_ops = np.asarray(self.l_ops, dtype=complex).reshape(-1, dim, dim)
        r_ops = np.asarray(self.r_ops, dtype=complex).reshape(-1, dim, dim)
        m_fock = l_ops.shape[0]
        s_mat = np.asarray(self.s_mat, dtype=complex).reshape(m_fock, m_fock, dim, dim)
        if r_ops.shape[0] != self.squeeze.size:
            raise StructuralError(
                f"{r_ops.shape[0]} squeezed couplings but squeezing spec has {self.squeeze.size} modes"
            )
        for name, arr in (("S", s_mat), ("L", l_ops), ("R", r_ops), ("H", h)):
            if not np.all(np.isfinite(arr)):
                raise StructuralError(f"{name} has non-finite entries")
        object.__setattr__(self, "h_op", h)
        object.__setattr__(self, "l_ops", l_ops)
        object.__setattr__(self, "r_ops", r_ops)
        object.__setattr__(self, "s_mat", s_mat)
        self.validate()

    @property
    def dim(self) -> int:
        return self.h_op.shape[0]

    @property
    def m_fock(self) -> int:
        return self.l_ops.shape[0]

    @property
    def m_sq(self) -> int:
        return self.r_ops.shape[0]

    def unitarity_error(self) -> float:
        """``max |sum_l S_lj^dag S_lk - delta_jk I|``."""
        if self.m_fock == 0:
            return 0.0
        prod = np.einsum("ljba,lkbc->jkac", self.s_mat.conj(), self.s_mat)
        target = np.einsum("jk,ac->jkac", np.eye(self.m_fock), np.eye(self.dim))
        return float(np.max(np.abs(prod - target)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.h_op - dag(self.h_op))))

    def validate(self):
        if self.unitarity_error() > OPERATOR_TOL:
            raise PhysicalityError(f"S is not unitary (error {self.unitarity_error():.3e})")
        if self.hermiticity_error() > OPERATOR_TOL:
            raise PhysicalityError(f"H is not Hermitian (error {self.hermiticity_error():.3e})")
        validate_squeezing(self.squeeze).raise_if_invalid()


def _as_vector(values, size, name):
    arr = np.atleast_1d(np.asarray(values, dtype=complex))
    if arr.shape != (size,):
        raise StructuralError(f"{name} must have {size} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{name} has non-finite entries")
    return arr


class _Constant:
    # module-level callables keep models picklable for worker pools
    def __init__(self, values):
        self.values = values

    def __call__(self, t):
        return self.values


class _Piecewise:
    def __init__(self, times, table):
        self.times = times
        self.table = table

    def __call__(self, t):
        # small offset so grid times that land on a breakpoint pick the new segment
        i = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.table[max(i, 0)]


@dataclass(frozen=True)
class InputMeans:
    """Mean amplitudes ``alpha(t)`` (squeezed channels) and ``beta(t)`` (Fock channels).

    ``description`` holds the serialisable form for constant and piecewise-constant
    schedules; general callables carry ``{"kind": "callable"}``.
    """

    alpha_fn: Callable[[float], np.ndarray]
    beta_fn: Callable[[float], np.ndarray]
    m_sq: int
    m_fock: int
    description: dict = field(default_factory=lambda: {"kind": "callable"})

    @classmethod
    def constant(cls, alpha=(), beta=()):
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        beta = np.atleast_1d(np.asarray(beta, dtype=complex))
        return cls(_Constant(alpha), _Constant(beta), alpha.size, beta.size,
                   {"kind": "constant", "alpha": alpha.tolist(), "beta": beta.tolist()})

    @classmethod
    def zero(cls, m_sq: int, m_fock: int):
        return cls.constant(np.zeros(m_sq), np.zeros(m_fock))

    @classmethod
    def piecewise(cls, times, alpha_table, beta_table):
        """Value ``table[i]`` on ``[times[i], times[i+1])``; the last row holds afterwards."""
        times = np.asarray(times, dtype=float)
        alpha_table = np.asarray(alpha_table, dtype=complex).reshape(len(times), -1)
        beta_table = np.asarray(beta_table, dtype=complex).reshape(len(times), -1)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise StructuralError("piecewise times must be strictly increasing")
        return cls(_Piecewise(times, alpha_table), _Piecewise(times, beta_table),
                   alpha_table.shape[1], beta_table.shape[1],
                   {"kind": "piecewise", "times": times.tolist(),
                    "alpha": alpha_table.tolist(), "beta": beta_table.tolist()})

    def alpha(self, t: float) -> np.ndarray:
        return _as_vector(self.alpha_fn(t), self.m_sq, "alpha(t)")

    def beta(self, t: float) -> np.ndarray:
        return _as_vector(self.beta_fn(t), self.m_fock, "beta(t)")


@dataclass(frozen=True)
class ObservationSpec:
    """Measured quadratures ``Y_a = T_aj B_j^out + U_ak A_k^out + h.c.``."""

    t_mat: np.ndarray
    u_mat: np.ndarray

    def __post_init__(self):
        t_mat = np.atleast_2d(np.asarray(self.t_mat, dtype=complex))
        u_mat = np.atleast_2d(np.asarray(self.u_mat, dtype=complex))
        if t_mat.size == 0:
            t_mat = np.zeros((u_mat.shape[0], 0), dtype=complex)
        if u_mat.size == 0:
            u_mat = np.zeros((t_mat.shape[0], 0), dtype=complex)
        if t_mat.shape[0] != u_mat.shape[0]:
            raise StructuralError("T and U must have the same number of rows")
        object.__setattr__(self, "t_mat", t_mat)
        object.__setattr__(self, "u_mat", u_mat)
        coeffs = np.hstack([t_mat, u_mat])
        if coeffs.shape[0] > coeffs.shape[1] or np.linalg.matrix_rank(coeffs, tol=1e-10) < coeffs.shape[0]:
            raise StructuralError("observation rows must be linearly independent")
        check_z_symmetry(self.z_mat)

    @property
    def n_obs(self) -> int:
        return self.t_mat.shape[0]

    @property
    def z_mat(self) -> np.ndarray:
        return z_matrix(self.t_mat, self.u_mat)

    def check_model(self, model: SLHModel):
        if self.t_mat.shape[1] != model.m_fock or self.u_mat.shape[1] != model.m_sq:
            raise StructuralError(
                f"observation spec is {self.t_mat.shape[1]} Fock + {self.u_mat.shape[1]} squeezed channels; "
                f"model has {model.m_fock} + {model.m_sq}"
            )


@dataclass(frozen=True)
class KOperators:
    k_a: np.ndarray
    k_b: np.ndarray
    dissipation_min_eigenvalue: float

    @property
    def dissipative(self) -> bool:
        return self.dissipation_min_eigenvalue >= -OPERATOR_TOL


def build_k_operators(model: SLHModel) -> KOperators:
    """Damping operators ``K_A, K_B`` that make the evolution unitary.

    ``K_B = L_k^* L_k / 2`` and
    ``K_A = [R_j^*(delta+N_kj)R_k + R_j N_jk R_k^* - R_j^* M_jk R_k^* - R_j M_jk^* R_k] / 2``.
    """
    n_mat, m_mat = model.squeeze.n_mat, model.squeeze.m_mat
    r, rd = model.r_ops, dag(model.r_ops)
    l = model.l_ops
    k_b = 0.5 * np.einsum("kab,kbc->ac", dag(l), l) if model.m_fock else np.zeros((model.dim,) * 2, complex)
    eye = np.eye(model.m_sq)
    k_a = 0.5 * (
        np.einsum("jk,jab,kbc->ac", eye + n_mat.T, rd, r)
        + np.einsum("jk,jab,kbc->ac", n_mat, r, rd)
        - np.einsum("jk,jab,kbc->ac", m_mat, rd, rd)
        - np.einsum("jk,jab,kbc->ac", m_mat.conj(), r, r)
    )
    total = k_a + k_b
    herm = 0.5 * (total + dag(total))
    return KOperators(k_a, k_b, float(np.linalg.eigvalsh(herm)[0]))


def build_ltilde(model: SLHModel, means: InputMeans, obs: ObservationSpec, t: float) -> np.ndarray:
    """``L~_a = T_ak (L_k + S_kl beta_l) + U_aj (R_j + alpha_j)``, shape ``(n_obs, dim, dim)``."""
    obs.check_model(model)
    eye = np.eye(model.dim)
    beta = means.beta(t)
    alpha = means.alpha(t)
    fock = model.l_ops + np.einsum("klab,l->kab", model.s_mat, beta) if model.m_fock else model.l_ops
    sq = model.r_ops + alpha[:, None, None] * eye
    return np.einsum("ak,kij->aij", obs.t_mat, fock) + np.einsum("aj,jmn->amn", obs.u_mat, sq)


def build_rtilde(model: SLHModel, obs: ObservationSpec) -> np.ndarray:
    """``R~_a = R_j [U_ak N_jk + U_ak^* M_jk^*]``, shape ``(n_obs, dim, dim)``."""
    obs.check_model(model)
    n_mat, m_mat = model.squeeze.n_mat, model.squeeze.m_mat
    coeff = obs.u_mat @ n_mat.T + obs.u_mat.conj() @ m_mat.conj().T
    return np.einsum("aj,jmn->amn", coeff, model.r_ops)


def raise_obs_index(k: CorrelationMatrix, ops: np.ndarray) -> np.ndarray:
    """Contract with ``K^{-1}``: ``X^a = K^{ab} X_b``."""
    ops = np.asarray(ops)
    if ops.shape[0] != k.n_obs:
        raise StructuralError(f"{ops.shape[0]} operators for {k.n_obs} observations")
    return np.einsum("ab,b...->a...", k.k_inv, ops)


@dataclass(frozen=True)
class Scenario:
    """A model together with its observation spec and input means."""

    kind: str
    model: SLHModel
    obs: ObservationSpec
    means: InputMeans
    params: dict

    def correlation(self) -> CorrelationMatrix:
        return build_general_K(self.obs, self.model.squeeze)

    @property
    def dim(self) -> int:
        return self.model.dim


def _scalar_squeeze(squeeze) -> ScalarSqueezing:
    if isinstance(squeeze, ScalarSqueezing):
        return squeeze
    if isinstance(squeeze, SqueezingSpec):
        return squeeze.as_scalar()
    n, m = squeeze
    return ScalarSqueezing(float(n), complex(m))


def cavity_mixed_model(dim: int, kappa: float, omega: float, phi: float, squeeze,
                       means: InputMeans | None = None) -> Scenario:
    """Cavity ``S = e^{i phi}, L = sqrt(kappa) a, H = omega a^* a`` with its output
    mixed on a 50-50 beam splitter with a squeezed field.

    Observations: ``Y_1 = C_1 + C_1^*`` and ``Y_2 = C_2 + C_2^*`` with
    ``C_1 = (B^out + A)/sqrt2`` and ``C_2 = (B^out - A)/(sqrt2 i)``.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    sq = _scalar_squeeze(squeeze)
    a = annihilator(dim)
    eye = np.eye(dim)
    model = SLHModel(
        s_mat=np.exp(1j * phi) * eye[None, None],
        l_ops=np.sqrt(kappa) * a[None],
        r_ops=np.zeros((1, dim, dim)),
        h_op=omega * dag(a) @ a,
        squeeze=sq.to_spec(),
    )
    s2 = 1.0 / np.sqrt(2.0)
    obs = ObservationSpec(t_mat=[[s2], [-1j * s2]], u_mat=[[s2], [1j * s2]])
    means = means if means is not None else InputMeans.zero(1, 1)
    params = {"kappa": float(kappa), "omega": float(omega), "phi": float(phi), "n": sq.n, "m": complex(sq.m)}
    return Scenario("mixed_cavity", model, obs, means, params)


def cavity_direct_model(dim: int, gamma: float, omega: float, theta: float, squeeze,
                        means: InputMeans | None = None, kappa_extra: float = 0.0) -> Scenario:
    """Cavity ``R = sqrt(gamma) a, H = omega a^* a`` driven directly by squeezed light.

    The measured quadrature is ``Y = e^{i theta} A^out + e^{-i theta} A^out*``
    (``U = e^{i theta}``), giving ``K = 1 + 2n + 2 Re(m e^{2 i theta})``.
    ``kappa_extra > 0`` adds an unmeasured vacuum loss channel ``sqrt(kappa_extra) a``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    sq = _scalar_squeeze(squeeze)
    a = annihilator(dim)
    eye = np.eye(dim)
    m_fock = 1 if kappa_extra > 0 else 0
    model = SLHModel(
        s_mat=eye[None, None] if m_fock else np.zeros((0, 0, dim, dim)),
        l_ops=np.sqrt(kappa_extra) * a[None] if m_fock else np.zeros((0, dim, dim)),
        r_ops=np.sqrt(gamma) * a[None],
        h_op=omega * dag(a) @ a,
        squeeze=sq.to_spec(),
    )
    obs = ObservationSpec(t_mat=np.zeros((1, m_fock)), u_mat=[[np.exp(1j * theta)]])
    means = means if means is not None else InputMeans.zero(1, m_fock)
    params = {"gamma": float(gamma), "omega": float(omega), "theta": float(theta), "n": sq.n,
              "m": complex(sq.m), "kappa_extra": float(kappa_extra)}
    return Scenario("direct_cavity", model, obs, means, params)
