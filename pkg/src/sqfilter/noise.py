"""Squeezed-field statistics: Ito-table matrices, correlation matrices and noise.

The squeezed input channels are described by two matrices ``N`` (Hermitian)
and ``M`` (symmetric) through the Ito products::

    dA_j dA_k^* = (delta_jk + N_kj) dt     dA_j^* dA_k = N_jk dt
    dA_j dA_k   = M_jk dt                  dA_j^* dA_k^* = M_kj^* dt

Quadratures are ``Q = A + A^*`` and ``P = (A - A^*)/i`` so that the vacuum
has unit quadrature variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PhysicalityError, StructuralError

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-10
Z_SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class ScalarSqueezing:
    """Single-mode squeezing numbers ``(n, m)`` with ``|m|^2 <= n(n+1)``."""

    n: float
    m: complex = 0.0

    def __post_init__(self):
        if not np.isfinite(self.n) or not np.isfinite(complex(self.m)):
            raise StructuralError("squeezing numbers must be finite")

    @property
    def margin(self) -> float:
        """``n(n+1) - |m|^2``; negative values are unphysical."""
        return float(self.n * (self.n + 1.0) - abs(self.m) ** 2)

    def to_spec(self) -> "SqueezingSpec":
        return SqueezingSpec(np.array([[self.n]], dtype=complex), np.array([[self.m]], dtype=complex))


@dataclass(frozen=True)
class SqueezingSpec:
    """Multi-mode squeezing matrices ``N`` (Hermitian) and ``M`` (symmetric)."""

    n_mat: np.ndarray
    m_mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_mat", np.atleast_2d(np.asarray(self.n_mat, dtype=complex)))
        object.__setattr__(self, "m_mat", np.atleast_2d(np.asarray(self.m_mat, dtype=complex)))

    @classmethod
    def vacuum(cls, size: int = 1) -> "SqueezingSpec":
        return cls(np.zeros((size, size)), np.zeros((size, size)))

    @classmethod
    def scalar(cls, n: float, m: complex = 0.0) -> "SqueezingSpec":
        return ScalarSqueezing(n, m).to_spec()

    @property
    def size(self) -> int:
        return self.n_mat.shape[0]

    def as_scalar(self) -> ScalarSqueezing:
        if self.size != 1:
            raise StructuralError(f"expected a single squeezed mode, got {self.size}")
        return ScalarSqueezing(float(self.n_mat[0, 0].real), complex(self.m_mat[0, 0]))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_squeezing`.

    ``min_eigenvalue`` is the smallest eigenvalue of ``C + iJ``; ``margin`` is
    ``n(n+1) - |m|^2`` for a single mode and equals ``min_eigenvalue`` otherwise.
    """

    ok: bool
    min_eigenvalue: float
    margin: float
    message: str = ""

    def raise_if_invalid(self):
        if not self.ok:
            raise PhysicalityError(self.message)
        return self


def _check_shapes(spec: SqueezingSpec):
    n_mat, m_mat = spec.n_mat, spec.m_mat
    if n_mat.ndim != 2 or n_mat.shape[0] != n_mat.shape[1]:
        raise StructuralError(f"N must be square, got shape {n_mat.shape}")
    if m_mat.shape != n_mat.shape:
        raise StructuralError(f"M has shape {m_mat.shape}, N has shape {n_mat.shape}")


def symplectic_form(size: int) -> np.ndarray:
    """``J = (+) [[0, 1], [-1, 0]]`` in the interleaved ``(Q1, P1, Q2, P2, ...)`` order."""
    return np.kron(np.eye(size), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def build_quadrature_covariance(spec: SqueezingSpec) -> np.ndarray:
    """Return the real symmetric quadrature covariance ``C`` (interleaved order).

    Blocks follow from the Ito table::

        C^QQ = I + N + N^T + M + M^*
        C^PP = I + N + N^T - M - M^*
        C^QP = 2 Im M + 2 Im N
    """
    _check_shapes(spec)
    n_mat, m_mat = spec.n_mat, spec.m_mat
    size = spec.size
    eye = np.eye(size)
    cqq = (eye + n_mat + n_mat.T + m_mat + m_mat.conj()).real
    cpp = (eye + n_mat + n_mat.T - m_mat - m_mat.conj()).real
    cqp = 2.0 * m_mat.imag + 2.0 * n_mat.imag
    cov = np.empty((2 * size, 2 * size))
    cov[0::2, 0::2] = cqq
    cov[1::2, 1::2] = cpp
    cov[0::2, 1::2] = cqp
    cov[1::2, 0::2] = cqp.T
    return cov


def validate_squeezing(spec: SqueezingSpec) -> ValidationReport:
    """Check Hermiticity/symmetry of ``N, M`` and the uncertainty relation ``C + iJ >= 0``."""
    _check_shapes(spec)
    n_mat, m_mat = spec.n_mat, spec.m_mat
    herm_err = float(np.max(np.abs(n_mat - n_mat.conj().T), initial=0.0))
    sym_err = float(np.max(np.abs(m_mat - m_mat.T), initial=0.0))
    cov = build_quadrature_covariance(spec)
    min_eig = float(np.linalg.eigvalsh(cov + 1j * symplectic_form(spec.size))[0]) if spec.size else 0.0
    if spec.size == 1:
        margin = float(n_mat[0, 0].real * (n_mat[0, 0].real + 1.0) - abs(m_mat[0, 0]) ** 2)
        physical = margin >= -SYMMETRY_TOL and n_mat[0, 0].real >= 0.0
    else:
        margin = min_eig
        physical = min_eig >= -PHYSICALITY_TOL
    problems = []
    if herm_err > SYMMETRY_TOL:
        problems.append(f"N not Hermitian (max deviation {herm_err:.3e})")
    if sym_err > SYMMETRY_TOL:
        problems.append(f"M not symmetric (max deviation {sym_err:.3e})")
    if not physical:
        problems.append(
            f"uncertainty relation violated: min eigenvalue of C+iJ = {min_eig:.3e}, margin {margin:.3e}"
        )
    return ValidationReport(not problems, min_eig, margin, "; ".join(problems))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Real symmetric observation correlation ``K`` (``dY dY^T = K dt``)."""

    k_mat: np.ndarray
    k_inv: np.ndarray = field(repr=False)
    delta: float

    @classmethod
    def from_matrix(cls, k_mat) -> "CorrelationMatrix":
        k_mat = np.atleast_2d(np.asarray(k_mat, dtype=float))
        if k_mat.shape[0] != k_mat.shape[1]:
            raise StructuralError(f"K must be square, got {k_mat.shape}")
        if np.max(np.abs(k_mat - k_mat.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(k_mat).max()):
            raise StructuralError("K must be symmetric")
        delta = float(np.linalg.det(k_mat))
        if abs(delta) < 1e-14:
            raise PhysicalityError("K is singular; the squeezing parameters are unphysical")
        k_inv = np.linalg.inv(k_mat)
        if np.max(np.abs(k_mat @ k_inv - np.eye(len(k_mat)))) > 1e-12 * max(1.0, np.linalg.cond(k_mat)):
            raise PhysicalityError("K is numerically singular")
        return cls(k_mat, k_inv, delta)

    @property
    def n_obs(self) -> int:
        return self.k_mat.shape[0]

    def is_positive_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.k_mat)[0] > 0.0)

    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.k_mat)
        except np.linalg.LinAlgError as exc:
            raise PhysicalityError("K is not positive definite; cannot factorise") from exc


def build_example_K(s: ScalarSqueezing) -> CorrelationMatrix:
    """Correlation of the beam-splitter quadratures: ``[[1+n+m', m''], [m'', 1+n-m']]``."""
    n, m = float(s.n), complex(s.m)
    k = np.array([[1.0 + n + m.real, m.imag], [m.imag, 1.0 + n - m.real]])
    return CorrelationMatrix.from_matrix(k)


def z_matrix(t_mat, u_mat) -> np.ndarray:
    """``Z = T T^dagger + U U^dagger``; joint measurability requires ``Z = Z^T``."""
    t_mat = np.asarray(t_mat, dtype=complex)
    u_mat = np.asarray(u_mat, dtype=complex)
    return t_mat @ t_mat.conj().T + u_mat @ u_mat.conj().T


def check_z_symmetry(z: np.ndarray):
    from .errors import NonCommutingObservationError

    err = float(np.max(np.abs(z - z.T), initial=0.0))
    if err > Z_SYMMETRY_TOL:
        raise NonCommutingObservationError(
            f"non-commuting observation set: |Z - Z^T| = {err:.3e} > {Z_SYMMETRY_TOL:g}"
        )


def build_general_K(obs, spec: SqueezingSpec) -> CorrelationMatrix:
    """Correlation matrix of the observations ``Y_a = T_aj B_j + U_ak A_k + h.c.``.

    Each term is the Ito product of the corresponding noise increments::

        K = Z + U N^T U^dagger + U^* N U^T + U M U^T + U^* M^* U^dagger^T
    """
    t_mat = np.asarray(obs.t_mat, dtype=complex)
    u_mat = np.asarray(obs.u_mat, dtype=complex)
    if u_mat.shape[1] != spec.size:
        raise StructuralError(f"U has {u_mat.shape[1]} columns but there are {spec.size} squeezed modes")
    z = z_matrix(t_mat, u_mat)
    check_z_symmetry(z)
    n_mat, m_mat = spec.n_mat, spec.m_mat
    uc = u_mat.conj()
    k = (
        z
        + u_mat @ n_mat.T @ u_mat.conj().T
        + uc @ n_mat @ u_mat.T
        + u_mat @ m_mat @ u_mat.T
        + uc @ m_mat.conj() @ uc.T
    )
    if np.max(np.abs(k.imag), initial=0.0) > Z_SYMMETRY_TOL:
        raise StructuralError("correlation matrix has an imaginary part; check N and M")
    k = k.real
    return CorrelationMatrix.from_matrix(0.5 * (k + k.T))


def sample_correlated_increments(k: CorrelationMatrix, dt: float, rng: np.random.Generator, size=None):
    """Draw zero-mean Gaussian increments with covariance ``K dt``.

    Uses the lower Cholesky factor ``F`` (``F F^T = K``). With ``size`` the
    result has shape ``(*size, n_obs)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    chol = k.cholesky()
    shape = (k.n_obs,) if size is None else (*np.atleast_1d(size), k.n_obs)
    z = rng.standard_normal(shape)
    return (z @ chol.T) * np.sqrt(dt)


def kossakowski_matrix(spec: SqueezingSpec) -> np.ndarray:
    """Coefficient matrix of the squeezed dissipator in the basis ``(R_1.., R_1^*..)``.

    The dual generator contribution is ``sum_ij c_ij (F_i rho F_j^* - {F_j^* F_i, rho}/2)``
    with ``c = [[I + N, -M^*], [-M, N^T]]``.
    """
    n_mat, m_mat = spec.n_mat, spec.m_mat
    size = spec.size
    return np.block([[np.eye(size) + n_mat, -m_mat.conj()], [-m_mat, n_mat.T]])
