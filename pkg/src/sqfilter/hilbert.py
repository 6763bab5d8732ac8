"""Dense linear algebra on a truncated Fock space.

Operators are plain ``(dim, dim)`` complex arrays. Density matrices may carry
leading batch axes ``(..., dim, dim)``; every function here broadcasts over
them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import StructuralError, TruncationError

LEAKAGE_TOL = 1e-6
TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8


def dag(x: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(x, -1, -2))


def annihilator(dim: int) -> np.ndarray:
    """Mode annihilator with ``a[k-1, k] = sqrt(k)``."""
    if int(dim) < 2:
        raise StructuralError(f"truncation dimension must be >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, int(dim), dtype=float)), 1).astype(complex)


def number_operator(dim: int) -> np.ndarray:
    return np.diag(np.arange(int(dim), dtype=float)).astype(complex)


def vacuum_state(dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def corner_population(rho: np.ndarray) -> np.ndarray:
    """Population of the highest retained Fock level (truncation monitor)."""
    return np.real(rho[..., -1, -1])


def _check_leakage(rho, leak_tol):
    pop = float(np.max(corner_population(rho)))
    if pop > leak_tol:
        raise TruncationError(
            f"top Fock level population {pop:.3e} exceeds leakage tolerance {leak_tol:g}; increase dim"
        )


def coherent_state(dim: int, alpha0: complex, leak_tol: float = LEAKAGE_TOL) -> np.ndarray:
    """Projector on the truncated, renormalised coherent state ``|alpha0>``."""
    annihilator(dim)
    k = np.arange(dim)
    if alpha0 == 0:
        amp = (k == 0).astype(complex)
    else:
        log_mag = -0.5 * abs(alpha0) ** 2 + k * np.log(abs(alpha0)) - 0.5 * gammaln(k + 1)
        amp = np.exp(log_mag) * np.exp(1j * np.angle(alpha0) * k)
    amp = amp / np.linalg.norm(amp)
    rho = np.outer(amp, amp.conj())
    _check_leakage(rho, leak_tol)
    return rho


def gaussian_state(dim: int, mean: complex, v_cov: float, w_cov: complex,
                   leak_tol: float = LEAKAGE_TOL, pad: int = 60) -> np.ndarray:
    """Displaced squeezed thermal state with moments ``(mean, V, W)``.

    Built in an enlarged space of ``dim + pad`` levels and truncated. Requires
    ``V(V+1) >= |W|^2``. With ``S^dag a S = a cosh r - e^{i phi} a^dag sinh r``::

        V + 1/2 = (N_th + 1/2) cosh 2r,   W = -e^{i phi} (N_th + 1/2) sinh 2r
    """
    v_cov = float(v_cov)
    w_cov = complex(w_cov)
    nu2 = (v_cov + 0.5) ** 2 - abs(w_cov) ** 2
    if v_cov < 0 or nu2 < 0.25 - 1e-12:
        raise ValueError(f"(V, W) = ({v_cov}, {w_cov}) violates V(V+1) >= |W|^2")
    nu = np.sqrt(max(nu2, 0.25))
    n_th = nu - 0.5
    r = 0.5 * np.arctanh(min(abs(w_cov) / (v_cov + 0.5), 1.0 - 1e-15))
    phi = np.angle(-w_cov) if w_cov != 0 else 0.0
    big = dim + pad
    a = annihilator(big)
    k = np.arange(big)
    if n_th > 0:
        pops = np.exp(k * (np.log(n_th) - np.log1p(n_th)) - np.log1p(n_th))
    else:
        pops = (k == 0).astype(float)
    rho = np.diag(pops).astype(complex)
    xi = r * np.exp(1j * phi)
    sq = expm(0.5 * (np.conj(xi) * (a @ a) - xi * (dag(a) @ dag(a))))
    disp = expm(mean * dag(a) - np.conj(mean) * a)
    u = disp @ sq
    rho = (u @ rho @ dag(u))[:dim, :dim]
    rho = 0.5 * (rho + dag(rho))
    rho /= np.trace(rho).real
    _check_leakage(rho, leak_tol)
    return rho


def expectation(rho: np.ndarray, x: np.ndarray) -> np.ndarray | complex:
    """``trace(rho x)``; broadcasts over leading batch axes of ``rho``."""
    rho = np.asarray(rho)
    x = np.asarray(x)
    if rho.shape[-1] != x.shape[-1] or rho.shape[-2] != x.shape[-2]:
        raise StructuralError(f"dimension mismatch: state {rho.shape[-2:]} vs operator {x.shape[-2:]}")
    # trace(rho x) = sum_ij rho_ij x_ji
    val = np.einsum("...ij,...ji->...", rho, x)
    return complex(val) if np.ndim(val) == 0 else val


def trace(rho: np.ndarray):
    return np.einsum("...ii->...", rho)


class Moments(NamedTuple):
    mean: np.ndarray
    n: np.ndarray
    a2: np.ndarray
    v_cov: np.ndarray
    w_cov: np.ndarray


def mode_moments(rho: np.ndarray, a: np.ndarray) -> Moments:
    """First and second moments plus conditional covariances ``V, W``."""
    mean = expectation(rho, a)
    n = np.real(expectation(rho, dag(a) @ a))
    a2 = expectation(rho, a @ a)
    return Moments(mean, n, a2, n - np.abs(mean) ** 2, a2 - np.asarray(mean) ** 2)


class ThirdMoments(NamedTuple):
    adag_a2: complex
    a3: complex


def gaussian_moment_closure(mean: complex, v_cov: float, w_cov: complex) -> ThirdMoments:
    """Third moments of a Gaussian state from ``(<a>, V, W)``.

    ``<a^* a^2> = <a^*> W + 2 <a> V + <a^*> <a>^2`` and ``<a^3> = 3 <a> W + <a>^3``.
    """
    mean = complex(mean)
    return ThirdMoments(
        mean.conjugate() * w_cov + 2.0 * mean * v_cov + mean.conjugate() * mean**2,
        3.0 * mean * w_cov + mean**3,
    )


@dataclass(frozen=True)
class StateDiagnostics:
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    corner_population: float


@dataclass
class ConditionalState:
    """Normalised conditional density matrix with validity diagnostics."""

    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.ndim != 2 or self.rho.shape[0] != self.rho.shape[1]:
            raise StructuralError(f"density matrix must be square, got {self.rho.shape}")

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def expect(self, x):
        return expectation(self.rho, x)

    def diagnostics(self) -> StateDiagnostics:
        rho = self.rho
        herm = 0.5 * (rho + dag(rho))
        return StateDiagnostics(
            trace_error=abs(complex(np.trace(rho)) - 1.0),
            hermiticity_error=float(np.max(np.abs(rho - dag(rho)))),
            min_eigenvalue=float(np.linalg.eigvalsh(herm)[0]),
            corner_population=float(corner_population(rho)),
        )

    def problems(self, leak_tol: float = LEAKAGE_TOL) -> list[str]:
        d = self.diagnostics()
        out = []
        if d.trace_error > TRACE_TOL:
            out.append(f"trace error {d.trace_error:.3e}")
        if d.hermiticity_error > HERMITIAN_TOL:
            out.append(f"non-Hermitian by {d.hermiticity_error:.3e}")
        if d.min_eigenvalue < -POSITIVITY_TOL:
            out.append(f"negative eigenvalue {d.min_eigenvalue:.3e}")
        if d.corner_population > leak_tol:
            out.append(f"top-level population {d.corner_population:.3e}")
        return out


def min_eigenvalue(rho: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the Hermitian part, batched."""
    return np.linalg.eigvalsh(0.5 * (rho + dag(rho)))[..., 0]
