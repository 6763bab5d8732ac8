"""Closed-form Gaussian filters for a single cavity mode.

Two scenarios are covered:

* mixed: cavity ``L = sqrt(kappa) a`` whose output is mixed on a 50-50 beam
  splitter with a squeezed field of real ``m``; two quadratures are observed;
* direct: cavity driven by squeezed light through ``R = sqrt(gamma) a``;
  one quadrature ``e^{i theta} A^out + h.c.`` is observed.

The conditional state is Gaussian with mean ``pi(a)`` and covariances
``V = pi(a^* a) - |pi(a)|^2`` and ``W = pi(a^2) - pi(a)^2``. The covariances
obey deterministic Riccati equations (RK4); the mean is stepped by
Euler-Maruyama with ``V, W`` taken at the start of the step.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError, UnsupportedScenarioError
from .general_filter import MeasurementRecord, Trajectory, draw_innovations
from .models import InputMeans, Scenario
from .noise import CorrelationMatrix
from .sde import IntegrationGrid

V_TOL = 1e-10
HEISENBERG_TOL = 1e-9
QUAD_COEFFS = ("gamma_over_k", "kappa_half")


@dataclass(frozen=True)
class GaussianFilterState:
    mean: complex
    v_cov: float
    w_cov: complex

    @property
    def heisenberg_margin(self) -> float:
        """``V(V+1) - |W|^2``; must stay non-negative."""
        return float(self.v_cov * (self.v_cov + 1.0) - abs(self.w_cov) ** 2)

    def check(self):
        if self.v_cov < -V_TOL or self.heisenberg_margin < -HEISENBERG_TOL:
            raise ValueError(
                f"(V, W) = ({self.v_cov}, {self.w_cov}) violates V >= 0 or V(V+1) >= |W|^2"
            )
        return self


@dataclass(frozen=True)
class MixedCoefficients:
    kappa: float
    omega: float
    phi: float
    n: float
    m: float

    def __post_init__(self):
        if abs(complex(self.m).imag) > 0:
            raise UnsupportedScenarioError(
                "the closed-form mixed filter needs real m; use the general filter for complex m"
            )
        object.__setattr__(self, "m", float(complex(self.m).real))
        if self.delta <= 0:
            raise ValueError(f"(1+n)^2 - m^2 = {self.delta} must be positive")

    @property
    def delta(self) -> float:
        return (1.0 + self.n) ** 2 - self.m**2

    @property
    def k_matrix(self) -> np.ndarray:
        return np.diag([1.0 + self.n + self.m, 1.0 + self.n - self.m])


@dataclass(frozen=True)
class DirectCoefficients:
    """Direct-drive coefficients; ``quad_coeff`` selects the factor on the squared
    term of the ``W`` equation (``"kappa_half"`` is kept only as a regression variant)."""

    gamma: float
    omega: float
    theta: float
    n: float
    m: complex
    quad_coeff: str = "gamma_over_k"

    def __post_init__(self):
        if self.quad_coeff not in QUAD_COEFFS:
            raise ValueError(f"quad_coeff must be one of {QUAD_COEFFS}")
        # cached scalars for the Riccati right-hand side
        phase = complex(np.exp(1j * self.theta))
        object.__setattr__(self, "_phase", phase)
        object.__setattr__(self, "_k", float(1.0 + 2.0 * self.n + 2.0 * (complex(self.m) * phase**2).real))
        if self.k <= 0:
            raise ValueError(f"K = {self.k} must be positive")

    @property
    def k(self) -> float:
        """``1 + 2n + 2 Re(m e^{2 i theta})``."""
        return self._k

    @property
    def k_matrix(self) -> np.ndarray:
        return np.array([[self.k]])

    def z(self, v, w):
        return self._phase.conjugate() * (v - self.n) + self._phase * (w - self.m)


def coefficients_from_scenario(sc: Scenario, quad_coeff: str = "gamma_over_k"):
    p = sc.params
    if sc.kind == "mixed_cavity":
        return MixedCoefficients(p["kappa"], p["omega"], p["phi"], p["n"], p["m"])
    if sc.kind == "direct_cavity":
        if p.get("kappa_extra", 0.0) > 0:
            raise UnsupportedScenarioError("the closed-form direct filter has no extra loss channel")
        return DirectCoefficients(p["gamma"], p["omega"], p["theta"], p["n"], p["m"], quad_coeff)
    raise UnsupportedScenarioError(f"no closed-form filter for scenario {sc.kind!r}")


def riccati_rhs_mixed(v, w, c: MixedCoefficients):
    """Right-hand sides ``(dV/dt, dW/dt)`` of the mixed-scenario Riccati equations."""
    kap, d = c.kappa, c.delta
    dv = -kap * v - kap * (1.0 + c.n) / d * (v**2 + abs(w) ** 2) + 2.0 * kap * c.m / d * v * w.real
    dw = (-2.0 * (0.5 * kap + 1j * c.omega) * w - 2.0 * kap * (1.0 + c.n) / d * w * v
          + kap * c.m / d * (v**2 + w**2))
    return dv, dw


def riccati_rhs_direct(v, w, c: DirectCoefficients):
    """``dV/dt = -g(V-n) - (g/K)|z|^2``, ``dW/dt = -2i w W - g(W-m) - q z^2``
    with ``z = e^{-i theta}(V-n) + e^{i theta}(W-m)`` and ``q = g/K``."""
    g = c.gamma
    z = c.z(v, w)
    q = g / c.k if c.quad_coeff == "gamma_over_k" else 0.5 * g
    dv = -g * (v - c.n) - g / c.k * abs(z) ** 2
    dw = -2j * c.omega * w - g * (w - c.m) - q * z**2
    return dv, dw


def _rhs(c):
    return riccati_rhs_mixed if isinstance(c, MixedCoefficients) else riccati_rhs_direct


@dataclass(frozen=True)
class CovariancePath:
    times: np.ndarray
    v_cov: np.ndarray
    w_cov: np.ndarray

    @property
    def min_heisenberg_margin(self) -> float:
        return float(np.min(self.v_cov * (self.v_cov + 1.0) - np.abs(self.w_cov) ** 2))


def covariance_step(v: float, w: complex, c, dt: float, step: int | None = None):
    """One RK4 step of the Riccati pair, packed as ``(V, Re W, Im W)``."""
    rhs = _rhs(c)
    # scalar RK4: array round trips dominate the cost at this size
    v, w = float(v), complex(w)
    h = 0.5 * dt
    k1v, k1w = rhs(v, w, c)
    k2v, k2w = rhs(v + h * k1v, w + h * k1w, c)
    k3v, k3w = rhs(v + h * k2v, w + h * k2w, c)
    k4v, k4w = rhs(v + dt * k3v, w + dt * k3w, c)
    v_new = float(v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))
    w_new = complex(w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w))
    if not (math.isfinite(v_new) and cmath.isfinite(w_new)):
        raise IntegrationError("non-finite covariances", step=step)
    if v_new < -V_TOL or v_new * (v_new + 1.0) - abs(w_new) ** 2 < -HEISENBERG_TOL:
        raise IntegrationError(f"covariances left the physical region (V={v_new}, W={w_new}); reduce dt",
                               step=step)
    return v_new, w_new


def integrate_covariances(c, v0: float, w0: complex, t_end: float, dt: float) -> CovariancePath:
    """RK4 solution of the Riccati equations sampled on the grid."""
    GaussianFilterState(0j, v0, w0).check()
    grid = IntegrationGrid.from_span(t_end, dt)
    v = np.empty(grid.n_steps + 1)
    w = np.empty(grid.n_steps + 1, dtype=complex)
    v[0], w[0] = v0, w0
    for k in range(grid.n_steps):
        v[k + 1], w[k + 1] = covariance_step(v[k], w[k], c, dt, step=k + 1)
    return CovariancePath(grid.times, v, w)


def mean_step_mixed(mean, v, w, c: MixedCoefficients, beta, d1, d2, dt, rescaled: bool = True):
    """Euler step of the mixed-scenario mean.

    With ``rescaled`` the drive is the unit-variance pair ``dW_1, dW_2``;
    otherwise the innovations ``dI_1, dI_2`` (variances ``1+n+m``, ``1+n-m``).
    """
    kap = c.kappa
    s_plus, s_minus = 1.0 + c.n + c.m, 1.0 + c.n - c.m
    if rescaled:
        g1, g2 = 1.0 / np.sqrt(s_plus), 1.0 / np.sqrt(s_minus)
    else:
        g1, g2 = 1.0 / s_plus, 1.0 / s_minus
    drift = -((0.5 * kap + 1j * c.omega) * mean + np.sqrt(kap) * np.exp(1j * c.phi) * beta)
    root = np.sqrt(0.5 * kap)
    return mean + drift * dt + root * g1 * (w + v) * d1 - 1j * root * g2 * (w - v) * d2


def mean_step_direct(mean, v, w, c: DirectCoefficients, alpha, di, dt):
    """Euler step ``-(g/2 + i w) pi(a) dt - sqrt(g) alpha dt + (sqrt(g)/K) z dI``."""
    g = c.gamma
    drift = -(0.5 * g + 1j * c.omega) * mean - np.sqrt(g) * alpha
    return mean + drift * dt + np.sqrt(g) / c.k * c.z(v, w) * di


def innovations_mixed(mean, c: MixedCoefficients, beta, alpha, dy1, dy2, dt):
    """Innovations of the two beam-splitter quadratures."""
    root = np.sqrt(2.0)
    drive = np.exp(1j * c.phi) * beta
    half = 0.5 * np.sqrt(c.kappa)
    di1 = dy1 - root * (half * 2.0 * np.real(mean) + np.real(drive + alpha)) * dt
    di2 = dy2 - root * (half * 2.0 * np.imag(mean) + np.imag(drive) - np.imag(alpha)) * dt
    return di1, di2


def innovations_direct(mean, c: DirectCoefficients, alpha, dy, dt):
    """``dI = dY - 2 Re(e^{i theta}(sqrt(g) pi(a) + alpha)) dt``."""
    return dy - 2.0 * np.real(np.exp(1j * c.theta) * (np.sqrt(c.gamma) * mean + alpha)) * dt


def _scalar_means(means: InputMeans | None, t: float):
    if means is None:
        return 0j, 0j
    alpha = means.alpha(t)
    beta = means.beta(t)
    return (complex(alpha[0]) if alpha.size else 0j), (complex(beta[0]) if beta.size else 0j)


def _run(c, state0: GaussianFilterState, n_steps: int, dt: float, drive: np.ndarray,
         drive_is_record: bool, means: InputMeans | None, t0: float = 0.0) -> Trajectory:
    state0.check()
    mixed = isinstance(c, MixedCoefficients)
    n_obs = 2 if mixed else 1
    drive = np.asarray(drive, dtype=float).reshape(n_steps, n_obs)
    grid = IntegrationGrid(t0, t0 + n_steps * dt, dt)
    mean = np.empty(n_steps + 1, dtype=complex)
    v = np.empty(n_steps + 1)
    w = np.empty(n_steps + 1, dtype=complex)
    di = np.empty((n_steps, n_obs))
    dy = np.empty((n_steps, n_obs))
    mean[0], v[0], w[0] = state0.mean, state0.v_cov, state0.w_cov
    for k in range(n_steps):
        t = t0 + k * dt
        alpha, beta = _scalar_means(means, t)
        mu = mean[k]
        # innovations of a zero observation are minus the predicted increment
        if mixed:
            pred = -np.array(innovations_mixed(mu, c, beta, alpha, 0.0, 0.0, dt))
        else:
            pred = -np.array([innovations_direct(mu, c, alpha, 0.0, dt)])
        if drive_is_record:
            dy[k] = drive[k]
            di[k] = drive[k] - pred
        else:
            di[k] = drive[k]
            dy[k] = drive[k] + pred
        if mixed:
            mean[k + 1] = mean_step_mixed(mu, v[k], w[k], c, beta, di[k, 0], di[k, 1], dt, rescaled=False)
        else:
            mean[k + 1] = mean_step_direct(mu, v[k], w[k], c, alpha, di[k, 0], dt)
        if not np.isfinite(mean[k + 1]):
            raise IntegrationError("non-finite mean", step=k + 1)
        v[k + 1], w[k + 1] = covariance_step(v[k], w[k], c, dt, step=k + 1)
    return Trajectory(
        times=grid.times,
        pi_a=mean,
        pi_n=v + np.abs(mean) ** 2,
        pi_a2=w + mean**2,
        trace_residual=np.zeros(n_steps + 1),
        record=MeasurementRecord(grid.times, dy, di),
        v_cov=v,
        w_cov=w,
    )


def run_gaussian_on_record(c, state0: GaussianFilterState, dy: np.ndarray, dt: float,
                           means: InputMeans | None = None, t0: float = 0.0) -> Trajectory:
    """Filter the observation increments ``dy`` of shape ``(n_steps, n_obs)``."""
    dy = np.asarray(dy, dtype=float)
    return _run(c, state0, dy.shape[0], dt, dy, True, means, t0)


def run_gaussian_trajectory(c, state0: GaussianFilterState, t_end: float, dt: float, seed: int,
                            means: InputMeans | None = None, index: int = 0, t0: float = 0.0) -> Trajectory:
    """Innovation-driven trajectory using stream ``(seed, index)``."""
    grid = IntegrationGrid(t0, t0 + t_end, dt)
    k = CorrelationMatrix.from_matrix(c.k_matrix)
    di = draw_innovations(k, dt, grid.n_steps, seed, index)
    return _run(c, state0, grid.n_steps, dt, di, False, means, t0)
