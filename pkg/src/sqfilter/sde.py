"""Fixed-step integration kernels and reproducible random streams.

Random streams use numpy's counter-based ``Philox`` bit generator keyed by a
``SeedSequence`` built from ``(master_seed, stream_index)``. Gaussian variates
come from ``Generator.standard_normal`` (numpy's ziggurat sampler), so results
are reproducible for a fixed numpy version; bit equality across platforms is
expected but not guaranteed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrationError


@dataclass(frozen=True)
class IntegrationGrid:
    t0: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > self.t0:
            raise ValueError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")
        span = self.t_end - self.t0
        n = round(span / self.dt)
        if n < 1 or abs(n * self.dt - span) > 1e-9 * max(abs(self.t_end), 1.0):
            raise ValueError(f"dt={self.dt} does not divide the interval [{self.t0}, {self.t_end}]")

    @classmethod
    def from_span(cls, t_end: float, dt: float, t0: float = 0.0) -> "IntegrationGrid":
        return cls(float(t0), float(t_end), float(dt))

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_index),))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def derive_stream(master_seed: int, index: int) -> RngStream:
    """Independent stream ``index`` of ``master_seed``; a pure function of both."""
    if master_seed < 0 or index < 0:
        raise ValueError("seed and stream index must be non-negative")
    return RngStream(int(master_seed) % 2**64, int(index))


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise IntegrationError("non-finite value in integration", step=step)


def euler_maruyama_step(x, drift, dt, diffusion=None, increments=None, step=None):
    """``x + f dt + sum_a g_a dxi_a``.

    ``diffusion`` has shape ``(n_noise, *x.shape)`` and ``increments`` shape
    ``(n_noise,)``.
    """
    out = x + np.asarray(drift) * dt
    if diffusion is not None:
        out = out + np.tensordot(np.asarray(increments), np.asarray(diffusion), axes=(0, 0))
    _check_finite(out, step)
    return out


def rk4_step(x, rhs: Callable, dt: float, t: float = 0.0, step=None):
    """Classical fourth-order Runge-Kutta step for ``dx/dt = rhs(t, x)``."""
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = rhs(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out, step)
    return out


def coarsen_increments(increments: np.ndarray, factor: int, axis: int = 0) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments (same Brownian path, coarser grid)."""
    increments = np.moveaxis(np.asarray(increments), axis, 0)
    n = increments.shape[0]
    if n % factor:
        raise ValueError(f"{n} increments cannot be grouped in blocks of {factor}")
    out = increments.reshape(n // factor, factor, *increments.shape[1:]).sum(axis=1)
    return np.moveaxis(out, 0, axis)


def convergence_slope(dts, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("errors must be positive to fit a slope")
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)
