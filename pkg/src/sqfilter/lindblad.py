"""Unconditional master-equation evolution, the ensemble-average reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TruncationError
from .general_filter import FilterDrift, build_drift
from .hilbert import LEAKAGE_TOL, annihilator, dag, trace
from .models import InputMeans, SLHModel
from .sde import IntegrationGrid, rk4_step


@dataclass(frozen=True)
class MomentCurve:
    name: str
    times: np.ndarray
    values: np.ndarray


@dataclass
class UnconditionalResult:
    times: np.ndarray
    curves: dict
    max_trace_drift: float
    final_state: np.ndarray
    states: np.ndarray | None = None

    def __getitem__(self, name: str) -> MomentCurve:
        return self.curves[name]


def evolve_unconditional(model: SLHModel, means: InputMeans, rho0: np.ndarray, grid: IntegrationGrid,
                         a_op=None, keep_states: bool = False,
                         leak_tol: float = LEAKAGE_TOL) -> UnconditionalResult:
    """RK4 integration of ``d rho/dt = L^dag(rho)`` without renormalisation.

    Moment curves ``"a"``, ``"n"`` and ``"a2"`` are recorded at every grid time.
    """
    a_op = annihilator(model.dim) if a_op is None else a_op
    ops = {"a": a_op, "n": dag(a_op) @ a_op, "a2": a_op @ a_op}
    cache: dict[bytes, FilterDrift] = {}

    def drift_at(t):
        key = means.alpha(t).tobytes() + means.beta(t).tobytes()
        if key not in cache:
            cache[key] = build_drift(model, means, t)
        return cache[key]

    rho = np.array(rho0, dtype=complex)
    n = grid.n_steps
    values = {k: np.empty(n + 1, dtype=complex) for k in ops}
    states = np.empty((n + 1, *rho.shape), dtype=complex) if keep_states else None

    def record(k):
        for name, op in ops.items():
            values[name][k] = np.einsum("ij,ji->", rho, op)
        if keep_states:
            states[k] = rho

    record(0)
    tr0 = trace(rho).real
    trace_drift = 0.0
    for k in range(n):
        # input means are sampled on the grid: held at their value at the start of the step
        gen = drift_at(grid.t0 + k * grid.dt)
        rho = rk4_step(rho, lambda t, r: gen.schrodinger(r), grid.dt, step=k + 1)
        trace_drift = max(trace_drift, abs(trace(rho).real - tr0))
        corner = rho[-1, -1].real
        if corner > leak_tol:
            raise TruncationError(f"top Fock level population {corner:.3e} exceeds {leak_tol:g}", step=k + 1)
        record(k + 1)
    times = grid.times
    curves = {name: MomentCurve(name, times, vals) for name, vals in values.items()}
    return UnconditionalResult(times, curves, trace_drift, rho, states)
