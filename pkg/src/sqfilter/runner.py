"""File-producing runs behind the command line: simulate and sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError
from .gaussian_filter import (
    GaussianFilterState,
    coefficients_from_scenario,
    run_gaussian_on_record,
    run_gaussian_trajectory,
)
from .general_filter import EnsembleResult, Trajectory, run_ensemble, run_trajectory
from .hilbert import POSITIVITY_TOL
from .output import write_ensemble_csv, write_manifest, write_rows_csv, write_trajectory_csv

MIN_EIG_TOL = -1e-6
HEISENBERG_TOL = -1e-9


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)
    invariant_log: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.invariant_log


def _log_general(res: RunResult, label: str, max_residual: float, min_eig: float):
    res.margins[f"{label}.max_trace_residual"] = max_residual
    res.margins[f"{label}.min_eigenvalue"] = min_eig
    if min_eig < MIN_EIG_TOL:
        res.invariant_log.append({"check": f"{label}.min_eigenvalue", "value": min_eig, "tolerance": MIN_EIG_TOL})
    elif min_eig < -POSITIVITY_TOL:
        res.margins[f"{label}.positivity_note"] = "small negative eigenvalue within tolerance"


def _log_gaussian(res: RunResult, label: str, traj: Trajectory):
    margin = float(np.min(traj.v_cov * (traj.v_cov + 1.0) - np.abs(traj.w_cov) ** 2))
    res.margins[f"{label}.min_heisenberg_margin"] = margin
    if margin < HEISENBERG_TOL:
        res.invariant_log.append({"check": f"{label}.heisenberg", "value": margin, "tolerance": HEISENBERG_TOL})


def _gaussian_ensemble(cfg, coeffs, state0, sc, n_traj, seed) -> EnsembleResult:
    grid = cfg.grid
    trajs = [run_gaussian_trajectory(coeffs, state0, grid.t_end - grid.t0, grid.dt, seed, sc.means, index=i)
             for i in range(n_traj)]
    step = cfg.record_every
    zeros = np.zeros(n_traj)
    return EnsembleResult(
        times=grid.times[::step],
        pi_a=np.stack([t.pi_a[::step] for t in trajs]),
        pi_n=np.stack([t.pi_n[::step] for t in trajs]),
        pi_a2=np.stack([t.pi_a2[::step] for t in trajs]),
        max_trace_residual=zeros,
        min_eigenvalue=zeros,
        max_corner_population=zeros,
    )


def simulate(cfg: ScenarioConfig, out_dir, seed: int | None = None, backend: str | None = None,
             workers: int | None = None, write: bool = True) -> RunResult:
    """Run the configured scenario and write CSV files plus ``manifest.json`` into ``out_dir``."""
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if backend is not None:
        overrides["backend"] = backend
    for key, val in overrides.items():
        cfg = cfg.with_value(key, val)
    if workers is not None:
        cfg = cfg.with_value("ensemble.workers", workers)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sc = cfg.build_scenario()
    grid = cfg.grid
    t_end = grid.t_end - grid.t0
    seed = cfg.seed
    n_traj = cfg.ensemble_size
    res = RunResult()
    res.margins["k_matrix"] = sc.correlation().k_mat
    if cfg.backend == "both" and n_traj > 1:
        raise ConfigError("ensemble.size", "backend 'both' pairs single trajectories; use size = 1")

    if cfg.backend in ("general", "both"):
        rho0 = cfg.initial_density_matrix()
        if n_traj == 1:
            traj = run_trajectory(sc.model, sc.obs, sc.means, rho0, t_end, grid.dt, seed=seed,
                                  scheme=cfg.scheme, check_every=cfg.check_every, leak_tol=cfg.leak_tol)
            _log_general(res, "general", float(traj.trace_residual.max()), traj.min_eigenvalue)
            res.files.append(write_trajectory_csv(out_dir / "traj_00000_general.csv", traj))
            general_traj = traj
        else:
            ens = run_ensemble(sc.model, sc.obs, sc.means, rho0, t_end, grid.dt, n_traj, seed,
                               batch_size=cfg.batch_size, workers=cfg.workers, scheme=cfg.scheme,
                               record_every=cfg.record_every, check_every=cfg.check_every,
                               leak_tol=cfg.leak_tol)
            _log_general(res, "general", float(ens.max_trace_residual.max()), float(ens.min_eigenvalue.min()))
            res.files.append(write_ensemble_csv(out_dir / "ensemble_general.csv", ens))

    if cfg.backend in ("gaussian", "both"):
        coeffs = coefficients_from_scenario(sc)
        v0, w0 = cfg.initial_covariances()
        state0 = GaussianFilterState(cfg.initial_mean(), v0, w0)
        if cfg.backend == "both":
            traj = run_gaussian_on_record(coeffs, state0, general_traj.record.dy, grid.dt, sc.means)
            res.margins["pathwise_max_gap"] = float(np.max(np.abs(traj.pi_a - general_traj.pi_a)))
            _log_gaussian(res, "gaussian", traj)
            res.files.append(write_trajectory_csv(out_dir / "traj_00000_gaussian.csv", traj))
        elif n_traj == 1:
            traj = run_gaussian_trajectory(coeffs, state0, t_end, grid.dt, seed, sc.means)
            _log_gaussian(res, "gaussian", traj)
            res.files.append(write_trajectory_csv(out_dir / "traj_00000_gaussian.csv", traj))
        else:
            ens = _gaussian_ensemble(cfg, coeffs, state0, sc, n_traj, seed)
            res.files.append(write_ensemble_csv(out_dir / "ensemble_gaussian.csv", ens))

    if write:
        res.files.append(write_manifest(out_dir / "manifest.json", cfg.raw, seed, res.invariant_log, res.margins))
    return res


SWEEP_COLUMNS = ["value", "v_final", "re_w_final", "im_w_final", "re_pi_a_final", "im_pi_a_final",
                 "pi_n_final", "max_trace_residual", "k_min_eigenvalue"]


def sweep(cfg: ScenarioConfig, parameter: str, values, out_dir) -> RunResult:
    """One single-trajectory run per value of ``parameter``; writes ``sweep.csv`` and a manifest."""
    values = list(values)
    if not values:
        raise ConfigError(parameter, "sweep needs at least one value")
    cfg.with_value(parameter, values[0])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    res = RunResult()
    k_values = []
    for value in values:
        sub = cfg.with_value(parameter, value).with_value("ensemble.size", 1)
        sc = sub.build_scenario()
        k = sc.correlation()
        k_values.append({"value": value, "k_matrix": k.k_mat})
        grid = sub.grid
        t_end = grid.t_end - grid.t0
        if sub.backend == "general":
            traj = run_trajectory(sc.model, sc.obs, sc.means, sub.initial_density_matrix(), t_end, grid.dt,
                                  seed=sub.seed, scheme=sub.scheme, check_every=sub.check_every,
                                  leak_tol=sub.leak_tol)
            v_final = traj.pi_n[-1] - abs(traj.pi_a[-1]) ** 2
            w_final = traj.pi_a2[-1] - traj.pi_a[-1] ** 2
            _log_general(res, f"value={value}", float(traj.trace_residual.max()), traj.min_eigenvalue)
        else:
            coeffs = coefficients_from_scenario(sc)
            v0, w0 = sub.initial_covariances()
            traj = run_gaussian_trajectory(coeffs, GaussianFilterState(sub.initial_mean(), v0, w0),
                                           t_end, grid.dt, sub.seed, sc.means)
            v_final, w_final = traj.v_cov[-1], traj.w_cov[-1]
            _log_gaussian(res, f"value={value}", traj)
        rows.append([float(value), float(v_final), w_final.real, w_final.imag, traj.pi_a[-1].real,
                     traj.pi_a[-1].imag, traj.pi_n[-1], float(traj.trace_residual.max()),
                     float(np.linalg.eigvalsh(k.k_mat)[0])])
    res.files.append(write_rows_csv(out_dir / "sweep.csv", SWEEP_COLUMNS, rows))
    res.margins["k_values"] = k_values
    res.files.append(write_manifest(out_dir / "manifest.json", cfg.raw, cfg.seed, res.invariant_log,
                                    res.margins, {"sweep": {"parameter": parameter, "values": values}}))
    return res
