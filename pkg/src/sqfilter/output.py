"""CSV and JSON writers for trajectories, ensemble statistics and run manifests.

Numbers are written with 17 significant digits (``'%.17g'``) so files
round-trip doubles exactly and identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from . import __version__
from .general_filter import EnsembleResult, Trajectory


def fmt(x) -> str:
    return format(float(x), ".17g")


def trajectory_columns(n_obs: int, gaussian: bool) -> list[str]:
    cols = ["t", "re_pi_a", "im_pi_a", "pi_n", "re_pi_a2", "im_pi_a2", "trace_residual"]
    cols += [f"dI_{i + 1}" for i in range(n_obs)] + [f"dY_{i + 1}" for i in range(n_obs)]
    if gaussian:
        cols += ["v_cov", "re_w_cov", "im_w_cov"]
    return cols


def trajectory_rows(traj: Trajectory):
    """Rows of the trajectory table. Row ``k`` carries the increments of the step ending at ``t_k``."""
    n_obs = traj.record.n_obs
    gaussian = traj.v_cov is not None
    zeros = np.zeros(n_obs)
    for k, t in enumerate(traj.times):
        di = traj.record.di[k - 1] if k else zeros
        dy = traj.record.dy[k - 1] if k else zeros
        row = [t, traj.pi_a[k].real, traj.pi_a[k].imag, traj.pi_n[k], traj.pi_a2[k].real,
               traj.pi_a2[k].imag, traj.trace_residual[k], *di, *dy]
        if gaussian:
            row += [traj.v_cov[k], traj.w_cov[k].real, traj.w_cov[k].imag]
        yield [fmt(x) for x in row]


def write_trajectory_csv(path, traj: Trajectory):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_columns(traj.record.n_obs, traj.v_cov is not None))
        writer.writerows(trajectory_rows(traj))
    return path


def write_ensemble_csv(path, ens: EnsembleResult):
    """Ensemble means with standard errors of ``pi(a)``, ``pi(a^* a)`` and ``pi(a^2)``."""
    series = {
        "re_pi_a": ens.pi_a.real, "im_pi_a": ens.pi_a.imag, "pi_n": ens.pi_n,
        "re_pi_a2": ens.pi_a2.real, "im_pi_a2": ens.pi_a2.imag,
    }
    n = ens.n_traj
    stats = {}
    for name, data in series.items():
        stats[name] = (data.mean(axis=0), data.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(data.shape[1]))
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["t"]
        for name in series:
            header += [f"mean_{name}", f"stderr_{name}"]
        writer.writerow(header + ["n_traj"])
        for k, t in enumerate(ens.times):
            row = [fmt(t)]
            for name in series:
                row += [fmt(stats[name][0][k]), fmt(stats[name][1][k])]
            writer.writerow(row + [str(n)])
    return path


def write_rows_csv(path, header: list[str], rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_manifest(path, config: dict, seed: int, invariant_log: list, margins: dict, extra: dict | None = None):
    manifest = {
        "config": config,
        "seed": seed,
        "version": __version__,
        "started_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "invariant_log": invariant_log,
        "margins": margins,
    }
    if extra:
        manifest.update(extra)
    path = Path(path)
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path


def write_json(path, payload: dict):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path
