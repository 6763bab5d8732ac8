import csv
import json

import numpy as np

from sqfilter import cavity_direct_model, cavity_mixed_model
from sqfilter.gaussian_filter import GaussianFilterState, coefficients_from_scenario, run_gaussian_trajectory
from sqfilter.general_filter import run_ensemble, run_trajectory
from sqfilter.hilbert import coherent_state, vacuum_state
from sqfilter.output import fmt, trajectory_columns, write_ensemble_csv, write_manifest, write_trajectory_csv


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fmt_round_trips_doubles():
    rng = np.random.default_rng(0)
    for x in rng.normal(size=200) * 10.0 ** rng.integers(-12, 12, size=200):
        assert float(fmt(x)) == x
    assert fmt(0.1) == "0.10000000000000001"


def test_general_trajectory_csv(tmp_path):
    sc = cavity_mixed_model(12, 1.0, 0.5, 0.0, (0.5, 0.3))
    traj = run_trajectory(sc.model, sc.obs, sc.means, coherent_state(12, 0.5), 0.05, 1e-3, seed=2)
    rows = read_csv(write_trajectory_csv(tmp_path / "t.csv", traj))
    assert rows[0] == trajectory_columns(2, gaussian=False)
    assert len(rows) == 1 + 51
    header = rows[0]
    # the initial row carries no increments
    for name in ("dI_1", "dI_2", "dY_1", "dY_2", "trace_residual"):
        assert float(rows[1][header.index(name)]) == 0.0
    assert float(rows[2][header.index("dY_1")]) == traj.record.dy[0, 0]
    assert float(rows[-1][header.index("pi_n")]) == traj.pi_n[-1]


def test_gaussian_trajectory_csv_has_covariances(tmp_path):
    sc = cavity_direct_model(12, 1.0, 0.3, 0.0, (0.5, 0.3))
    coeffs = coefficients_from_scenario(sc)
    traj = run_gaussian_trajectory(coeffs, GaussianFilterState(0.0, 0.0, 0.0), 0.01, 1e-3, 4, sc.means)
    rows = read_csv(write_trajectory_csv(tmp_path / "g.csv", traj))
    assert rows[0][-3:] == ["v_cov", "re_w_cov", "im_w_cov"]
    assert float(rows[-1][-3]) == traj.v_cov[-1]


def test_ensemble_csv_statistics(tmp_path):
    sc = cavity_direct_model(8, 1.0, 0.0, 0.0, (0.5, 0.0))
    ens = run_ensemble(sc.model, sc.obs, sc.means, vacuum_state(8), 0.02, 1e-3, 6, seed=3,
                       batch_size=4, record_every=10)
    rows = read_csv(write_ensemble_csv(tmp_path / "e.csv", ens))
    header = rows[0]
    assert header[0] == "t" and header[-1] == "n_traj"
    assert len(rows) == 1 + 3
    last = rows[-1]
    assert float(last[header.index("mean_pi_n")]) == ens.pi_n[:, -1].mean()
    se = ens.pi_n[:, -1].std(ddof=1) / np.sqrt(6)
    assert float(last[header.index("stderr_pi_n")]) == se
    assert last[-1] == "6"


def test_manifest_fields(tmp_path):
    path = write_manifest(tmp_path / "manifest.json", {"dim": 4}, 7, [], {"k": np.eye(2) * (1 + 1j)})
    data = json.loads(path.read_text())
    assert set(data) == {"config", "seed", "version", "started_at", "invariant_log", "margins"}
    assert data["seed"] == 7 and data["config"] == {"dim": 4}
    # complex entries are written as [re, im]
    assert data["margins"]["k"][0][0] == [1.0, 1.0]
