"""Scenario configuration files (TOML).

Top-level keys ``scenario``, ``dim``, ``seed``, ``backend`` plus the tables
``[physics]``, ``[squeezing]``, ``[means]``, ``[initial]``, ``[grid]``,
``[ensemble]``, ``[filter]`` and, for ``custom_slh``, ``[custom]``. See the
README for the full grammar. Complex numbers are written either as a number
or as a two-element array ``[re, im]``.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, SqFilterError
from .hilbert import annihilator, coherent_state, dag, gaussian_state
from .models import (
    InputMeans,
    ObservationSpec,
    Scenario,
    SLHModel,
    cavity_direct_model,
    cavity_mixed_model,
)
from .noise import ScalarSqueezing, SqueezingSpec
from .sde import IntegrationGrid

SCENARIOS = ("mixed_cavity", "direct_cavity", "custom_slh")
BACKENDS = ("gaussian", "general", "both")

_KNOWN = {
    "": {"scenario", "dim", "seed", "backend", "physics", "squeezing", "means", "initial",
         "grid", "ensemble", "filter", "custom"},
    "physics": {"kappa", "gamma", "omega", "phi", "theta", "kappa_extra"},
    "squeezing": {"n", "m_re", "m_im", "n_mat", "m_mat"},
    "means": {"alpha_re", "alpha_im", "beta_re", "beta_im", "times"},
    "initial": {"coherent_re", "coherent_im", "v0", "w0_re", "w0_im"},
    "grid": {"t_end", "dt"},
    "ensemble": {"size", "batch_size", "workers", "record_every"},
    "filter": {"scheme", "check_every", "leak_tol"},
    "custom": {"l_a", "l_adag", "r_a", "r_adag", "s_phase", "h_omega", "h_kerr", "h_drive", "t", "u"},
}


def _complex(value, name):
    if isinstance(value, (list, tuple)):
        if len(value) != 2 or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(name, "complex numbers are written as [re, im]")
        return complex(value[0], value[1])
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    return complex(value)


def _complex_list(value, name):
    if not isinstance(value, list):
        raise ConfigError(name, "expected a list")
    return np.array([_complex(v, f"{name}[{i}]") for i, v in enumerate(value)], dtype=complex)


def _complex_matrix(value, name):
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise ConfigError(name, "expected a list of rows")
    rows = [_complex_list(r, f"{name}[{i}]") for i, r in enumerate(value)]
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise ConfigError(name, "rows have different lengths")
    return np.array(rows, dtype=complex).reshape(len(rows), len(rows[0]) if rows else 0)


@dataclass
class ScenarioConfig:
    """Validated configuration; ``raw`` is the dictionary echoed into manifests."""

    raw: dict

    def __post_init__(self):
        self.raw = copy.deepcopy(self.raw)
        self._validate()

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
        return cls(raw)

    @classmethod
    def from_string(cls, text: str) -> "ScenarioConfig":
        try:
            return cls(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<text>", str(exc)) from exc

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(name, "expected a table")
        return sec

    def get(self, path: str, default=None):
        """Value at a dotted path such as ``"squeezing.n"``."""
        node = self.raw
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def with_value(self, path: str, value) -> "ScenarioConfig":
        """Copy with the scalar at ``path`` replaced; unknown paths raise :class:`ConfigError`."""
        parts = path.split(".")
        section = "" if len(parts) == 1 else parts[0]
        if len(parts) > 2 or section not in _KNOWN or parts[-1] not in _KNOWN[section]:
            raise ConfigError(path, "not a configurable parameter")
        raw = copy.deepcopy(self.raw)
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
        return ScenarioConfig(raw)

    # properties -----------------------------------------------------------------

    @property
    def scenario(self) -> str:
        return self.raw["scenario"]

    @property
    def dim(self) -> int:
        return int(self.raw["dim"])

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def backend(self) -> str:
        return self.raw.get("backend", "general")

    @property
    def grid(self) -> IntegrationGrid:
        g = self.section("grid")
        return IntegrationGrid.from_span(float(g["t_end"]), float(g["dt"]))

    @property
    def ensemble_size(self) -> int:
        return int(self.section("ensemble").get("size", 1))

    @property
    def batch_size(self) -> int:
        return int(self.section("ensemble").get("batch_size", 100))

    @property
    def workers(self) -> int:
        return int(self.section("ensemble").get("workers", 1))

    @property
    def record_every(self) -> int:
        return int(self.section("ensemble").get("record_every", 1))

    @property
    def scheme(self) -> str:
        return self.section("filter").get("scheme", "milstein")

    @property
    def check_every(self) -> int:
        return int(self.section("filter").get("check_every", 50))

    @property
    def leak_tol(self) -> float:
        return float(self.section("filter").get("leak_tol", 1e-6))

    @property
    def squeeze(self) -> ScalarSqueezing:
        sq = self.section("squeezing")
        return ScalarSqueezing(float(sq.get("n", 0.0)), complex(sq.get("m_re", 0.0), sq.get("m_im", 0.0)))

    # validation -----------------------------------------------------------------

    def _validate(self):
        raw = self.raw
        for section, keys in _KNOWN.items():
            table = raw if section == "" else raw.get(section, {})
            if section and section in raw and not isinstance(raw[section], dict):
                raise ConfigError(section, "expected a table")
            for key in table:
                if key not in keys:
                    where = key if section == "" else f"{section}.{key}"
                    raise ConfigError(where, "unknown key")
        if raw.get("scenario") not in SCENARIOS:
            raise ConfigError("scenario", f"must be one of {SCENARIOS}, got {raw.get('scenario')!r}")
        dim = raw.get("dim")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
            raise ConfigError("dim", "must be an integer >= 2")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if self.backend not in BACKENDS:
            raise ConfigError("backend", f"must be one of {BACKENDS}")
        g = self.section("grid")
        for key in ("t_end", "dt"):
            if key not in g:
                raise ConfigError(f"grid.{key}", "is required")
            if not isinstance(g[key], (int, float)) or g[key] <= 0:
                raise ConfigError(f"grid.{key}", "must be a positive number")
        try:
            self.grid
        except ValueError as exc:
            raise ConfigError("grid.dt", str(exc)) from exc
        ens = self.section("ensemble")
        for key, low in (("size", 1), ("batch_size", 1), ("workers", 1), ("record_every", 1)):
            val = ens.get(key, low)
            if not isinstance(val, int) or val < low:
                raise ConfigError(f"ensemble.{key}", f"must be an integer >= {low}")
        if self.grid.n_steps % self.record_every:
            raise ConfigError("ensemble.record_every", "must divide the number of steps")
        if self.scheme not in ("milstein", "euler"):
            raise ConfigError("filter.scheme", "must be 'milstein' or 'euler'")
        phys = self.section("physics")
        sq = self.section("squeezing")
        if self.scenario == "mixed_cavity":
            self._require_positive(phys, "kappa")
            if self.backend in ("gaussian", "both") and float(sq.get("m_im", 0.0)) != 0.0:
                raise ConfigError("squeezing.m_im",
                                  "the gaussian backend for mixed_cavity needs real m; use backend = 'general'")
        elif self.scenario == "direct_cavity":
            self._require_positive(phys, "gamma")
            if self.backend in ("gaussian", "both") and float(phys.get("kappa_extra", 0.0)) > 0:
                raise ConfigError("physics.kappa_extra", "not supported by the gaussian backend")
        else:
            if self.backend != "general":
                raise ConfigError("backend", "custom_slh runs only with the general backend")
            if "custom" not in raw:
                raise ConfigError("custom", "custom_slh needs a [custom] table")
        if self.scenario != "custom_slh":
            margin = self.squeeze.margin
            if self.squeeze.n < 0 or margin < -1e-12:
                raise ConfigError("squeezing", f"|m|^2 <= n(n+1) violated (margin {margin:.3e})")
        init = self.section("initial")
        if float(init.get("v0", 0.0)) < 0:
            raise ConfigError("initial.v0", "must be non-negative")
        # build everything once so module-level invariants surface as field errors
        try:
            self.build_scenario()
            self.initial_density_matrix()
        except ConfigError:
            raise
        except (SqFilterError, ValueError) as exc:
            raise ConfigError(self.scenario, str(exc)) from exc

    @staticmethod
    def _require_positive(phys, key):
        val = phys.get(key)
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"physics.{key}", "is required and must be positive")

    # builders -------------------------------------------------------------------

    def means(self, m_sq: int, m_fock: int) -> InputMeans:
        m = self.section("means")

        def vec(prefix):
            return m.get(f"{prefix}_re", 0.0), m.get(f"{prefix}_im", 0.0)

        if "times" in m:
            times = np.asarray(m["times"], dtype=float)
            tables = {}
            for prefix, size in (("alpha", m_sq), ("beta", m_fock)):
                re, im = vec(prefix)
                re = np.zeros(len(times)) if not isinstance(re, list) else np.asarray(re, dtype=float)
                im = np.zeros(len(times)) if not isinstance(im, list) else np.asarray(im, dtype=float)
                if re.shape != times.shape or im.shape != times.shape:
                    raise ConfigError(f"means.{prefix}_re", "piecewise tables must match means.times")
                col = re + 1j * im
                tables[prefix] = np.repeat(col[:, None], size, axis=1) if size else np.zeros((len(times), 0))
            try:
                return InputMeans.piecewise(times, tables["alpha"], tables["beta"])
            except ValueError as exc:
                raise ConfigError("means.times", str(exc)) from exc
        out = {}
        for prefix, size in (("alpha", m_sq), ("beta", m_fock)):
            re, im = vec(prefix)
            if isinstance(re, list) or isinstance(im, list):
                raise ConfigError(f"means.{prefix}_re", "lists require means.times (piecewise table)")
            val = complex(re, im)
            if size == 0 and val != 0:
                raise ConfigError(f"means.{prefix}_re", "this scenario has no such channel")
            out[prefix] = np.full(size, val)
        return InputMeans.constant(out["alpha"], out["beta"])

    def build_scenario(self) -> Scenario:
        phys = self.section("physics")
        if self.scenario == "mixed_cavity":
            means = self.means(1, 1)
            return cavity_mixed_model(self.dim, float(phys["kappa"]), float(phys.get("omega", 0.0)),
                                      float(phys.get("phi", 0.0)), self.squeeze, means)
        if self.scenario == "direct_cavity":
            kx = float(phys.get("kappa_extra", 0.0))
            means = self.means(1, 1 if kx > 0 else 0)
            return cavity_direct_model(self.dim, float(phys["gamma"]), float(phys.get("omega", 0.0)),
                                       float(phys.get("theta", 0.0)), self.squeeze, means, kappa_extra=kx)
        return self._custom()

    def _custom(self) -> Scenario:
        cu = self.section("custom")
        dim = self.dim
        a = annihilator(dim)
        ad = dag(a)
        l_a = _complex_list(cu.get("l_a", []), "custom.l_a")
        l_adag = _complex_list(cu.get("l_adag", [0.0] * len(l_a)), "custom.l_adag")
        r_a = _complex_list(cu.get("r_a", []), "custom.r_a")
        r_adag = _complex_list(cu.get("r_adag", [0.0] * len(r_a)), "custom.r_adag")
        if len(l_adag) != len(l_a):
            raise ConfigError("custom.l_adag", "must match custom.l_a in length")
        if len(r_adag) != len(r_a):
            raise ConfigError("custom.r_adag", "must match custom.r_a in length")
        m_fock, m_sq = len(l_a), len(r_a)
        phases = np.asarray(cu.get("s_phase", [0.0] * m_fock), dtype=float)
        if phases.shape != (m_fock,):
            raise ConfigError("custom.s_phase", "needs one phase per Fock channel")
        s_mat = np.zeros((m_fock, m_fock, dim, dim), dtype=complex)
        for j in range(m_fock):
            s_mat[j, j] = np.exp(1j * phases[j]) * np.eye(dim)
        l_ops = np.array([ca * a + cd * ad for ca, cd in zip(l_a, l_adag)]).reshape(m_fock, dim, dim)
        r_ops = np.array([ca * a + cd * ad for ca, cd in zip(r_a, r_adag)]).reshape(m_sq, dim, dim)
        drive = _complex(cu.get("h_drive", 0.0), "custom.h_drive")
        h = (float(cu.get("h_omega", 0.0)) * ad @ a + float(cu.get("h_kerr", 0.0)) * ad @ ad @ a @ a
             + drive * ad + np.conj(drive) * a)
        sq = self.section("squeezing")
        if m_sq:
            n_mat = _complex_matrix(sq.get("n_mat", [[0.0] * m_sq] * m_sq), "squeezing.n_mat")
            m_mat = _complex_matrix(sq.get("m_mat", [[0.0] * m_sq] * m_sq), "squeezing.m_mat")
        else:
            n_mat = m_mat = np.zeros((0, 0))
        spec = SqueezingSpec(n_mat.reshape(m_sq, m_sq), m_mat.reshape(m_sq, m_sq))
        if "t" not in cu and "u" not in cu:
            raise ConfigError("custom.t", "give the observation matrices t and/or u")
        t_mat = _complex_matrix(cu["t"], "custom.t") if "t" in cu else None
        u_mat = _complex_matrix(cu["u"], "custom.u") if "u" in cu else None
        n_obs = (t_mat if t_mat is not None else u_mat).shape[0]
        t_mat = np.zeros((n_obs, m_fock)) if t_mat is None else t_mat
        u_mat = np.zeros((n_obs, m_sq)) if u_mat is None else u_mat
        if t_mat.shape != (n_obs, m_fock):
            raise ConfigError("custom.t", f"must be {n_obs} x {m_fock}")
        if u_mat.shape != (n_obs, m_sq):
            raise ConfigError("custom.u", f"must be {n_obs} x {m_sq}")
        model = SLHModel(s_mat, l_ops, r_ops, h, spec)
        obs = ObservationSpec(t_mat, u_mat)
        return Scenario("custom_slh", model, obs, self.means(m_sq, m_fock), {})

    def initial_mean(self) -> complex:
        init = self.section("initial")
        return complex(float(init.get("coherent_re", 0.0)), float(init.get("coherent_im", 0.0)))

    def initial_covariances(self):
        init = self.section("initial")
        return float(init.get("v0", 0.0)), complex(float(init.get("w0_re", 0.0)), float(init.get("w0_im", 0.0)))

    def initial_density_matrix(self) -> np.ndarray:
        v0, w0 = self.initial_covariances()
        if v0 == 0 and w0 == 0:
            return coherent_state(self.dim, self.initial_mean(), self.leak_tol)
        return gaussian_state(self.dim, self.initial_mean(), v0, w0, self.leak_tol)
