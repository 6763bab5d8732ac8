"""General squeezed-noise filter as a stochastic master equation on density matrices.

The Heisenberg-picture filter ``d pi(X) = pi(L X) dt + H^a(X) dI_a`` is
integrated in its Schrodinger dual form::

    d rho = L^dag(rho) dt + sum_a G^a(rho) dI_a
    G^a(rho) = C^a rho + rho C^a* - tr((C^a + C^a*) rho) rho,   C^a = L~^a + R~^a - R~^a*

The drift is written in Lindblad form (effective Hamiltonian plus jump
operators) and checked against the Heisenberg generator when it is built.

Step scheme. The default ``"milstein"`` step applies the drift as a symmetric
split of the no-jump evolution and the jumps,
``E (s + dt J(s) + dt^2/2 J(J(s))) E^*`` with ``s = E rho E^*``,
``E = exp(-(i H + 1/2 sum_c c^* c) dt/2)`` and ``J(s) = sum_c c s c^*``. This
map is completely positive and second-order accurate, so the ensemble mean
follows the master equation without an ``O(dt)`` bias. The innovation terms
and the first-order Milstein correction
``1/2 sum_ab DG^a[G^b] (dI_a dI_b - K_ab dt)`` are added and the state is
renormalised; the renormalisation (``O(dt^3)`` per step) is reported. The
``"euler"`` scheme is the plain update ``rho + L^dag(rho) dt + G^a dI_a``,
which preserves the trace exactly.

States are batched: ``rho`` has shape ``(B, dim, dim)`` inside the integrator.
Measurement increments are stored as ``(n_steps, n_obs)`` arrays.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    ConsistencyError,
    PhysicalityError,
    StepSizeError,
    StructuralError,
    TruncationError,
)
from .hilbert import LEAKAGE_TOL, annihilator, dag, min_eigenvalue
from .models import InputMeans, ObservationSpec, SLHModel, build_ltilde, build_rtilde, raise_obs_index
from .noise import CorrelationMatrix, build_general_K, kossakowski_matrix
from .sde import IntegrationGrid, derive_stream

ADJOINT_TOL = 1e-10
RENORM_TOL = 1e-3
FULL_BASIS_MAX_DIM = 24
SCHEMES = ("milstein", "euler")


def _comm(x, y):
    return x @ y - y @ x


@dataclass(frozen=True)
class FilterDrift:
    """Lindblad-form drift ``-i[H, rho] + sum_c D[c] rho``.

    ``lindblad_ops`` are the displaced Fock couplings ``L_l + S_lk beta_k``;
    ``squeezed_ops`` diagonalise the squeezed-bath dissipator; ``hamiltonian``
    already contains the mean-field terms from ``alpha`` and ``beta``.
    """

    hamiltonian: np.ndarray
    lindblad_ops: np.ndarray
    squeezed_ops: np.ndarray

    @property
    def jump_ops(self) -> np.ndarray:
        return np.concatenate([self.lindblad_ops, self.squeezed_ops], axis=0)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def schrodinger(self, rho: np.ndarray) -> np.ndarray:
        """``L^dag(rho)``; broadcasts over leading axes of ``rho``."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for c in self.jump_ops:
            cd = dag(c)
            cdc = cd @ c
            out = out + c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
        return out

    def heisenberg(self, x: np.ndarray) -> np.ndarray:
        """Adjoint action ``i[H, X] + sum_c (c^*[X, c] + [c^*, X] c) / 2``."""
        h = self.hamiltonian
        out = 1j * (h @ x - x @ h)
        for c in self.jump_ops:
            cd = dag(c)
            out = out + 0.5 * (cd @ (x @ c - c @ x) + (cd @ x - x @ cd) @ c)
        return out

    def no_jump_propagator(self, dt: float) -> np.ndarray:
        """``exp(-(i H + 1/2 sum_c c^* c) dt)``."""
        jumps = self.jump_ops
        damping = np.einsum("kba,kbc->ac", jumps.conj(), jumps) if len(jumps) else 0.0
        return expm(-(1j * self.hamiltonian + 0.5 * damping) * dt)

    def jump_map(self, rho: np.ndarray) -> np.ndarray:
        """``sum_c c rho c^*``; broadcasts over leading axes of ``rho``."""
        out = np.zeros_like(rho)
        for c in self.jump_ops:
            out = out + c @ rho @ dag(c)
        return out

    def split_step(self, rho: np.ndarray, dt: float, half: np.ndarray | None = None) -> np.ndarray:
        """Second-order completely positive approximation of ``exp(L^dag dt) rho``."""
        e = self.no_jump_propagator(0.5 * dt) if half is None else half
        s = e @ rho @ dag(e)
        j = self.jump_map(s)
        return e @ (s + dt * j + 0.5 * dt * dt * self.jump_map(j)) @ dag(e)


def heisenberg_generator(model: SLHModel, means: InputMeans, t: float):
    """Return ``X -> L X`` built term by term from the Evans-Hudson structure maps.

    ``L X = L_L X + beta_j^* S_lj^*[X, L_l] + [L_l^*, X] S_lk beta_k
    + beta_j^* (S_lj^* X S_lk - delta_jk X) beta_k + R_00 X
    + alpha_j^*[X, R_j] + [R_k^*, X] alpha_k - i[X, H]``.
    """
    beta = means.beta(t)
    alpha = means.alpha(t)
    s_mat, l_ops, r_ops, h = model.s_mat, model.l_ops, model.r_ops, model.h_op
    n_mat, m_mat = model.squeeze.n_mat, model.squeeze.m_mat
    # S beta and beta^* S^dag collapsed once
    s_beta = np.einsum("lkab,k->lab", s_mat, beta) if model.m_fock else l_ops
    sd = dag(s_mat) if model.m_fock else s_mat

    def gen(x):
        out = -1j * _comm(x, h)
        for l_op in range(model.m_fock):
            ll, lld = l_ops[l_op], dag(l_ops[l_op])
            out = out + 0.5 * (lld @ _comm(x, ll) + _comm(lld, x) @ ll)
            bsd = np.einsum("j,jab->ab", beta.conj(), sd[l_op])  # beta_j^* S_lj^*
            out = out + bsd @ _comm(x, ll) + _comm(lld, x) @ s_beta[l_op]
            out = out + bsd @ x @ s_beta[l_op]
        if model.m_fock:
            out = out - np.vdot(beta, beta).real * x
        for j in range(model.m_sq):
            rj, rjd = r_ops[j], dag(r_ops[j])
            out = out + 0.5 * (rjd @ _comm(x, rj) + _comm(rjd, x) @ rj)
            out = out + alpha[j].conjugate() * _comm(x, rj) + _comm(rjd, x) * alpha[j]
            for k in range(model.m_sq):
                rk, rkd = r_ops[k], dag(r_ops[k])
                out = out + 0.5 * n_mat[j, k] * (rkd @ _comm(x, rj) + _comm(rkd, x) @ rj)
                out = out + 0.5 * n_mat[k, j] * (rk @ _comm(x, rjd) + _comm(rk, x) @ rjd)
                out = out - 0.5 * m_mat[j, k].conjugate() * (rk @ _comm(x, rj) + _comm(rk, x) @ rj)
                out = out - 0.5 * m_mat[j, k] * (rkd @ _comm(x, rjd) + _comm(rkd, x) @ rjd)
        return out

    return gen


def squeezed_jump_operators(model: SLHModel) -> np.ndarray:
    """Jump operators ``J = sqrt(lambda) sum_i v_i F_i`` from the squeezed-bath coefficient matrix."""
    if model.m_sq == 0:
        return np.zeros((0, model.dim, model.dim), dtype=complex)
    coeff = kossakowski_matrix(model.squeeze)
    evals, evecs = np.linalg.eigh(coeff)
    if evals[0] < -1e-10:
        raise PhysicalityError(f"squeezed-bath coefficient matrix has eigenvalue {evals[0]:.3e}")
    basis = np.concatenate([model.r_ops, dag(model.r_ops)], axis=0)
    keep = evals > 1e-14
    return np.einsum("i,ki,kab->iab", np.sqrt(evals[keep]), evecs[:, keep], basis)


def _adjointness_error(drift: FilterDrift, gen, rng_seed: int = 0) -> float:
    dim = drift.dim
    if dim <= FULL_BASIS_MAX_DIM:
        probes = np.eye(dim * dim, dtype=complex).reshape(dim * dim, dim, dim)
        xs = probes
    else:
        rng = np.random.default_rng(rng_seed)
        probes = rng.standard_normal((16, dim, dim)) + 1j * rng.standard_normal((16, dim, dim))
        xs = rng.standard_normal((16, dim, dim)) + 1j * rng.standard_normal((16, dim, dim))
    s_img = drift.schrodinger(probes)
    h_img = np.stack([gen(x) for x in xs])
    # lhs[i, j] = tr(L^dag(rho_i) X_j), rhs[i, j] = tr(rho_i L X_j)
    lhs = np.einsum("iab,jba->ij", s_img, xs)
    rhs = np.einsum("iab,jba->ij", probes, h_img)
    scale = max(1.0, float(np.max(np.abs(lhs))))
    return float(np.max(np.abs(lhs - rhs))) / scale


def build_drift(model: SLHModel, means: InputMeans, t: float, check: bool = True) -> FilterDrift:
    """Schrodinger-picture drift with the mean-field terms for ``alpha(t), beta(t)``.

    ``H_eff = H + i(E - E^*)/2 + i(alpha_j^* R_j - alpha_j R_j^*)`` with
    ``E = beta_j^* S_lj^* L_l``; Fock jumps ``L_l + S_lk beta_k``.
    """
    beta = means.beta(t)
    alpha = means.alpha(t)
    h_eff = model.h_op.copy()
    if model.m_fock:
        e_op = np.einsum("j,ljba,lbc->ac", beta.conj(), model.s_mat.conj(), model.l_ops)
        h_eff = h_eff + 0.5j * (e_op - dag(e_op))
        fock = model.l_ops + np.einsum("lkab,k->lab", model.s_mat, beta)
    else:
        fock = model.l_ops
    if model.m_sq:
        ar = np.einsum("j,jab->ab", alpha.conj(), model.r_ops)
        h_eff = h_eff + 1j * (ar - dag(ar))
    drift = FilterDrift(h_eff, fock, squeezed_jump_operators(model))
    if check:
        err = _adjointness_error(drift, heisenberg_generator(model, means, t))
        if err > ADJOINT_TOL:
            raise ConsistencyError(f"dual generator fails adjointness check (relative error {err:.3e})")
    return drift


def gain_operators(model: SLHModel, obs: ObservationSpec, k: CorrelationMatrix,
                   means: InputMeans, t: float) -> np.ndarray:
    """``C^a = L~^a + R~^a - R~^a*`` with raised observation index, shape ``(n_obs, dim, dim)``."""
    lt = raise_obs_index(k, build_ltilde(model, means, obs, t))
    rt = raise_obs_index(k, build_rtilde(model, obs))
    return lt + rt - dag(rt)


def gain(rho: np.ndarray, model: SLHModel, obs: ObservationSpec, k: CorrelationMatrix,
         means: InputMeans, t: float) -> np.ndarray:
    """Dual gain terms ``G^a(rho)``, shape ``(n_obs, dim, dim)``; each is traceless.

    ``tr(G^a(rho) X)`` equals ``pi(X L~^a + L~^a* X) - pi(X) pi(L~^a + L~^a*)
    + pi([X, R~^a]) + pi([R~^a*, X])``.
    """
    return _gains(np.asarray(rho)[None], gain_operators(model, obs, k, means, t))[0][:, 0]


def _trace(x):
    return x.diagonal(axis1=-2, axis2=-1).sum(axis=-1)


def _gains(rho, c_ops):
    """Batched gains: returns ``G (n_obs, B, d, d)`` and ``h (n_obs, B)``."""
    x = c_ops[:, None] @ rho[None]
    s = x + dag(x)
    h = _trace(s).real
    return s - h[..., None, None] * rho[None], h


@dataclass(frozen=True)
class StepCoefficients:
    drift: FilterDrift
    half_step: np.ndarray
    c_ops: np.ndarray
    meas_ops: np.ndarray


class BelavkinFilter:
    """Step kernel for one (model, observation, means) combination.

    Coefficients are rebuilt only when ``alpha(t), beta(t)`` change value.
    """

    def __init__(self, model: SLHModel, obs: ObservationSpec, means: InputMeans, dt: float,
                 scheme: str = "milstein", check_adjoint: bool = True):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        obs.check_model(model)
        if means.m_sq != model.m_sq or means.m_fock != model.m_fock:
            raise StructuralError("input means do not match the model channel counts")
        self.model = model
        self.obs = obs
        self.means = means
        self.dt = float(dt)
        self.scheme = scheme
        self.check_adjoint = check_adjoint
        self.k = build_general_K(obs, model.squeeze)
        self._cache: dict[bytes, StepCoefficients] = {}

    @property
    def n_obs(self) -> int:
        return self.obs.n_obs

    def coefficients(self, t: float) -> StepCoefficients:
        key = self.means.alpha(t).tobytes() + self.means.beta(t).tobytes()
        coeffs = self._cache.get(key)
        if coeffs is None:
            drift = build_drift(self.model, self.means, t, check=self.check_adjoint)
            lt = build_ltilde(self.model, self.means, self.obs, t)
            coeffs = StepCoefficients(
                drift=drift,
                half_step=drift.no_jump_propagator(0.5 * self.dt),
                c_ops=gain_operators(self.model, self.obs, self.k, self.means, t),
                meas_ops=lt + dag(lt),
            )
            self._cache[key] = coeffs
        return coeffs

    def predicted(self, rho: np.ndarray, t: float) -> np.ndarray:
        """``pi(L~_a + L~_a^*)`` for a batch of states, shape ``(B, n_obs)``."""
        meas = self.coefficients(t).meas_ops
        # tr(rho X) = sum_ij rho_ij X_ji
        return (rho.reshape(len(rho), -1) @ np.swapaxes(meas, -1, -2).reshape(len(meas), -1).T).real

    def step(self, rho: np.ndarray, di: np.ndarray, t: float, step: int | None = None):
        """Advance a batch ``rho (B, d, d)`` with innovations ``di (B, n_obs)``.

        Returns the renormalised states and the per-state trace residuals.
        """
        dt = self.dt
        cf = self.coefficients(t)
        if self.scheme == "milstein":
            out = cf.drift.split_step(rho, dt, cf.half_step)
        else:
            out = rho + dt * cf.drift.schrodinger(rho)
        gains, h = _gains(rho, cf.c_ops)
        n_obs = gains.shape[0]
        for a in range(n_obs):
            out = out + di[:, a, None, None] * gains[a]
        if self.scheme == "milstein":
            s = di[:, :, None] * di[:, None, :] - self.k.k_mat[None] * dt
            for a in range(n_obs):
                x = sum(s[:, a, c, None, None] * gains[c] for c in range(n_obs))
                y = cf.c_ops[a] @ x
                y = y + dag(y)
                dg = y - _trace(y).real[:, None, None] * rho - h[a][:, None, None] * x
                out = out + 0.5 * dg
        out = 0.5 * (out + dag(out))
        tr = _trace(out).real
        residual = np.abs(tr - 1.0)
        if not np.all(np.isfinite(residual)):
            raise StepSizeError("non-finite state", step=step)
        worst = float(residual.max())
        if worst > RENORM_TOL:
            raise StepSizeError(f"trace renormalisation {worst:.3e} exceeds {RENORM_TOL:g}; reduce dt", step=step)
        return out / tr[:, None, None], residual


@dataclass
class MeasurementRecord:
    """Observed increments ``dy`` and innovations ``di``, both ``(n_steps, n_obs)``."""

    times: np.ndarray
    dy: np.ndarray
    di: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.dy.shape[1]


@dataclass
class Trajectory:
    """Per-step expectations of the tracked mode operator ``a``.

    Arrays have one entry per grid time. ``trace_residual[0]`` is zero; entry
    ``k`` is the renormalisation of the step ending at ``times[k]``.
    """

    times: np.ndarray
    pi_a: np.ndarray
    pi_n: np.ndarray
    pi_a2: np.ndarray
    trace_residual: np.ndarray
    record: MeasurementRecord
    min_eigenvalue: float = 0.0
    max_corner_population: float = 0.0
    v_cov: np.ndarray | None = None
    w_cov: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def filter_step(rho: np.ndarray, model: SLHModel, obs: ObservationSpec, means: InputMeans,
                dt: float, t: float = 0.0, di=None, dy=None, scheme: str = "milstein"):
    """Single step from a ``(dim, dim)`` state driven by innovations or observations.

    Exactly one of ``di`` and ``dy`` must be given. Returns
    ``(rho_next, di, dy, trace_residual)``.
    """
    if (di is None) == (dy is None):
        raise ValueError("pass exactly one of di (innovations) or dy (observations)")
    filt = BelavkinFilter(model, obs, means, dt, scheme=scheme)
    rho = np.asarray(rho, dtype=complex)[None]
    pred = filt.predicted(rho, t)[0]
    if dy is not None:
        dy = np.asarray(dy, dtype=float).reshape(filt.n_obs)
        di = dy - pred * dt
    else:
        di = np.asarray(di, dtype=float).reshape(filt.n_obs)
        dy = di + pred * dt
    nxt, res = filt.step(rho, di[None], t)
    return nxt[0], di, dy, float(res[0])


def _integrate(filt: BelavkinFilter, rho0: np.ndarray, n_steps: int, drive: np.ndarray,
               drive_is_record: bool, a_op: np.ndarray, t0: float = 0.0,
               check_every: int = 50, leak_tol: float = LEAKAGE_TOL, record_every: int = 1,
               extra_ops=()):
    """Core loop over a batch. ``drive`` has shape ``(B, n_steps, n_obs)``.

    Tracked expectations are ``a, a^* a, a^2`` followed by ``extra_ops``.
    """
    dt = filt.dt
    rho = np.array(rho0, dtype=complex)
    batch = rho.shape[0]
    n_rec = n_steps // record_every + 1
    ops = np.stack([a_op, dag(a_op) @ a_op, a_op @ a_op, *extra_ops])
    moments = np.empty((len(ops), batch, n_rec), dtype=complex)
    residual = np.zeros((batch, n_steps + 1))
    di_out = np.empty_like(drive)
    dy_out = np.empty_like(drive)
    min_eig = np.full(batch, np.inf)
    max_corner = np.zeros(batch)

    def monitor(k):
        nonlocal min_eig
        min_eig = np.minimum(min_eig, min_eigenvalue(rho))

    moments[:, :, 0] = np.einsum("bij,oji->ob", rho, ops)
    monitor(0)
    for k in range(n_steps):
        t = t0 + k * dt
        pred = filt.predicted(rho, t) * dt
        if drive_is_record:
            dy = drive[:, k]
            di = dy - pred
        else:
            di = drive[:, k]
            dy = di + pred
        di_out[:, k] = di
        dy_out[:, k] = dy
        rho, residual[:, k + 1] = filt.step(rho, di, t, step=k + 1)
        corner = rho[:, -1, -1].real
        max_corner = np.maximum(max_corner, corner)
        if corner.max() > leak_tol:
            raise TruncationError(
                f"top Fock level population {corner.max():.3e} exceeds {leak_tol:g}; increase dim", step=k + 1
            )
        if (k + 1) % record_every == 0:
            moments[:, :, (k + 1) // record_every] = np.einsum("bij,oji->ob", rho, ops)
        if (k + 1) % check_every == 0 or k + 1 == n_steps:
            monitor(k + 1)
    return moments, residual, di_out, dy_out, min_eig, max_corner, rho


def _prepare(model, obs, means, rho0, t_end, dt, t0=0.0):
    grid = IntegrationGrid(float(t0), float(t0) + float(t_end), float(dt))
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape[-2:] != (model.dim, model.dim):
        raise StructuralError(f"initial state has shape {rho0.shape[-2:]}, model dim is {model.dim}")
    return grid, rho0


def _trajectory_from(grid, moments, residual, di, dy, min_eig, max_corner, i=0, extra_names=()):
    return Trajectory(
        times=grid.times,
        pi_a=moments[0, i],
        pi_n=moments[1, i].real,
        pi_a2=moments[2, i],
        trace_residual=residual[i],
        record=MeasurementRecord(grid.times, dy[i], di[i]),
        min_eigenvalue=float(min_eig[i]),
        max_corner_population=float(max_corner[i]),
        extra={name: moments[3 + j, i] for j, name in enumerate(extra_names)},
    )


def draw_innovations(k: CorrelationMatrix, dt: float, n_steps: int, seed: int, index: int = 0) -> np.ndarray:
    """Innovation increments ``(n_steps, n_obs)`` with covariance ``K dt`` from stream ``(seed, index)``."""
    rng = derive_stream(seed, index).generator()
    z = rng.standard_normal((n_steps, k.n_obs))
    return (z @ k.cholesky().T) * np.sqrt(dt)


def run_trajectory(model: SLHModel, obs: ObservationSpec, means: InputMeans, rho0: np.ndarray,
                   t_end: float, dt: float, seed: int | None = None, innovations=None,
                   scheme: str = "milstein", a_op=None, t0: float = 0.0,
                   check_every: int = 50, leak_tol: float = LEAKAGE_TOL,
                   extra_ops: dict | None = None) -> Trajectory:
    """Innovation-driven trajectory. Innovations come from stream ``(seed, 0)`` unless given.

    ``extra_ops`` maps names to operators whose expectations are stored in
    ``Trajectory.extra``.
    """
    extra_ops = extra_ops or {}
    grid, rho0 = _prepare(model, obs, means, rho0, t_end, dt, t0)
    filt = BelavkinFilter(model, obs, means, dt, scheme=scheme)
    if innovations is None:
        if seed is None:
            raise ValueError("pass a seed or explicit innovations")
        innovations = draw_innovations(filt.k, dt, grid.n_steps, seed, 0)
    innovations = np.asarray(innovations, dtype=float).reshape(grid.n_steps, filt.n_obs)
    a_op = annihilator(model.dim) if a_op is None else a_op
    out = _integrate(filt, rho0[None], grid.n_steps, innovations[None], False, a_op, t0,
                     check_every, leak_tol, extra_ops=list(extra_ops.values()))
    return _trajectory_from(grid, *out[:-1], extra_names=list(extra_ops))


def run_on_record(model: SLHModel, obs: ObservationSpec, means: InputMeans, rho0: np.ndarray,
                  dy: np.ndarray, dt: float, scheme: str = "milstein", a_op=None, t0: float = 0.0,
                  check_every: int = 50, leak_tol: float = LEAKAGE_TOL):
    """Filter externally supplied observation increments.

    ``dy`` of shape ``(n_steps, n_obs)`` gives a :class:`Trajectory`;
    ``(B, n_steps, n_obs)`` gives a list of them. The record must sit on the
    integrator grid.
    """
    dy = np.asarray(dy, dtype=float)
    single = dy.ndim == 2
    if single:
        dy = dy[None]
    if dy.ndim != 3 or dy.shape[2] != obs.n_obs:
        raise StructuralError(f"record must have shape (n_steps, {obs.n_obs}) or (B, n_steps, {obs.n_obs})")
    n_steps = dy.shape[1]
    grid, rho0 = _prepare(model, obs, means, rho0, n_steps * dt, dt, t0)
    rho0 = np.broadcast_to(rho0, (dy.shape[0], model.dim, model.dim))
    filt = BelavkinFilter(model, obs, means, dt, scheme=scheme)
    a_op = annihilator(model.dim) if a_op is None else a_op
    out = _integrate(filt, rho0, n_steps, dy, True, a_op, t0, check_every, leak_tol)
    trajs = [_trajectory_from(grid, *out[:-1], i=i) for i in range(dy.shape[0])]
    return trajs[0] if single else trajs


@dataclass
class EnsembleResult:
    """Per-trajectory series on the output grid plus per-trajectory diagnostics.

    ``pi_a``, ``pi_n``, ``pi_a2`` have shape ``(n_traj, n_out)``; ``di`` is
    ``(n_traj, n_steps, n_obs)`` when records were kept.
    """

    times: np.ndarray
    pi_a: np.ndarray
    pi_n: np.ndarray
    pi_a2: np.ndarray
    max_trace_residual: np.ndarray
    min_eigenvalue: np.ndarray
    max_corner_population: np.ndarray
    di: np.ndarray | None = None
    dy: np.ndarray | None = None

    @property
    def n_traj(self) -> int:
        return self.pi_n.shape[0]

    def mean_and_stderr(self, name: str):
        data = getattr(self, name)
        mean = data.mean(axis=0)
        if self.n_traj < 2:
            return mean, np.zeros(mean.shape)
        return mean, data.std(axis=0, ddof=1) / np.sqrt(self.n_traj)


def _run_chunk(args):
    (model, obs, means, rho0, n_steps, dt, seed, start, stop, scheme, t0,
     check_every, leak_tol, record_every, keep_records) = args
    filt = BelavkinFilter(model, obs, means, dt, scheme=scheme)
    drive = np.stack([draw_innovations(filt.k, dt, n_steps, seed, i) for i in range(start, stop)])
    rho = np.broadcast_to(rho0, (stop - start, model.dim, model.dim))
    moments, residual, di, dy, min_eig, max_corner, _ = _integrate(
        filt, rho, n_steps, drive, False, annihilator(model.dim), t0, check_every, leak_tol, record_every)
    return (moments, residual.max(axis=1), min_eig, max_corner,
            di if keep_records else None, dy if keep_records else None)


def run_ensemble(model: SLHModel, obs: ObservationSpec, means: InputMeans, rho0: np.ndarray,
                 t_end: float, dt: float, n_traj: int, seed: int, batch_size: int = 100,
                 workers: int = 1, scheme: str = "milstein", t0: float = 0.0,
                 record_every: int = 1, check_every: int = 50, leak_tol: float = LEAKAGE_TOL,
                 keep_records: bool = False) -> EnsembleResult:
    """Innovation-driven ensemble; trajectory ``i`` uses stream ``(seed, i)``.

    Trajectories are grouped into fixed chunks of ``batch_size`` by index, so
    the result does not depend on ``workers``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    grid, rho0 = _prepare(model, obs, means, rho0, t_end, dt, t0)
    if grid.n_steps % record_every:
        raise ValueError("record_every must divide the number of steps")
    # build once up front so configuration errors surface in the caller
    BelavkinFilter(model, obs, means, dt, scheme=scheme).coefficients(t0)
    bounds = [(s, min(s + batch_size, n_traj)) for s in range(0, n_traj, batch_size)]
    jobs = [(model, obs, means, rho0, grid.n_steps, dt, seed, s, e, scheme, t0, check_every,
             leak_tol, record_every, keep_records) for s, e in bounds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    moments = np.concatenate([p[0] for p in parts], axis=1)
    return EnsembleResult(
        times=grid.times[::record_every],
        pi_a=moments[0],
        pi_n=moments[1].real,
        pi_a2=moments[2],
        max_trace_residual=np.concatenate([p[1] for p in parts]),
        min_eigenvalue=np.concatenate([p[2] for p in parts]),
        max_corner_population=np.concatenate([p[3] for p in parts]),
        di=np.concatenate([p[4] for p in parts]) if keep_records else None,
        dy=np.concatenate([p[5] for p in parts]) if keep_records else None,
    )
