"""Homodyne-conditioned trajectories with instantaneous current feedback.

Each step applies, in order,

1. an Euler-Maruyama update with the deterministic part (thermal damping plus
   the measurement double commutator) and the stochastic measurement term

       sqrt(eta chi^2 / kappa) dW (i e^{i phi} rho X - i e^{-i phi} X rho
                                   + 2 sin(phi) <X>_c rho),

2. the feedback unitary exp(K J dt) with K rho = (g/2) [a - a^dag, rho] and
   the scaled current

       J = -2 <X>_c sin(phi) + sqrt(kappa / (eta chi^2)) dW/dt.

The sign of the current's mean is fixed by requiring that averaging the
measure-then-feed-back step over the noise reproduces the deterministic
feedback generator (evolve_det.rhs_final_feedback); it matches the sign with
which the monitored cavity quadrature is dynamically driven by X in the
two-mode model.

Noise streams are counter-based (Philox) keyed by (base_seed, trajectory
index), so records are bit-reproducible for any worker count.  Trajectories
are stepped in fixed-size batches of shape (B, d, d); batching does not change
any trajectory's arithmetic (each batch slice sees the same operations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .errors import ParameterError, StepSizeError, TruncationError
from .evolve_det import TAIL_ERROR, TAIL_MARGIN
from .hilbert import operator_table
from .params import ModelParams, effective_bath

__all__ = [
    "Trajectory",
    "EnsembleStats",
    "MOMENT_NAMES",
    "stoch_rate_scale",
    "sme_step",
    "photocurrent",
    "feedback_apply",
    "run_trajectory",
    "ensemble",
]

MOMENT_NAMES = ("x", "x2", "n", "re_a2", "im_a2")
RENORM_STEP_LIMIT = 1e-3
CHUNK_SIZE = 250  # fixed batch size; never derived from the worker count


# -- batched primitives; the last two axes are the matrix ----------------------

def _dag(R: np.ndarray) -> np.ndarray:
    return R.conj().swapaxes(-1, -2)


@dataclass(frozen=True)
class _Work:
    """Precomputed per-(params, dim) quantities for the step kernel."""

    d: int
    half_sq: np.ndarray  # 0.5 * sqrt(1..d-1), the superdiagonal of X
    diag_coeff: np.ndarray  # thermal anticommutator coefficients, real (d, d)
    ss_down: np.ndarray  # gamma (nbar+1) sq_i sq_j, scales rho[1:, 1:]
    ss_up: np.ndarray    # gamma nbar sq_i sq_j, scales rho[:-1, :-1]
    X: np.ndarray
    X2: np.ndarray
    aa: np.ndarray
    n_diag: np.ndarray
    V: np.ndarray        # eigenvectors of i(a - a^dag)
    Vh: np.ndarray
    w: np.ndarray        # its (real) eigenvalues
    g2: float            # gamma nbar / 2
    c_meas: float        # chi^2 / (2 kappa)
    meas_amp: float      # sqrt(eta chi^2 / kappa)
    noise_scale: float   # sqrt(kappa / (eta chi^2)); inf if chi = 0
    e_ip: complex
    sphi: float
    g: float


def _make_work(p: ModelParams, d: int) -> _Work:
    t = operator_table(d)
    w, V = np.linalg.eigh(1j * t.A)
    g1 = 0.5 * p.gamma * (p.nbar + 1.0)
    g2 = 0.5 * p.gamma * p.nbar
    ss = t.sq[:, None] * t.sq[None, :]
    diag_coeff = -(
        g1 * (t.n_diag[:, None] + t.n_diag[None, :])
        + g2 * (t.aad_diag[:, None] + t.aad_diag[None, :])
    )
    return _Work(
        d=d,
        half_sq=0.5 * t.sq,
        diag_coeff=diag_coeff,
        ss_down=2.0 * g1 * ss,
        ss_up=2.0 * g2 * ss,
        X=t.X,
        X2=t.X @ t.X,
        aa=t.aa,
        n_diag=t.n_diag,
        V=np.ascontiguousarray(V),
        Vh=np.ascontiguousarray(V.conj().T),
        w=w,
        g2=g2,
        c_meas=p.chi**2 / (2.0 * p.kappa),
        meas_amp=math.sqrt(p.eta * p.chi**2 / p.kappa),
        noise_scale=math.sqrt(p.kappa / (p.eta * p.chi**2)) if p.chi > 0 else math.inf,
        e_ip=complex(np.exp(1j * p.phi)),
        sphi=math.sin(p.phi),
        g=p.g,
    )


def _x_mul(half_sq: np.ndarray, R: np.ndarray) -> np.ndarray:
    """X @ R for a batch, using the bidiagonal structure of X."""
    out = np.zeros_like(R)
    out[:, :-1, :] += half_sq[:, None] * R[:, 1:, :]
    out[:, 1:, :] += half_sq[:, None] * R[:, :-1, :]
    return out


def _measurement_update(
    wk: _Work, rho: np.ndarray, dW: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Euler-Maruyama measurement step on a (B, d, d) batch.

    Returns (rho', <X>_c of the pre-step states, trace renormalization sizes).
    """
    Xrho = _x_mul(wk.half_sq, rho)
    rhoX = _dag(Xrho)
    xm = np.einsum("bii->b", Xrho).real

    # thermal jump terms land on shifted diagonals; the anticommutators are
    # diagonal scalings folded into diag_coeff
    drift = wk.diag_coeff * rho
    drift[:, :-1, :-1] += wk.ss_down * rho[:, 1:, 1:]
    if wk.g2 != 0.0:
        drift[:, 1:, 1:] += wk.ss_up * rho[:, :-1, :-1]
    if wk.c_meas != 0.0:
        XC = _x_mul(wk.half_sq, Xrho - rhoX)
        XC += _dag(XC)
        drift -= wk.c_meas * XC

    rho2 = rho + dt * drift
    if wk.meas_amp != 0.0:
        amp = (wk.meas_amp * dW)[:, None, None]
        rho2 += amp * ((1j * wk.e_ip) * rhoX - (1j * np.conj(wk.e_ip)) * Xrho)
        rho2 += ((2.0 * wk.sphi * wk.meas_amp) * (dW * xm))[:, None, None] * rho

    tr = np.einsum("bii->b", rho2).real
    renorm = np.abs(tr - 1.0)
    rho2 /= tr[:, None, None]
    return rho2, xm, renorm


def _feedback_update(
    wk: _Work, rho: np.ndarray, J: np.ndarray, dt: float
) -> np.ndarray:
    """Apply exp(K J dt), K = (g/2)[a - a^dag, .], exactly via the eigenphases."""
    theta = (0.5 * wk.g * dt) * J
    ph = np.exp(-1j * theta[:, None] * wk.w[None, :])
    U = (wk.V[None, :, :] * ph[:, None, :]) @ wk.Vh
    return U @ rho @ _dag(U)


def _batch_moments(wk: _Work, rho: np.ndarray) -> np.ndarray:
    """(B, 5) array of (<X>, <X^2>, <n>, Re<a^2>, Im<a^2>)."""
    out = np.empty((rho.shape[0], 5))
    out[:, 0] = np.einsum("ij,bji->b", wk.X, rho).real
    out[:, 1] = np.einsum("ij,bji->b", wk.X2, rho).real
    out[:, 2] = np.einsum("i,bii->b", wk.n_diag, rho).real
    a2 = np.einsum("ij,bji->b", wk.aa, rho)
    out[:, 3] = a2.real
    out[:, 4] = a2.imag
    return out


def stoch_rate_scale(p: ModelParams) -> float:
    """Fastest rate relevant to the conditioned dynamics."""
    rates = [p.gamma * (p.nbar + 1.0), p.measurement_rate, abs(p.g)]
    try:
        bath = effective_bath(p)
        if bath.Gamma > 0:
            rates.append(bath.Gamma * (abs(bath.N) + 1.0))
    except ParameterError:
        pass
    return max(rates)


def _check_dt(p: ModelParams, dt: float) -> None:
    bound = 0.01 / stoch_rate_scale(p)
    if dt > bound:
        raise StepSizeError(f"dt = {dt:.4g} exceeds 0.01/max_rate = {bound:.4g}")


def sme_step(
    rho_c: np.ndarray, p: ModelParams, dW: float, dt: float
) -> tuple[np.ndarray, float]:
    """Single conditioned measurement step (no feedback).

    Returns the renormalized post-step state and the trace renormalization
    magnitude; raises StepSizeError if that magnitude exceeds 1e-3 or dt is
    above the step bound.
    """
    _check_dt(p, dt)
    wk = _make_work(p, rho_c.shape[0])
    rho2, _, renorm = _measurement_update(wk, rho_c[None], np.array([dW]), dt)
    if renorm[0] > RENORM_STEP_LIMIT:
        raise StepSizeError(
            f"trace renormalization {renorm[0]:.3e} > {RENORM_STEP_LIMIT:.1e}; reduce dt"
        )
    return rho2[0], float(renorm[0])


def photocurrent(rho_c: np.ndarray, p: ModelParams, xi: float) -> float:
    """Scaled homodyne record J = -2 <X>_c sin(phi) + sqrt(kappa/(eta chi^2)) xi.

    ``xi = dW/dt`` must be the same step's noise as in sme_step.  The white
    part follows the raw current divided by the measured-quadrature gain
    eta*chi; the sign of the mean is the one under which the fed-back average
    reproduces the deterministic feedback generator.
    """
    if p.chi == 0.0:
        raise ParameterError("photocurrent undefined at chi = 0 (no measurement)")
    t = operator_table(rho_c.shape[0])
    xm = float(np.einsum("ij,ji->", t.X, rho_c).real)
    return -2.0 * xm * math.sin(p.phi) + math.sqrt(p.kappa / (p.eta * p.chi**2)) * xi


def feedback_apply(rho_c: np.ndarray, J: float, p: ModelParams, dt: float) -> np.ndarray:
    """exp(K J dt) rho_c exp(-K J dt)-style update with K rho = (g/2)[a - a^dag, rho].

    The generator is a commutator with an anti-Hermitian operator, so the map
    is the exact unitary conjugation by exp((g J dt / 2)(a - a^dag)).
    """
    if p.g == 0.0:
        return rho_c.copy()
    wk = _make_work(p, rho_c.shape[0])
    return _feedback_update(wk, rho_c[None], np.array([float(J)]), dt)[0]


@dataclass(frozen=True)
class Trajectory:
    """One conditioned record.  Rows are the post-step states at ``times``.

    moments columns follow MOMENT_NAMES; ``current`` holds the scaled
    photocurrent of the step ending at the same row (NaN when chi = 0).
    """

    times: np.ndarray
    moments: np.ndarray      # (n_rec, 5)
    current: np.ndarray      # (n_rec,)
    seed: tuple
    dt: float
    renorm_max: float

    def moment(self, name: str) -> np.ndarray:
        return self.moments[:, MOMENT_NAMES.index(name)]


@dataclass(frozen=True)
class EnsembleStats:
    """Trajectory-averaged conditioned moments and their standard errors."""

    times: np.ndarray
    mean: np.ndarray         # (n_rec, 5)
    stderr: np.ndarray       # (n_rec, 5); NaN when n_traj < 2
    n_traj: int
    members: np.ndarray | None = None  # (n_traj, n_rec, 5) if requested

    @property
    def stderr_defined(self) -> bool:
        return self.n_traj >= 2

    def z_scores(self, reference: np.ndarray) -> np.ndarray:
        """(ensemble mean - reference) / stderr, elementwise."""
        return (self.mean - reference) / self.stderr


def _normals(seed: tuple, n_steps: int) -> np.ndarray:
    """Standard normals for one trajectory from a Philox stream keyed by seed."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return gen.normal(0.0, 1.0, n_steps)


def _run_chunk(
    p: ModelParams,
    rho0: np.ndarray,
    seeds: list[tuple],
    n_steps: int,
    dt: float,
    record_idx: np.ndarray,
    keep_current: bool,
) -> tuple[np.ndarray, np.ndarray | None, float]:
    """Step a batch of trajectories; returns (moments, currents, renorm_max).

    moments has shape (B, n_rec, 5); currents (B, n_rec) or None.
    """
    wk = _make_work(p, rho0.shape[0])
    B = len(seeds)
    dWs = np.stack([_normals(s, n_steps) for s in seeds]) * math.sqrt(dt)
    rho = np.broadcast_to(rho0, (B, *rho0.shape)).astype(complex).copy()
    n_rec = len(record_idx)
    mom = np.empty((B, n_rec, 5))
    cur = np.empty((B, n_rec)) if keep_current else None
    rec_set = {int(k): j for j, k in enumerate(record_idx)}
    renorm_max = 0.0
    with_noise = wk.meas_amp != 0.0

    for k in range(n_steps):
        dW = dWs[:, k]
        rho, xm, renorm = _measurement_update(wk, rho, dW, dt)
        rmax = float(renorm.max())
        if rmax > RENORM_STEP_LIMIT:
            raise StepSizeError(
                f"trace renormalization {rmax:.3e} > {RENORM_STEP_LIMIT:.1e} "
                f"at step {k}; reduce dt"
            )
        renorm_max = max(renorm_max, rmax)
        if with_noise:
            J = -2.0 * xm * wk.sphi + wk.noise_scale * dW / dt
        else:
            J = np.full(B, np.nan)
        if wk.g != 0.0:
            rho = _feedback_update(wk, rho, J, dt)
        j = rec_set.get(k)
        if j is not None:
            tail = float(np.einsum("bii->b", rho[:, -TAIL_MARGIN:, -TAIL_MARGIN:]).real.max())
            if tail > TAIL_ERROR:
                raise TruncationError(
                    f"tail mass {tail:.3e} > {TAIL_ERROR:.1e} at step {k}; "
                    "increase the basis dimension"
                )
            mom[:, j, :] = _batch_moments(wk, rho)
            if keep_current:
                cur[:, j] = J
    return mom, cur, renorm_max


def run_trajectory(
    p: ModelParams,
    rho0: np.ndarray,
    t_final: float,
    dt: float,
    seed,
    *,
    record_every: int = 1,
) -> Trajectory:
    """Integrate one conditioned trajectory.

    The record is a pure function of (seed, p, dt, t_final): identical inputs
    give bit-identical arrays.  ``seed`` may be an int or a tuple of ints.
    """
    _check_dt(p, dt)
    if p.g != 0.0 and p.chi == 0.0:
        raise ParameterError("chi = 0 with g != 0: feedback noise term diverges")
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ParameterError("t_final must cover at least one step")
    seed_t = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    record_idx = np.arange(record_every - 1, n_steps, record_every)
    if record_idx[-1] != n_steps - 1:
        record_idx = np.append(record_idx, n_steps - 1)
    mom, cur, renorm_max = _run_chunk(
        p, rho0, [seed_t], n_steps, dt, record_idx, keep_current=True
    )
    times = (record_idx + 1) * dt
    return Trajectory(
        times=times,
        moments=mom[0],
        current=cur[0],
        seed=seed_t,
        dt=dt,
        renorm_max=renorm_max,
    )


def _chunk_task(args):
    return _run_chunk(*args)


def ensemble(
    p: ModelParams,
    n_traj: int,
    t_final: float,
    dt: float,
    base_seed: int,
    *,
    rho0: np.ndarray | None = None,
    dim: int = 30,
    n_checkpoints: int = 20,
    n_workers: int = 1,
    keep_members: bool = False,
) -> EnsembleStats:
    """Trajectory ensemble with deterministic seeding and fixed-order reduction.

    Trajectory i draws its noise from a stream keyed by (base_seed, i); work
    is split into fixed CHUNK_SIZE batches regardless of ``n_workers``, and
    the reduction runs in trajectory order, so the statistics do not depend on
    scheduling.
    """
    if n_traj < 1:
        raise ParameterError("n_traj must be >= 1")
    _check_dt(p, dt)
    if rho0 is None:
        rho0 = np.zeros((dim, dim), dtype=complex)
        rho0[0, 0] = 1.0
    n_steps = int(round(t_final / dt))
    every = max(1, n_steps // n_checkpoints)
    record_idx = np.arange(every - 1, n_steps, every)

    chunks = []
    for lo in range(0, n_traj, CHUNK_SIZE):
        seeds = [(base_seed, i) for i in range(lo, min(lo + CHUNK_SIZE, n_traj))]
        chunks.append((p, rho0, seeds, n_steps, dt, record_idx, False))

    if n_workers > 1 and len(chunks) > 1:
        with get_context("fork").Pool(n_workers) as pool:
            results = pool.map(_chunk_task, chunks)
    else:
        results = [_chunk_task(c) for c in chunks]

    mom = np.concatenate([r[0] for r in results], axis=0)
    mean = mom.mean(axis=0)
    if n_traj >= 2:
        stderr = mom.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        stderr = np.full_like(mean, np.nan)
    return EnsembleStats(
        times=(record_idx + 1) * dt,
        mean=mean,
        stderr=stderr,
        n_traj=n_traj,
        members=mom if keep_members else None,
    )
