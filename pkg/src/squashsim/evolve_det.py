"""Deterministic master-equation right-hand sides, propagation, and fixed points.

Three generators are provided:

* ``rhs_thermal``           -- damped oscillator in a thermal environment,
* ``rhs_generic_feedback``  -- measurement backaction plus the feedback
                               superoperator K rho = (g/2) [a - a^dag, rho]
                               written term by term,
* ``rhs_final_feedback``    -- the same generator rearranged as a squeezed
                               thermal bath (Gamma, N, M) plus a parametric
                               drive; agrees with the generic form elementwise
                               whenever cos(phi) = 0.

``moment_oracle`` solves the closed first/second-moment linear system of the
final generator and is the independent reference for the analytic module.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .analytic import is_stable, second_moment_rates
from .errors import (
    ConvergenceError,
    ParameterError,
    PhysicalityError,
    SingularParameterError,
    StabilityError,
    StepSizeError,
    TruncationError,
    TruncationWarning,
)
from .hilbert import operator_table, thermal_state
from .params import EffectiveBath, ModelParams, effective_bath

__all__ = [
    "RhsSpec",
    "rhs_thermal",
    "rhs_generic_feedback",
    "rhs_final_feedback",
    "rhs_squeezed_bath",
    "first_moment_drift",
    "rate_scale",
    "evolve",
    "EvolveResult",
    "steady_state",
    "moment_oracle",
]

TAIL_MARGIN = 5
TAIL_WARN = 1e-6
TAIL_ERROR = 1e-4
TRACE_STEP_TOL = 1e-10
HERM_STEP_TOL = 1e-12
MIN_EIG_TOL = -1e-8


def rhs_thermal(rho: np.ndarray, gamma: float, nbar: float) -> np.ndarray:
    """(gamma/2)(nbar+1)(2 a rho a+ - {a+a, rho}) + (gamma/2) nbar (2 a+ rho a - {a a+, rho})."""
    if gamma < 0 or nbar < 0:
        raise ParameterError("gamma and nbar must be non-negative")
    t = operator_table(rho.shape[0])
    out = (0.5 * gamma * (nbar + 1.0)) * (
        2.0 * t.a @ rho @ t.ad - t.n_diag[:, None] * rho - rho * t.n_diag[None, :]
    )
    if nbar > 0:
        out += (0.5 * gamma * nbar) * (
            2.0 * t.ad @ rho @ t.a - t.aad_diag[:, None] * rho - rho * t.aad_diag[None, :]
        )
    return out


def rhs_generic_feedback(rho: np.ndarray, p: ModelParams) -> np.ndarray:
    """Measurement + feedback generator assembled term by term.

    thermal part
    - (chi^2 / 2 kappa) [X, [X, rho]]
    + K(i e^{i phi} rho X - i e^{-i phi} X rho)
    + K^2 rho / (2 eta chi^2 / kappa),      K rho = (g/2) [a - a^dag, rho]
    """
    if p.chi == 0.0 and p.g != 0.0:
        raise ParameterError("chi = 0 with g != 0: feedback noise term diverges")
    t = operator_table(rho.shape[0])
    out = rhs_thermal(rho, p.gamma, p.nbar)
    if p.chi > 0.0:
        C = t.X @ rho - rho @ t.X
        out -= (p.chi**2 / (2.0 * p.kappa)) * (t.X @ C - C @ t.X)
    if p.g != 0.0:
        e_ip = np.exp(1j * p.phi)
        T = 1j * e_ip * rho @ t.X - 1j * np.conj(e_ip) * t.X @ rho
        out += (0.5 * p.g) * (t.A @ T - T @ t.A)
        C2 = t.A @ rho - rho @ t.A
        out += (p.g**2 * p.kappa / (8.0 * p.eta * p.chi**2)) * (t.A @ C2 - C2 @ t.A)
    return out


def rhs_squeezed_bath(
    rho: np.ndarray,
    Gamma: float,
    N: float,
    M: complex,
    *,
    parametric: float = 0.0,
    check_physical: bool = True,
) -> np.ndarray:
    """Squeezed-bath generator with an optional parametric term.

    The four bath terms use the coefficients (Gamma, N, M) directly; the
    parametric term is -(parametric/4) [a^2 - a^dag^2, rho] with
    ``parametric = g sin(phi)`` for the feedback model.  Rejects coefficient
    sets with |M| > sqrt(N(N+1)), which are not completely positive.
    """
    if check_physical and abs(M) > math.sqrt(max(N, 0.0) * (N + 1.0)) * (1.0 + 1e-12):
        raise PhysicalityError(
            f"|M| = {abs(M):.6g} > sqrt(N(N+1)) = {math.sqrt(max(N, 0.0) * (N + 1.0)):.6g}"
        )
    t = operator_table(rho.shape[0])
    out = (0.5 * Gamma * (N + 1.0)) * (
        2.0 * t.a @ rho @ t.ad - t.n_diag[:, None] * rho - rho * t.n_diag[None, :]
    )
    out += (0.5 * Gamma * N) * (
        2.0 * t.ad @ rho @ t.a - t.aad_diag[:, None] * rho - rho * t.aad_diag[None, :]
    )
    out -= (0.5 * Gamma * M) * (2.0 * t.ad @ rho @ t.ad - t.adad @ rho - rho @ t.adad)
    out -= (0.5 * Gamma * np.conj(M)) * (2.0 * t.a @ rho @ t.a - t.aa @ rho - rho @ t.aa)
    if parametric != 0.0:
        B = t.aa - t.adad
        out -= (0.25 * parametric) * (B @ rho - rho @ B)
    return out


def rhs_final_feedback(rho: np.ndarray, p: ModelParams) -> np.ndarray:
    """Feedback master equation in squeezed-bath form (hard physicality check)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the hard check below supersedes the warning
        bath = effective_bath(p)
    return rhs_squeezed_bath(
        rho, bath.Gamma, bath.N, bath.M, parametric=p.g_sin_phi, check_physical=True
    )


def first_moment_drift(p: ModelParams) -> np.ndarray:
    """Drift matrix of (Re<a>, Im<a>) under the final feedback generator.

    d<a>/dt = -(Gamma/2) <a> + (g sin(phi)/2) <a>*; both eigenvalues are
    negative exactly when the second moments relax as well.
    """
    bath = effective_bath(p)
    s = p.g_sin_phi
    return np.diag([-(bath.Gamma - s) / 2.0, -(bath.Gamma + s) / 2.0])


@dataclass(frozen=True)
class RhsSpec:
    """Which generator to integrate; ``build`` returns rho -> d(rho)/dt."""

    kind: str  # "thermal" | "generic_feedback" | "final_feedback"
    params: ModelParams

    def __post_init__(self):
        if self.kind not in ("thermal", "generic_feedback", "final_feedback"):
            raise ParameterError(f"unknown rhs kind {self.kind!r}")
        if self.kind == "final_feedback" and not is_stable(self.params):
            raise StabilityError(
                "final_feedback requires g*sin(phi) < gamma; got "
                f"g*sin(phi) = {self.params.g_sin_phi:.6g}, gamma = {self.params.gamma:.6g}"
            )

    def build(self) -> Callable[[np.ndarray], np.ndarray]:
        p = self.params
        if self.kind == "thermal":
            return lambda rho: rhs_thermal(rho, p.gamma, p.nbar)
        if self.kind == "generic_feedback":
            return lambda rho: rhs_generic_feedback(rho, p)
        return lambda rho: rhs_final_feedback(rho, p)


def rate_scale(spec: RhsSpec) -> float:
    """Fastest rate appearing in the generator, for step-size bounds."""
    p = spec.params
    rates = [p.gamma * (p.nbar + 1.0)]
    if spec.kind != "thermal":
        rates.append(p.measurement_rate)
        rates.append(abs(p.g))
        if spec.kind == "final_feedback":
            bath = effective_bath(p)
            rates.append(abs(bath.Gamma) * (abs(bath.N) + 1.0))
    return max(rates)


@dataclass(frozen=True)
class EvolveResult:
    times: np.ndarray
    states: list[np.ndarray]
    trace_step_max: float    # largest per-step trace change
    herm_step_max: float     # largest per-step growth of the hermiticity deviation
    herm_dev_max: float      # largest cumulative hermiticity deviation seen
    tail_max: float          # largest tail mass at the checkpoints
    min_eig: float           # smallest eigenvalue at the checkpoints

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def evolve(
    rho0: np.ndarray,
    rhs: RhsSpec | Callable[[np.ndarray], np.ndarray],
    t_final: float,
    dt: float,
    *,
    store_every: int = 1,
    n_spot_checks: int = 10,
) -> EvolveResult:
    """Fixed-step RK4 propagation with conservation and truncation checks.

    Enforces dt <= 0.1 / (fastest rate) when an RhsSpec is given.  Each step
    is checked for trace drift (<= 1e-10) and hermiticity (<= 1e-12); at
    ``n_spot_checks`` evenly spaced checkpoints the state is additionally
    checked for positivity (min eigenvalue >= -1e-8) and tail mass, warning
    above 1e-6 and raising above 1e-4.
    """
    if isinstance(rhs, RhsSpec):
        bound = 0.1 / rate_scale(rhs)
        if dt > bound:
            raise StepSizeError(f"dt = {dt:.4g} exceeds 0.1/max_rate = {bound:.4g}")
        f = rhs.build()
    else:
        f = rhs
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ParameterError("t_final must cover at least one step")
    spot = max(1, n_steps // max(1, n_spot_checks))

    rho = np.array(rho0, dtype=complex)
    states = [rho.copy()]
    stored_t = [0.0]
    trace_step_max = 0.0
    herm_prev = float(np.max(np.abs(rho - rho.conj().T)))
    herm_step_max = 0.0
    herm_dev_max = herm_prev
    tail_max = 0.0
    min_eig = float("inf")

    for k in range(n_steps):
        tr_before = np.einsum("ii->", rho).real
        k1 = f(rho)
        k2 = f(rho + (0.5 * dt) * k1)
        k3 = f(rho + (0.5 * dt) * k2)
        k4 = f(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        dtr = abs(np.einsum("ii->", rho).real - tr_before)
        trace_step_max = max(trace_step_max, dtr)
        if dtr > TRACE_STEP_TOL:
            raise ConvergenceError(f"trace changed by {dtr:.3e} in one step at t={k * dt:.4g}")
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        herm_step = max(0.0, herm - herm_prev)
        herm_step_max = max(herm_step_max, herm_step)
        herm_dev_max = max(herm_dev_max, herm)
        herm_prev = herm
        if herm_step > HERM_STEP_TOL:
            raise ConvergenceError(
                f"hermiticity deviation grew by {herm_step:.3e} in one step at t={k * dt:.4g}"
            )

        if (k + 1) % spot == 0 or k + 1 == n_steps:
            tail = float(np.sum(np.diag(rho)[-TAIL_MARGIN:]).real)
            tail_max = max(tail_max, tail)
            if tail > TAIL_ERROR:
                raise TruncationError(
                    f"tail mass {tail:.3e} > {TAIL_ERROR:.1e} at t={(k + 1) * dt:.4g}; "
                    "increase the basis dimension"
                )
            min_eig = min(min_eig, float(np.linalg.eigvalsh(rho).min()))
        if (k + 1) % store_every == 0 or k + 1 == n_steps:
            states.append(rho.copy())
            stored_t.append((k + 1) * dt)

    if tail_max > TAIL_WARN:
        warnings.warn(
            f"tail mass reached {tail_max:.3e} (> {TAIL_WARN:.1e})",
            TruncationWarning,
            stacklevel=2,
        )
    if min_eig < MIN_EIG_TOL:
        raise ConvergenceError(f"state lost positivity: min eigenvalue {min_eig:.3e}")
    return EvolveResult(
        times=np.array(stored_t),
        states=states,
        trace_step_max=trace_step_max,
        herm_step_max=herm_step_max,
        herm_dev_max=herm_dev_max,
        tail_max=tail_max,
        min_eig=min_eig,
    )


def _build_generator_matrix(f: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    """Column-probe the superoperator into a d^2 x d^2 matrix (C-order vec)."""
    L = np.empty((d * d, d * d), dtype=complex)
    E = np.zeros((d, d), dtype=complex)
    for k in range(d * d):
        E.flat[k] = 1.0
        L[:, k] = f(E).ravel()
        E.flat[k] = 0.0
    return L


def _require_relaxing(p: ModelParams) -> None:
    r_fast, r_slow = second_moment_rates(p)
    if min(r_fast, r_slow) <= 0.0:
        raise StabilityError(
            "gamma - 2*g*sin(phi) > 0 violated "
            f"(= {r_fast:.6g}): no stationary state to solve for"
        )


def steady_state(
    spec: RhsSpec,
    d: int = 30,
    tol: float = 1e-8,
    method: str = "direct",
    *,
    max_dim: int = 120,
    t_budget: float | None = None,
    dt: float | None = None,
) -> np.ndarray:
    """Stationary density matrix of the generator.

    method="direct" solves L vec(rho) = 0 with the trace functional replacing
    one row of the vectorized generator.  method="evolve" integrates from the
    thermal state until max|rhs| <= tol.  Either way the result must satisfy
    max|rhs(rho)| <= tol; if the tail mass at dimension d exceeds 1e-6, the
    dimension is doubled (up to ``max_dim``) and the solve repeated.
    """
    if spec.kind == "final_feedback":
        _require_relaxing(spec.params)
    if method not in ("direct", "evolve"):
        raise ParameterError(f"unknown method {method!r}")

    dim = d
    while True:
        rho = _steady_direct(spec, dim, tol) if method == "direct" else _steady_evolve(
            spec, dim, tol, t_budget, dt
        )
        tail = float(np.sum(np.diag(rho)[-TAIL_MARGIN:]).real)
        if tail <= TAIL_WARN:
            return rho
        if 2 * dim <= max_dim:
            dim *= 2
            continue
        if tail > TAIL_ERROR:
            raise TruncationError(
                f"tail mass {tail:.3e} > {TAIL_ERROR:.1e} at the dimension cap {dim}"
            )
        warnings.warn(
            f"tail mass {tail:.3e} at the dimension cap {dim}",
            TruncationWarning,
            stacklevel=2,
        )
        return rho


def _steady_direct(spec: RhsSpec, d: int, tol: float) -> np.ndarray:
    f = spec.build()
    L = _build_generator_matrix(f, d)
    L[0, :] = np.eye(d).ravel()  # replace one redundant row with Tr(rho) = 1
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    try:
        v = np.linalg.solve(L, b)
    except np.linalg.LinAlgError as exc:
        raise SingularParameterError(f"steady-state system singular at d={d}: {exc}")
    rho = v.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    resid = float(np.max(np.abs(f(rho))))
    if resid > tol:
        raise ConvergenceError(f"direct solve residual {resid:.3e} > tol {tol:.1e}")
    wmin = float(np.linalg.eigvalsh(rho).min())
    if wmin < MIN_EIG_TOL:
        raise ConvergenceError(f"steady state not positive: min eigenvalue {wmin:.3e}")
    return rho


def _steady_evolve(
    spec: RhsSpec,
    d: int,
    tol: float,
    t_budget: float | None,
    dt: float | None,
) -> np.ndarray:
    p = spec.params
    f = spec.build()
    if dt is None:
        # small enough that per-step roundoff stays within the conservation bounds
        dt = 0.02 / rate_scale(spec)
    slow = p.gamma if spec.kind == "thermal" else min(second_moment_rates(p))
    if t_budget is None:
        t_budget = 40.0 / slow
    seg = 2.0 / slow
    rho = thermal_state(d, p.nbar)
    t = 0.0
    resid = float(np.max(np.abs(f(rho))))
    while resid > tol:
        if t >= t_budget:
            raise ConvergenceError(
                f"steady state not reached within t={t_budget:.4g}: residual {resid:.3e}"
            )
        res = evolve(rho, f, min(seg, t_budget - t), dt, store_every=10**9, n_spot_checks=1)
        rho = res.final
        t += min(seg, t_budget - t)
        resid = float(np.max(np.abs(f(rho))))
    return rho


def moment_oracle(p: ModelParams) -> tuple[float, complex]:
    """Stationary (zeta, mu) from the closed moment system of the final generator.

    The equations of motion for zeta = <a^dag a> and mu = <a^2>,

        d zeta /dt = -Gamma zeta + s Re(mu) + Gamma N
        d mu   /dt = -Gamma mu   + s (zeta + 1/2) + Gamma M,      s = g sin(phi),

    are solved as a 3x3 real linear system.  This route never touches the
    closed-form expressions in the analytic module and serves as their oracle.
    """
    _require_relaxing(p)
    bath = effective_bath(p)
    s = p.g_sin_phi
    G = bath.Gamma
    A = np.array([[G, -s, 0.0], [-s, G, 0.0], [0.0, 0.0, G]])
    b = np.array([G * bath.N, G * bath.M.real + 0.5 * s, G * bath.M.imag])
    det = G * (G * G - s * s)
    if abs(det) <= 1e-14 * max(abs(G), abs(s)) ** 3:
        raise SingularParameterError(
            "moment system singular at the stability boundary "
            f"(Gamma = {G:.6g}, g sin(phi) = {s:.6g})"
        )
    zeta, re_mu, im_mu = np.linalg.solve(A, b)
    return float(zeta), complex(re_mu, im_mu)
