"""Two-mode (vibration + cavity) linearized Gaussian model.

This is the model *before* the cavity is eliminated.  In quadrature
coordinates u = (X_a, P_a, X_b, P_b) with vacuum variance 1/4, the linearized
Langevin equations driven by the bilinear coupling H = hbar*chi*X_b*X_a are

    dX_a = -(gamma/2) X_a dt + noise          (unmeasured back-action-free)
    dP_a = -(gamma/2) P_a dt - (chi/2) X_b dt + noise
    dX_b = -(kappa/2) X_b dt + noise          (free cavity quadrature)
    dP_b = -(kappa/2) P_b dt - (chi/2) X_a dt + noise

so the cavity quadrature carrying the X_a signal is P_b, and X_a itself is
never driven by the coupling.  The stationary covariance solves the Lyapunov
equation F V + V F^T + D = 0 and quantifies how good the cavity elimination
is (``adiabatic_check``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ParameterError
from .params import ModelParams

__all__ = [
    "TwoModePhysical",
    "TwoModeGaussian",
    "FixedPointResult",
    "AdiabaticReport",
    "semiclassical_fixed_point",
    "assemble_drift_diffusion",
    "two_mode_from_rates",
    "stationary_covariance",
    "adiabatic_check",
]


@dataclass(frozen=True)
class TwoModePhysical:
    """Drives, detunings, and rates of the coupled vibration-cavity pair.

    delta_a / delta_b -- bare detunings of the vibrational / cavity drives (s^-1)
    G                 -- cross-Kerr rate (s^-1)
    drive_a / drive_b -- complex drive amplitudes (s^-1)
    """

    delta_a: float
    delta_b: float
    G: float
    drive_a: complex
    drive_b: complex
    gamma: float
    kappa: float
    nbar: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0 or self.kappa <= 0:
            raise ParameterError("gamma and kappa must be positive")
        if self.G < 0:
            raise ParameterError("G must be >= 0")
        if self.nbar < 0:
            raise ParameterError("nbar must be >= 0")


@dataclass(frozen=True)
class TwoModeGaussian:
    """Drift F, diffusion D, and stationary covariance V on (X_a, P_a, X_b, P_b)."""

    F: np.ndarray
    D: np.ndarray
    V: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.F @ self.V + self.V @ self.F.T + self.D)))


@dataclass(frozen=True)
class FixedPointResult:
    alpha: complex
    beta: complex
    residual: float
    iterations: int
    tuned: bool  # drives tuned so the effective detunings vanish


def _fixed_point_residual(tp: TwoModePhysical, alpha: complex, beta: complex):
    rb = (
        -1j * (tp.delta_b - tp.G / 2.0 - tp.G * abs(alpha) ** 2) * beta
        - 0.5 * tp.kappa * beta
        + tp.drive_b
    )
    ra = (
        -1j * (tp.delta_a - tp.G * abs(beta) ** 2) * alpha
        - 0.5 * tp.gamma * alpha
        + tp.drive_a
    )
    return ra, rb


def semiclassical_fixed_point(
    tp: TwoModePhysical, *, tol: float = 1e-12, max_iter: int = 100
) -> FixedPointResult:
    """Self-consistent classical amplitudes (alpha, beta) of the driven pair.

    Solves the coupled stationary equations by Newton iteration in the four
    real components, starting from the decoupled (G = 0) solution.  Also
    reports whether the configuration is "tuned", i.e. |alpha|^2 = delta_b/G
    - 1/2 and |beta|^2 = delta_a/G, which makes both effective detunings
    vanish and alpha = 2 drive_a / gamma, beta = 2 drive_b / kappa.
    """
    alpha = tp.drive_a / (1j * tp.delta_a + 0.5 * tp.gamma)
    beta = tp.drive_b / (1j * tp.delta_b + 0.5 * tp.kappa)

    if tp.G == 0.0:
        ra, rb = _fixed_point_residual(tp, alpha, beta)
        return FixedPointResult(
            alpha=alpha,
            beta=beta,
            residual=max(abs(ra), abs(rb)),
            iterations=0,
            tuned=False,
        )

    z = np.array([alpha.real, alpha.imag, beta.real, beta.imag])
    it = 0
    for it in range(1, max_iter + 1):
        al = complex(z[0], z[1])
        be = complex(z[2], z[3])
        ra, rb = _fixed_point_residual(tp, al, be)
        res = max(abs(ra), abs(rb))
        if res <= tol:
            break
        # Wirtinger derivatives of (ra, rb) wrt (alpha, beta) and conjugates
        da = -1j * (tp.delta_a - tp.G * abs(be) ** 2) - 0.5 * tp.gamma
        ra_b = 1j * tp.G * np.conj(be) * al
        ra_bc = 1j * tp.G * be * al
        db = -1j * (tp.delta_b - tp.G / 2.0 - tp.G * abs(al) ** 2) - 0.5 * tp.kappa
        rb_a = 1j * tp.G * np.conj(al) * be
        rb_ac = 1j * tp.G * al * be

        def real_block(d_hol, d_anti):
            return np.array(
                [
                    [(d_hol + d_anti).real, (-d_hol + d_anti).imag],
                    [(d_hol + d_anti).imag, (d_hol - d_anti).real],
                ]
            )

        Jm = np.zeros((4, 4))
        Jm[0:2, 0:2] = real_block(da, 0.0)
        Jm[0:2, 2:4] = real_block(ra_b, ra_bc)
        Jm[2:4, 0:2] = real_block(rb_a, rb_ac)
        Jm[2:4, 2:4] = real_block(db, 0.0)
        rvec = np.array([ra.real, ra.imag, rb.real, rb.imag])
        try:
            z = z - np.linalg.solve(Jm, rvec)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"Newton Jacobian singular: {exc}")
    else:
        ra, rb = _fixed_point_residual(tp, complex(z[0], z[1]), complex(z[2], z[3]))
        raise ConvergenceError(
            f"fixed point not found in {max_iter} iterations; "
            f"residual {max(abs(ra), abs(rb)):.3e}"
        )

    alpha = complex(z[0], z[1])
    beta = complex(z[2], z[3])
    ra, rb = _fixed_point_residual(tp, alpha, beta)
    tuned = (
        math.isclose(abs(alpha) ** 2, tp.delta_b / tp.G - 0.5, rel_tol=1e-9, abs_tol=1e-9)
        and math.isclose(abs(beta) ** 2, tp.delta_a / tp.G, rel_tol=1e-9, abs_tol=1e-9)
    )
    return FixedPointResult(
        alpha=alpha,
        beta=beta,
        residual=max(abs(ra), abs(rb)),
        iterations=it,
        tuned=tuned,
    )


def assemble_drift_diffusion(
    tp: TwoModePhysical, alpha: complex, beta: complex
) -> tuple[np.ndarray, np.ndarray]:
    """Drift and diffusion of the linearized fluctuations around (alpha, beta).

    Requires (nearly) real amplitudes, which fixes the quadrature phases; the
    coupling strength is chi = 4 G |alpha| |beta|.
    """
    scale = max(abs(alpha), abs(beta), 1.0)
    if abs(alpha.imag) > 1e-9 * scale or abs(beta.imag) > 1e-9 * scale:
        raise ParameterError(
            "linearization assumes real classical amplitudes; rotate the drive phases"
        )
    chi = 4.0 * tp.G * abs(alpha) * abs(beta)
    return two_mode_from_rates(tp.gamma, tp.kappa, chi, tp.nbar)


def two_mode_from_rates(
    gamma: float, kappa: float, chi: float, nbar: float
) -> tuple[np.ndarray, np.ndarray]:
    """(F, D) on (X_a, P_a, X_b, P_b) for given rates and coupling magnitude."""
    if gamma <= 0 or kappa <= 0:
        raise ParameterError("gamma and kappa must be positive")
    F = np.array(
        [
            [-0.5 * gamma, 0.0, 0.0, 0.0],
            [0.0, -0.5 * gamma, -0.5 * chi, 0.0],
            [0.0, 0.0, -0.5 * kappa, 0.0],
            [-0.5 * chi, 0.0, 0.0, -0.5 * kappa],
        ]
    )
    D = np.diag(
        [
            0.25 * gamma * (2.0 * nbar + 1.0),
            0.25 * gamma * (2.0 * nbar + 1.0),
            0.25 * kappa,
            0.25 * kappa,
        ]
    )
    return F, D


def stationary_covariance(F: np.ndarray, D: np.ndarray, *, tol: float = 1e-10) -> np.ndarray:
    """Solve F V + V F^T + D = 0 by the dense vectorized linear system.

    F must be Hurwitz; the residual of the returned V is checked against
    ``tol``.
    """
    F = np.asarray(F, dtype=float)
    D = np.asarray(D, dtype=float)
    n = F.shape[0]
    if np.max(np.linalg.eigvals(F).real) >= 0.0:
        raise ParameterError("drift matrix is not Hurwitz; no stationary covariance")
    lhs = np.kron(F, np.eye(n)) + np.kron(np.eye(n), F)
    v = np.linalg.solve(lhs, -D.ravel())
    V = v.reshape(n, n)
    V = 0.5 * (V + V.T)
    resid = float(np.max(np.abs(F @ V + V @ F.T + D)))
    if resid > tol:
        raise ConvergenceError(f"Lyapunov residual {resid:.3e} > {tol:.1e}")
    return V


@dataclass(frozen=True)
class AdiabaticReport:
    """How well the reduced model matches the two-mode stationary variances."""

    in_regime: bool
    kappa_over_chi: float
    var_x_two_mode: float
    var_p_two_mode: float
    var_x_reduced: float
    var_p_reduced: float
    x_rel_dev: float
    p_rel_dev: float
    p_dev_bound: float  # the O(gamma/kappa + chi^2/kappa^2) scale

    @property
    def within_bounds(self) -> bool:
        return self.x_rel_dev <= 1e-10 and self.p_rel_dev <= self.p_dev_bound


def adiabatic_check(
    p: ModelParams,
    two_mode: TwoModeGaussian | None = None,
    *,
    regime_min: float = 10.0,
    bound_factor: float = 2.0,
) -> AdiabaticReport:
    """Compare two-mode stationary variances with the reduced g = 0 predictions.

    Reduced model: Var(X_a) = (1/2)(1/2 + nbar) and
    Var(P_a) = (1/2)(1/2 + nbar + chi^2/(2 kappa gamma)).  The deviation of
    Var(P_a) should be of order gamma/kappa + (chi/kappa)^2 when
    kappa/chi >= ``regime_min``; out of regime the report is returned with
    ``in_regime=False`` and no expectation attached.
    """
    if two_mode is None:
        F, D = two_mode_from_rates(p.gamma, p.kappa, p.chi, p.nbar)
        V = stationary_covariance(F, D)
        two_mode = TwoModeGaussian(F=F, D=D, V=V)
    V = two_mode.V
    var_x = float(V[0, 0])
    var_p = float(V[1, 1])
    red_x = 0.5 * (0.5 + p.nbar)
    red_p = 0.5 * (0.5 + p.nbar + p.chi**2 / (2.0 * p.kappa * p.gamma))
    kc = p.kappa / p.chi if p.chi > 0 else math.inf
    return AdiabaticReport(
        in_regime=kc >= regime_min,
        kappa_over_chi=kc,
        var_x_two_mode=var_x,
        var_p_two_mode=var_p,
        var_x_reduced=red_x,
        var_p_reduced=red_p,
        x_rel_dev=abs(var_x - red_x) / red_x,
        p_rel_dev=abs(var_p - red_p) / red_p,
        p_dev_bound=bound_factor * (p.gamma / p.kappa + (p.chi / p.kappa) ** 2),
    )
