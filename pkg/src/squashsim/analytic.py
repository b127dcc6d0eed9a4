"""Closed-form stationary state of the feedback master equation.

The stationary state is Gaussian with zero mean.  It is parameterized by the
normally ordered moments ``zeta = <a^dag a>`` and ``mu = <a^2>``, from which
every quadrature variance follows as

    Var(X_theta) = (1/2) [ 1/2 + zeta + Re(mu e^{2 i theta}) ].

A stationary state exists only when both second-moment relaxation rates

    gamma  and  gamma - 2 g sin(phi)

are positive.  The first-order condition g sin(phi) < gamma quoted with the
model is necessary but not sufficient; see ``is_stable`` vs the checks
performed by the evaluators below.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StabilityError
from .params import ModelParams, effective_bath

__all__ = [
    "StationaryGaussian",
    "QuadCovariance",
    "ContourEllipse",
    "is_stable",
    "second_moment_rates",
    "stationary_solution",
    "quad_variance",
    "n_eff",
    "covariance",
    "contour_ellipse",
    "wigner_gaussian",
]


@dataclass(frozen=True)
class StationaryGaussian:
    """Stationary normally ordered moments: zeta = <a^dag a>, mu = <a^2>."""

    zeta: float
    mu: complex


@dataclass(frozen=True)
class QuadCovariance:
    """2x2 quadrature covariance on the (X_0, X_{pi/2}) axes; vacuum = diag(1/4, 1/4)."""

    vxx: float
    vpp: float
    vxp: float

    def matrix(self) -> np.ndarray:
        return np.array([[self.vxx, self.vxp], [self.vxp, self.vpp]])

    @property
    def det(self) -> float:
        return self.vxx * self.vpp - self.vxp**2


@dataclass(frozen=True)
class ContourEllipse:
    """1/sqrt(e) contour of the Gaussian Wigner function: u . C^-1 . u = 1."""

    semi_major: float
    semi_minor: float
    angle: float  # orientation of the major axis, in (-pi/2, pi/2]


def is_stable(p: ModelParams) -> bool:
    """The first-order stability condition g sin(phi) < gamma (strict)."""
    return p.g_sin_phi < p.gamma


def second_moment_rates(p: ModelParams) -> tuple[float, float]:
    """Relaxation rates (gamma - 2 g sin(phi), gamma) of the second moments.

    Both must be positive for the moments to converge to the stationary
    solution; the first governs the fed-back quadrature pair (zeta + Re mu),
    the second the orthogonal one.
    """
    return p.gamma - 2.0 * p.g_sin_phi, p.gamma


def _require_stationary(p: ModelParams) -> None:
    if not is_stable(p):
        raise StabilityError(
            f"g*sin(phi) < gamma violated: g*sin(phi) = {p.g_sin_phi:.6g}, "
            f"gamma = {p.gamma:.6g}"
        )
    if p.gamma - 2.0 * p.g_sin_phi <= 0.0:
        raise StabilityError(
            "gamma - 2*g*sin(phi) > 0 violated "
            f"(= {p.gamma - 2.0 * p.g_sin_phi:.6g}): second moments do not relax"
        )


def stationary_solution(p: ModelParams, *, nu: float = 0.0) -> StationaryGaussian:
    """Stationary (zeta, mu) of the feedback master equation.

    Evaluates the closed form

        zeta = [N Gamma^2 + g sin(phi) (Gamma Re M + 2 nu Im M)
                + g^2 sin^2(phi)/2] / (Gamma^2 - g^2 sin^2(phi))
        mu   = Gamma [(N + 1/2) g sin(phi) + Gamma Re M]
               / (Gamma^2 - g^2 sin^2(phi))  +  i Im M

    ``nu`` multiplies a term of uncertain provenance; the moment-equation
    oracle (evolve_det.moment_oracle) confirms nu = 0, which is the default.
    Raises StabilityError with the violated inequality otherwise.
    """
    _require_stationary(p)
    bath = effective_bath(p)
    s = p.g_sin_phi
    if s == 0.0:
        return StationaryGaussian(zeta=bath.N, mu=bath.M)
    G2s2 = bath.Gamma**2 - s**2
    zeta = (
        bath.N * bath.Gamma**2
        + s * (bath.Gamma * bath.M.real + 2.0 * nu * bath.M.imag)
        + 0.5 * s**2
    ) / G2s2
    re_mu = bath.Gamma * ((bath.N + 0.5) * s + bath.Gamma * bath.M.real) / G2s2
    im_mu = (G2s2 * bath.M.imag) / G2s2
    return StationaryGaussian(zeta=zeta, mu=complex(re_mu, im_mu))


def quad_variance(sg: StationaryGaussian, theta: float) -> float:
    """Variance of X_theta for the zero-mean Gaussian state (zeta, mu)."""
    return 0.5 * (0.5 + sg.zeta + (sg.mu * cmath.exp(2j * theta)).real)


def n_eff(p: ModelParams) -> float:
    """Effective occupancy zeta + Re(mu) governing the fed-back quadrature.

    Var(X_0) = (1/2)(1/2 + n_eff); values below zero mean sub-vacuum noise,
    bounded below by -1/2.  Computed through the cancellation-free equivalent

        n_eff = [gamma nbar + g^2 kappa/(2 eta chi^2) + g sin(phi)]
                / (gamma - 2 g sin(phi))

    which reduces to nbar exactly when the loop is open.
    """
    if p.g == 0.0:
        return p.nbar
    _require_stationary(p)
    if p.chi == 0.0:
        raise ParameterError("chi = 0 with g != 0: feedback noise term diverges")
    s = p.g_sin_phi
    two_v = p.g**2 * p.kappa / (2.0 * p.eta * p.chi**2)
    return (p.gamma * p.nbar + two_v + s) / (p.gamma - 2.0 * s)


def covariance(sg: StationaryGaussian) -> QuadCovariance:
    """Quadrature covariance on the (X_0, X_{pi/2}) axes.

    vxx = (1/2)(1/2 + zeta + Re mu), vpp = (1/2)(1/2 + zeta - Re mu),
    vxp = -(Im mu)/2; reconstructs quad_variance through
    vxx cos^2(theta) + vpp sin^2(theta) + vxp sin(2 theta).
    """
    vxx = 0.5 * (0.5 + sg.zeta + sg.mu.real)
    vpp = 0.5 * (0.5 + sg.zeta - sg.mu.real)
    vxp = -0.5 * sg.mu.imag
    if vxx <= 0.0 or vpp <= 0.0 or vxx * vpp - vxp**2 <= 0.0:
        raise ParameterError(
            f"covariance not positive definite: vxx={vxx:.6g}, vpp={vpp:.6g}, "
            f"vxp={vxp:.6g}"
        )
    return QuadCovariance(vxx=vxx, vpp=vpp, vxp=vxp)


def contour_ellipse(c: QuadCovariance, *, circular_rtol: float = 1e-12) -> ContourEllipse:
    """Ellipse u . C^-1 . u = 1 where the Wigner function drops to 1/sqrt(e).

    Semi-axes are the square roots of the covariance eigenvalues; the angle is
    the major-axis direction folded into (-pi/2, pi/2], with 0 returned for a
    circular covariance.
    """
    if c.det <= 0.0 or c.vxx <= 0.0:
        raise ParameterError("covariance must be positive definite")
    w, v = np.linalg.eigh(c.matrix())
    if w[0] <= 0.0:
        raise ParameterError("covariance must be positive definite")
    if (w[1] - w[0]) <= circular_rtol * w[1]:
        angle = 0.0
    else:
        angle = math.atan2(v[1, 1], v[0, 1])
        if angle <= -math.pi / 2:
            angle += math.pi
        elif angle > math.pi / 2:
            angle -= math.pi
    return ContourEllipse(
        semi_major=math.sqrt(w[1]), semi_minor=math.sqrt(w[0]), angle=angle
    )


def wigner_gaussian(c: QuadCovariance, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Zero-mean Gaussian Wigner function on the lattice x[i], p[j].

    W(x, p) = exp(-u . C^-1 . u / 2) / (2 pi sqrt(det C)); integrates to 1.
    Returns an array of shape (len(x), len(p)).
    """
    det = c.det
    if det <= 0.0 or c.vxx <= 0.0:
        raise ParameterError("covariance must be positive definite")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    xx, pp = np.meshgrid(x, p, indexing="ij")
    # inverse of [[vxx, vxp], [vxp, vpp]] applied to (x, p)
    quad = (c.vpp * xx**2 - 2.0 * c.vxp * xx * pp + c.vxx * pp**2) / det
    return np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))
