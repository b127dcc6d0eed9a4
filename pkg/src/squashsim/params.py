"""Model parameters, derived couplings, and the effective feedback bath.

Conventions used throughout the package:

* quadratures are ``X_theta = (a e^{i theta} + a^dag e^{-i theta}) / 2`` so the
  vacuum variance is 1/4,
* all rates (gamma, kappa, chi, g) are in s^-1,
* ``chi`` is stored as a magnitude; the natural sign of the cross-Kerr coupling
  is negative and is kept as a separate flag where it is derived.  Every
  downstream coefficient depends on chi only through chi**2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import (
    ParameterError,
    PhysicalityWarning,
    SingularParameterError,
)

__all__ = [
    "ModelParams",
    "PhysicalInputs",
    "EffectiveBath",
    "DerivedCouplings",
    "RegimeCheck",
    "RegimeReport",
    "derive_couplings",
    "effective_bath",
    "check_regime",
]


@dataclass(frozen=True)
class PhysicalInputs:
    """Upstream physical quantities the reduced coupling derives from.

    epsilon   -- atom-field coupling (s^-1)
    k_x0      -- Lamb-Dicke parameter k*x0 (dimensionless)
    delta     -- internal-transition detuning (s^-1), must be positive
    alpha_mag -- semiclassical vibrational amplitude |alpha|
    beta_mag  -- semiclassical cavity amplitude |beta|
    """

    epsilon: float
    k_x0: float
    delta: float
    alpha_mag: float
    beta_mag: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if self.alpha_mag <= 0 or self.beta_mag <= 0:
            raise ParameterError("semiclassical amplitudes must be positive")


@dataclass(frozen=True)
class ModelParams:
    """The seven rates/phases of the reduced model.

    gamma -- vibrational damping rate (s^-1), > 0
    kappa -- cavity decay rate (s^-1), > 0
    chi   -- effective measurement coupling magnitude (s^-1), >= 0
    g     -- feedback gain (s^-1); 0 switches the loop off
    phi   -- local-oscillator phase (rad)
    eta   -- detection efficiency in (0, 1]
    nbar  -- thermal phonon number of the vibrational bath, >= 0

    ``physical`` optionally carries the upstream quantities for regime checks.
    """

    gamma: float
    kappa: float
    chi: float
    g: float = 0.0
    phi: float = -math.pi / 2
    eta: float = 0.8
    nbar: float = 0.0
    physical: PhysicalInputs | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if self.chi < 0:
            raise ParameterError(f"chi is a magnitude and must be >= 0, got {self.chi}")
        if not 0.0 < self.eta <= 1.0:
            raise ParameterError(f"eta must lie in (0, 1], got {self.eta}")
        if self.nbar < 0:
            raise ParameterError(f"nbar must be >= 0, got {self.nbar}")

    @property
    def g_sin_phi(self) -> float:
        """The gain component that renormalizes the damping."""
        return self.g * math.sin(self.phi)

    @property
    def measurement_rate(self) -> float:
        """Backaction/information rate chi^2 / kappa."""
        return self.chi**2 / self.kappa


@dataclass(frozen=True)
class DerivedCouplings:
    """Cross-Kerr rate G and measurement coupling derived from PhysicalInputs.

    ``chi`` is the magnitude; ``chi_sign`` records the natural sign of
    -4 G |alpha| |beta| (i.e. -1 whenever the coupling is nonzero).
    """

    G: float
    chi: float
    chi_sign: int


@dataclass(frozen=True)
class EffectiveBath:
    """Coefficients (Gamma, N, M) of the feedback-modified damping.

    Gamma is the effective damping rate, N the effective thermal occupancy and
    M the complex squeezing coefficient.  A legitimate squeezed bath satisfies
    |M| <= sqrt(N (N + 1)).
    """

    Gamma: float
    N: float
    M: complex

    @property
    def squeezing_bound(self) -> float:
        return math.sqrt(self.N * (self.N + 1.0))

    @property
    def is_physical(self) -> bool:
        return abs(self.M) <= self.squeezing_bound * (1.0 + 1e-12)


def derive_couplings(p: PhysicalInputs) -> DerivedCouplings:
    """Cross-Kerr rate G = 2 (epsilon k x0)^2 / Delta and |chi| = 4 G |alpha| |beta|."""
    G = 2.0 * (p.epsilon * p.k_x0) ** 2 / p.delta
    chi = 4.0 * G * p.alpha_mag * p.beta_mag
    return DerivedCouplings(G=G, chi=chi, chi_sign=-1 if chi > 0 else 0)


def effective_bath(p: ModelParams) -> EffectiveBath:
    """Effective (Gamma, N, M) of the feedback-averaged master equation.

    Gamma = gamma - g sin(phi)
    N     = [gamma nbar + chi^2/(4 kappa) + g^2 kappa/(4 eta chi^2)
             + (g/2) sin(phi)] / Gamma
    M     = -[chi^2/(4 kappa) - g^2 kappa/(4 eta chi^2)
             - i (g/2) cos(phi)] / Gamma

    The feedback-noise term diverges as chi -> 0 with the loop closed, so
    chi = 0 is rejected unless g = 0.  Emits PhysicalityWarning (rather than
    raising) if |M| exceeds the squeezed-bath bound; the deterministic
    integrator is the place where that becomes a hard error.
    """
    if p.chi == 0.0 and p.g != 0.0:
        raise ParameterError("chi = 0 with g != 0: feedback noise term diverges")
    Gamma = p.gamma - p.g_sin_phi
    if Gamma == 0.0:
        raise SingularParameterError(
            "effective damping Gamma = gamma - g*sin(phi) vanishes"
        )
    u = p.chi**2 / (4.0 * p.kappa)
    v = 0.0 if p.g == 0.0 else p.g**2 * p.kappa / (4.0 * p.eta * p.chi**2)
    sphi, cphi = math.sin(p.phi), math.cos(p.phi)
    N = (p.gamma * p.nbar + u + v + 0.5 * p.g * sphi) / Gamma
    M = -(u - v - 0.5j * p.g * cphi) / Gamma
    bath = EffectiveBath(Gamma=Gamma, N=N, M=M)
    if not bath.is_physical:
        warnings.warn(
            f"|M| = {abs(M):.6g} exceeds sqrt(N(N+1)) = {bath.squeezing_bound:.6g}; "
            "the effective bath is not completely positive",
            PhysicalityWarning,
            stacklevel=2,
        )
    return bath


@dataclass(frozen=True)
class RegimeCheck:
    """One model-validity check; ``passed`` is None when inputs are missing."""

    name: str
    passed: bool | None
    ratio: float | None
    threshold: float
    detail: str


@dataclass(frozen=True)
class RegimeReport:
    checks: tuple[RegimeCheck, ...]

    def __getitem__(self, name: str) -> RegimeCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_passed(self) -> bool:
        """True if no evaluated check failed (unevaluated checks are ignored)."""
        return all(c.passed for c in self.checks if c.passed is not None)


def check_regime(
    p: ModelParams,
    phys: PhysicalInputs | None = None,
    *,
    adiabatic_min: float = 10.0,
    lamb_dicke_max: float = 0.1,
    amplitude_min: float = 10.0,
) -> RegimeReport:
    """Diagnostic report on the regime assumptions behind the reduced model.

    adiabatic     kappa/chi >= adiabatic_min (cavity eliminable)
    stability     g sin(phi) < gamma
    lamb_dicke    k_x0 * |alpha| <= lamb_dicke_max and |alpha| >= amplitude_min
    semiclassical |beta| >= amplitude_min

    The thresholds stand in for the strict-inequality regime statements and
    are configurable.  Checks whose inputs are absent are reported with
    ``passed=None``.  Never raises.
    """
    phys = phys if phys is not None else p.physical
    checks: list[RegimeCheck] = []

    if p.chi > 0:
        ratio = p.kappa / p.chi
        checks.append(
            RegimeCheck(
                "adiabatic",
                ratio >= adiabatic_min,
                ratio,
                adiabatic_min,
                f"kappa/chi = {ratio:.4g} (want >= {adiabatic_min:g})",
            )
        )
    else:
        checks.append(
            RegimeCheck(
                "adiabatic", None, None, adiabatic_min, "chi = 0: no measurement channel"
            )
        )

    sratio = p.g_sin_phi / p.gamma
    checks.append(
        RegimeCheck(
            "stability",
            p.g_sin_phi < p.gamma,
            sratio,
            1.0,
            f"g*sin(phi)/gamma = {sratio:.4g} (want < 1)",
        )
    )

    if phys is not None:
        ld = phys.k_x0 * phys.alpha_mag
        ok = ld <= lamb_dicke_max and phys.alpha_mag >= amplitude_min
        checks.append(
            RegimeCheck(
                "lamb_dicke",
                ok,
                ld,
                lamb_dicke_max,
                f"k_x0*|alpha| = {ld:.4g} (want <= {lamb_dicke_max:g}) with "
                f"|alpha| = {phys.alpha_mag:.4g} (want >= {amplitude_min:g})",
            )
        )
        checks.append(
            RegimeCheck(
                "semiclassical",
                phys.beta_mag >= amplitude_min,
                phys.beta_mag,
                amplitude_min,
                f"|beta| = {phys.beta_mag:.4g} (want >= {amplitude_min:g})",
            )
        )
    else:
        checks.append(
            RegimeCheck("lamb_dicke", None, None, lamb_dicke_max, "no physical inputs")
        )
        checks.append(
            RegimeCheck("semiclassical", None, None, amplitude_min, "no physical inputs")
        )

    return RegimeReport(checks=tuple(checks))
