"""Exception and warning types shared across the package."""


class ParameterError(ValueError):
    """A model parameter violates its domain (sign, range, or zero denominator)."""


class SingularParameterError(ParameterError):
    """A derived coefficient is singular (vanishing effective damping or denominator)."""


class StabilityError(ValueError):
    """Parameters admit no stationary state; the message names the violated inequality."""


class PhysicalityError(ValueError):
    """Effective-bath coefficients do not define a completely positive generator."""


class InvalidStateError(ValueError):
    """A matrix fails the density-matrix checks (hermiticity, trace, positivity)."""


class TruncationError(RuntimeError):
    """Population piled up at the edge of the truncated number basis."""


class ConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance within budget."""


class StepSizeError(ValueError):
    """Integration step exceeds the stability/accuracy bound for the given rates."""


class ConfigError(ValueError):
    """Run configuration is malformed (unknown key, bad value, unparsable file)."""


class PhysicalityWarning(UserWarning):
    """Effective-bath coefficients are at or past the squeezed-bath bound."""


class TruncationWarning(UserWarning):
    """Noticeable population in the top basis states; results may be dimension-limited."""
