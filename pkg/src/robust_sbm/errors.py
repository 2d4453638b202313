"""Exception hierarchy.

Every error raised on purpose by the package derives from ``RobustSBMError`` so
the CLI can map it to an exit code.  Errors that mean "the input is wrong" also
derive from ``ValueError``; errors that mean "a numerical guarantee broke"
derive from ``InvariantViolation``.
"""


class RobustSBMError(Exception):
    pass


class ConfigError(RobustSBMError, ValueError):
    pass


class InvariantViolation(RobustSBMError, RuntimeError):
    pass


# model
class NonSymmetric(ConfigError):
    pass


class NegativeEntry(ConfigError):
    pass


class NotSimplex(ConfigError):
    pass


class NormalizationViolated(ConfigError):
    pass


class DegenerateSpectrum(ConfigError):
    pass


class ProbabilityOverflow(ConfigError):
    pass


class SeriesSingularity(ConfigError, ArithmeticError):
    pass


class NoFeasibleParams(ConfigError):
    pass


class BelowThreshold(ConfigError):
    """Model is at or below the detectability threshold."""


# graphmat / spectra
class OracleTooLarge(ConfigError):
    pass


class TooLarge(ConfigError):
    pass


class NoConvergence(InvariantViolation):
    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class SingularShift(InvariantViolation):
    pass


# adversary
class BudgetTooSmall(ConfigError):
    pass


class ExhaustedMoves(ConfigError):
    pass


class SizeMismatch(ConfigError):
    pass


# robustpca / rounding / metrics
class IterationCapExceeded(InvariantViolation):
    pass


class EmptySubspace(RobustSBMError):
    pass


class DimensionTooSmall(ConfigError):
    pass


class HullDegenerate(InvariantViolation):
    pass


class ZeroNorm(RobustSBMError, ValueError):
    pass


class EmptyCommunity(ConfigError):
    pass
