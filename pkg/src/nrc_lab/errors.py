"""Exception and warning types shared across the package.

Two exception families matter for the CLI exit-code contract:
``ValidationError`` subclasses map to exit code 2 (bad usage, unparseable or
precondition-violating input), everything else under ``NrcLabError`` maps to
exit code 1 (a numerical or runtime failure discovered mid-computation).
"""


class NrcLabError(Exception):
    """Base class for all package errors."""


class ValidationError(NrcLabError):
    """Input or usage problem detectable before/at the start of a computation."""


class ParseError(ValidationError):
    """File content could not be parsed (ragged rows, non-numeric cells)."""


class EmptyInput(ValidationError):
    """An input file or grid was empty."""


class NotPSD(ValidationError):
    """A matrix required to be positive semi-definite is not."""


class DimensionError(ValidationError):
    """Matrix shapes are inconsistent with the operation's requirements."""


class RankDeficientW(ValidationError):
    """A weight matrix that must have full row rank does not."""


class RegimeError(ValidationError):
    """The regularization scale is outside the regime the operation assumes."""


class UseNoRegularizationSolver(ValidationError):
    """The closed-form solver was called with c = 0; the zero-regularization
    solution family applies instead."""


class ConfigMissing(ValidationError):
    """A policy that needs a regularization config was invoked without one."""


class DegenerateInput(ValidationError):
    """An all-zero matrix (or zero-variance data) where the metric is undefined."""


class RankDeficientTargets(NrcLabError):
    """Target covariance is numerically rank deficient.

    Carries the offending smallest eigenvalue as ``lambda_min``.
    """

    def __init__(self, message, lambda_min):
        super().__init__(message)
        self.lambda_min = lambda_min


class DivergenceError(NrcLabError):
    """Gradient descent diverged.

    ``last_finite_step`` / ``last_finite_loss`` record the most recent logged
    step whose loss was still finite and below the divergence ceiling.
    """

    def __init__(self, message, last_finite_step, last_finite_loss):
        super().__init__(message)
        self.last_finite_step = last_finite_step
        self.last_finite_loss = last_finite_loss


class NumericalError(NrcLabError):
    """A numerical check could not be carried out (non-finite values,
    or an instance too close to a non-smooth point)."""


class ZeroFeatureWarning(RuntimeWarning):
    """An all-zero feature column was skipped when averaging a collapse metric."""


class BoundaryCWarning(RuntimeWarning):
    """c coincides with a covariance eigenvalue; the optimum is non-strict there."""


class GammaOutOfRangeWarning(RuntimeWarning):
    """The closed-form optimal scaling falls outside (0, lambda_min)."""
