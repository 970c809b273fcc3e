"""Exception types shared across the package."""


class QouError(Exception):
    """Base class for all package-specific failures."""


class DomainError(QouError):
    """An argument lies outside the mathematically valid domain."""


class NonConvergent(QouError):
    """An infinite product/series could not reach the requested tolerance
    within the configured term budget."""


class SingularInput(QouError):
    """The requested value is a genuine singularity of the formula
    (e.g. the diagonal of the zero-lag kernel product)."""


class MaxSubdivisionsExceeded(QouError):
    """Adaptive quadrature or root bracketing ran out of subdivisions."""


class NonFinite(QouError):
    """An integrand returned NaN or infinity at a quadrature node."""


class BracketInvalid(QouError):
    """Root-finding target lies outside the supplied bracket."""


class WindowOutOfRange(QouError):
    """A counting window does not fit inside the simulated horizon."""


class BudgetExceeded(QouError):
    """A Monte Carlo run would exceed the configured step budget."""
