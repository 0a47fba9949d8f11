"""Exception types shared across embedlab modules."""


class EmbedlabError(Exception):
    """Base class for all embedlab errors."""


class ConfigurationError(EmbedlabError):
    """Invalid model or experiment configuration (bad kind, field, or value)."""


class DimensionError(EmbedlabError):
    """Shape mismatch between matrices, vectors, or index sets."""


class EstimationError(EmbedlabError):
    """A Monte Carlo estimate cannot be resolved at the requested accuracy."""


class DegenerateSetError(EmbedlabError):
    """A set statistic is undefined (e.g. zero diameter)."""


class BudgetError(EmbedlabError):
    """An exhaustive search or enumeration exceeds its configured budget."""


class NumericalError(EmbedlabError):
    """An eigen/singular solve failed its residual contract."""


class DomainError(EmbedlabError):
    """An input is outside the mathematical domain of a formula."""
