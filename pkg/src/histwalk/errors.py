"""Exception types shared across the package."""


class HistwalkError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(HistwalkError, ValueError):
    """A parameter or model description violates a documented precondition."""


class NonConvergenceError(HistwalkError):
    """An iterative solve exhausted its iteration budget."""


class InvalidChainError(HistwalkError, ValueError):
    """Transition probabilities do not describe a valid one-step-neighbour chain."""


class AssumptionError(HistwalkError):
    """A model failed the standing assumptions required by the speed formulas."""


class DegenerateEstimateError(HistwalkError):
    """Too many Monte Carlo cells came back empty to fit anything."""


class ExcessCensoringError(HistwalkError):
    """Censored fraction exceeded the configured limit; estimates would be biased."""


class ConfigError(HistwalkError, ValueError):
    """A config document could not be parsed into a model/run description."""
