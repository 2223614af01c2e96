"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument breaks an operation's precondition (shape, norm, size)."""


class DomainError(ValueError):
    """A numeric argument lies outside the domain of a formula."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
