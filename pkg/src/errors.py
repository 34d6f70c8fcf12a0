"""
Exception types raised by the curvature lab.

Every error is a ValueError so callers that only care about "bad input"
can keep catching ValueError, while tests and the CLI can tell the kinds
apart.
"""


class ConfigurationError(ValueError):
    """Malformed scenario file, unknown key or invalid parameter."""


class SingularPointError(ValueError):
    """Division by a jet whose constant term vanishes."""


class DomainError(ValueError):
    """Function evaluated outside its domain, or point outside a chart."""


class OrderError(ValueError):
    """A derivative was requested beyond the order a jet carries."""


class SignatureError(ValueError):
    """Metric is not symmetric positive definite at the evaluation point."""


class PreconditionError(ValueError):
    """Input does not have the structure an operation assumes."""


class ConstructionError(ValueError):
    """Family parameters violate the validity conditions of the chart."""


class IntegrationError(ValueError):
    """Profile ODE integration failed or left its interval."""
