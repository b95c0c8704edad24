"""Exception hierarchy shared by all modules."""


class EffwellError(Exception):
    """Base class for every error raised by the package."""


class ConstructionError(EffwellError, ValueError):
    """Invalid parameters when building a potential or a configuration."""


class PotentialEvaluationError(EffwellError, ArithmeticError):
    """A coefficient evaluated to a non-finite value (or broke reality)."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class QuadratureError(EffwellError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, trace=None):
        super().__init__(message)
        self.estimate = estimate
        self.trace = list(trace or [])


class DomainError(EffwellError, ValueError):
    """Point or wave number outside the admissible domain."""


class SolverError(EffwellError, RuntimeError):
    """Step-size underflow in the Jost integrator."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ConditioningError(EffwellError, RuntimeError):
    """Wronskian drift above tolerance: the oscillation is under-resolved."""

    def __init__(self, message, drift=None):
        super().__init__(message)
        self.drift = drift


class PoleProximityError(EffwellError, ValueError):
    """Requested wave number sits on (or too close to) a pole of t."""

    def __init__(self, message, abs_w=None):
        super().__init__(message)
        self.abs_w = abs_w


class BracketError(EffwellError, ValueError):
    """No sign change of the root functional on the bracket."""


class AmbiguityError(EffwellError, ValueError):
    """Several sign changes on the bracket; sub-brackets are attached."""

    def __init__(self, message, sub_brackets=()):
        super().__init__(message)
        self.sub_brackets = list(sub_brackets)


class PreconditionError(EffwellError, ValueError):
    """An input violates a documented precondition."""


class RefinementError(EffwellError, RuntimeError):
    """The spectral time integral failed its Richardson self-check."""


class DomainTooSmallError(EffwellError, RuntimeError):
    """Outgoing waves reached the edge of the Crank-Nicolson box."""


class FitError(EffwellError, ValueError):
    """Time series does not support the requested fit."""


class ConfigError(EffwellError, ValueError):
    """Malformed experiment configuration."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.field = field
        self.line = line
