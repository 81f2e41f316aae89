"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument violates a documented precondition (wrong shape, empty selection, ...)."""


class SingularityError(RuntimeError):
    """A linear solve hit a singular matrix; retry with damping > 0."""


class NumericError(RuntimeError):
    """A computation produced non-finite values.

    Carries enough context (offending constraint labels, diagnostics) to
    identify what blew up.
    """

    def __init__(self, message, labels=(), diagnostics=None):
        super().__init__(message)
        self.labels = tuple(labels)
        self.diagnostics = diagnostics


class ConfigurationError(ValueError):
    """An experiment or world configuration is invalid."""


class ProtocolError(RuntimeError):
    """Malformed or unexpected wire traffic from a remote policy.

    ``raw`` holds the offending bytes when available.
    """

    def __init__(self, message, raw=b""):
        super().__init__(message)
        self.raw = bytes(raw)


class DesyncError(ProtocolError):
    """Episode/step counters between harness and remote policy disagree."""
