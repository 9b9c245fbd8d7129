class BellCertError(Exception):
    pass


class DimensionError(BellCertError, ValueError):
    """Operand shapes do not fit together."""


class SizeError(BellCertError, ValueError):
    """A construction would exceed the configured dimension cap."""


class ValidationError(BellCertError, ValueError):
    """Input violates a structural invariant (hermiticity, completeness, ...).

    ``violations`` holds every problem found, not just the first.
    """

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DomainError(BellCertError, ValueError):
    pass
