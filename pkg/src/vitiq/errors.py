"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are incompatible with the requested operation."""


class FormatError(ValueError):
    """A file does not conform to the expected on-disk format."""


class ContractError(ValueError):
    """An operation precondition or postcondition was violated."""


class ValidationError(ValueError):
    """A model failed structural validation; carries the violation list."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])
