"""Exception types shared across the package."""


class CostreamError(Exception):
    """Base class for package errors."""


class DimensionError(CostreamError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(CostreamError):
    """A documented precondition was violated by the caller."""


class ConfigError(CostreamError):
    """Invalid or unknown configuration."""


class ParseError(CostreamError):
    """A file could not be decoded; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class IntegrityError(CostreamError):
    """Stored data is self-inconsistent (counts, sizes, checksums)."""


class NonFiniteError(CostreamError):
    """A NaN or infinity appeared where finite values are required."""


class GradCheckError(CostreamError):
    """The finite-difference checker could not evaluate the objective."""
