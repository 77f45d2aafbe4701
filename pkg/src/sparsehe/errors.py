"""Exception hierarchy shared by every module."""


class SparseHEError(Exception):
    """Base class for library errors."""


class ConfigurationError(SparseHEError, ValueError):
    """Invalid parameters or configuration."""


class ContractViolation(SparseHEError, ValueError):
    """An operation was called with arguments that break its preconditions."""


class NumericalDivergenceError(SparseHEError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class EncodingOverflowError(SparseHEError, OverflowError):
    """A plaintext value does not fit below q / (2 * scale)."""


class ScaleMismatchError(SparseHEError):
    """Ciphertexts at different scales or levels were combined.

    Adding such ciphertexts would decrypt to garbage, so it is always refused.
    """


class DecryptionOverflowError(SparseHEError):
    """The tracked noise budget of a ciphertext exceeds half the scale."""
