"""Exception types shared across the package.

Every contract violation maps to a distinct class so callers (and the CLI)
can tell a malformed file from a shape bug from a numerical blow-up.
"""


class SeqmaeError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(SeqmaeError, ValueError):
    """A documented precondition was violated by the caller."""


class ShapeError(ContractError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(SeqmaeError, ArithmeticError):
    """An operation produced NaN or Inf; raised at the op that made it."""


class DegenerateRowError(ContractError):
    """A masked softmax row has no kept keys left to normalize over."""

class NoMaskableError(ContractError):
    """Sequence is too short to leave both a masked and a visible token."""


class FormatError(SeqmaeError, ValueError):
    """A serialized artifact (corpus blob, manifest, checkpoint) is invalid."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """File carries an unsupported format version."""


class TruncatedBlobError(FormatError):
    """Binary payload is shorter than its header promises."""


class DimMismatchError(FormatError):
    """Declared embedding/model dimension disagrees with the payload."""


class ConfigError(SeqmaeError, ValueError):
    """Run configuration is inconsistent or contains unknown fields."""


class TrainingAbortError(SeqmaeError, RuntimeError):
    """Training was aborted (non-finite loss), annotated with the batch id."""
