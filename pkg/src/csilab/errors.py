"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError/SchemaError -> 2,
DataError -> 3, NumericError -> 4. Plain OSError from file handling is
treated as a data error at the CLI boundary.
"""


class CsilabError(Exception):
    """Base class for all package errors."""


class ConfigError(CsilabError):
    """Invalid configuration value or combination."""


class SchemaError(CsilabError):
    """Input file violates its declared schema."""


class DataError(CsilabError):
    """Input data is structurally valid but semantically unusable."""


class EmptyInput(DataError):
    pass


class SmilesSyntaxError(DataError):
    """Malformed SMILES text (unbalanced bracket, unknown element, ...)."""


class UnknownResidue(DataError):
    pass


class DanglingReference(DataError):
    """A row references an id that was never defined."""


class EmptySide(DataError):
    """A reaction with an empty reactant, product, or enzyme set."""


class TooFewExamples(DataError):
    pass


class InsufficientNegativeSpace(DataError):
    """Not enough non-positive pairs to satisfy the negative ratio."""


class BatchTooLarge(DataError):
    """Fewer eligible strata than the requested batch size."""


class DegenerateBatch(ConfigError):
    """Contrastive batches need at least two entries."""


class UnknownKeying(ConfigError):
    pass


class NumericError(CsilabError):
    """Numeric failure during computation or training."""


class ShapeMismatch(NumericError):
    pass


class NonFiniteValue(NumericError):
    """A NaN or Inf was produced by a primitive."""


class ZeroNormEmbedding(NumericError):
    """An embedding with zero norm reached the cosine discriminator."""


class FrozenViolation(NumericError):
    """A frozen parameter group changed during predictor training."""


class NoPositives(DataError):
    pass


class NoEligibleGroups(DataError):
    pass


class VersionMismatch(DataError):
    """Checkpoint format version differs from the supported one."""


class ChecksumMismatch(DataError):
    """Checkpoint content does not match its stored checksum."""
