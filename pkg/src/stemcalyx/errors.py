"""Exception hierarchy.

The CLI maps these onto exit codes: parameter and usage problems exit 1,
data/format problems exit 2, numerical and training failures exit 3.
"""


class StemCalyxError(Exception):
    """Base class for all library errors."""


class ParameterError(StemCalyxError, ValueError):
    """An argument is outside its documented domain."""


class ImageFormatError(StemCalyxError, ValueError):
    """A PGM/PPM file is malformed; ``field`` names the offending part."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptyRegionError(StemCalyxError, ValueError):
    """An operation that needs object pixels got none."""


class DegenerateRegionError(StemCalyxError, ValueError):
    """A region is too small or too symmetric for a descriptor."""


class NumericalError(StemCalyxError, ArithmeticError):
    pass


class TrainingError(StemCalyxError, RuntimeError):
    pass


class GenerationError(StemCalyxError, RuntimeError):
    """Synthetic scene generation could not satisfy its constraints."""


class DescriptorError(StemCalyxError):
    """Wraps a block-level failure with the name of the descriptor."""

    def __init__(self, descriptor, cause):
        super().__init__(f"{descriptor} descriptor failed: {cause}")
        self.descriptor = descriptor
        self.cause = cause


class DataFormatError(StemCalyxError, ValueError):
    """A feature CSV, manifest or model file is malformed."""
