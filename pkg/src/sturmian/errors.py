"""Exception types shared across the package."""


class SturmianError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SturmianError, ValueError):
    """Invalid argument or configuration (CLI exit code 2)."""


class CFPrecisionError(SturmianError):
    """A continued fraction does not hold enough partial quotients.

    `required` carries the quotient order that would have been needed.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class ThresholdError(SturmianError):
    """Coupling is below the threshold a labelled operation needs."""


class EnumerationError(SturmianError):
    """Band refinement found a child configuration that contradicts the
    combinatorial prediction.  Never silently patched; the message names
    the offending parent band."""


class NonConvergedError(SturmianError):
    """A numerical routine exhausted its budget (CLI exit code 3)."""
