"""Exception types shared across the package."""


class LpReformError(Exception):
    """Base class for all package-specific errors."""


class ParseError(LpReformError):
    """Raised for malformed MPS input."""

    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class UnsupportedFeatureError(LpReformError):
    """Raised for MPS features the reader deliberately rejects (e.g. SOS)."""


class DimensionMismatchError(LpReformError):
    """Vector/matrix dimensions do not agree with the instance."""


class InvalidPermutationError(LpReformError):
    """An index array is not a bijection on its expected range."""


class InvalidKError(LpReformError):
    """Requested cluster count is outside [1, n]."""


class EmptyClusterError(LpReformError):
    """A cluster split produced an empty cluster."""


class RankDeficientError(LpReformError):
    """Constraint rows are linearly dependent after slack augmentation."""


class NonFiniteError(LpReformError):
    """A forward/backward pass produced NaN or Inf."""


class NonOptimalStatusError(LpReformError):
    """A solve that was required to be Optimal terminated otherwise."""

    def __init__(self, status):
        super().__init__(f"solve terminated with status {status}")
        self.status = status


class AllSolvesFailedError(LpReformError):
    """Every sampled permutation failed to solve to optimality."""


class TooManyPermutationsError(LpReformError):
    """Brute-force enumeration refused: k! exceeds the configured cap."""


class GenerationFailedError(LpReformError):
    """Instance generation could not produce a solvable instance."""


class BadFractionsError(LpReformError):
    """Dataset split fractions do not sum to one."""


class CheckpointFormatError(LpReformError):
    """A checkpoint file is missing keys or has an unknown version."""
