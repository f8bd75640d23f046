"""Exception and warning types shared across the package."""


class UnlinkEvalError(Exception):
    """Base class for all errors raised by unlinkeval."""


class MissingFileError(UnlinkEvalError):
    """A required input file does not exist."""


class ScoreParseError(UnlinkEvalError):
    """A score file contains a record that cannot be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class NonFiniteScoreError(ScoreParseError):
    """A score file contains NaN or an infinite value."""


class TooFewScoresError(UnlinkEvalError):
    """A score collection has fewer than the minimum 2 entries per side."""

    def __init__(self, side, count):
        super().__init__(f"{side} side has {count} scores, need at least 2")
        self.side = side
        self.count = count


class InvalidEnrollmentCountError(UnlinkEvalError):
    """Enrollment counts below 2 admit no non-mated comparison."""


class DegenerateSupportError(UnlinkEvalError):
    """All scores on one side are identical and point-mass handling is off."""


class GridMismatchError(UnlinkEvalError):
    """Arrays that must share a grid have inconsistent lengths."""


class LengthMismatchError(UnlinkEvalError):
    """Two sequences that must have equal length do not."""


class NotNormalizedError(UnlinkEvalError):
    """A probability mass function does not sum to 1."""


class SchemeMismatchError(UnlinkEvalError):
    """Two protected templates come from incompatible schemes."""


class NotDivisibleError(UnlinkEvalError):
    """Template length is not a multiple of the block size."""


class NotBijectiveError(UnlinkEvalError):
    """A supposed permutation is not a bijection on block indices."""


class ShapeMismatchError(UnlinkEvalError):
    """A template cannot be reshaped to the requested block geometry."""


class SchemeNotInvertibleError(UnlinkEvalError):
    """Reconstruction was requested for a scheme that cannot be inverted."""


class InvalidConfigError(UnlinkEvalError):
    """A configuration object violates its invariants."""


class InconsistentDatabasesError(UnlinkEvalError):
    """Protected databases do not form a valid cross-key evaluation set."""


class InternalInvariantError(UnlinkEvalError):
    """A mathematical invariant was violated beyond numerical tolerance.

    Mapped to exit code 3 by the CLI; indicates a bug, not bad input.
    """


class StatisticalAdequacyWarning(UserWarning):
    """Fewer scores than recommended for statistically stable estimates."""


class PriorRangeWarning(UserWarning):
    """A prior ratio above 1 is outside the cross-database linkage setting."""


class KeyCountWarning(UserWarning):
    """Fewer keys than recommended for a cross-key evaluation."""
