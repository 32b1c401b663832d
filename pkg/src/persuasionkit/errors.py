"""Exception hierarchy shared across the toolkit.

Every error raised by this package derives from :class:`PersuasionKitError`
so callers can catch the whole family with one clause.
"""


class PersuasionKitError(Exception):
    """Base class for all package errors."""


class ParseError(PersuasionKitError):
    """A document (taxonomy file, manifest, ...) could not be parsed."""


class ValidationError(PersuasionKitError):
    """Structurally parseable input violates a domain invariant."""


class ShapeError(PersuasionKitError):
    """An array block has the wrong number of rows or columns."""


class DecodeError(PersuasionKitError):
    """An image could not be decoded."""


class BackendUnavailable(PersuasionKitError):
    """A real extractor backend was requested but is not configured."""


class NumericalError(PersuasionKitError):
    """A computation produced non-finite values."""


class VocabError(PersuasionKitError):
    """A token id falls outside the decoder vocabulary."""


class EmptyCorpusError(PersuasionKitError):
    """Training requested on an empty corpus."""


class DivergenceError(PersuasionKitError):
    """Training loss became non-finite; carries the last good state."""

    def __init__(self, message, last_good_state=None):
        super().__init__(message)
        self.last_good_state = last_good_state


class DegenerateError(PersuasionKitError):
    """An input is degenerate for the requested statistic (e.g. all-zero)."""


class EmptyPoolError(PersuasionKitError):
    """The unlabeled pool is empty."""


class OracleError(PersuasionKitError):
    """The labeling oracle failed to provide labels for a selection."""


class LengthMismatchError(PersuasionKitError):
    """Paired sequences (predictions vs truths) differ in length."""


class MissingTagsError(PersuasionKitError):
    """Topic tags were required but absent from every sample."""


class DuplicateIdError(PersuasionKitError):
    """Duplicate sample ids in a manifest; carries the colliding ids."""

    def __init__(self, message, duplicates=()):
        super().__init__(message)
        self.duplicates = tuple(duplicates)


class RosterTooSmallError(PersuasionKitError):
    """Fewer than three annotators in the roster."""


class NoAssignmentError(PersuasionKitError):
    """Submission without a matching (sample, annotator, round) assignment."""


class InsufficientAnnotationsError(PersuasionKitError):
    """Resolution requested before two annotations exist."""


class DimensionMismatchError(PersuasionKitError):
    """A mask raster does not match the source image dimensions."""


class StrategyNotInFinalLabelsError(PersuasionKitError):
    """Mask references a strategy outside the sample's resolved labels."""


class UnknownRoundError(PersuasionKitError):
    """Round index does not exist."""


class RoundNotClosableError(PersuasionKitError):
    """Round still has unresolved samples."""
