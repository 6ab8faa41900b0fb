"""Exception hierarchy for the toolkit.

Every failure mode that callers are expected to handle gets its own class;
all of them derive from :class:`PplkitError` so batch drivers can catch the
whole family at once.
"""


class PplkitError(Exception):
    """Base class for all toolkit errors."""


class NotFittedError(PplkitError):
    """An estimator method was called before ``fit``."""


# --- transcript ingestion ---------------------------------------------------

class MalformedChatError(PplkitError):
    """No tier for the target speaker was found in a CHAT document."""


class EmptyTranscriptError(PplkitError):
    """Every utterance of the target speaker was empty after normalization."""


class MissingClassDirectoryError(PplkitError):
    """A required class subdirectory does not exist under the corpus root."""


class DuplicateSessionError(PplkitError):
    """Two files resolve to the same subject/session identity."""


class EmptyGroupError(PplkitError):
    """Statistics requested for a corpus with no transcripts."""


# --- language models ---------------------------------------------------------

class EmptyInputError(PplkitError):
    """An operation that needs at least one token sequence got none."""


class InvalidOrderError(PplkitError):
    """Model order outside the supported range."""


class OutOfVocabularyError(PplkitError):
    """A training token is missing from the closed vocabulary."""


class UnknownWordError(PplkitError):
    """A scoring-time token is missing from the closed vocabulary."""


class ZeroLengthError(PplkitError):
    """Perplexity requested over zero predicted positions."""


# --- scorers -----------------------------------------------------------------

class ScorerStartError(PplkitError):
    """An external scorer process could not be launched."""


class TrainingFailedError(PplkitError):
    """An external scorer reported a training failure."""


class ScorerCrashedError(PplkitError):
    """An external scorer process died while a request was pending."""


class ProtocolViolationError(PplkitError):
    """An external scorer sent a reply that does not match the wire protocol."""


# --- evaluation --------------------------------------------------------------

class InsufficientGroupError(PplkitError):
    """A group has too few subjects for leave-one-subject-out evaluation."""


class DegenerateGroupError(PplkitError):
    """A group is empty (or too small) after excluding the held-out subject."""


class SubjectMismatchError(PplkitError):
    """Predictions and gold labels do not cover the same subjects."""


class NonPositiveInputError(PplkitError):
    """The harmonic mean is only defined for strictly positive values."""
