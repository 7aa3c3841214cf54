"""Exception taxonomy shared across the package.

Provider-side failures travel over the wire as "Name: message" strings and are
rebuilt into the matching class by the protocol client, so every provider error
class here must keep a stable name.
"""


class ProbeError(Exception):
    """Base class for all errors raised by this package."""


class ProtocolError(ProbeError):
    """Malformed wire traffic: bad JSON, missing fields, unknown op, id mismatch."""


class ProviderError(ProbeError):
    """A provider reported a failure it could not classify more precisely."""


class MaskUnavailable(ProviderError):
    """Mask-token insertion requested from a provider without a mask token."""


class MultiTokenCandidate(ProviderError):
    """A candidate word did not encode to a single provider token."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"candidate at index {index} is not a single token")


class TooLong(ProviderError):
    """An input text exceeded the provider's max token budget."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"text at index {index} exceeds max_tokens")


class EmptyText(ProviderError):
    """An operation received an empty or whitespace-only text."""


class ZeroVector(ProbeError):
    """An embedding had (near-)zero norm and cannot be direction-normalized."""


class MissingArgument(ProbeError):
    """A template marker has no value and no applicable slot policy."""


class EmptyRow(ProbeError):
    """A score row with no candidates cannot yield a prediction."""


class LengthMismatch(ProbeError):
    """Paired sequences differ in length."""


class ZeroVariance(ProbeError):
    """A correlation input is constant."""


class AllTied(ProbeError):
    """Rank correlation undefined: one side is entirely tied."""


class SingleClass(ProbeError):
    """Binary labels contain only one class."""


class EmptyGold(ProbeError):
    """A gold label set is empty."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"gold set at index {index} is empty")


class NonFiniteFeature(ProbeError):
    """A feature matrix contains NaN or infinity."""


class DimMismatch(ProbeError):
    """Vectors expected to share a dimension do not."""


class TooFewSamples(ProbeError):
    """Not enough samples for the requested split."""


class UnknownColor(ProbeError):
    """A color label outside the supported color vocabulary."""


class UnknownShape(ProbeError):
    """A shape label outside the supported shape set."""


class ParseError(ProbeError):
    """An input line failed to parse."""

    def __init__(self, line_no: int, message: str = ""):
        self.line_no = line_no
        super().__init__(message or f"unparseable input at line {line_no}")


class ScoreOutOfRange(ProbeError):
    """A numeric annotation fell outside its documented range."""


class UnseenWord(ProbeError):
    """A query word never occurred in the counted corpus."""


class NoColorEvidence(ProbeError):
    """A word occurred but never directly after any counted color."""


class EmptyList(ProbeError):
    """An input list that must be non-empty is empty."""


class DuplicateWord(ProbeError):
    """An input word list contains a duplicate entry."""


class PromptFailure(ProbeError):
    """Every item failed under one prompt; the run cannot report it."""

    def __init__(self, prompt_id: str, message: str = ""):
        self.prompt_id = prompt_id
        super().__init__(message or f"prompt {prompt_id!r} failed for every item")


class TaskValidationError(ProbeError):
    """A task description file failed schema or semantic validation."""
