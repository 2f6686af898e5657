"""Exception types shared across the package."""

from __future__ import annotations


class RagmarkError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(RagmarkError):
    """Invalid or incomplete configuration.

    Carries the full list of problems so callers can report everything at
    once instead of failing on the first bad key.
    """

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class EmptyDocumentError(RagmarkError):
    """A document is empty (or became empty after cleansing)."""


class DimensionMismatchError(RagmarkError):
    """Embedding vectors of different dimensionality were combined."""


class TransportError(RagmarkError):
    """A backend call failed at the transport level after all retries.

    ``attempts`` records how many calls were made before giving up.
    """

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class PayloadError(RagmarkError):
    """Base class for structured-output payload problems.

    ``raw`` holds the completion text exactly as the backend returned it.
    """

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class PayloadParseError(PayloadError):
    """The completion was not well-formed JSON."""


class PayloadValidationError(PayloadError):
    """The completion was JSON but violated the target schema.

    ``fields`` names the offending fields (dotted paths).
    """

    def __init__(self, message: str, raw: str, fields: tuple[str, ...] = ()):
        super().__init__(message, raw)
        self.fields = fields


class NoContextError(RagmarkError):
    """Retrieval produced zero hits; generation was never attempted."""


class GenerationInvalidError(RagmarkError):
    """The model responded, but the response failed payload validation.

    The verbatim completion is kept so the failure can be reproduced from
    the cache; ``cache_hit`` records whether it came from there.
    """

    def __init__(self, message: str, raw: str, cache_hit: bool = False):
        super().__init__(message)
        self.raw = raw
        self.cache_hit = cache_hit


class DegenerateVarianceError(RagmarkError):
    """Paired fold differences have zero variance; the t-test is undefined."""
