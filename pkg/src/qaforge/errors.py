"""Exception types shared across the pipeline."""


class QaforgeError(Exception):
    """Base class for all pipeline errors."""


class EmptyDocumentError(QaforgeError):
    """Document has zero pages where at least one is required."""


class InvalidPolicyError(QaforgeError):
    """Chunk or gate policy violates its own invariants."""


class MissingPageError(QaforgeError):
    """A chunk span references a page the document does not have."""

    def __init__(self, page_index: int, message: str = ""):
        self.page_index = page_index
        super().__init__(message or f"missing page {page_index}")


class UnreadableDocumentError(QaforgeError):
    """Document locator cannot be opened or parsed."""


class BackendError(QaforgeError):
    """Base class for model-backend failures."""


class BackendTimeoutError(BackendError):
    """Request timed out after the retry budget was exhausted."""


class RateLimitedError(BackendError):
    """Backend refused the request for rate reasons; retryable."""


class AuthError(BackendError):
    """Credential rejected. Fatal: retrying cannot help."""


class SchemaError(BackendError):
    """Reply failed schema validation even after the repair round-trip."""


class GenerationFailedError(QaforgeError):
    """Question generation/refinement could not produce a valid draft."""


class JudgeFailedError(QaforgeError):
    """Judge call failed; the question cycle cannot proceed."""


class ValidatorFailedError(QaforgeError):
    """Evidence validation call failed; tuple held back as unverifiable."""


class ConfigDriftError(QaforgeError):
    """Resume attempted with a config that differs from the run manifest."""


class SchemaViolationError(QaforgeError):
    """Refused to serialize a partial or malformed dataset tuple."""


class EmptyDatasetError(QaforgeError):
    """Report requested over a dataset with no records."""


class SidecarProtocolError(QaforgeError):
    """Sidecar process returned a malformed or mismatched reply."""


class PromptIntegrityError(QaforgeError):
    """Shipped prompt template does not match its pinned hash."""
