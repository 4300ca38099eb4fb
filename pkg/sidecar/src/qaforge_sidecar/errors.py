"""Failure types surfaced over the wire.

Each class maps to a stable ``type`` string in protocol error replies so
clients can branch without parsing messages.
"""

from __future__ import annotations


class SidecarError(Exception):
    """Base class for failures the protocol layer knows how to report."""

    wire_type = "SidecarError"


class UnreadableDocumentError(SidecarError):
    """The document cannot be opened or parsed at all."""

    wire_type = "UnreadableDocument"


class MissingPageError(SidecarError):
    """A request named a page index the document does not have."""

    wire_type = "MissingPage"

    def __init__(self, message: str, page_index: int):
        super().__init__(message)
        self.page_index = page_index


class ModelLoadError(SidecarError):
    """A configured layout detector could not be loaded."""

    wire_type = "ModelLoadError"


class InvalidRequestError(SidecarError):
    """The request shape or a parameter value is out of contract."""

    wire_type = "InvalidRequest"
