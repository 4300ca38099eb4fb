"""qaforge: difficulty-controlled QA tuple generation from long documents.

The pipeline screens a document corpus, cuts accepted documents into
overlapping page chunks, and runs a closed generate/answer/judge/refine
loop over each chunk until questions clear the configured accuracy gate,
validating evidence before emission.
"""

__version__ = "0.1.0"
