"""Page-preparation sidecar.

Rasterizes documents, detects layout elements, composes enriched page
images, and counts characters, serving it all over a line-delimited
JSON protocol on stdio. Runs as a separate process so the text
pipeline never links an imaging stack.
"""

__version__ = "0.1.0"
