"""Prompt template registry.

Templates ship as package data next to this module. manifest.json pins a
SHA-256 per template; loading verifies the pin so a run manifest's prompt
hashes are trustworthy. Placeholders use string.Template syntax.
"""

from __future__ import annotations

import hashlib
import json
import string
from importlib import resources

from ..errors import PromptIntegrityError

TEMPLATE_FILES = {
    "suitability": "suitability.txt",
    "QGP": "qgp.txt",
    "QRP": "qrp.txt",
    "AGP": "agp.txt",
    "AP": "ap.txt",
    "EVP": "evp.txt",
}

PROMPT_IDS = tuple(TEMPLATE_FILES)

_cache: dict[str, string.Template] = {}


def _read_bytes(filename: str) -> bytes:
    return resources.files(__package__).joinpath(filename).read_bytes()


def template_hashes() -> dict[str, str]:
    """Live SHA-256 of every shipped template file."""
    return {
        prompt_id: hashlib.sha256(_read_bytes(name)).hexdigest()
        for prompt_id, name in TEMPLATE_FILES.items()
    }


def pinned_hashes() -> dict[str, str]:
    return json.loads(_read_bytes("manifest.json"))


def verify_integrity() -> dict[str, str]:
    """Check every template against its pin; returns the verified hashes."""
    live = template_hashes()
    pinned = pinned_hashes()
    if set(live) != set(pinned):
        raise PromptIntegrityError(
            f"template set {sorted(live)} does not match manifest {sorted(pinned)}"
        )
    for prompt_id, digest in live.items():
        if digest != pinned[prompt_id]:
            raise PromptIntegrityError(f"template {prompt_id} does not match its pinned hash")
    return live


def load_template(prompt_id: str) -> string.Template:
    if prompt_id not in TEMPLATE_FILES:
        raise KeyError(f"unknown prompt_id {prompt_id!r}")
    if not _cache:
        verify_integrity()
    if prompt_id not in _cache:
        text = _read_bytes(TEMPLATE_FILES[prompt_id]).decode()
        _cache[prompt_id] = string.Template(text)
    return _cache[prompt_id]


def render(prompt_id: str, **fields) -> str:
    return load_template(prompt_id).substitute(**fields)
