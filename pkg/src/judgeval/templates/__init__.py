"""Prompt template files and their loaders.

Templates are plain text with angle-bracket placeholders. Their SHA-256 is
taken over the raw file text, markers included, so any edit to a shipped or
user-supplied template is visible in output metadata.
"""

from __future__ import annotations

import hashlib
from importlib import resources
from pathlib import Path


def load_template(default_name: str, path: str | Path | None = None) -> str:
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return (
        resources.files(__package__).joinpath(default_name).read_text(encoding="utf-8")
    )


def template_sha256(template_text: str) -> str:
    return hashlib.sha256(template_text.encode("utf-8")).hexdigest()
