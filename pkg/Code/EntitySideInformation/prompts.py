"""
Versioned prompt templates for side information generation.

Templates live in prompts/<name>.txt and use {{ variable }} placeholders.
The template name doubles as its version ("description_v1"); a changed
prompt gets a new file so stored records stay traceable to the exact text
that produced them.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import regex

from Code.Common.errors import ConfigError

PROMPTS_DIR = Path(__file__).parent / "prompts"

_PLACEHOLDER = regex.compile(r"\{\{\s*(\w+)\s*\}\}")


def load_template(name: str) -> str:
    path = PROMPTS_DIR / f"{name}.txt"
    if not path.exists():
        raise FileNotFoundError(f"Prompt template {path} not found.")
    return path.read_text(encoding="utf-8")


def render_template(name: str, **kwargs: str) -> str:
    """
    Loads a template and fills every {{ key }} placeholder in one pass, so
    braces inside the values are never read as placeholders.
    :param name: Template name, e.g. "hypernym_v1".
    :param kwargs: One value per placeholder; extra values are ignored.
    :return: The rendered prompt.
    """
    template = load_template(name)
    missing = sorted({key for key in _PLACEHOLDER.findall(template)
                      if key not in kwargs})
    if missing:
        raise ConfigError(
            f"Prompt template {name!r} needs values for {missing}.")
    return _PLACEHOLDER.sub(lambda match: str(kwargs[match.group(1)]),
                            template)


def template_digest(name: str) -> str:
    return hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()
