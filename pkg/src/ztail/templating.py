"""Single-pass prompt template rendering.

Placeholders look like ``{X}`` or ``{LLM_OUT}``. Substitution happens in
one pass over the pattern: brace characters inside substituted values are
emitted literally and are never re-expanded, so untrusted input text can
not inject further placeholders. ``{{`` and ``}}`` escape literal braces
in the pattern itself.
"""

from __future__ import annotations

import re
from typing import Mapping

__all__ = ["TemplateError", "render", "placeholders"]

_PLACEHOLDER = re.compile(r"\{\{|\}\}|\{([A-Za-z_][A-Za-z0-9_]*)\}|\{|\}")


class TemplateError(ValueError):
    """Pattern references a placeholder with no provided value, or is malformed."""


def placeholders(pattern: str) -> set[str]:
    """Names of all placeholders the pattern references."""
    return {m.group(1) for m in _PLACEHOLDER.finditer(pattern) if m.group(1)}


def render(pattern: str, values: Mapping[str, str]) -> str:
    out: list[str] = []
    pos = 0
    for m in _PLACEHOLDER.finditer(pattern):
        out.append(pattern[pos : m.start()])
        pos = m.end()
        token = m.group(0)
        if token == "{{":
            out.append("{")
        elif token == "}}":
            out.append("}")
        elif m.group(1):
            name = m.group(1)
            if name not in values:
                raise TemplateError(f"no value for placeholder {{{name}}}")
            out.append(values[name])
        else:
            # Unpaired brace with no name: keep it literal rather than guess.
            out.append(token)
    out.append(pattern[pos:])
    return "".join(out)
