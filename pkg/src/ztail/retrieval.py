"""Generative label retrieval: treat an LLM as a noisy knowledge graph.

Renders initialization or priming prompts, collects generations through
the gateway, and grounds the free-text outputs against the closed label
space. Grounding applies a fixed rule chain and can always fall through
to Ungrounded; it never invents a label.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import yaml

from .gateway import GenRequest, ModelGateway
from .templating import placeholders, render

__all__ = [
    "LABEL_JOIN",
    "PRIMED_PATTERNS",
    "PlaceholderMismatch",
    "PromptTemplate",
    "PromptCatalog",
    "GroundedGeneration",
    "load_catalog",
    "render_init_prompt",
    "render_primed_prompt",
    "retrieve",
    "ground_one",
    "ground_labels",
]

LABEL_JOIN = ", "

# Frozen priming patterns per dataset family; golden-tested, do not edit.
PRIMED_PATTERNS: Mapping[str, str] = {
    "wos": "Here is some text that entails {LABELS}: {X}. What area is this text related to?",
    "amazon": "Here is a review that entails {LABELS}: {X}. What product category is this review related to?",
}


class PlaceholderMismatch(ValueError):
    """Pattern placeholders do not fit the operation (missing {X}, stray {LABELS}, ...)."""


def _check_pattern(pattern: str) -> None:
    if pattern.count("{X}") != 1:
        raise PlaceholderMismatch(f"pattern must contain {{X}} exactly once: {pattern!r}")
    if pattern.count("{LABELS}") > 1:
        raise PlaceholderMismatch(f"pattern may contain {{LABELS}} at most once: {pattern!r}")
    extra = placeholders(pattern) - {"X", "LABELS"}
    if extra:
        raise PlaceholderMismatch(f"unknown placeholders {sorted(extra)} in {pattern!r}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    pattern: str
    domain_hint: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("template name must be non-empty")
        _check_pattern(self.pattern)

    @property
    def primed(self) -> bool:
        return "{LABELS}" in self.pattern


@dataclass(frozen=True)
class PromptCatalog:
    """Named templates plus the default template name per dataset family."""

    templates: Mapping[str, PromptTemplate]
    defaults: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for family, name in self.defaults.items():
            if name not in self.templates:
                raise ValueError(f"default for family {family!r} names unknown template {name!r}")

    def get(self, name: str) -> PromptTemplate:
        try:
            return self.templates[name]
        except KeyError:
            raise KeyError(
                f"unknown prompt template {name!r}; known: {sorted(self.templates)}"
            ) from None

    def default_for(self, family: str) -> PromptTemplate:
        if family not in self.defaults:
            raise KeyError(f"no default template for family {family!r}")
        return self.templates[self.defaults[family]]


def load_catalog(path: str | None = None) -> PromptCatalog:
    """Load the packaged prompt catalog, or one from an explicit YAML path."""
    if path is None:
        raw = resources.files("ztail.data").joinpath("prompts.yaml").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    doc = yaml.safe_load(raw)
    if not isinstance(doc, dict) or "templates" not in doc:
        raise ValueError("prompt catalog must be a mapping with a 'templates' key")
    templates = {}
    for name, entry in doc["templates"].items():
        if isinstance(entry, str):
            entry = {"pattern": entry}
        templates[name] = PromptTemplate(
            name=name,
            pattern=entry["pattern"],
            domain_hint=entry.get("domain_hint", ""),
        )
    return PromptCatalog(templates=templates, defaults=dict(doc.get("defaults", {})))


def render_init_prompt(text: str, template: PromptTemplate) -> str:
    if template.primed:
        raise PlaceholderMismatch(
            f"template {template.name!r} is a priming template; init prompts take {{X}} only"
        )
    return render(template.pattern, {"X": text})


def render_primed_prompt(
    text: str,
    labels: Sequence[str],
    family: str = "wos",
    pattern: str | None = None,
) -> str:
    """Render a priming prompt carrying 1..5 entailment predictions.

    ``family`` picks a frozen pattern ("wos" or "amazon"); passing
    ``pattern`` switches to a custom one, which must use both {X} and
    {LABELS}.
    """
    if not 1 <= len(labels) <= 5:
        raise ValueError(f"primed prompts take 1..5 labels, got {len(labels)}")
    if pattern is None:
        if family not in PRIMED_PATTERNS:
            raise PlaceholderMismatch(
                f"unknown family {family!r}; pass pattern= for custom priming"
            )
        pattern = PRIMED_PATTERNS[family]
    else:
        _check_pattern(pattern)
        if "{LABELS}" not in pattern:
            raise PlaceholderMismatch("custom priming pattern must contain {LABELS}")
    return render(pattern, {"X": text, "LABELS": LABEL_JOIN.join(labels)})


def retrieve(
    gateway: ModelGateway,
    prompt: str,
    n: int = 1,
    max_new_tokens: int = 16,
    temperature: float = 0.0,
    seed: int | None = None,
) -> list[str]:
    """Generate up to n outputs for the prompt, trimmed, empties dropped."""
    outputs = gateway.generate(
        GenRequest(
            prompt=prompt,
            n=n,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            seed=seed,
        )
    )
    return [s for s in (o.strip() for o in outputs) if s]


@dataclass(frozen=True)
class GroundedGeneration:
    raw: str
    grounded: str | None  # None means Ungrounded
    method: str  # exact | normalized | substring | ungrounded

    def __post_init__(self) -> None:
        if (self.grounded is None) != (self.method == "ungrounded"):
            raise ValueError("grounded is None exactly when method is 'ungrounded'")


_WS = re.compile(r"\s+")


def _norm(s: str) -> str:
    return _WS.sub(" ", s.strip()).casefold()


def ground_one(raw: str, label_space: Iterable[str]) -> GroundedGeneration:
    """Map one generation onto the label space via the fixed rule chain.

    exact match, then case-insensitive whitespace-normalized match, then
    unique substring containment in either direction, else Ungrounded.
    """
    labels = list(label_space)
    if raw in labels:
        return GroundedGeneration(raw=raw, grounded=raw, method="exact")
    key = _norm(raw)
    if key:
        normalized = [label for label in labels if _norm(label) == key]
        if len(normalized) == 1:
            return GroundedGeneration(raw=raw, grounded=normalized[0], method="normalized")
        contained = [
            label for label in labels if _norm(label) in key or key in _norm(label)
        ]
        if len(contained) == 1:
            return GroundedGeneration(raw=raw, grounded=contained[0], method="substring")
    return GroundedGeneration(raw=raw, grounded=None, method="ungrounded")


def ground_labels(gens: Sequence[str], label_space: Iterable[str]) -> list[GroundedGeneration]:
    labels = list(label_space)
    return [ground_one(g, labels) for g in gens]
