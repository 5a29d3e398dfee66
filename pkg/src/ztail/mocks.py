"""Deterministic in-process model backends for offline runs and tests.

The keyword NLI scorer is the workhorse: entailment mass grows with the
fraction of a label's content words found in the premise,

    o         = |premise words ∩ label words| / |label words|
    entail    = (1 + 8*o) / (3 + 8*o)
    contra    = 1 / (3 + 8*o)
    neutral   = remainder

so a fully matched label scores 9/11 and a fully unmatched one 1/3. The
sharpening factor 8 is arbitrary but frozen: golden tests depend on it.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field

from .gateway import (
    GenRequest,
    NliScore,
    Timeout,
    register_mock,
)

__all__ = [
    "STOPWORDS",
    "content_words",
    "label_portion",
    "mock_nli_score",
    "KeywordNliBackend",
    "RuleTableGenerator",
    "PrimedEchoGenerator",
    "FaultInjectingNli",
    "FaultInjectingGen",
    "InstrumentedNli",
]

# Frozen: changing this set changes every mock score.
STOPWORDS = frozenset(
    """
    a an the this that these those is are was were be been being am
    do does did to of and or but if in on at for with about as by from
    into over under it its they them their we our you your i my he she
    his her here there what which who whom whose how when where why
    some any all no not so than then too very
    """.split()
)

_TOKEN = re.compile(r"[a-z0-9]+")
_HYPOTHESIS_PREFIX = "This text is related to "


def content_words(text: str) -> set[str]:
    return {tok for tok in _TOKEN.findall(text.lower()) if tok not in STOPWORDS}


def label_portion(hypothesis: str) -> str:
    """The label inside the standard hypothesis template, else the whole string."""
    if hypothesis.startswith(_HYPOTHESIS_PREFIX) and hypothesis.endswith("."):
        return hypothesis[len(_HYPOTHESIS_PREFIX):-1]
    return hypothesis


def mock_nli_score(premise: str, hypothesis: str) -> NliScore:
    """Closed-form keyword scorer; fully deterministic."""
    label_words = content_words(label_portion(hypothesis))
    if label_words:
        overlap = len(content_words(premise) & label_words) / len(label_words)
    else:
        overlap = 0.0
    p_entail = (1.0 + overlap * 8.0) / (3.0 + overlap * 8.0)
    p_contradict = 1.0 / (3.0 + overlap * 8.0)
    p_neutral = 1.0 - p_entail - p_contradict
    return NliScore(
        hypothesis=hypothesis,
        p_entail=p_entail,
        p_neutral=p_neutral,
        p_contradict=p_contradict,
    )


class KeywordNliBackend:
    """NLI backend wrapping the keyword scorer, one score per hypothesis."""

    def score(self, premise: str, hypotheses: tuple[str, ...]) -> list[NliScore]:
        return [mock_nli_score(premise, h) for h in hypotheses]


@dataclass
class RuleTableGenerator:
    """Table-driven generation: rules are (substring, outputs) in priority order.

    Every rule whose substring occurs in the prompt contributes its outputs;
    with no match the default outputs are returned (possibly empty).
    """

    rules: list[tuple[str, list[str]]] = field(default_factory=list)
    default: list[str] = field(default_factory=list)

    def generate(self, req: GenRequest) -> list[str]:
        outputs: list[str] = []
        for needle, outs in self.rules:
            if needle in req.prompt:
                outputs.extend(outs)
        return outputs if outputs else list(self.default)


class PrimedEchoGenerator:
    """Echoes primed labels back out of the prompt.

    If the prompt carries an "entails <labels>:" clause, the labels are
    returned in order; otherwise the most frequent content word wins
    (earliest occurrence breaks ties). Deterministic, seed ignored.
    """

    def generate(self, req: GenRequest) -> list[str]:
        marker = "entails "
        start = req.prompt.find(marker)
        if start != -1:
            end = req.prompt.find(":", start)
            if end != -1:
                chunk = req.prompt[start + len(marker):end]
                labels = [part.strip() for part in chunk.split(", ") if part.strip()]
                if labels:
                    return labels[: req.n]
        tokens = _TOKEN.findall(req.prompt.lower())
        counts: dict[str, int] = {}
        first_seen: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if tok in STOPWORDS:
                continue
            counts[tok] = counts.get(tok, 0) + 1
            first_seen.setdefault(tok, i)
        if not counts:
            return []
        best = max(counts, key=lambda t: (counts[t], -first_seen[t]))
        return [best]


@dataclass
class FaultInjectingNli:
    """Raises a gateway error for premises containing the trigger token."""

    inner: KeywordNliBackend
    trigger: str
    error: Exception | None = None
    max_failures: int | None = None
    failures: int = 0

    def score(self, premise: str, hypotheses: tuple[str, ...]) -> list[NliScore]:
        if self.trigger in premise and (
            self.max_failures is None or self.failures < self.max_failures
        ):
            self.failures += 1
            raise self.error or Timeout(f"injected timeout for {self.trigger!r}")
        return self.inner.score(premise, hypotheses)


@dataclass
class FaultInjectingGen:
    inner: RuleTableGenerator
    trigger: str
    error: Exception | None = None

    def generate(self, req: GenRequest) -> list[str]:
        if self.trigger in req.prompt:
            raise self.error or Timeout(f"injected timeout for {self.trigger!r}")
        return self.inner.generate(req)


class InstrumentedNli:
    """Records the peak number of concurrent score() calls."""

    def __init__(self, inner: KeywordNliBackend, hold_s: float = 0.005):
        self._inner = inner
        self._hold_s = hold_s
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0

    def score(self, premise: str, hypotheses: tuple[str, ...]) -> list[NliScore]:
        import time

        with self._lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        try:
            time.sleep(self._hold_s)
            return self._inner.score(premise, hypotheses)
        finally:
            with self._lock:
                self._in_flight -= 1


# Default registry entries: `mock:keyword` for NLI, `mock:echo` for generation.
register_mock("keyword", KeywordNliBackend())
register_mock("echo", PrimedEchoGenerator())
