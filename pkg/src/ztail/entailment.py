"""Closed-label zero-shot classification by entailment.

Every label C in the space becomes the hypothesis "This text is related
to C." scored against the input as premise; labels are ranked by the
entailment mass renormalized against contradiction, so the neutral mass
never moves the ranking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .gateway import ModelGateway, NliRequest
from .templating import render

__all__ = [
    "HYPOTHESIS_PATTERN",
    "RankedPrediction",
    "build_hypothesis",
    "entail_score",
    "classify",
    "top_k",
]

HYPOTHESIS_PATTERN = "This text is related to {LABEL}."


def build_hypothesis(label: str) -> str:
    if not label:
        raise ValueError("label must be non-empty")
    return render(HYPOTHESIS_PATTERN, {"LABEL": label})


def entail_score(p_entail: float, p_contradict: float) -> float:
    """Entailment probability renormalized over {entailment, contradiction}."""
    return p_entail / (p_entail + p_contradict)


@dataclass(frozen=True)
class RankedPrediction:
    """Full ranking over the label space for one input."""

    input_id: str
    ranking: tuple[tuple[str, float], ...]  # (label, score), best first
    premise_used: str

    def __post_init__(self) -> None:
        scores = [s for _, s in self.ranking]
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise ValueError("ranking scores must be non-increasing")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.ranking)


def classify(
    gateway: ModelGateway,
    text: str,
    label_space: Iterable[str],
    premise_template: str | None = None,
    input_id: str = "",
) -> RankedPrediction:
    """Rank the whole label space for ``text`` with one batched NLI call.

    Hypotheses are dispatched in lexicographic label order; the ranking
    sorts by score descending with lexicographic tie-breaks, so identical
    inputs always produce identical output.
    """
    labels = sorted(set(label_space))
    if not labels:
        raise ValueError("label_space must be non-empty")
    if not text:
        raise ValueError("input text must be non-empty")
    premise = render(premise_template, {"X": text}) if premise_template else text
    result = gateway.score_nli(
        NliRequest(premise=premise, hypotheses=tuple(build_hypothesis(l) for l in labels))
    )
    scored = [
        (label, entail_score(score.p_entail, score.p_contradict))
        for label, score in zip(labels, result.scores)
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RankedPrediction(
        input_id=input_id,
        ranking=tuple(scored),
        premise_used=result.premise_used,
    )


def top_k(pred: RankedPrediction, k: int) -> list[str]:
    if not 1 <= k <= len(pred.ranking):
        raise ValueError(f"k={k} outside 1..{len(pred.ranking)}")
    return list(pred.labels[:k])
