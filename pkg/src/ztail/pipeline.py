"""Declarative composition of entailment and generation stages.

A PipelineConfig describes a chain such as E(X), L(X), E(L(X)), or
E(L(E(X))) as an ordered list of stages. Entail stages rank the closed
label space; llm stages generate free text, optionally primed with the
previous entail stage's top labels. When an entail stage directly follows
an llm stage its premise is rebuilt from final_premise_pattern, carrying
the raw first generation alongside the original text.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .dataio import dump_json_line
from .entailment import RankedPrediction, classify, top_k
from .gateway import GatewayError, ModelGateway
from .retrieval import (
    GroundedGeneration,
    PromptCatalog,
    ground_labels,
    load_catalog,
    render_init_prompt,
    render_primed_prompt,
    retrieve,
)
from .taxonomy import EmptyResult, LongTailDataset
from .templating import render

__all__ = [
    "DEFAULT_FINAL_PREMISE",
    "ABORT_WINDOW",
    "PipelineError",
    "StageError",
    "BatchAborted",
    "Stage",
    "PipelineConfig",
    "StageTrace",
    "PipelineResult",
    "BatchItem",
    "Gateways",
    "builtin_configs",
    "expand_stages",
    "run_pipeline",
    "run_batch",
    "write_run_files",
]

DEFAULT_FINAL_PREMISE = "Here is some text that entails {LLM_OUT}: {X}."

# A batch aborts only when this many consecutive samples all fail.
ABORT_WINDOW = 50


class PipelineError(Exception):
    pass


class StageError(PipelineError):
    """A backend call failed inside a stage; carries the stage index."""

    def __init__(self, stage_index: int, kind: str, cause: Exception):
        super().__init__(f"stage {stage_index} ({kind}): {cause}")
        self.stage_index = stage_index
        self.kind = kind
        self.cause = cause


class BatchAborted(PipelineError):
    def __init__(self, window: int, last_error: str):
        super().__init__(
            f"aborting batch: {window} consecutive samples failed (last: {last_error})"
        )


@dataclass(frozen=True)
class Stage:
    kind: str  # entail | llm
    template_ref: str | None = None
    carries: str = ""  # top_k_labels | raw_generation

    def __post_init__(self) -> None:
        if self.kind not in ("entail", "llm"):
            raise ValueError(f"unknown stage kind {self.kind!r}")
        expected = "top_k_labels" if self.kind == "entail" else "raw_generation"
        if not self.carries:
            object.__setattr__(self, "carries", expected)
        elif self.carries != expected:
            raise ValueError(f"{self.kind} stage must carry {expected}, not {self.carries!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """One runnable chain: stage order, priming arity, templates, generation knobs."""

    name: str
    stages: tuple[Stage, ...]
    prime_k: int = 0
    iterations: int = 1
    family: str = "wos"
    templates: Mapping[str, str] = field(default_factory=dict)  # catalog refs, key "init"
    final_premise_pattern: str = DEFAULT_FINAL_PREMISE
    gen_n: int = 1
    max_new_tokens: int = 16
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("config name must be non-empty")
        if not self.stages:
            raise ValueError("config needs at least one stage")
        if self.prime_k not in (0, 1, 5):
            raise ValueError(f"prime_k must be 0, 1, or 5, got {self.prime_k}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.gen_n < 1 or self.max_new_tokens < 1:
            raise ValueError("gen_n and max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.prime_k >= 1:
            for i, stage in enumerate(self.stages):
                if stage.kind == "llm" and (i == 0 or self.stages[i - 1].kind != "entail"):
                    raise ValueError(
                        "primed llm stages must directly follow an entail stage"
                    )
        if self.iterations > 1:
            tail = tuple(s.kind for s in self.stages[-2:])
            if tail != ("llm", "entail"):
                raise ValueError(
                    "iterations > 1 needs a trailing llm,entail cycle to repeat"
                )

    @property
    def ends_in_entail(self) -> bool:
        return self.stages[-1].kind == "entail"


def expand_stages(config: PipelineConfig) -> tuple[Stage, ...]:
    """Stage sequence with the trailing llm,entail cycle repeated per iteration."""
    stages = list(config.stages)
    for _ in range(config.iterations - 1):
        stages.extend(config.stages[-2:])
    return tuple(stages)


def builtin_configs(family: str = "wos") -> dict[str, PipelineConfig]:
    """The six canonical chains, parameterized by dataset family.

    llm_only samples gen_n generations per input so top-k lists exist;
    every other chain asks for a single greedy generation.
    """
    e = Stage("entail")
    l = Stage("llm")
    base = dict(family=family)
    return {
        "llm_only": PipelineConfig(
            name="llm_only", stages=(l,), gen_n=5, temperature=1.0, **base
        ),
        "entail_only": PipelineConfig(name="entail_only", stages=(e,), **base),
        "llm_then_entail": PipelineConfig(
            name="llm_then_entail", stages=(l, e), **base
        ),
        "entail_llm_entail": PipelineConfig(
            name="entail_llm_entail", stages=(e, l, e), prime_k=0, **base
        ),
        "primed": PipelineConfig(
            name="primed", stages=(e, l, e), prime_k=1, **base
        ),
        "primed_plus": PipelineConfig(
            name="primed_plus", stages=(e, l, e), prime_k=5, **base
        ),
    }


@dataclass(frozen=True)
class StageTrace:
    """What one executed stage sent and received."""

    index: int
    kind: str
    prompt: str  # premise for entail stages, rendered prompt for llm stages
    ranking: tuple[tuple[str, float], ...] = ()
    outputs: tuple[str, ...] = ()
    grounded: tuple[GroundedGeneration, ...] = ()
    note: str = ""

    def as_dict(self) -> dict:
        d: dict = {"index": self.index, "kind": self.kind, "prompt": self.prompt}
        if self.kind == "entail":
            d["ranking"] = [[label, score] for label, score in self.ranking]
        else:
            d["outputs"] = list(self.outputs)
            d["grounded"] = [
                {"raw": g.raw, "grounded": g.grounded, "method": g.method}
                for g in self.grounded
            ]
        if self.note:
            d["note"] = self.note
        return d


@dataclass(frozen=True)
class PipelineResult:
    input_id: str
    final_ranking: RankedPrediction | None
    trace: tuple[StageTrace, ...]

    @property
    def ungrounded_terminal(self) -> bool:
        """Open-ended chain whose generations all failed to ground."""
        if self.final_ranking is not None or not self.trace:
            return False
        last = self.trace[-1]
        return last.kind == "llm" and all(g.grounded is None for g in last.grounded)

    def topk(self, k: int) -> list[str]:
        """Top-k labels for evaluation.

        Entail-terminated chains take the ranking prefix. Open-ended
        chains keep grounded generations in order, deduplicated; the list
        may be shorter than k (all-ungrounded gives an empty list).
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if self.final_ranking is not None:
            return top_k(self.final_ranking, min(k, len(self.final_ranking.ranking)))
        labels: list[str] = []
        for g in self.trace[-1].grounded if self.trace else ():
            if g.grounded is not None and g.grounded not in labels:
                labels.append(g.grounded)
        return labels[:k]


@dataclass(frozen=True)
class Gateways:
    """Backend handles a pipeline may need; unused kinds may stay None."""

    nli: ModelGateway | None = None
    gen: ModelGateway | None = None

    def require(self, config: PipelineConfig) -> None:
        kinds = {s.kind for s in config.stages}
        if "entail" in kinds and self.nli is None:
            raise ValueError(f"config {config.name!r} needs an nli gateway")
        if "llm" in kinds and self.gen is None:
            raise ValueError(f"config {config.name!r} needs a generate gateway")


def _init_prompt_for(config: PipelineConfig, catalog: PromptCatalog, text: str) -> str:
    ref = config.templates.get("init")
    template = catalog.get(ref) if ref else catalog.default_for(config.family)
    return render_init_prompt(text, template)


def run_pipeline(
    config: PipelineConfig,
    sample: tuple[str, str],
    label_space: Sequence[str],
    gateways: Gateways,
    catalog: PromptCatalog | None = None,
    seed: int | None = None,
) -> PipelineResult:
    """Execute one chain over one (input_id, text) sample.

    Backend failures surface as StageError with the stage index. An
    open-ended chain whose generations all fail to ground is not an
    error; the result records it and topk() comes back empty.
    """
    if not label_space:
        raise ValueError("label_space must be non-empty")
    gateways.require(config)
    if catalog is None:
        catalog = load_catalog()
    input_id, text = sample
    labels_sorted = sorted(set(label_space))

    trace: list[StageTrace] = []
    last_pred: RankedPrediction | None = None
    last_gens: list[str] = []
    prev_kind = ""
    stages = expand_stages(config)

    for index, stage in enumerate(stages):
        try:
            if stage.kind == "entail":
                if prev_kind == "llm":
                    # Carries the raw first generation, grounded or not.
                    premise = render(
                        config.final_premise_pattern,
                        {"LLM_OUT": last_gens[0], "X": text},
                    )
                else:
                    premise = text
                last_pred = classify(
                    gateways.nli, premise, labels_sorted, input_id=input_id
                )
                trace.append(
                    StageTrace(
                        index=index,
                        kind="entail",
                        prompt=last_pred.premise_used,
                        ranking=last_pred.ranking,
                    )
                )
            else:
                if config.prime_k >= 1:
                    if last_pred is None:
                        raise StageError(
                            index, "llm", ValueError("no entail ranking to prime with")
                        )
                    k = min(config.prime_k, len(last_pred.ranking))
                    prompt = render_primed_prompt(
                        text, top_k(last_pred, k), family=config.family
                    )
                else:
                    prompt = _init_prompt_for(config, catalog, text)
                gens = retrieve(
                    gateways.gen,
                    prompt,
                    n=config.gen_n,
                    max_new_tokens=config.max_new_tokens,
                    temperature=config.temperature,
                    seed=seed,
                )
                grounded = ground_labels(gens, labels_sorted)
                note = ""
                if index == len(stages) - 1 and all(g.grounded is None for g in grounded):
                    note = "ungrounded_terminal"
                last_gens = gens
                trace.append(
                    StageTrace(
                        index=index,
                        kind="llm",
                        prompt=prompt,
                        outputs=tuple(gens),
                        grounded=tuple(grounded),
                        note=note,
                    )
                )
        except StageError:
            raise
        except (GatewayError, ValueError) as exc:
            raise StageError(index, stage.kind, exc) from exc
        prev_kind = stage.kind

    return PipelineResult(
        input_id=input_id,
        final_ranking=last_pred if config.ends_in_entail else None,
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class BatchItem:
    """Per-sample batch outcome; exactly one of result and error is set."""

    index: int
    input_id: str
    gold: str
    result: PipelineResult | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def run_record(self, config_name: str, k_max: int) -> dict:
        return {
            "input_id": self.input_id,
            "gold": self.gold,
            "topk": self.result.topk(k_max) if self.result else [],
            "config": config_name,
            "trace_ref": self.input_id,
            "error": self.error,
        }

    def trace_record(self) -> dict:
        return {
            "trace_ref": self.input_id,
            "input_id": self.input_id,
            "gold": self.gold,
            "error": self.error,
            "stages": [t.as_dict() for t in self.trace_or_empty()],
        }

    def trace_or_empty(self) -> tuple[StageTrace, ...]:
        return self.result.trace if self.result else ()


def run_batch(
    config: PipelineConfig,
    dataset: LongTailDataset,
    gateways: Gateways,
    parallelism: int = 1,
    catalog: PromptCatalog | None = None,
    base_seed: int = 0,
    label_space: Sequence[str] | None = None,
) -> Iterator[BatchItem]:
    """Run every dataset sample through the chain, yielding in dataset order.

    Per-sample failures become BatchItems with an error string and the
    batch keeps going; only ABORT_WINDOW consecutive failures abort,
    since that pattern means the backend itself is down. label_space may
    widen the realized space (extra distractor labels); it must cover it.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if not dataset.samples:
        raise EmptyResult("dataset has no samples")
    gateways.require(config)
    if catalog is None:
        catalog = load_catalog()
    if label_space is None:
        labels_sorted = sorted(dataset.label_space)
    else:
        missing = set(dataset.label_space) - set(label_space)
        if missing:
            raise ValueError(f"label_space misses dataset labels: {sorted(missing)[:5]}")
        labels_sorted = sorted(set(label_space))

    def work(index: int, text: str, gold: str) -> BatchItem:
        input_id = f"{index:06d}"
        try:
            result = run_pipeline(
                config,
                (input_id, text),
                labels_sorted,
                gateways,
                catalog=catalog,
                seed=base_seed + index,
            )
            return BatchItem(index=index, input_id=input_id, gold=gold, result=result)
        except StageError as exc:
            return BatchItem(
                index=index, input_id=input_id, gold=gold, result=None, error=str(exc)
            )

    consecutive_failures = 0
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [
            pool.submit(work, i, text, gold)
            for i, (text, gold) in enumerate(dataset.samples)
        ]
        try:
            for future in futures:
                item = future.result()
                if item.failed:
                    consecutive_failures += 1
                    if consecutive_failures >= ABORT_WINDOW:
                        raise BatchAborted(ABORT_WINDOW, item.error or "")
                else:
                    consecutive_failures = 0
                yield item
        except BatchAborted:
            for f in futures:
                f.cancel()
            raise


def write_run_files(
    items: Sequence[BatchItem],
    config_name: str,
    records_path: str,
    traces_path: str,
    k_max: int = 5,
) -> None:
    """Write the line-delimited run records plus the trace sidecar."""
    with open(records_path, "w", encoding="utf-8") as rec_fh:
        for item in items:
            rec_fh.write(dump_json_line(item.run_record(config_name, k_max)) + "\n")
    with open(traces_path, "w", encoding="utf-8") as tr_fh:
        for item in items:
            tr_fh.write(dump_json_line(item.trace_record()) + "\n")
