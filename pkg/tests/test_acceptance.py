"""Acceptance gate: one test per primary criterion, one printed line each.

The criterion decorator registers every test in CRITERIA; the terminal
summary hook in conftest.py prints one "[PASS] criterion N: ..." (or
FAIL) line per registered test after the run, outside pytest's capture.
Each wrapper also enforces its criterion's runtime budget.
"""

import functools
import json
import random
import time

from conftest import (
    CORRECTION_BASELINE_TOP1,
    CORRECTION_LABELS,
    CORRECTION_PRIMED_TOP1,
    CORRECTION_SAMPLES,
    make_dataset,
)
import oracles
from ztail.cli import main
from ztail.entailment import HYPOTHESIS_PATTERN, build_hypothesis
from ztail.evaluation import (
    LabeledRun,
    RunRecord,
    aggregate,
    evaluate,
    load_reference,
    macro_f1_at_k,
    top_k_accuracy,
)
from ztail.gateway import BackendDescriptor, ModelGateway, register_mock
from ztail.mocks import RuleTableGenerator
from ztail.pipeline import (
    DEFAULT_FINAL_PREMISE,
    Gateways,
    PipelineConfig,
    Stage,
    builtin_configs,
    run_batch,
    run_pipeline,
)
from ztail.retrieval import PRIMED_PATTERNS, load_catalog, render_primed_prompt
from ztail.taxonomy import (
    DepthPolicy,
    RawSample,
    class_distribution,
    parse_taxonomy,
    refactor_to_longtail,
)
from ztail.templating import render


CRITERIA: dict[str, tuple[int, str, float]] = {}
RUNTIMES: dict[str, float] = {}


def criterion(number, label, budget_s):
    """Register the test for the summary hook and enforce its runtime budget."""

    def deco(fn):
        CRITERIA[fn.__name__] = (number, label, budget_s)

        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.monotonic()
            result = fn(*args, **kwargs)
            elapsed = time.monotonic() - start
            RUNTIMES[fn.__name__] = elapsed
            if elapsed >= budget_s:
                raise AssertionError(
                    f"criterion {number} runtime {elapsed:.2f}s over the "
                    f"{budget_s:.0f}s budget"
                )
            return result

        return wrapper

    return deco


_NLI = ModelGateway(BackendDescriptor(kind="nli", endpoint="mock:keyword"))
_ECHO = ModelGateway(BackendDescriptor(kind="generate", endpoint="mock:echo"))

_WORD_POOL = [
    "amber", "basil", "cedar", "dahlia", "ember", "fennel",
    "garnet", "hazel", "iris", "jasper", "kale", "lotus",
]
_JUNK = [
    "quiet", "morning", "review", "bright", "soft",
    "classic", "vivid", "plain", "gentle", "spare",
]


def _random_label_space(rng, n_min=5, n_max=10):
    n = rng.randint(n_min, n_max)
    combos = set()
    while len(combos) < n:
        a, b = rng.sample(_WORD_POOL, 2)
        combos.add(f"{a} {b}")
    return sorted(combos)


def _random_text(rng, labels):
    words = []
    if rng.random() < 0.7:
        pick = rng.choice(labels).split()
        words.extend(rng.sample(pick, rng.randint(1, 2)))
    words.extend(rng.choice(_JUNK) for _ in range(rng.randint(2, 6)))
    rng.shuffle(words)
    return " ".join(words)


@criterion(1, "golden templates, byte-exact", budget_s=1.0)
def test_criterion_1_golden_templates():
    assert HYPOTHESIS_PATTERN == "This text is related to {LABEL}."
    assert build_hypothesis("Polymerase chain reaction") == (
        "This text is related to Polymerase chain reaction."
    )
    assert build_hypothesis("Face") == "This text is related to Face."

    assert PRIMED_PATTERNS["wos"] == (
        "Here is some text that entails {LABELS}: {X}. What area is this text related to?"
    )
    assert render_primed_prompt("the passage", ["Genetics"], family="wos") == (
        "Here is some text that entails Genetics: the passage. "
        "What area is this text related to?"
    )
    assert render_primed_prompt("the review", ["Face", "Body"], family="amazon") == (
        "Here is a review that entails Face, Body: the review. "
        "What product category is this review related to?"
    )
    assert DEFAULT_FINAL_PREMISE == "Here is some text that entails {LLM_OUT}: {X}."
    assert render(DEFAULT_FINAL_PREMISE, {"LLM_OUT": "Genetics", "X": "the passage"}) == (
        "Here is some text that entails Genetics: the passage."
    )


@criterion(2, "reference aggregation within tolerance", budget_s=1.0)
def test_criterion_2_table_aggregation():
    reference = load_reference()
    assert set(reference) == {
        "wos_depth2",
        "amazon_beauty_depth2",
        "amazon_beauty_depth345",
    }
    checked = 0
    for dataset, configs in reference.items():
        assert len(configs) == 6
        for config, entry in configs.items():
            agg = aggregate(entry["per_k"], ks=(1, 3, 5))
            for metric in ("accuracy", "macro_f1"):
                delta = abs(agg[metric] - entry["average"][metric])
                assert delta <= 0.06 + 1e-12, (
                    f"{dataset}/{config}/{metric}: |{agg[metric]:.4f} - "
                    f"{entry['average'][metric]}| = {delta:.4f} > 0.06"
                )
                checked += 1
    assert checked == 36

    # Two aggregates reproduce their published cells to the cent.
    for dataset, config, metric in (
        ("wos_depth2", "entail_only", "accuracy"),
        ("wos_depth2", "llm_only", "macro_f1"),
    ):
        entry = reference[dataset][config]
        agg = aggregate(entry["per_k"], ks=(1, 3, 5))
        assert abs(agg[metric] - entry["average"][metric]) <= 0.01 + 1e-12


@criterion(3, "metric oracle equivalence over 200 randomized runs", budget_s=30.0)
def test_criterion_3_metric_oracle():
    for i in range(200):
        rng = random.Random(3000 + i)
        pairs = oracles.random_pairs(rng, max_records=500, max_classes=30)
        records = tuple(
            RunRecord(input_id=str(j), gold=g, topk=tuple(t))
            for j, (g, t) in enumerate(pairs)
        )
        space = {g for g, _ in pairs} | {l for _, t in pairs for l in t}
        run = LabeledRun(records=records, label_space=frozenset(space))
        for k in (1, 3, 5):
            assert top_k_accuracy(run, k) == oracles.brute_top_k_accuracy(pairs, k)
            assert macro_f1_at_k(run, k) == oracles.brute_macro_f1_at_k(pairs, k)


@criterion(4, "top-1 <= top-3 <= top-5 over 100 randomized runs", budget_s=30.0)
def test_criterion_4_monotonicity():
    config_names = [
        "llm_only",
        "entail_only",
        "llm_then_entail",
        "entail_llm_entail",
        "primed",
        "primed_plus",
    ]
    gateways = Gateways(nli=_NLI, gen=_ECHO)
    for i in range(100):
        rng = random.Random(4000 + i)
        labels = _random_label_space(rng)
        samples = [
            (_random_text(rng, labels), rng.choice(labels))
            for _ in range(rng.randint(8, 15))
        ]
        config = builtin_configs()[rng.choice(config_names)]
        rows = [
            item.run_record(config.name, 5)
            for item in run_batch(
                config,
                make_dataset(samples),
                gateways,
                base_seed=i,
                label_space=labels,
            )
        ]
        run = LabeledRun.from_records(rows, label_space=labels)
        report = evaluate(run, ks=(1, 3, 5))
        acc = [report.per_k[k]["accuracy"] for k in (1, 3, 5)]
        assert acc[0] <= acc[1] <= acc[2], f"run {i} ({config.name}): {acc}"


@criterion(5, "closed-label guarantee over 1000 randomized inputs", budget_s=60.0)
def test_criterion_5_closed_label_guarantee():
    catalog = load_catalog()
    entail_ending = [
        "entail_only",
        "llm_then_entail",
        "entail_llm_entail",
        "primed",
        "primed_plus",
    ]
    gateways = Gateways(nli=_NLI, gen=_ECHO)
    count = 0
    for c_index, name in enumerate(entail_ending):
        config = builtin_configs()[name]
        rng = random.Random(5000 + c_index)
        labels = _random_label_space(rng)
        space = set(labels)
        for j in range(200):
            result = run_pipeline(
                config,
                (f"{name}-{j}", _random_text(rng, labels)),
                labels,
                gateways,
                catalog=catalog,
                seed=j,
            )
            top1 = result.topk(1)
            assert len(top1) == 1 and top1[0] in space
            count += 1
    assert count == 1000

    # Open-ended chain: grounded labels only; ungrounded means a miss.
    rng = random.Random(5999)
    labels = _random_label_space(rng, n_min=6, n_max=6)
    space = set(labels)
    rules = [(label.split()[0], [label]) for label in labels[:3]]
    register_mock(
        "acceptance-open", RuleTableGenerator(rules, default=["uncategorized zzz"])
    )
    gen = ModelGateway(BackendDescriptor(kind="generate", endpoint="mock:acceptance-open"))
    config = PipelineConfig(name="llm_only", stages=(Stage("llm"),), gen_n=3)
    outcomes = []
    for j in range(100):
        gold = rng.choice(labels)
        result = run_pipeline(
            config,
            (f"open-{j}", _random_text(rng, labels)),
            labels,
            Gateways(gen=gen),
            catalog=catalog,
            seed=j,
        )
        assert set(result.topk(5)) <= space
        if result.ungrounded_terminal:
            assert result.topk(5) == []
        outcomes.append((gold, result))
    assert any(r.ungrounded_terminal for _, r in outcomes)
    assert any(r.topk(5) for _, r in outcomes)

    rows = [
        {"input_id": str(j), "gold": gold, "topk": res.topk(5), "error": None}
        for j, (gold, res) in enumerate(outcomes)
    ]
    run = LabeledRun.from_records(rows, label_space=labels)
    hand_hits = sum(1 for gold, res in outcomes if res.topk(1)[:1] == [gold])
    assert top_k_accuracy(run, 1) == 100.0 * hand_hits / len(outcomes)


@criterion(6, "composite correction beats the baseline by >= 30 points", budget_s=10.0)
def test_criterion_6_composite_correction():
    register_mock(
        "correction-rules",
        RuleTableGenerator(
            [(trigger, [gold]) for _, gold, trigger in CORRECTION_SAMPLES],
            default=["general care"],
        ),
    )
    gen = ModelGateway(
        BackendDescriptor(kind="generate", endpoint="mock:correction-rules")
    )
    gateways = Gateways(nli=_NLI, gen=gen)
    dataset = make_dataset([(text, gold) for text, gold, _ in CORRECTION_SAMPLES])
    configs = builtin_configs(family="amazon")

    def top1(config_name):
        rows = [
            item.run_record(config_name, 5)
            for item in run_batch(configs[config_name], dataset, gateways)
        ]
        run = LabeledRun.from_records(rows, label_space=CORRECTION_LABELS)
        return top_k_accuracy(run, 1)

    baseline = top1("entail_only")
    primed = top1("primed")
    assert baseline == CORRECTION_BASELINE_TOP1
    assert primed == CORRECTION_PRIMED_TOP1
    assert primed > baseline
    assert primed - baseline >= 30.0


@criterion(7, "refactoring invariants on a depth-5 taxonomy", budget_s=10.0)
def test_criterion_7_refactoring_invariants():
    rng = random.Random(77)

    def random_path():
        depth = rng.randint(1, 5)
        parts = [f"T{rng.randint(0, 5)}"]
        for _ in range(depth - 1):
            parts.append(f"{parts[-1]}.{rng.randint(0, 2)}")
        return tuple(parts)

    samples = [
        RawSample(text=f"doc {i}", label_path=random_path()) for i in range(2000)
    ]
    tree = parse_taxonomy(samples)
    assert tree.max_depth() == 5

    deepest = refactor_to_longtail(tree, samples, DepthPolicy.max_depth())
    assert deepest.provenance.n_input == 2000
    assert deepest.provenance.n_kept + deepest.provenance.n_dropped == 2000
    assert deepest.provenance.n_dropped == 0
    assert len(deepest.samples) == 2000
    for raw, (text, label) in zip(samples, deepest.samples):
        assert text == raw.text
        assert label == raw.label_path[-1]
    assert deepest.label_space == {s.label_path[-1] for s in samples}
    assert class_distribution(deepest, m=5).total == 2000

    fixed = refactor_to_longtail(tree, samples, DepthPolicy.fixed_depth(3))
    survivors = [s for s in samples if len(s.label_path) >= 3]
    assert fixed.provenance.n_kept == len(survivors)
    assert fixed.provenance.n_dropped == 2000 - len(survivors)
    assert len(fixed.samples) == len(survivors)
    for raw, (text, label) in zip(survivors, fixed.samples):
        assert text == raw.text
        assert label == raw.label_path[2]
    assert fixed.label_space == {s.label_path[2] for s in survivors}
    assert class_distribution(fixed, m=5).total == len(survivors)


@criterion(8, "byte-identical mock reruns of one manifest", budget_s=30.0)
def test_criterion_8_end_to_end_determinism(tmp_path):
    dataset = tmp_path / "dataset.jsonl"
    dataset.write_text(
        "".join(
            json.dumps({"text": text, "label": gold}) + "\n"
            for text, gold, _ in CORRECTION_SAMPLES
        ),
        encoding="utf-8",
    )
    manifest = tmp_path / "manifest.yaml"
    manifest.write_text(
        "dataset:\n"
        "  path: dataset.jsonl\n"
        "pipeline: primed\n"
        "family: amazon\n"
        "seed: 5\n"
        "parallelism: 2\n",
        encoding="utf-8",
    )
    for out in ("first", "second"):
        code = main(
            [
                "run",
                "--manifest", str(manifest),
                "--mock",
                "--output", str(tmp_path / out),
            ]
        )
        assert code == 0
        code = main(
            [
                "eval",
                "--run", str(tmp_path / out / "runs" / "primed" / "records.jsonl"),
                "--output", str(tmp_path / out),
            ]
        )
        assert code == 0

    for rel in (
        "runs/primed/records.jsonl",
        "runs/primed/traces.jsonl",
        "reports/primed_report.json",
        "reports/primed_report.txt",
        "reports/primed_report.csv",
    ):
        first = (tmp_path / "first" / rel).read_bytes()
        second = (tmp_path / "second" / rel).read_bytes()
        assert first == second, f"{rel} differs between identical runs"
