"""Shared fixtures: mock gateways and the composite-correction corpus."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from ztail.gateway import BackendDescriptor, ModelGateway, register_mock
from ztail.mocks import KeywordNliBackend, RuleTableGenerator
from ztail.pipeline import Gateways
from ztail.taxonomy import LongTailDataset, Provenance


@pytest.fixture
def nli_gateway() -> ModelGateway:
    return ModelGateway(BackendDescriptor(kind="nli", endpoint="mock:keyword"))


@pytest.fixture
def echo_gateway() -> ModelGateway:
    return ModelGateway(BackendDescriptor(kind="generate", endpoint="mock:echo"))


# The correction corpus is built so the keyword scorer provably misranks
# seven of ten samples at first: each flip text shares exactly one of the
# two content words of a distractor label (entail score 5/6) while its
# gold label shares none (1/2). The rule generator maps a trigger phrase
# unique to each text onto the gold label's name, so the final premise
# contains both gold content words (score 9/10 > 5/6) and the argmax
# flips. The three control samples start correct and stay correct.
CORRECTION_LABELS = ("Face Wash", "Night Cream", "Nail Polish", "Hair Oil", "Body Lotion")

# (text, gold, trigger phrase)
CORRECTION_SAMPLES = (
    ("gentle face glow for calm mornings", "Night Cream", "calm mornings"),
    ("rich cream feel during spa evenings", "Body Lotion", "spa evenings"),
    ("soft hair after simple showers", "Face Wash", "simple showers"),
    ("tidy nail care weekly habits", "Hair Oil", "weekly habits"),
    ("smooth body shimmer all week", "Nail Polish", "all week"),
    ("fresh wash basin counters daily", "Night Cream", "basin counters"),
    ("warm oil massage quiet rooms", "Body Lotion", "quiet rooms"),
    ("foamy face wash morning rinse", "Face Wash", "morning rinse"),
    ("glitter nail polish art sets", "Nail Polish", "art sets"),
    ("hydrating body lotion summer pump", "Body Lotion", "summer pump"),
)

# Hand-evaluated expectations for the corpus above (top-1, percent).
CORRECTION_BASELINE_TOP1 = 30.0
CORRECTION_PRIMED_TOP1 = 100.0


@dataclass(frozen=True)
class CorrectionFixture:
    dataset: LongTailDataset
    label_space: tuple[str, ...]
    gateways: Gateways


@pytest.fixture
def correction_fixture(nli_gateway) -> CorrectionFixture:
    rules = [(trigger, [gold]) for _, gold, trigger in CORRECTION_SAMPLES]
    register_mock("correction-rules", RuleTableGenerator(rules, default=["general care"]))
    gen_gateway = ModelGateway(
        BackendDescriptor(kind="generate", endpoint="mock:correction-rules")
    )
    samples = [(text, gold) for text, gold, _ in CORRECTION_SAMPLES]
    dataset = LongTailDataset(
        samples=samples,
        label_space=set(CORRECTION_LABELS),
        provenance=Provenance(
            source="correction-fixture",
            depth_policy="max",
            n_input=len(samples),
            n_kept=len(samples),
            n_dropped=0,
        ),
    )
    return CorrectionFixture(
        dataset=dataset,
        label_space=CORRECTION_LABELS,
        gateways=Gateways(nli=nli_gateway, gen=gen_gateway),
    )


@pytest.fixture
def rule_gen_gateway():
    """Factory: a generate gateway backed by a fresh rule table."""

    def make(rules, default=(), name="test-rules"):
        register_mock(name, RuleTableGenerator(list(rules), default=list(default)))
        return ModelGateway(BackendDescriptor(kind="generate", endpoint=f"mock:{name}"))

    return make


def make_dataset(samples) -> LongTailDataset:
    return LongTailDataset(
        samples=list(samples),
        label_space={label for _, label in samples},
        provenance=Provenance(
            source="test",
            depth_policy="max",
            n_input=len(samples),
            n_kept=len(samples),
            n_dropped=0,
        ),
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, after the test run."""
    del exitstatus, config
    by_name: dict[str, str] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, ()):
            location = getattr(report, "location", None)
            if not location or not location[0].endswith("test_acceptance.py"):
                continue
            by_name.setdefault(location[2], status)
    if not by_name:
        return
    import test_acceptance

    terminalreporter.write_sep("-", "acceptance criteria")
    ordered = sorted(test_acceptance.CRITERIA.items(), key=lambda kv: kv[1][0])
    for name, (number, label, budget) in ordered:
        status = by_name.get(name)
        if status is None:
            continue
        if status == "passed":
            elapsed = test_acceptance.RUNTIMES.get(name)
            timing = f" ({elapsed:.2f}s < {budget:.0f}s)" if elapsed is not None else ""
            terminalreporter.write_line(f"[PASS] criterion {number}: {label}{timing}")
        else:
            terminalreporter.write_line(f"[FAIL] criterion {number}: {label}")
