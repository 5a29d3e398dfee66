"""Top-k accuracy and macro F1 over labeled runs, plus reference comparison.

Macro F1 at k uses an effective-prediction rule: a record predicts its
gold label when the gold appears anywhere in the top-k list, otherwise it
predicts its rank-1 label (nothing when the list is empty). At k=1 this
coincides with standard macro F1. The macro mean runs over the classes
present in the gold labels; label-space classes that never occur as gold
are excluded so structural zeros cannot dominate long-tail spaces.

All metrics are percentages held unrounded in memory; rendering rounds
half-up to two decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from typing import Iterable, Mapping, Sequence

import yaml

__all__ = [
    "DEFAULT_KS",
    "EvaluationError",
    "EmptyRun",
    "MissingK",
    "RunRecord",
    "LabeledRun",
    "MetricsReport",
    "DiffCell",
    "top_k_accuracy",
    "macro_f1_at_k",
    "aggregate",
    "evaluate",
    "round2",
    "load_reference",
    "compare_to_reference",
    "report_as_dict",
    "render_text_table",
    "render_csv",
    "render_diff_table",
    "write_report_files",
]

DEFAULT_KS = (1, 3, 5)


class EvaluationError(Exception):
    pass


class EmptyRun(EvaluationError):
    pass


class MissingK(EvaluationError):
    pass


@dataclass(frozen=True)
class RunRecord:
    input_id: str
    gold: str
    topk: tuple[str, ...]
    failed: bool = False

    def __post_init__(self) -> None:
        if not self.gold:
            raise ValueError(f"record {self.input_id!r}: gold label must be non-empty")
        if len(set(self.topk)) != len(self.topk):
            raise ValueError(f"record {self.input_id!r}: topk contains duplicates")


@dataclass(frozen=True)
class LabeledRun:
    records: tuple[RunRecord, ...]
    label_space: frozenset[str]

    def __post_init__(self) -> None:
        for r in self.records:
            if r.gold not in self.label_space:
                raise ValueError(
                    f"record {r.input_id!r}: gold {r.gold!r} not in label space"
                )

    @classmethod
    def from_records(
        cls,
        rows: Iterable[Mapping],
        label_space: Iterable[str] | None = None,
    ) -> "LabeledRun":
        """Build a run from record dicts ({input_id, gold, topk, error}).

        Without an explicit label space, the space is inferred as every
        gold plus every predicted label.
        """
        records = tuple(
            RunRecord(
                input_id=str(row.get("input_id", i)),
                gold=row["gold"],
                topk=tuple(row.get("topk") or ()),
                failed=row.get("error") is not None,
            )
            for i, row in enumerate(rows)
        )
        if label_space is None:
            space: set[str] = {r.gold for r in records}
            for r in records:
                space.update(r.topk)
        else:
            space = set(label_space)
        return cls(records=records, label_space=frozenset(space))

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.failed)


def top_k_accuracy(run: LabeledRun, k: int) -> float:
    """Percentage of records whose gold appears in the first k predictions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not run.records:
        raise EmptyRun("no records to score")
    hits = sum(1 for r in run.records if r.gold in r.topk[:k])
    return 100.0 * hits / len(run.records)


def _effective_prediction(record: RunRecord, k: int) -> str | None:
    if record.gold in record.topk[:k]:
        return record.gold
    return record.topk[0] if record.topk else None


def macro_f1_at_k(run: LabeledRun, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not run.records:
        raise EmptyRun("no records to score")
    pairs = [(r.gold, _effective_prediction(r, k)) for r in run.records]
    classes = sorted({gold for gold, _ in pairs})
    total = 0.0
    for cls in classes:
        tp = sum(1 for gold, eff in pairs if gold == cls and eff == cls)
        fp = sum(1 for gold, eff in pairs if gold != cls and eff == cls)
        fn = sum(1 for gold, eff in pairs if gold == cls and eff != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        total += 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return 100.0 * (total / len(classes))


def aggregate(
    per_k: Mapping[int, Mapping[str, float]], ks: Sequence[int] = DEFAULT_KS
) -> dict[str, float]:
    """Arithmetic mean of each metric over the given k values."""
    missing = [k for k in ks if k not in per_k]
    if missing:
        raise MissingK(f"per_k is missing k={missing}")
    metrics = sorted({m for k in ks for m in per_k[k]})
    return {m: sum(per_k[k][m] for k in ks) / len(ks) for m in metrics}


@dataclass(frozen=True)
class MetricsReport:
    per_k: Mapping[int, Mapping[str, float]]
    averages: Mapping[str, float]
    n_samples: int
    n_failed: int = 0

    def __post_init__(self) -> None:
        for k, metrics in self.per_k.items():
            for name, value in metrics.items():
                if not 0.0 <= value <= 100.0:
                    raise ValueError(f"metric {name}@{k} out of range: {value}")


def evaluate(run: LabeledRun, ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    per_k = {
        k: {"accuracy": top_k_accuracy(run, k), "macro_f1": macro_f1_at_k(run, k)}
        for k in ks
    }
    return MetricsReport(
        per_k=per_k,
        averages=aggregate(per_k, ks),
        n_samples=len(run.records),
        n_failed=run.n_failed,
    )


def round2(value: float) -> float:
    """Half-up rounding to two decimals, for display only."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def load_reference(path: str | None = None) -> dict:
    """Reference result table: dataset -> config -> {per_k, average}."""
    if path is None:
        raw = resources.files("ztail.data").joinpath("published_results.yaml").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    doc = yaml.safe_load(raw)
    if not isinstance(doc, dict):
        raise ValueError("reference table must be a mapping")
    return doc


@dataclass(frozen=True)
class DiffCell:
    dataset: str
    config: str
    k: str  # "1" | "3" | "5" | "avg"
    metric: str
    computed: float
    reference: float
    delta: float
    within: bool


def compare_to_reference(
    report: MetricsReport,
    reference: Mapping,
    dataset: str,
    config: str,
    tolerance: float = 0.06,
) -> list[DiffCell]:
    """Cell-by-cell deltas between a report and one reference entry."""
    try:
        entry = reference[dataset][config]
    except KeyError as exc:
        raise KeyError(f"reference has no entry for ({dataset!r}, {config!r})") from exc
    cells: list[DiffCell] = []

    def add(k_key: str, metric: str, computed: float, ref_value: float) -> None:
        delta = computed - ref_value
        cells.append(
            DiffCell(
                dataset=dataset,
                config=config,
                k=k_key,
                metric=metric,
                computed=computed,
                reference=ref_value,
                delta=delta,
                within=abs(delta) <= tolerance + 1e-12,
            )
        )

    for k in sorted(report.per_k):
        for metric in ("accuracy", "macro_f1"):
            if k in entry.get("per_k", {}) and metric in entry["per_k"][k]:
                add(str(k), metric, report.per_k[k][metric], entry["per_k"][k][metric])
    for metric in ("accuracy", "macro_f1"):
        if metric in entry.get("average", {}) and metric in report.averages:
            add("avg", metric, report.averages[metric], entry["average"][metric])
    return cells


def report_as_dict(report: MetricsReport) -> dict:
    return {
        "per_k": {
            str(k): {m: v for m, v in metrics.items()}
            for k, metrics in sorted(report.per_k.items())
        },
        "averages": dict(report.averages),
        "n_samples": report.n_samples,
        "n_failed": report.n_failed,
    }


def render_text_table(report: MetricsReport, title: str = "") -> str:
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'k':>4}  {'accuracy':>9}  {'macro_f1':>9}")
    for k in sorted(report.per_k):
        row = report.per_k[k]
        lines.append(f"{k:>4}  {round2(row['accuracy']):>9.2f}  {round2(row['macro_f1']):>9.2f}")
    lines.append(
        f"{'avg':>4}  {round2(report.averages['accuracy']):>9.2f}  "
        f"{round2(report.averages['macro_f1']):>9.2f}"
    )
    lines.append(f"n={report.n_samples} failed={report.n_failed}")
    return "\n".join(lines) + "\n"


def render_csv(report: MetricsReport) -> str:
    lines = ["k,accuracy,macro_f1"]
    for k in sorted(report.per_k):
        row = report.per_k[k]
        lines.append(f"{k},{round2(row['accuracy']):.2f},{round2(row['macro_f1']):.2f}")
    lines.append(
        f"avg,{round2(report.averages['accuracy']):.2f},{round2(report.averages['macro_f1']):.2f}"
    )
    return "\n".join(lines) + "\n"


def render_diff_table(cells: Sequence[DiffCell]) -> str:
    lines = [f"{'k':>4}  {'metric':<9} {'computed':>9} {'reference':>9} {'delta':>8}  flag"]
    for c in cells:
        flag = "" if c.within else "OUT"
        lines.append(
            f"{c.k:>4}  {c.metric:<9} {round2(c.computed):>9.2f} "
            f"{round2(c.reference):>9.2f} {c.delta:>+8.3f}  {flag}"
        )
    return "\n".join(lines) + "\n"


def write_report_files(
    report: MetricsReport,
    json_path: str,
    text_path: str,
    csv_path: str,
    title: str = "",
) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report_as_dict(report), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(render_text_table(report, title))
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(render_csv(report))
