"""File formats: raw record ingestion and dataset/run serialization.

Raw corpora arrive either as line-delimited JSON records with ``text`` and
``label_path`` fields, or as a delimited table (CSV/TSV) whose
``label_path`` column joins the path with a configurable separator
(default ">"). All outputs are deterministic byte-for-byte given the same
inputs: keys are sorted and nothing time-dependent is written here.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterator

from .taxonomy import (
    DistributionSummary,
    LongTailDataset,
    MalformedRecord,
    RawSample,
)

__all__ = [
    "read_raw_samples",
    "write_dataset",
    "write_label_space",
    "write_distribution",
    "read_dataset",
    "read_label_space",
    "read_jsonl",
    "dump_json_line",
]

DEFAULT_PATH_SEPARATOR = ">"


def dump_json_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    if suffix in (".csv", ".tsv", ".txt"):
        return "table"
    raise ValueError(f"cannot infer record format from {path.name!r}; pass fmt explicitly")


def read_raw_samples(
    path: str | Path,
    fmt: str | None = None,
    path_separator: str = DEFAULT_PATH_SEPARATOR,
    delimiter: str | None = None,
) -> Iterator[RawSample]:
    """Yield RawSamples from a record file, reporting 1-based file line numbers.

    ``fmt`` is "jsonl" or "table"; inferred from the extension when omitted.
    For tables the column delimiter defaults to tab for .tsv and comma
    otherwise, and the header row must name ``text`` and ``label_path``.
    """
    path = Path(path)
    fmt = _detect_format(path, fmt)
    if fmt == "jsonl":
        yield from _read_jsonl(path)
    elif fmt == "table":
        if delimiter is None:
            delimiter = "\t" if path.suffix.lower() == ".tsv" else ","
        yield from _read_table(path, delimiter, path_separator)
    else:
        raise ValueError(f"unknown record format {fmt!r}")


def _read_jsonl(path: Path) -> Iterator[RawSample]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict) or "text" not in obj or "label_path" not in obj:
                raise MalformedRecord("record needs 'text' and 'label_path' fields", lineno)
            label_path = obj["label_path"]
            if not isinstance(label_path, list):
                raise MalformedRecord("'label_path' must be an array of strings", lineno)
            yield RawSample.from_parts(str(obj["text"]), label_path, record_index=lineno)


def _read_table(path: Path, delimiter: str, path_separator: str) -> Iterator[RawSample]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None or not {"text", "label_path"} <= set(reader.fieldnames):
            raise MalformedRecord("header must name 'text' and 'label_path' columns", 1)
        for row in reader:
            lineno = reader.line_num
            raw_path = row.get("label_path") or ""
            elements = raw_path.split(path_separator)
            yield RawSample.from_parts(row.get("text") or "", elements, record_index=lineno)


def write_dataset(dataset: LongTailDataset, path: str | Path) -> None:
    """Line-delimited {text, label} records in sample order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for text, label in dataset.samples:
            fh.write(dump_json_line({"text": text, "label": label}) + "\n")


def write_label_space(labels: set[str], path: str | Path) -> None:
    """One label per line, lexicographic order."""
    Path(path).write_text(
        "".join(label + "\n" for label in sorted(labels)), encoding="utf-8"
    )


def write_distribution(summary: DistributionSummary, path: str | Path) -> None:
    """CSV of (label, count), count descending with lexicographic ties."""
    path = Path(path)
    rows = sorted(summary.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "count"])
        writer.writerows(rows)


def read_dataset(path: str | Path) -> list[tuple[str, str]]:
    """Read a refactored dataset file back into (text, label) pairs."""
    out: list[tuple[str, str]] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON ({exc.msg})", lineno) from exc
            if "text" not in obj or "label" not in obj:
                raise MalformedRecord("dataset rows need 'text' and 'label'", lineno)
            out.append((str(obj["text"]), str(obj["label"])))
    return out


def read_jsonl(path: str | Path) -> list[dict]:
    """Read generic line-delimited JSON objects (run records, traces)."""
    rows: list[dict] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict):
                raise MalformedRecord("row must be a JSON object", lineno)
            rows.append(obj)
    return rows


def read_label_space(path: str | Path) -> set[str]:
    labels = {
        line.strip()
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    }
    if not labels:
        raise ValueError(f"label-space file {path} is empty")
    return labels
