"""Command-line entry point: refactor, run, eval, report.

Exit codes: 0 success, 1 usage, 2 validation (bad inputs, bad manifest),
3 runtime (backend failures, aborted batches). Every command finishes
validating its inputs before it creates or writes any output file, so a
validation failure never leaves a half-written output directory.

Precedence for run settings: manifest values, overridden by CLI flags,
overridden by NLI_ENDPOINT / GEN_ENDPOINT environment variables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from . import evaluation
from .dataio import (
    DEFAULT_PATH_SEPARATOR,
    read_dataset,
    read_jsonl,
    read_label_space,
    read_raw_samples,
    write_dataset,
    write_distribution,
    write_label_space,
)
from .gateway import (
    BackendDescriptor,
    GatewayError,
    ModelGateway,
    apply_env_overrides,
)
from .pipeline import (
    Gateways,
    PipelineConfig,
    PipelineError,
    Stage,
    builtin_configs,
    run_batch,
    write_run_files,
)
from .retrieval import PRIMED_PATTERNS, load_catalog
from .taxonomy import (
    DepthPolicy,
    LongTailDataset,
    Provenance,
    TaxonomyError,
    class_distribution,
    parse_taxonomy,
    refactor_to_longtail,
    subsample,
)

__all__ = ["main", "ExperimentManifest", "load_manifest"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

MOCK_NLI_ENDPOINT = "mock:keyword"
MOCK_GEN_ENDPOINT = "mock:echo"


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here reserves 2 for
    # validation problems, so usage gets exit code 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class ExperimentManifest:
    dataset_path: Path
    labels_path: Path | None
    pipeline: str | Mapping  # builtin name or inline config mapping
    family: str = "wos"  # dataset family for builtin pipelines
    backends: Mapping[str, Mapping] = field(default_factory=dict)
    parallelism: int = 1
    seed: int = 0
    output_dir: Path = Path("out")
    eval_ks: tuple[int, ...] = (1, 3, 5)
    eval_tolerance: float = 0.06
    eval_reference: str | None = None  # reference dataset key

    def config_name(self) -> str:
        if isinstance(self.pipeline, str):
            return self.pipeline
        return str(self.pipeline.get("name", "inline"))


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    if not path.is_file():
        raise ValidationFailure(f"manifest not found: {path}")
    doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValidationFailure("manifest must be a YAML mapping")
    base = path.parent

    def resolve(p: str | None) -> Path | None:
        if p is None:
            return None
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    dataset = doc.get("dataset")
    if not isinstance(dataset, dict) or "path" not in dataset:
        raise ValidationFailure("manifest needs dataset.path")
    pipeline = doc.get("pipeline")
    if not isinstance(pipeline, (str, dict)):
        raise ValidationFailure("manifest needs pipeline (name or inline mapping)")
    ev = doc.get("evaluation") or {}
    ks = tuple(int(k) for k in ev.get("ks", (1, 3, 5)))
    return ExperimentManifest(
        dataset_path=resolve(dataset["path"]),
        labels_path=resolve(dataset.get("labels")),
        pipeline=pipeline,
        family=str(doc.get("family", "wos")),
        backends=doc.get("backends") or {},
        parallelism=int(doc.get("parallelism", 1)),
        seed=int(doc.get("seed", 0)),
        output_dir=resolve(str(doc.get("output_dir", "out"))),
        eval_ks=ks,
        eval_tolerance=float(ev.get("tolerance", 0.06)),
        eval_reference=ev.get("reference"),
    )


def _pipeline_from_manifest(manifest: ExperimentManifest) -> PipelineConfig:
    if isinstance(manifest.pipeline, str):
        configs = builtin_configs(family=manifest.family)
        if manifest.pipeline not in configs:
            raise ValidationFailure(
                f"unknown builtin config {manifest.pipeline!r}; "
                f"known: {sorted(configs)}"
            )
        return configs[manifest.pipeline]
    doc = dict(manifest.pipeline)
    try:
        stages = tuple(Stage(kind) for kind in doc.pop("stages"))
        return PipelineConfig(
            name=str(doc.pop("name", "inline")),
            stages=stages,
            prime_k=int(doc.pop("prime_k", 0)),
            iterations=int(doc.pop("iterations", 1)),
            family=str(doc.pop("family", "wos")),
            templates=dict(doc.pop("templates", {})),
            final_premise_pattern=str(
                doc.pop("final_premise_pattern", PipelineConfig.final_premise_pattern)
            ),
            gen_n=int(doc.pop("gen_n", 1)),
            max_new_tokens=int(doc.pop("max_new_tokens", 16)),
            temperature=float(doc.pop("temperature", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationFailure(f"bad inline pipeline config: {exc}") from exc


def _descriptor(kind: str, section: Mapping | None, mock: bool) -> BackendDescriptor:
    section = dict(section or {})
    default_mock = MOCK_NLI_ENDPOINT if kind == "nli" else MOCK_GEN_ENDPOINT
    endpoint = default_mock if mock else section.get("endpoint", default_mock)
    try:
        desc = BackendDescriptor(
            kind=kind,
            endpoint=str(endpoint),
            max_premise_chars=int(section.get("max_premise_chars", 2000)),
            timeout_ms=int(section.get("timeout_ms", 30000)),
            max_retries=int(section.get("max_retries", 3)),
            max_concurrency=int(section.get("max_concurrency", 4)),
        )
    except ValueError as exc:
        raise ValidationFailure(f"bad {kind} backend descriptor: {exc}") from exc
    return apply_env_overrides(desc, os.environ)


def _load_longtail(manifest: ExperimentManifest) -> tuple[LongTailDataset, set[str] | None]:
    """Load the dataset plus the declared label space (None: use realized).

    A label-space file may be wider than the realized label set, adding
    pure distractors, but must cover every dataset label.
    """
    if not manifest.dataset_path or not manifest.dataset_path.is_file():
        raise ValidationFailure(f"dataset file not found: {manifest.dataset_path}")
    samples = read_dataset(manifest.dataset_path)
    if not samples:
        raise ValidationFailure(f"dataset file is empty: {manifest.dataset_path}")
    realized = {label for _, label in samples}
    declared: set[str] | None = None
    if manifest.labels_path is not None:
        if not manifest.labels_path.is_file():
            raise ValidationFailure(f"label-space file not found: {manifest.labels_path}")
        declared = read_label_space(manifest.labels_path)
        extra = realized - declared
        if extra:
            raise ValidationFailure(
                f"dataset labels missing from label-space file: {sorted(extra)[:5]}"
            )
    provenance = Provenance(
        source=str(manifest.dataset_path),
        depth_policy="unknown",
        n_input=len(samples),
        n_kept=len(samples),
        n_dropped=0,
    )
    dataset = LongTailDataset(
        samples=tuple(samples), label_space=frozenset(realized), provenance=provenance
    )
    return dataset, declared


# --- refactor ---------------------------------------------------------------


def cmd_refactor(args: argparse.Namespace) -> int:
    policy = DepthPolicy.parse(args.depth)
    samples = list(
        read_raw_samples(
            args.input,
            fmt=args.format,
            path_separator=args.path_separator,
        )
    )
    if args.subsample is not None:
        samples = subsample(samples, args.subsample, args.seed)
    taxonomy = parse_taxonomy(iter(samples))
    dataset = refactor_to_longtail(
        taxonomy, iter(samples), policy, source=str(args.input)
    )
    m = min(args.head_tail, len(dataset.label_space))
    summary = class_distribution(dataset, m)

    out = Path(args.output) / "dataset"
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, out / "dataset.jsonl")
    write_label_space(set(dataset.label_space), out / "labels.txt")
    write_distribution(summary, out / "distribution.csv")

    p = dataset.provenance
    print(
        f"refactored {p.n_input} records -> {p.n_kept} samples "
        f"({p.n_dropped} dropped), {len(dataset.label_space)} leaf labels"
    )
    print(f"depth policy: {policy.describe()}")
    print(f"head: {', '.join(f'{l} ({c})' for l, c in summary.head)}")
    print(f"tail: {', '.join(f'{l} ({c})' for l, c in summary.tail)}")
    print(f"imbalance max/min: {summary.imbalance_ratio:.1f}")
    print(f"wrote {out / 'dataset.jsonl'}")
    return EXIT_OK


# --- run --------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    if args.config:
        manifest = replace(manifest, pipeline=args.config)
    if args.parallelism is not None:
        manifest = replace(manifest, parallelism=args.parallelism)
    if args.seed is not None:
        manifest = replace(manifest, seed=args.seed)
    if args.output:
        manifest = replace(manifest, output_dir=Path(args.output))

    config = _pipeline_from_manifest(manifest)
    catalog = load_catalog()
    # Fail on dangling template references before any backend call.
    kinds = {s.kind for s in config.stages}
    if "llm" in kinds:
        if config.prime_k >= 1:
            if config.family not in PRIMED_PATTERNS:
                raise ValidationFailure(
                    f"family {config.family!r} has no priming pattern"
                )
        else:
            init_ref = config.templates.get("init")
            if init_ref:
                catalog.get(init_ref)
            else:
                catalog.default_for(config.family)

    dataset, declared_space = _load_longtail(manifest)
    gateways = Gateways(
        nli=ModelGateway(_descriptor("nli", manifest.backends.get("nli"), args.mock))
        if "entail" in kinds
        else None,
        gen=ModelGateway(
            _descriptor("generate", manifest.backends.get("generate"), args.mock)
        )
        if "llm" in kinds
        else None,
    )

    started = datetime.now(timezone.utc).isoformat()
    items = []
    total = len(dataset.samples)
    step = max(1, total // 10)
    for item in run_batch(
        config,
        dataset,
        gateways,
        parallelism=manifest.parallelism,
        catalog=catalog,
        base_seed=manifest.seed,
        label_space=sorted(declared_space) if declared_space else None,
    ):
        items.append(item)
        if len(items) % step == 0 or len(items) == total:
            print(f"[{config.name}] {len(items)}/{total} samples", file=sys.stderr)
    finished = datetime.now(timezone.utc).isoformat()

    run_dir = manifest.output_dir / "runs" / config.name
    run_dir.mkdir(parents=True, exist_ok=True)
    write_run_files(
        items,
        config.name,
        str(run_dir / "records.jsonl"),
        str(run_dir / "traces.jsonl"),
        k_max=max(manifest.eval_ks),
    )
    metadata = {
        "config": config.name,
        "n_samples": total,
        "n_failed": sum(1 for item in items if item.failed),
        "parallelism": manifest.parallelism,
        "seed": manifest.seed,
        "backends": {
            kind: gw.descriptor.endpoint
            for kind, gw in (("nli", gateways.nli), ("generate", gateways.gen))
            if gw is not None
        },
        "started_at": started,
        "finished_at": finished,
    }
    (run_dir / "metadata.json").write_text(
        json.dumps(metadata, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    failed = metadata["n_failed"]
    print(f"wrote {run_dir / 'records.jsonl'} ({total} records, {failed} failed)")
    return EXIT_OK


# --- eval -------------------------------------------------------------------


def _locate_records(args: argparse.Namespace) -> tuple[Path, ExperimentManifest | None]:
    if args.run:
        return Path(args.run), None
    if args.manifest:
        manifest = load_manifest(args.manifest)
        if args.config:
            manifest = replace(manifest, pipeline=args.config)
        name = manifest.config_name()
        return manifest.output_dir / "runs" / name / "records.jsonl", manifest
    raise ValidationFailure("eval needs --run RECORDS.jsonl or --manifest PATH")


def cmd_eval(args: argparse.Namespace) -> int:
    records_path, manifest = _locate_records(args)
    if not records_path.is_file():
        raise ValidationFailure(f"run records not found: {records_path}")
    rows = read_jsonl(records_path)
    if not rows:
        raise evaluation.EmptyRun(f"no records in {records_path}")
    label_space = None
    if args.labels:
        label_space = read_label_space(args.labels)
    run = evaluation.LabeledRun.from_records(rows, label_space=label_space)

    ks = tuple(int(k) for k in args.ks.split(",")) if args.ks else (
        manifest.eval_ks if manifest else (1, 3, 5)
    )
    report = evaluation.evaluate(run, ks=ks)
    config_name = str(rows[0].get("config", "run"))

    reference_key = args.reference or (manifest.eval_reference if manifest else None)
    tolerance = args.tolerance if args.tolerance is not None else (
        manifest.eval_tolerance if manifest else 0.06
    )
    diff_cells = None
    if reference_key:
        reference = evaluation.load_reference(args.reference_file)
        diff_cells = evaluation.compare_to_reference(
            report, reference, reference_key, config_name, tolerance=tolerance
        )

    out_dir = Path(args.output) if args.output else (
        manifest.output_dir if manifest else records_path.parent.parent.parent
    )
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{config_name}_report"
    payload = {"config": config_name, **evaluation.report_as_dict(report)}
    (reports_dir / f"{stem}.json").write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    (reports_dir / f"{stem}.txt").write_text(
        evaluation.render_text_table(report, title=config_name), encoding="utf-8"
    )
    (reports_dir / f"{stem}.csv").write_text(
        evaluation.render_csv(report), encoding="utf-8"
    )
    print(evaluation.render_text_table(report, title=config_name), end="")
    if diff_cells is not None:
        diff_text = evaluation.render_diff_table(diff_cells)
        (reports_dir / f"{stem}_diff.txt").write_text(diff_text, encoding="utf-8")
        flagged = sum(1 for c in diff_cells if not c.within)
        print(diff_text, end="")
        print(f"reference deltas: {len(diff_cells)} cells, {flagged} outside tolerance {tolerance}")
    print(f"wrote {reports_dir / (stem + '.json')}")
    return EXIT_OK


# --- report -----------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for path in args.inputs:
        p = Path(path)
        if not p.is_file():
            raise ValidationFailure(f"report file not found: {p}")
        doc = json.loads(p.read_text(encoding="utf-8"))
        if "per_k" not in doc or "averages" not in doc:
            raise ValidationFailure(f"{p} is not an eval report")
        rows.append((str(doc.get("config", p.stem)), doc))

    reference = evaluation.load_reference() if args.reference else None
    r2 = evaluation.round2
    header = f"{'config':<20} {'acc@1':>7} {'f1@1':>7} {'acc@3':>7} {'f1@3':>7} {'acc@5':>7} {'f1@5':>7} {'avg_acc':>8} {'avg_f1':>7}"
    lines = [header]
    for name, doc in rows:
        per_k = doc["per_k"]
        cells = []
        for k in ("1", "3", "5"):
            entry = per_k.get(k, {})
            cells.append(entry.get("accuracy"))
            cells.append(entry.get("macro_f1"))
        avg = doc["averages"]
        rendered = " ".join(
            f"{r2(v):>7.2f}" if v is not None else f"{'-':>7}" for v in cells
        )
        lines.append(
            f"{name:<20} {rendered} {r2(avg['accuracy']):>8.2f} {r2(avg['macro_f1']):>7.2f}"
        )
        if reference is not None and args.reference in reference:
            entry = reference[args.reference].get(name)
            if entry:
                ref_cells = []
                for k in (1, 3, 5):
                    ref_cells.append(entry["per_k"][k]["accuracy"])
                    ref_cells.append(entry["per_k"][k]["macro_f1"])
                rendered_ref = " ".join(f"{r2(v):>7.2f}" for v in ref_cells)
                lines.append(
                    f"{'  reference':<20} {rendered_ref} "
                    f"{r2(entry['average']['accuracy']):>8.2f} "
                    f"{r2(entry['average']['macro_f1']):>7.2f}"
                )
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


# --- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ztail", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_ref = sub.add_parser("refactor", help="raw taxonomy records -> long-tail dataset")
    p_ref.add_argument("--input", required=True, help="raw record file (jsonl or csv/tsv)")
    p_ref.add_argument("--format", choices=["jsonl", "table"], default=None)
    p_ref.add_argument("--path-separator", default=DEFAULT_PATH_SEPARATOR)
    p_ref.add_argument("--depth", default="max", help='"max", "fixed:N", or bare N')
    p_ref.add_argument("--subsample", type=int, default=None, metavar="N")
    p_ref.add_argument("--seed", type=int, default=0)
    p_ref.add_argument("--head-tail", type=int, default=5, metavar="M")
    p_ref.add_argument("--output", required=True, help="output directory root")
    p_ref.set_defaults(func=cmd_refactor)

    p_run = sub.add_parser("run", help="execute a chain over a dataset")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--config", default=None, help="builtin config name override")
    p_run.add_argument("--parallelism", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--mock", action="store_true", help="force mock backends")
    p_run.add_argument("--output", default=None, help="output directory override")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score run records")
    src = p_eval.add_mutually_exclusive_group(required=True)
    src.add_argument("--run", default=None, help="records.jsonl path")
    src.add_argument("--manifest", default=None)
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--labels", default=None, help="label-space file")
    p_eval.add_argument("--ks", default=None, help="comma list, default 1,3,5")
    p_eval.add_argument("--reference", default=None, help="reference dataset key")
    p_eval.add_argument("--reference-file", default=None, help="custom reference YAML")
    p_eval.add_argument("--tolerance", type=float, default=None)
    p_eval.add_argument("--output", default=None, help="output directory root")
    p_eval.set_defaults(func=cmd_eval)

    p_rep = sub.add_parser("report", help="combine eval reports into one table")
    p_rep.add_argument("inputs", nargs="+", help="report.json files")
    p_rep.add_argument("--reference", default=None, help="reference dataset key")
    p_rep.add_argument("--output", default=None, help="write table here instead of stdout")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, GatewayError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (
        ValidationFailure,
        TaxonomyError,
        evaluation.EvaluationError,
        ValueError,
        KeyError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
