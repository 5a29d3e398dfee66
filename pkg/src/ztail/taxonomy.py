"""Hierarchical taxonomy ingestion and long-tail refactoring.

Turns category-path corpora into a flat leaf-label prediction dataset:
each sample keeps its text and a single leaf label, either the deepest
element of its path (``max_depth``) or the element at a fixed depth
(``fixed_depth(d)``). The realized leaf set becomes the label space.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

__all__ = [
    "TaxonomyError",
    "EmptyInput",
    "MalformedRecord",
    "UnknownPath",
    "EmptyResult",
    "RawSample",
    "TaxonomyNode",
    "Taxonomy",
    "DepthPolicy",
    "Provenance",
    "LongTailDataset",
    "DistributionSummary",
    "normalize_label",
    "parse_taxonomy",
    "refactor_to_longtail",
    "class_distribution",
    "subsample",
]

_WS_RUN = re.compile(r"\s+")


class TaxonomyError(Exception):
    """Base error for taxonomy ingestion and refactoring."""


class EmptyInput(TaxonomyError):
    """No records were supplied."""


class MalformedRecord(TaxonomyError):
    """A record is unusable; carries the offending record index."""

    def __init__(self, message: str, record_index: int):
        super().__init__(f"record {record_index}: {message}")
        self.record_index = record_index


class UnknownPath(TaxonomyError):
    """A sample's label path does not exist in the taxonomy."""


class EmptyResult(TaxonomyError):
    """Every sample was dropped by the depth policy."""


def normalize_label(raw: str) -> str:
    """Trim and collapse internal whitespace runs; case is preserved."""
    return _WS_RUN.sub(" ", raw.strip())


@dataclass(frozen=True)
class RawSample:
    """One input document: free text plus its category path, outermost first."""

    text: str
    label_path: tuple[str, ...]

    @classmethod
    def from_parts(cls, text: str, path: Iterable[str], record_index: int = 0) -> "RawSample":
        labels = tuple(normalize_label(p) for p in path)
        if not labels:
            raise MalformedRecord("empty label path", record_index)
        for element in labels:
            if not element:
                raise MalformedRecord("empty element in label path", record_index)
        return cls(text=text, label_path=labels)


@dataclass
class TaxonomyNode:
    """Tree node; ``depth`` counts from 1 at the top-level categories."""

    name: str
    depth: int
    children: list["TaxonomyNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def child(self, name: str) -> "TaxonomyNode | None":
        for node in self.children:
            if node.name == name:
                return node
        return None


class Taxonomy:
    """Rooted label tree built from observed label paths."""

    def __init__(self) -> None:
        self._root = TaxonomyNode(name="", depth=0)
        self._paths: set[tuple[str, ...]] = set()

    @property
    def top_level(self) -> list[TaxonomyNode]:
        return self._root.children

    def _insert(self, path: tuple[str, ...]) -> None:
        node = self._root
        for depth, name in enumerate(path, start=1):
            nxt = node.child(name)
            if nxt is None:
                nxt = TaxonomyNode(name=name, depth=depth)
                node.children.append(nxt)
            node = nxt
        self._paths.add(path)

    def has_path(self, path: tuple[str, ...]) -> bool:
        """True when every prefix of ``path`` is a node chain from the root."""
        node = self._root
        for name in path:
            node = node.child(name)  # type: ignore[assignment]
            if node is None:
                return False
        return True

    def node_count(self) -> int:
        """Number of nodes excluding the synthetic root."""
        return sum(1 for _ in self.iter_nodes())

    def iter_nodes(self) -> Iterator[TaxonomyNode]:
        stack = list(reversed(self._root.children))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaf_paths(self) -> list[tuple[str, ...]]:
        out: list[tuple[str, ...]] = []

        def walk(node: TaxonomyNode, prefix: tuple[str, ...]) -> None:
            path = prefix + (node.name,)
            if node.is_leaf:
                out.append(path)
            for c in node.children:
                walk(c, path)

        for top in self._root.children:
            walk(top, ())
        return out

    def leaves(self) -> list[str]:
        return [path[-1] for path in self.leaf_paths()]

    def max_depth(self) -> int:
        return max((node.depth for node in self.iter_nodes()), default=0)


@dataclass(frozen=True)
class DepthPolicy:
    """Leaf selection rule: ``fixed`` takes the element at one depth, ``max`` the deepest."""

    mode: str  # "fixed" | "max"
    depth: int | None = None

    @classmethod
    def fixed_depth(cls, d: int) -> "DepthPolicy":
        if d < 1:
            raise ValueError("fixed depth must be >= 1")
        return cls(mode="fixed", depth=d)

    @classmethod
    def max_depth(cls) -> "DepthPolicy":
        return cls(mode="max")

    @classmethod
    def parse(cls, text: str) -> "DepthPolicy":
        """Accepts "max" or "fixed:<d>" (also a bare integer)."""
        s = text.strip().lower()
        if s in ("max", "max_depth"):
            return cls.max_depth()
        if s.startswith("fixed:"):
            return cls.fixed_depth(int(s.split(":", 1)[1]))
        if s.isdigit():
            return cls.fixed_depth(int(s))
        raise ValueError(f"unrecognized depth policy: {text!r}")

    def describe(self) -> str:
        return "max" if self.mode == "max" else f"fixed:{self.depth}"


@dataclass(frozen=True)
class Provenance:
    source: str
    depth_policy: str
    n_input: int
    n_kept: int
    n_dropped: int


@dataclass
class LongTailDataset:
    """Flat (text, leaf label) samples plus the realized label space."""

    samples: list[tuple[str, str]]
    label_space: set[str]
    provenance: Provenance

    def __post_init__(self) -> None:
        realized = {label for _, label in self.samples}
        if realized != self.label_space:
            raise ValueError("label_space must equal the realized leaf set")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class DistributionSummary:
    """Per-label counts with the m most and least frequent labels."""

    counts: dict[str, int]
    head: list[tuple[str, int]]
    tail: list[tuple[str, int]]
    imbalance_ratio: float

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def parse_taxonomy(records: Iterable[RawSample]) -> Taxonomy:
    """Build the minimal tree containing every observed label path.

    Identical paths merge into one node chain; sibling order is first-seen.
    """
    tree = Taxonomy()
    seen_any = False
    for sample in records:
        seen_any = True
        tree._insert(sample.label_path)
    if not seen_any:
        raise EmptyInput("no records supplied")
    return tree


def refactor_to_longtail(
    taxonomy: Taxonomy,
    samples: Iterable[RawSample],
    depth_policy: DepthPolicy,
    source: str = "unknown",
) -> LongTailDataset:
    """Project each sample onto a single leaf label per the depth policy.

    Under ``fixed_depth(d)`` samples with paths shorter than d are dropped
    (and counted in provenance); deeper paths contribute their depth-d
    ancestor. Under ``max_depth`` the final path element is kept and nothing
    whose path exists in the taxonomy is dropped.
    """
    kept: list[tuple[str, str]] = []
    n_input = 0
    n_dropped = 0
    for sample in samples:
        n_input += 1
        if not taxonomy.has_path(sample.label_path):
            raise UnknownPath(f"label path not in taxonomy: {list(sample.label_path)}")
        if depth_policy.mode == "fixed":
            assert depth_policy.depth is not None
            if len(sample.label_path) < depth_policy.depth:
                n_dropped += 1
                continue
            leaf = sample.label_path[depth_policy.depth - 1]
        else:
            leaf = sample.label_path[-1]
        kept.append((sample.text, leaf))

    if not kept:
        raise EmptyResult(
            f"all {n_input} samples dropped under policy {depth_policy.describe()}"
        )
    return LongTailDataset(
        samples=kept,
        label_space={label for _, label in kept},
        provenance=Provenance(
            source=source,
            depth_policy=depth_policy.describe(),
            n_input=n_input,
            n_kept=len(kept),
            n_dropped=n_dropped,
        ),
    )


def class_distribution(dataset: LongTailDataset, m: int) -> DistributionSummary:
    """Exact value counts plus the top/bottom-m labels.

    Head is sorted by count descending, tail ascending; ties break
    lexicographically in both.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > len(dataset.label_space):
        raise ValueError(f"m={m} exceeds the {len(dataset.label_space)} labels present")
    counts: dict[str, int] = {}
    for _, label in dataset.samples:
        counts[label] = counts.get(label, 0) + 1
    by_count_desc = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    by_count_asc = sorted(counts.items(), key=lambda kv: (kv[1], kv[0]))
    return DistributionSummary(
        counts=counts,
        head=by_count_desc[:m],
        tail=by_count_asc[:m],
        imbalance_ratio=max(counts.values()) / min(counts.values()),
    )


def subsample(
    samples: list[RawSample], n: int, seed: int
) -> list[RawSample]:
    """Seeded uniform subset without replacement, preserving input order.

    How the published 3000/5000-sample subsets were drawn is not recorded
    anywhere, so this is offered as an explicit option rather than a
    default step.
    """
    if n >= len(samples):
        return list(samples)
    picked = set(random.Random(seed).sample(range(len(samples)), n))
    return [s for i, s in enumerate(samples) if i in picked]
