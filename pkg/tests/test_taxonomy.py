import pytest
from hypothesis import given
from hypothesis import strategies as st

from ztail.taxonomy import (
    DepthPolicy,
    EmptyInput,
    EmptyResult,
    MalformedRecord,
    RawSample,
    UnknownPath,
    class_distribution,
    normalize_label,
    parse_taxonomy,
    refactor_to_longtail,
    subsample,
)


def _samples(rows):
    return [RawSample.from_parts(text, path) for text, path in rows]


BEAUTY_ROWS = [
    ("t0", ("Beauty", "Skin Care", "Face", "Night Cream")),
    ("t1", ("Beauty", "Skin Care", "Face", "Face Wash")),
    ("t2", ("Beauty", "Skin Care", "Body", "Body Lotion")),
    ("t3", ("Beauty", "Hair Care", "Hair Oil")),
    ("t4", ("Beauty", "Skin Care", "Face", "Night Cream")),
]


def test_normalize_label():
    assert normalize_label("  Night   Cream ") == "Night Cream"
    assert normalize_label("a\tb\nc") == "a b c"


def test_from_parts_rejects_empty_path():
    with pytest.raises(MalformedRecord) as err:
        RawSample.from_parts("x", [], record_index=4)
    assert err.value.record_index == 4


def test_from_parts_rejects_blank_element():
    with pytest.raises(MalformedRecord):
        RawSample.from_parts("x", ["Beauty", "  "], record_index=1)


def test_parse_taxonomy_merges_prefixes():
    tree = parse_taxonomy(_samples(BEAUTY_ROWS))
    # Distinct prefixes: Beauty, Skin Care, Face, Night Cream, Face Wash,
    # Body, Body Lotion, Hair Care, Hair Oil.
    assert tree.node_count() == 9
    assert tree.max_depth() == 4
    assert tree.has_path(("Beauty", "Skin Care"))
    assert not tree.has_path(("Beauty", "Fragrance"))
    assert len(tree.top_level) == 1


def test_parse_taxonomy_empty_input():
    with pytest.raises(EmptyInput):
        parse_taxonomy([])


def test_leaf_paths_and_leaves():
    tree = parse_taxonomy(_samples(BEAUTY_ROWS))
    leaves = set(tree.leaves())
    assert leaves == {"Night Cream", "Face Wash", "Body Lotion", "Hair Oil"}
    for path in tree.leaf_paths():
        assert tree.has_path(path)


def test_refactor_max_depth_keeps_path_tails():
    samples = _samples(BEAUTY_ROWS)
    tree = parse_taxonomy(samples)
    ds = refactor_to_longtail(tree, samples, DepthPolicy.max_depth(), source="rows")
    assert [label for _, label in ds.samples] == [
        "Night Cream",
        "Face Wash",
        "Body Lotion",
        "Hair Oil",
        "Night Cream",
    ]
    assert ds.label_space == {"Night Cream", "Face Wash", "Body Lotion", "Hair Oil"}
    assert ds.provenance.n_input == 5
    assert ds.provenance.n_kept == 5
    assert ds.provenance.n_dropped == 0


def test_refactor_fixed_depth_projects_and_drops():
    samples = _samples(BEAUTY_ROWS)
    tree = parse_taxonomy(samples)
    ds = refactor_to_longtail(tree, samples, DepthPolicy.fixed_depth(4))
    # The depth-3 hair path is dropped; the rest project onto depth 4.
    assert ds.provenance.n_dropped == 1
    assert ds.provenance.n_kept == 4
    assert len(ds) == 4
    assert ds.label_space == {"Night Cream", "Face Wash", "Body Lotion"}

    ds2 = refactor_to_longtail(tree, samples, DepthPolicy.fixed_depth(2))
    assert {label for _, label in ds2.samples} == {"Skin Care", "Hair Care"}


def test_refactor_unknown_path():
    samples = _samples(BEAUTY_ROWS)
    tree = parse_taxonomy(samples)
    alien = RawSample.from_parts("x", ("Garden", "Hoses"))
    with pytest.raises(UnknownPath):
        refactor_to_longtail(tree, samples + [alien], DepthPolicy.max_depth())


def test_refactor_all_dropped():
    samples = _samples(BEAUTY_ROWS)
    tree = parse_taxonomy(samples)
    with pytest.raises(EmptyResult):
        refactor_to_longtail(tree, samples, DepthPolicy.fixed_depth(5))


def test_depth_policy_parse():
    assert DepthPolicy.parse("max").mode == "max"
    assert DepthPolicy.parse("fixed:3") == DepthPolicy.fixed_depth(3)
    assert DepthPolicy.parse("2") == DepthPolicy.fixed_depth(2)
    assert DepthPolicy.fixed_depth(3).describe() == "fixed:3"
    with pytest.raises(ValueError):
        DepthPolicy.parse("sometimes")
    with pytest.raises(ValueError):
        DepthPolicy.fixed_depth(0)


def test_class_distribution_orders_and_ties():
    samples = _samples(BEAUTY_ROWS)
    tree = parse_taxonomy(samples)
    ds = refactor_to_longtail(tree, samples, DepthPolicy.max_depth())
    dist = class_distribution(ds, m=2)
    assert dist.total == 5
    assert dist.head[0] == ("Night Cream", 2)
    # Three labels tie at count 1; lexicographic order decides.
    assert dist.head[1] == ("Body Lotion", 1)
    assert dist.tail[0] == ("Body Lotion", 1)
    assert dist.imbalance_ratio == 2.0
    with pytest.raises(ValueError):
        class_distribution(ds, m=0)
    with pytest.raises(ValueError):
        class_distribution(ds, m=99)


def test_subsample_deterministic():
    samples = _samples(BEAUTY_ROWS) * 20
    a = subsample(samples, 17, seed=7)
    b = subsample(samples, 17, seed=7)
    assert a == b
    assert len(a) == 17
    assert all(x in samples for x in a)
    assert subsample(samples, len(samples) + 5, seed=1) == samples


_path = st.lists(
    st.sampled_from(["A", "B", "C", "D", "E", "F"]), min_size=1, max_size=5
).map(tuple)


@given(st.lists(_path, min_size=1, max_size=40))
def test_node_count_matches_distinct_prefixes(paths):
    samples = [RawSample(text=f"t{i}", label_path=p) for i, p in enumerate(paths)]
    tree = parse_taxonomy(samples)
    prefixes = {p[:i] for p in paths for i in range(1, len(p) + 1)}
    assert tree.node_count() == len(prefixes)
    assert tree.max_depth() == max(len(p) for p in paths)
    for p in paths:
        assert tree.has_path(p)


@given(st.lists(_path, min_size=1, max_size=40))
def test_refactor_max_conserves_counts(paths):
    samples = [RawSample(text=f"t{i}", label_path=p) for i, p in enumerate(paths)]
    tree = parse_taxonomy(samples)
    ds = refactor_to_longtail(tree, samples, DepthPolicy.max_depth())
    assert ds.provenance.n_kept + ds.provenance.n_dropped == ds.provenance.n_input
    assert ds.provenance.n_dropped == 0
    assert len(ds) == len(samples)
    for sample, (text, label) in zip(samples, ds.samples):
        assert text == sample.text
        assert label == sample.label_path[-1]


@given(st.lists(_path, min_size=1, max_size=40), st.integers(min_value=1, max_value=5))
def test_refactor_fixed_depth_invariants(paths, depth):
    samples = [RawSample(text=f"t{i}", label_path=p) for i, p in enumerate(paths)]
    tree = parse_taxonomy(samples)
    survivors = [s for s in samples if len(s.label_path) >= depth]
    policy = DepthPolicy.fixed_depth(depth)
    if not survivors:
        with pytest.raises(EmptyResult):
            refactor_to_longtail(tree, samples, policy)
        return
    ds = refactor_to_longtail(tree, samples, policy)
    assert ds.provenance.n_kept == len(survivors)
    assert ds.provenance.n_dropped == len(samples) - len(survivors)
    for sample, (_, label) in zip(survivors, ds.samples):
        assert label == sample.label_path[depth - 1]


def test_subsample_preserves_source_order():
    samples = _samples(BEAUTY_ROWS) * 10
    picked = subsample(samples, 30, seed=123)
    # Each picked object is the original at a strictly increasing index.
    idx = 0
    for s in picked:
        while idx < len(samples) and samples[idx] is not s:
            idx += 1
        assert idx < len(samples)
        idx += 1
