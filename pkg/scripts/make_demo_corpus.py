"""Generate a seeded synthetic review corpus with a long-tail taxonomy.

Writes raw JSONL records ({"text", "label_path"}) suitable for the
refactor command. Leaf vocabularies overlap with the label names so the
keyword mock scorer has real signal to rank on.
"""

import argparse
import json
import random
import sys
from pathlib import Path

# (label path, words that evoke the leaf). Branch depths differ on
# purpose so max-depth and fixed-depth refactoring produce different
# datasets from the same file.
LEAVES = [
    (("beauty", "skin care", "face", "night cream"),
     ("night", "cream", "hydrating", "overnight", "glow")),
    (("beauty", "skin care", "face", "face wash"),
     ("foam", "wash", "rinse", "pores", "cleanse")),
    (("beauty", "skin care", "body", "body lotion"),
     ("lotion", "smooth", "daily", "skin", "soft")),
    (("beauty", "hair care", "hair oil"),
     ("oil", "shine", "scalp", "strands", "argan")),
    (("beauty", "hair care", "shampoo"),
     ("lather", "shampoo", "clean", "volume", "gentle")),
    (("beauty", "makeup", "nail polish"),
     ("polish", "glitter", "coat", "nails", "chip")),
    (("beauty", "makeup", "lipstick"),
     ("matte", "lipstick", "shade", "bold", "wear")),
    (("beauty", "fragrance", "perfume"),
     ("scent", "perfume", "floral", "notes", "lasting")),
]

# Head-heavy class weights give the corpus its long tail.
WEIGHTS = [30, 22, 15, 10, 8, 6, 5, 4]

FILLERS = [
    "really", "love", "bought", "again", "price",
    "arrived", "week", "gift", "small", "works",
]

# Invented brand per leaf. Brands never overlap label names, so keyword
# entailment ignores them, while a rule-table generator can key on them.
BRANDS = {
    "night cream": "lunaria",
    "face wash": "puraderm",
    "body lotion": "silkessa",
    "hair oil": "argessa",
    "shampoo": "sudsara",
    "nail polish": "lacquora",
    "lipstick": "rougelle",
    "perfume": "aromessa",
}

_TWO_WORD = [path[-1] for path, _ in LEAVES if " " in path[-1]]


def brand_rules() -> list[tuple[str, list[str]]]:
    """Trigger table mapping each brand word to its leaf label."""
    return [(brand, [label]) for label, brand in BRANDS.items()]


def build_corpus(rng: random.Random, n_samples: int) -> list[dict]:
    """Seeded corpus where word overlap alone mislabels a known slice.

    35% of samples are decoys: no own vocabulary, one name word from a
    different leaf, so overlap ranks the wrong label first. 70% carry
    their brand word, which a brand-triggered generator can resolve.
    """
    rows = []
    for _ in range(n_samples):
        path, vocab = rng.choices(LEAVES, weights=WEIGHTS, k=1)[0]
        label = path[-1]
        words = []
        if rng.random() < 0.35:
            other = rng.choice([l for l in _TWO_WORD if l != label])
            words.append(rng.choice(other.split()))
        else:
            words += rng.sample(vocab, rng.randint(2, 4))
        if rng.random() < 0.7:
            words.append(BRANDS[label])
        words += rng.choices(FILLERS, k=rng.randint(2, 3))
        rng.shuffle(words)
        rows.append({"text": " ".join(words), "label_path": list(path)})
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output", default="demo_out/raw.jsonl", help="destination JSONL")
    parser.add_argument("--samples", type=int, default=600)
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args(argv)

    rng = random.Random(args.seed)
    rows = build_corpus(rng, args.samples)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")

    counts: dict[str, int] = {}
    for row in rows:
        leaf = row["label_path"][-1]
        counts[leaf] = counts.get(leaf, 0) + 1
    print(f"wrote {len(rows)} records to {out}")
    for leaf, n in sorted(counts.items(), key=lambda kv: -kv[1]):
        print(f"  {leaf:<12} {n}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
