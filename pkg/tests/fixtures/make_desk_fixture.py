"""Regenerate the desk-scale fixture dataset (deterministic).

Run from the repository root:

    python tests/fixtures/make_desk_fixture.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

ASPECTS = [
    "food", "service", "pizza", "sushi", "menu", "waiter", "wine list",
    "dessert", "coffee", "decor", "atmosphere", "portions", "staff",
    "delivery", "battery life", "screen", "keyboard", "price", "touchpad",
    "speakers",
]

# (template, polarity, implicit)
TEMPLATES = [
    ("The {a} was absolutely wonderful.", "positive", False),
    ("I loved the {a} here.", "positive", False),
    ("Great {a} and a friendly vibe all around.", "positive", False),
    ("The {a} turned out to be excellent.", "positive", False),
    ("I will definitely come back just for the {a}.", "positive", True),
    ("My friends keep asking me to take them back for the {a}.", "positive", True),
    ("We ended up ordering the {a} a second and then a third time.", "positive", True),
    ("The {a} was terrible from start to finish.", "negative", False),
    ("I hated the {a}.", "negative", False),
    ("Awful {a}, truly disappointing.", "negative", False),
    ("The {a} felt flimsy and poorly made.", "negative", False),
    ("I will not be returning after what they call {a}.", "negative", True),
    ("We waited an hour before anyone even mentioned the {a}.", "negative", True),
    ("My dog would have walked away from that {a}.", "negative", True),
    ("The {a} was okay, nothing special.", "neutral", False),
    ("The {a} seemed average at best.", "neutral", False),
    ("Standard {a}, neither here nor there.", "neutral", False),
    ("The {a} is what you would expect at this price range.", "neutral", True),
    ("The {a} matches the photos on the website.", "neutral", True),
    ("They swapped the {a} last month and nobody noticed.", "neutral", True),
]

SPLIT_SIZES = {"train": 220, "validation": 30, "test": 100}


def main() -> None:
    rng = random.Random(20240917)
    combos = [(t, p, imp, a) for (t, p, imp) in TEMPLATES for a in ASPECTS]
    rng.shuffle(combos)
    assert len(combos) >= sum(SPLIT_SIZES.values())

    out = Path(__file__).parent / "desk" / "dataset.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    i = 0
    n = 0
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for split, size in SPLIT_SIZES.items():
            for _ in range(size):
                template, polarity, implicit, aspect = combos[i]
                i += 1
                n += 1
                row = {
                    "id": f"fx-{n:04d}",
                    "sentence": template.format(a=aspect),
                    "aspect_term": aspect,
                    "polarity": polarity,
                    "implicit": implicit,
                    "split": split,
                }
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"wrote {n} examples to {out}")


if __name__ == "__main__":
    main()
