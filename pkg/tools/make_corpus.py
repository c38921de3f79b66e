"""Regenerate src/ptqlab/data/corpus.txt.

The corpus is synthetic English-like prose produced from a small
hand-written grammar, so it carries no third-party copyright. Output is
deterministic for a given seed.

    python tools/make_corpus.py [--bytes 1000000] [--seed 0]
"""

import argparse
import random
from pathlib import Path

NAMES = ["Ada", "Basil", "Clara", "Dmitri", "Elena", "Felix", "Greta", "Hugo", "Iris", "Jonas",
         "Kira", "Leo", "Mira", "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Silas", "Tova"]
ROLES = ["the miller", "the old sailor", "a young clerk", "the baker", "the ferryman", "a quiet student",
         "the mayor", "the blacksmith", "a travelling doctor", "the innkeeper", "the lighthouse keeper",
         "a weaver", "the schoolteacher", "the gardener", "a stranger from the north"]
ANIMALS = ["the grey cat", "a stray dog", "the brown horse", "two crows", "the old goat", "a fox",
           "the geese", "a small owl"]
PLACES = ["the harbour", "the market square", "the mill by the river", "the north road", "the chapel",
          "the inn", "the orchard", "the library", "the station", "the bridge", "the hill above the town",
          "the workshop", "the garden wall", "the edge of the forest"]
TIMES = ["at dawn", "before noon", "in the evening", "after the rain", "on the first day of spring",
         "late at night", "during the fair", "when the bells rang", "in the winter", "the next morning"]
VERBS_T = ["carried", "found", "mended", "painted", "sold", "counted", "opened", "lost", "watched",
           "borrowed", "cleaned", "measured", "wrapped", "hid", "returned"]
VERBS_I = ["waited", "laughed", "walked home", "sang quietly", "slept", "worked", "hesitated",
           "listened", "wandered", "kept silent"]
THINGS = ["a letter", "the lantern", "a basket of apples", "the old map", "a wooden box", "the ledger",
          "a blue coat", "the keys", "a loaf of bread", "the broken clock", "a bundle of rope",
          "the window", "a small boat", "the gate", "three candles", "a jar of honey"]
ADJS = ["cold", "bright", "narrow", "heavy", "quiet", "crowded", "wet", "warm", "empty", "famous",
        "crooked", "green", "ancient", "tired", "careful"]
ADVS = ["slowly", "carefully", "at once", "without a word", "again", "in secret", "with great care",
        "as usual", "for a long time", "twice"]
WEATHER = ["The wind came down from the hills", "Rain fell on the roofs", "The sky was clear and pale",
           "Fog lay over the water", "Snow covered the road", "The sun was low and red"]
SAYINGS = ["Nothing is lost that is written down.", "A late boat is better than none.",
           "The river keeps its own accounts.", "Measure twice and cut once.",
           "Every lantern needs oil.", "Good bread needs slow fire."]


def person(r):
    return r.choice(NAMES) if r.random() < 0.6 else r.choice(ROLES)


def cap(s):
    return s[0].upper() + s[1:]


def sentence(r):
    k = r.randrange(9)
    if k == 0:
        return f"{cap(person(r))} {r.choice(VERBS_T)} {r.choice(THINGS)} {r.choice(TIMES)}."
    if k == 1:
        return f"{cap(r.choice(TIMES))}, {person(r)} {r.choice(VERBS_I)} near {r.choice(PLACES)}."
    if k == 2:
        return f"{r.choice(WEATHER)}, and {person(r)} {r.choice(VERBS_I)} {r.choice(ADVS)}."
    if k == 3:
        n = r.randint(2, 99)
        return f"{cap(person(r))} counted {n} coins and paid {r.randint(1, n)} for {r.choice(THINGS)}."
    if k == 4:
        return f"The {r.choice(ADJS)} road to {r.choice(PLACES)} was {r.choice(ADJS)} {r.choice(TIMES)}."
    if k == 5:
        return f"\"Have you seen {r.choice(THINGS)}?\" asked {person(r)}. \"It was at {r.choice(PLACES)}.\""
    if k == 6:
        return f"{cap(r.choice(ANIMALS))} followed {person(r)} to {r.choice(PLACES)}."
    if k == 7:
        return f"{cap(person(r))} said to {person(r)}: {r.choice(SAYINGS)}"
    return (f"{cap(person(r))} {r.choice(VERBS_T)} {r.choice(THINGS)}, then {r.choice(VERBS_I)} "
            f"{r.choice(ADVS)} because {r.choice(PLACES)} was {r.choice(ADJS)}.")


def generate(n_bytes, seed=0):
    r = random.Random(seed)
    out = []
    size = 0
    while size < n_bytes:
        para = " ".join(sentence(r) for _ in range(r.randint(3, 7))) + "\n\n"
        out.append(para)
        size += len(para)
    return "".join(out)[:n_bytes]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bytes", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parents[1] / "src" / "ptqlab" / "data" / "corpus.txt")
    args = ap.parse_args()
    args.out.write_text(generate(args.bytes, args.seed), encoding="ascii")
    print(f"wrote {args.out} ({args.bytes} bytes)")


if __name__ == "__main__":
    main()
