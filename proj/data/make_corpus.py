#!/usr/bin/env python3
"""Writes corpus.txt and prompts.txt next to this script.

Word classes with nonsense vocabulary; each word carries its own jittered
class-transition row, and words inside a class are Zipf-weighted. Output is
fully determined by the constants below.
"""
import pathlib
import random

SEED = 1
DOCS = 4000
ZIPF = 1.0
JITTER = 0.5
WORDS_PER_CLASS = 20
SHARPEN = 2.0
MIN_WORDS, MAX_WORDS = 8, 60
PROMPTS = 200

CLASSES = ["DET", "ADJ", "NOUN", "VERB", "PREP", "ADV"]
TRANSITIONS = {
    "DET": {"ADJ": 0.75, "NOUN": 0.25},
    "ADJ": {"NOUN": 0.85, "ADJ": 0.15},
    "NOUN": {"VERB": 0.8, "PREP": 0.12, "END": 0.08},
    "VERB": {"DET": 0.8, "ADV": 0.2},
    "PREP": {"DET": 0.9, "ADJ": 0.1},
    "ADV": {"DET": 0.7, "PREP": 0.2, "END": 0.1},
}
SYLLABLES = "ka lo mi ne ru ta vo si pe du ba ge".split()


def main():
    rng = random.Random(SEED)
    seen, words = set(), {}
    for c in CLASSES:
        ws = []
        while len(ws) < WORDS_PER_CLASS:
            w = "".join(rng.choice(SYLLABLES) for _ in range(rng.choice([2, 3])))
            if w not in seen:
                seen.add(w)
                ws.append(w)
        words[c] = ws
    trans = {c: {k: v ** SHARPEN for k, v in row.items()} for c, row in TRANSITIONS.items()}
    emit = {c: [1.0 / (i + 1) ** ZIPF for i in range(len(ws))] for c, ws in words.items()}
    row = {}
    for c, ws in words.items():
        for w in ws:
            row[w] = {k: v * rng.uniform(1 - JITTER, 1 + JITTER) for k, v in trans[c].items()}

    docs = []
    for _ in range(DOCS):
        w = rng.choices(words["DET"], weights=emit["DET"])[0]
        seq = [w]
        while True:
            nxt = rng.choices(list(row[w]), weights=list(row[w].values()))[0]
            if nxt == "END":
                if len(seq) < MIN_WORDS:
                    continue
                break
            w = rng.choices(words[nxt], weights=emit[nxt])[0]
            seq.append(w)
            if len(seq) > MAX_WORDS:
                break
        docs.append(" ".join(seq) + " .")

    here = pathlib.Path(__file__).resolve().parent
    (here / "corpus.txt").write_text("\n\n".join(docs) + "\n")
    (here / "prompts.txt").write_text("\n".join(" ".join(d.split()[:2]) for d in docs[:PROMPTS]) + "\n")


if __name__ == "__main__":
    main()
