#!/usr/bin/env python3
"""Generate the bundled mini spam corpus (synthetic SMS/comment-style text).

Deterministic for a given --seed. Writes unlabeled.jsonl (no labels),
dev.jsonl and test.jsonl (labels: 0 = ham, 1 = spam) into --out.
"""

import argparse
import json
import random
from pathlib import Path

SPAM_WORDS = [
    "free", "winner", "prize", "cash", "click", "offer", "urgent", "claim",
    "credit", "loan", "discount", "guaranteed", "bonus", "casino", "lottery",
    "subscribe", "deal", "money", "reward", "exclusive",
]
HAM_WORDS = [
    "meeting", "lunch", "project", "tomorrow", "thanks", "report", "family",
    "dinner", "weekend", "schedule", "notes", "homework", "birthday", "movie",
    "song", "video", "class", "coffee", "mom", "game",
]
FILLER = [
    "the", "a", "you", "we", "this", "is", "for", "to", "and", "of", "please",
    "today", "our", "your", "my", "just", "it", "in", "on", "at", "with", "get",
    "now", "time", "new", "see", "will", "can", "all", "so", "here", "there",
    "good", "great", "really", "love", "want", "know", "call", "message",
]
PEOPLE = ["alice", "bob", "carol", "david", "emma", "john", "maria", "paul", "sarah", "thomas"]
PLACES = ["london", "paris", "new york", "tokyo", "berlin", "chicago", "texas"]
NUMBERS = ["one", "two", "three", "five", "ten", "hundred", "thousand", "million"]

SPAM_TEMPLATES = [
    "{s} {f} {f} {s}!",
    "{f} {s} {f} {n} {s} {f}.",
    "{s} {s} {f} {f} now at www {w} com.",
    "{f} {f} {s} {f} {p}.",
    "{s}! {f} {f} {s} {f}.",
]
HAM_TEMPLATES = [
    "{h} {f} {f} {h}.",
    "{f} {h} {f} {f} {x} {f}.",
    "{f} {f} {h} with {x} {f} {h}?",
    "{h} {f} {f} in {p}.",
    "{x}, {f} {h} {f} {f}.",
]


def sentence(rng, label, noise):
    own, other = (SPAM_WORDS, HAM_WORDS) if label == 1 else (HAM_WORDS, SPAM_WORDS)
    template = rng.choice(SPAM_TEMPLATES if label == 1 else HAM_TEMPLATES)

    def pick_topic():
        return rng.choice(other if rng.random() < noise else own)

    out = template
    while "{s}" in out or "{h}" in out:
        out = out.replace("{s}", pick_topic(), 1).replace("{h}", pick_topic(), 1)
    while "{f}" in out:
        out = out.replace("{f}", rng.choice(FILLER), 1)
    out = out.replace("{n}", rng.choice(NUMBERS))
    out = out.replace("{w}", rng.choice(["win", "prizes", "deals", "bonus"]))
    out = out.replace("{p}", rng.choice(PLACES))
    out = out.replace("{x}", rng.choice(PEOPLE))
    return out[0].upper() + out[1:]


def document(rng, label):
    n = rng.choice([1, 1, 2, 2, 3])
    noise = rng.choice([0.05, 0.15, 0.35])
    return " ".join(sentence(rng, label, noise) for _ in range(n))


def split(rng, prefix, n, spam_rate, flip):
    rows = []
    for i in range(n):
        label = 1 if rng.random() < spam_rate else 0
        text = document(rng, label)
        observed = 1 - label if rng.random() < flip else label
        rows.append({"uid": f"{prefix}-{i:04d}", "text": text, "label": observed})
    return rows


def write(path, rows, keep_labels):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            rec = dict(r) if keep_labels else {"uid": r["uid"], "text": r["text"]}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--unlabeled", type=int, default=1500)
    ap.add_argument("--dev", type=int, default=150)
    ap.add_argument("--test", type=int, default=400)
    ap.add_argument("--spam-rate", type=float, default=0.45)
    ap.add_argument("--flip", type=float, default=0.03)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write(args.out / "unlabeled.jsonl", split(rng, "u", args.unlabeled, args.spam_rate, args.flip), False)
    write(args.out / "dev.jsonl", split(rng, "d", args.dev, args.spam_rate, args.flip), True)
    write(args.out / "test.jsonl", split(rng, "t", args.test, args.spam_rate, args.flip), True)


if __name__ == "__main__":
    main()
