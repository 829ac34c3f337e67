#!/usr/bin/env python3
# Copyright 2026 The crfind Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the bundled conjunction corpus.

A token is ENT iff it and the next token are both capitalized or both
lowercase; everything else (including the last token) is O. The
capitalization of either token alone says nothing about the label, so only
the conjunction of the two tests separates the classes.
"""

import argparse
import random
from pathlib import Path

NAMES = """Alder Birch Cedar Dalton Ember Fenwick Garnet Holloway Iverson Jasper
Kestrel Lowell Marlow Norwood Oakley Prescott Quill Redmond Sutton Thorne""".split()
LOWER = """apple river stone cloud market window garden silver winter copper
harbor meadow lantern pepper saddle timber velvet willow anchor basket""".split()


def draw(rng):
    return rng.choice(NAMES if rng.random() < 0.5 else LOWER)


def label(tok, nxt):
    if nxt is None:
        return "O"
    return "ENT" if tok[0].isupper() == nxt[0].isupper() else "O"


def sentences(rng, count):
    for _ in range(count):
        toks = [draw(rng) for _ in range(rng.randint(8, 14))]
        yield [(t, label(t, toks[i + 1] if i + 1 < len(toks) else None)) for i, t in enumerate(toks)]


def write(path, sents):
    with open(path, "w") as f:
        for s in sents:
            for tok, lab in s:
                f.write(f"{tok} {lab}\n")
            f.write("\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "synthetic"))
    ap.add_argument("--seed", type=int, default=20030807)
    ap.add_argument("--train", type=int, default=400)
    ap.add_argument("--test", type=int, default=200)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write(out / "train.txt", list(sentences(rng, args.train)))
    write(out / "test.txt", list(sentences(rng, args.test)))


if __name__ == "__main__":
    main()
