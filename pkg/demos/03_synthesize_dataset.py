"""Walkthrough: corrupting clean text into ranking data.

Selected words become [ABB] slots under a random contraction key;
capitalized phrases become [ABB] slots under their initials.  Every slot
carries the gold expansion first plus lexicon-ordered distractors.

Run:  python3 demos/03_synthesize_dataset.py
"""

import tempfile
from pathlib import Path

import numpy as np

from abbrank import (
    Vocabulary,
    build_abbreviation_lexicon,
    build_contraction_lexicon,
    export_split,
    import_split,
    make_mixed_example,
    synthesize_split,
)

CORPUS = [
    "when the doctor got to the house the housekeeper told me everything",
    "the doctor saw the patient at the trial",
    "the patient was brought to the World Court",
    "the World Court ruled for the United States of America",
    "a potent patent from a potential partner",
    "the housekeeper spoke to the doctor about the patient",
]

vocab = Vocabulary.build(CORPUS, size=256)
cont = build_contraction_lexicon(CORPUS, corpus_id="demo")
abb = build_abbreviation_lexicon(CORPUS, corpus_id="demo")

print("=== One corrupted sentence (contraction pass, then abbreviation pass) ===")
sentence = "the patient was brought to the World Court"
example = make_mixed_example(sentence, cont, abb, vocab, rate=0.5,
                             rng=np.random.default_rng(4))
print("original :", sentence)
print("corrupted:", example.text)
for slot in example.slots:
    print(f"  slot at token {slot.pos}: gold={slot.options[0]!r}, "
          f"{len(slot.options)} options: {slot.options[:5]}...")

print("\n=== A reproducible split ===")
split = synthesize_split(CORPUS, "demo-train", vocab, cont_lexicon=cont,
                         abb_lexicon=abb, rate=0.3, seed=11)
print(f"{len(split)} sentences with slots, {split.slot_count()} slots total")

again = synthesize_split(CORPUS, "demo-train", vocab, cont_lexicon=cont,
                         abb_lexicon=abb, rate=0.3, seed=11)
print("same seed reproduces byte-identical data:", split == again)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.jsonl"
    export_split(split, path)
    print("\nfirst JSON line:")
    print(" ", path.read_text().splitlines()[0][:120], "...")
    loaded = import_split(path, name="demo-train")
    print("import round-trip equal:", loaded.sentences == split.sentences)
