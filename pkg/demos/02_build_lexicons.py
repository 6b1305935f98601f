"""Walkthrough: inverse lookup tables from a corpus.

Builds the contraction and abbreviation lexicons from a toy corpus,
queries them, and round-trips the on-disk format.

Run:  python3 demos/02_build_lexicons.py
"""

import tempfile
from pathlib import Path

from abbrank import Lexicon, build_abbreviation_lexicon, build_contraction_lexicon

CORPUS = [
    "the doctor saw the patient at the trial",
    "the doctor saw the patient at the table",
    "the patient signed the patent",
    "a potent patent from a potential partner",
    "the World Court heard the United States of America",
    "the United States of America replied to the World Court",
    "the World Court adjourned",
]

cont = build_contraction_lexicon(CORPUS, corpus_id="demo-corpus")
abb = build_abbreviation_lexicon(CORPUS, corpus_id="demo-corpus")

print("=== Contraction lexicon ===")
stats = cont.stats()
print(f"keys={stats.key_count}  expansions={stats.expansion_count}  "
      f"max options per key={stats.max_options_per_key}")

for key in ["ptnt", "pt", "dctr", "tbl"]:
    options = cont.lookup_with_counts(key, 5)
    print(f"  {key!r:7} -> {options}")

print("\n=== Abbreviation lexicon ===")
for key in ["wc", "usa"]:
    options = abb.lookup_with_counts(key, 5)
    print(f"  {key!r:6} -> {options}")

print("\n=== Persistence: diffable TSV body + verified binary footer ===")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "cont.lex"
    cont.save(path)
    raw = path.read_bytes()
    print("first lines of the file:")
    for line in raw.decode("utf-8", errors="replace").splitlines()[:4]:
        print("   ", line)
    loaded = Lexicon.load(path)
    print("round-trip equal:", loaded == cont)
