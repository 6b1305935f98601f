"""Walkthrough: the two rule-based short-form generators.

Run:  python3 demos/01_candidate_generation.py
"""

from abbrank import contractions_of, devowel, extract_abbreviations, normalize_word

print("=== Contractions of a single word ===")
for word in ["doctor", "patient", "housekeeper"]:
    norm = normalize_word(word)
    keys = sorted(contractions_of(norm), key=lambda k: (len(k), k))
    print(f"\n{word!r}  (devoweled: {devowel(norm)!r}, {len(keys)} keys)")
    print("  shortest:", ", ".join(keys[:8]))
    print("  longest :", keys[-1])

print("\n=== Every key is an ordered subsequence of the devoweled word ===")
word = "patient"
skeleton = devowel(word)
for key in sorted(contractions_of(word)):
    iterator = iter(skeleton)
    assert all(c in iterator for c in key)
print(f"verified for all {len(contractions_of(word))} keys of {word!r}")

print("\n=== Abbreviations from capitalized phrases ===")
sentences = [
    "He flew to the United States of America last week.",
    "The case was brought to the World Court.",
    "Yesterday the Association for Computational Linguistics met in town.",
    "When I got to the house, Mrs. Everett was waiting.",
    "the quick brown fox has nothing capitalized",
]
for sentence in sentences:
    found = extract_abbreviations(sentence)
    print(f"\n{sentence}")
    if not found:
        print("  (no abbreviation candidates)")
    for item in found:
        print(f"  {item.key!r:8} <- {item.expansion!r}  span={item.span}")
