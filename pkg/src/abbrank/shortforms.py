"""Rule-based short-form candidate generation.

Two generators live here:

* ``contractions_of`` enumerates every contraction key a single word can
  produce: strip to letters, drop vowels, hold the first surviving
  character fixed, and take every ordered subsequence of the rest.
* ``extract_abbreviations`` scans a sentence for capitalized word runs
  (optionally joined across connector words) and emits (initials, phrase)
  pairs.

Both are pure functions; they feed the lexicon builders and the dataset
synthesizer.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

VOWELS = frozenset("aeiou")

# Lowercase words that may join two capitalized runs into one phrase and
# never contribute an initial, even when capitalized themselves.
CONNECTOR_WORDS = frozenset({"of", "for", "and", "in", "on", "at", "to", "the", "by"})

# Devoweled forms longer than this are truncated before subsequence
# enumeration, bounding the key set at 2**15 entries per word.
MAX_DEVOWELED_LENGTH = 16

_NON_LETTER_RE = re.compile(r"[^a-zA-Z]+")
_ACRONYM_RE = re.compile(r"^(?:[A-Za-z]\.)+$")
_TOKEN_RE = re.compile(r"\S+")


def normalize_word(raw: str) -> str:
    """Strip a token to lowercase letters a-z; may return an empty string."""
    return _NON_LETTER_RE.sub("", raw).lower()


def devowel(word: str) -> str:
    """Remove the vowels a, e, i, o, u (consonant-only skeleton)."""
    return "".join(c for c in word if c not in VOWELS)


def contractions_of(word: str) -> set[str]:
    """All contraction keys of a normalized word.

    The word is devoweled, the first remaining character is held fixed,
    and that character is prefixed to every ordered subsequence of the
    remaining characters (including the empty one).  Returns an empty set
    when devoweling leaves nothing.
    """
    skeleton = devowel(word)[:MAX_DEVOWELED_LENGTH]
    if not skeleton:
        return set()
    head, tail = skeleton[0], skeleton[1:]
    keys = set()
    for r in range(len(tail) + 1):
        for combo in itertools.combinations(tail, r):
            keys.add(head + "".join(combo))
    return keys


@dataclass(frozen=True)
class ExtractedAbbreviation:
    """A capitalized phrase and the initials key it abbreviates to."""

    key: str
    expansion: str
    span: tuple[int, int]


# Leading characters safe to trim before classification.  Deliberately
# excludes "[" so marker tokens like "[ABB]" never classify as words.
_LEADING_TRIM = "\"'“‘("


def _strip_to_core(token: str) -> tuple[str, int, int]:
    """Trim punctuation off a token, keeping internal/trailing periods.

    Returns (core, start_offset, end_offset) relative to the token.
    """
    start = 0
    while start < len(token) and token[start] in _LEADING_TRIM:
        start += 1
    end = len(token)
    while end > start and not (token[end - 1].isalpha() or token[end - 1] == "."):
        end -= 1
    return token[start:end], start, end


def _is_capitalized(core: str) -> bool:
    """First character uppercase letter, rest letters or periods."""
    if not core or not (core[0].isalpha() and core[0].isupper()):
        return False
    return all(c.isalpha() or c == "." for c in core[1:])


def extract_abbreviations(sentence: str) -> list[ExtractedAbbreviation]:
    """Find abbreviation/expansion pairs in a sentence, left to right.

    Maximal runs of capitalized words are located; runs separated only by
    connector words are joined into one phrase.  A phrase qualifies when
    at least two of its words contribute initials.  Acronym-style tokens
    ("U.S.") count as one word contributing their first letter.
    """
    words = []
    for match in _TOKEN_RE.finditer(sentence):
        token = match.group()
        core, rel_start, rel_end = _strip_to_core(token)
        words.append(
            {
                "core": core,
                "start": match.start() + rel_start,
                "end": match.start() + rel_end,
                "capitalized": _is_capitalized(core),
                "connector": normalize_word(core) in CONNECTOR_WORDS,
            }
        )

    # Group words into sequences: capitalized runs, joined when the gap
    # between two runs consists solely of connector words.
    sequences: list[list[dict]] = []
    current: list[dict] = []
    pending_connectors: list[dict] = []
    for word in words:
        if word["capitalized"]:
            if current and pending_connectors:
                current.extend(pending_connectors)
            current.append(word)
            pending_connectors = []
        elif word["connector"] and current:
            pending_connectors.append(word)
        else:
            if current:
                sequences.append(current)
            current = []
            pending_connectors = []
    if current:
        sequences.append(current)

    results = []
    for seq in sequences:
        # Connector words carry no initial; at the edges of a sequence they
        # are not part of the phrase either (e.g. a sentence-initial "The").
        while seq and seq[0]["connector"]:
            seq = seq[1:]
        while seq and seq[-1]["connector"]:
            seq = seq[:-1]
        initials = [
            w["core"][0].lower()
            for w in seq
            if w["capitalized"] and not w["connector"]
        ]
        if len(initials) < 2:
            continue
        start = seq[0]["start"]
        end = seq[-1]["end"]
        last_core = seq[-1]["core"]
        if not _ACRONYM_RE.match(last_core):
            while end > start and sentence[end - 1] == ".":
                end -= 1
        results.append(
            ExtractedAbbreviation(
                key="".join(initials),
                expansion=sentence[start:end],
                span=(start, end),
            )
        )
    return results
