"""Synthesize ranking data from clean text.

Clean sentences are corrupted by replacing selected words (contraction
pass) or capitalized phrases (abbreviation pass) with the ``[ABB]``
token.  Every slot carries an option list with the gold expansion first,
followed by up to 49 distractors drawn from the matching lexicon in
stored (frequency) order.  Mixed sentences compose the two passes,
contraction first.

Splits serialize to JSON lines, one sentence per line:
``{"text": str, "tokens": [int], "slots": [{"pos": int, "options":
[str], "gold": int}], "seed": int}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .encoder import ABB, ABB_TOKEN, Vocabulary, tokenize
from .lexicon import Lexicon
from .shortforms import (
    MAX_DEVOWELED_LENGTH,
    contractions_of,
    devowel,
    extract_abbreviations,
    normalize_word,
)

DEFAULT_MAX_OPTIONS = 50

# Contraction eligibility: normalized length and devoweled length floors.
MIN_WORD_LENGTH = 3
MIN_SKELETON_LENGTH = 2


class DatasetSchemaError(ValueError):
    """A dataset line violates the JSON-lines schema."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class Slot:
    pos: int
    options: list[str]
    gold: int | None = 0


@dataclass
class AbbSentence:
    text: str
    tokens: list[int]
    slots: list[Slot]


@dataclass
class DatasetSplit:
    name: str
    sentences: list[AbbSentence]
    seed: int = 0
    corpus_id: str = ""

    def slot_count(self) -> int:
        return sum(len(s.slots) for s in self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)


def eligible_for_contraction(word: str) -> bool:
    """Alphabetic, length >= 3, devoweled length >= 2 (normalized form)."""
    norm = normalize_word(word)
    return len(norm) >= MIN_WORD_LENGTH and len(devowel(norm)) >= MIN_SKELETON_LENGTH


def _contraction_options(word: str, lexicon: Lexicon, rng,
                         max_options: int) -> list[str] | None:
    """Pick a random non-identity key for the word; return gold-first options."""
    norm = normalize_word(word)
    identity = devowel(norm)[:MAX_DEVOWELED_LENGTH]
    keys = sorted(contractions_of(norm) - {identity})
    if not keys:
        return None
    key = keys[int(rng.integers(len(keys)))]
    distractors = [
        e for e in lexicon.lookup(key, max_options) if e != norm
    ][: max_options - 1]
    return [norm] + distractors


def _abbreviation_markers(text: str, lexicon: Lexicon,
                          max_options: int) -> list[tuple[tuple[int, int], list[str]]]:
    markers = []
    for found in extract_abbreviations(text):
        distractors = [
            e for e in lexicon.lookup(found.key, max_options) if e != found.expansion
        ][: max_options - 1]
        markers.append((found.span, [found.expansion] + distractors))
    return markers


def _corrupt(sentence: str, *, cont_lexicon: Lexicon | None, abb_lexicon: Lexicon | None,
             vocab: Vocabulary, rate: float, rng,
             max_options: int) -> AbbSentence:
    """Shared machinery: contraction pass over words, then abbreviation
    pass over the partially corrupted text, then tokenization."""
    if ABB_TOKEN in sentence:
        raise ValueError("source sentence already contains [ABB]")

    words = sentence.split()
    word_options: dict[int, list[str]] = {}
    if cont_lexicon is not None:
        if not 0 < rate < 1:
            raise ValueError("selection rate must lie strictly between 0 and 1")
        for i, word in enumerate(words):
            if not eligible_for_contraction(word):
                continue
            if rng.random() >= rate:
                continue
            options = _contraction_options(word, cont_lexicon, rng, max_options)
            if options:
                word_options[i] = options

    pieces = [ABB_TOKEN if i in word_options else w for i, w in enumerate(words)]
    text1 = " ".join(pieces)

    # Character offsets of contraction markers inside text1.
    cont_markers: list[tuple[int, list[str]]] = []
    offset = 0
    for i, piece in enumerate(pieces):
        if i in word_options:
            cont_markers.append((offset, word_options[i]))
        offset += len(piece) + 1

    abb_markers: list[tuple[tuple[int, int], list[str]]] = []
    if abb_lexicon is not None:
        abb_markers = _abbreviation_markers(text1, abb_lexicon, max_options)

    # Splice [ABB] over abbreviation spans right-to-left, then place every
    # marker at its final character offset to recover slot order.
    text2 = text1
    for (start, end), _ in reversed(abb_markers):
        text2 = text2[:start] + ABB_TOKEN + text2[end:]

    def shift(pos: int) -> int:
        delta = sum(
            (end - start) - len(ABB_TOKEN)
            for (start, end), _ in abb_markers
            if end <= pos
        )
        return pos - delta

    placed = [(shift(pos), options) for pos, options in cont_markers]
    placed += [(shift(start), options) for (start, _), options in abb_markers]
    placed.sort(key=lambda item: item[0])

    tokens = tokenize(text2, vocab)
    positions = [i for i, t in enumerate(tokens) if t == ABB]
    if len(positions) != len(placed):
        raise AssertionError("marker/token alignment lost")
    slots = [Slot(pos=p, options=opts, gold=0) for p, (_, opts) in zip(positions, placed)]
    return AbbSentence(text=text2, tokens=tokens, slots=slots)


def make_contraction_example(sentence: str, lexicon: Lexicon, vocab: Vocabulary,
                             rate: float, rng,
                             max_options: int = DEFAULT_MAX_OPTIONS) -> AbbSentence:
    """Independently select eligible words with probability ``rate`` and
    replace each with [ABB] under a random non-identity contraction key."""
    return _corrupt(sentence, cont_lexicon=lexicon, abb_lexicon=None, vocab=vocab,
                    rate=rate, rng=rng, max_options=max_options)


def make_abbreviation_example(sentence: str, lexicon: Lexicon, vocab: Vocabulary,
                              max_options: int = DEFAULT_MAX_OPTIONS) -> AbbSentence:
    """Replace every extractable capitalized phrase with one [ABB]."""
    return _corrupt(sentence, cont_lexicon=None, abb_lexicon=lexicon, vocab=vocab,
                    rate=0.5, rng=None, max_options=max_options)


def make_mixed_example(sentence: str, cont_lexicon: Lexicon, abb_lexicon: Lexicon,
                       vocab: Vocabulary, rate: float, rng,
                       max_options: int = DEFAULT_MAX_OPTIONS) -> AbbSentence:
    """Both corruptions on one sentence, contraction pass first."""
    return _corrupt(sentence, cont_lexicon=cont_lexicon, abb_lexicon=abb_lexicon,
                    vocab=vocab, rate=rate, rng=rng, max_options=max_options)


def synthesize_split(corpus: Iterable[str], name: str, vocab: Vocabulary,
                     cont_lexicon: Lexicon | None = None,
                     abb_lexicon: Lexicon | None = None,
                     rate: float = 0.15, seed: int = 0,
                     max_options: int = DEFAULT_MAX_OPTIONS,
                     max_tokens: int | None = None,
                     corpus_id: str = "") -> DatasetSplit:
    """Corrupt a corpus sentence-by-sentence under per-sentence RNG
    streams derived from (seed, sentence index), so parallel generation
    would reproduce the serial result.  Zero-slot sentences are dropped.
    """
    sentences = []
    for index, sentence in enumerate(corpus):
        rng = np.random.default_rng((seed, index))
        example = _corrupt(sentence, cont_lexicon=cont_lexicon,
                           abb_lexicon=abb_lexicon, vocab=vocab, rate=rate,
                           rng=rng, max_options=max_options)
        if not example.slots:
            continue
        if max_tokens is not None and len(example.tokens) > max_tokens:
            continue
        sentences.append(example)
    return DatasetSplit(name=name, sentences=sentences, seed=seed, corpus_id=corpus_id)


# -- JSON-lines serialization ----------------------------------------------

def export_split(split: DatasetSplit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sentence in split.sentences:
            record = {
                "text": sentence.text,
                "tokens": sentence.tokens,
                "slots": [
                    {"pos": s.pos, "options": s.options, "gold": s.gold}
                    for s in sentence.slots
                ],
                "seed": split.seed,
            }
            handle.write(json.dumps(record, ensure_ascii=False,
                                    separators=(",", ":")) + "\n")


def import_split(path: str | Path, name: str | None = None,
                 corpus_id: str = "") -> DatasetSplit:
    sentences = []
    seed = 0
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetSchemaError(line_no, f"invalid JSON: {exc}") from exc
            sentence = _validate_record(record, line_no)
            sentences.append(sentence)
            if line_no == 1:
                seed = record.get("seed", 0)
    return DatasetSplit(name=name or Path(path).stem, sentences=sentences,
                        seed=seed, corpus_id=corpus_id)


def _validate_record(record: dict, line_no: int) -> AbbSentence:
    if not isinstance(record, dict):
        raise DatasetSchemaError(line_no, "record is not an object")
    for key, kind in (("text", str), ("tokens", list), ("slots", list)):
        if key not in record:
            raise DatasetSchemaError(line_no, f"missing field {key!r}")
        if not isinstance(record[key], kind):
            raise DatasetSchemaError(line_no, f"field {key!r} has wrong type")
    tokens = record["tokens"]
    if not all(isinstance(t, int) for t in tokens):
        raise DatasetSchemaError(line_no, "tokens must be integers")
    slots = []
    for slot in record["slots"]:
        if not isinstance(slot, dict) or "pos" not in slot or "options" not in slot:
            raise DatasetSchemaError(line_no, "slot missing pos/options")
        pos, options = slot["pos"], slot["options"]
        if not isinstance(pos, int) or not 0 <= pos < len(tokens):
            raise DatasetSchemaError(line_no, f"slot position {pos!r} out of range")
        if tokens[pos] != ABB:
            raise DatasetSchemaError(line_no, f"token at {pos} is not [ABB]")
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            raise DatasetSchemaError(line_no, "options must be strings")
        gold = slot.get("gold")
        if gold is not None and not (isinstance(gold, int) and 0 <= gold < len(options)):
            raise DatasetSchemaError(line_no, f"gold index {gold!r} out of range")
        slots.append(Slot(pos=pos, options=options, gold=gold))
    return AbbSentence(text=record["text"], tokens=tokens, slots=slots)
