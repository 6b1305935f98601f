"""Inverse lookup tables from short-form keys to candidate expansions.

Contraction and abbreviation lexicons are built by streaming a corpus
through the rule-based generators, inverting the results, and ordering
each option list by corpus frequency (descending, ties broken
alphabetically).  A frozen table of precomputed option embeddings lets
ranking run without per-option encoder passes.

On-disk formats
---------------
Lexicons are stored as sorted plain-text TSV (key, expansion, count)
followed by a small binary footer carrying the format version, record
count, and a 64-bit checksum, so files stay diffable in review but are
verified on load.  Embedding tables are fully binary: a fixed header
(magic ``ABBE``, version, dim, record count) followed by length-prefixed
UTF-8 expansion strings each paired with ``dim`` little-endian float32s.
"""

from __future__ import annotations

import hashlib
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .shortforms import contractions_of, extract_abbreviations, normalize_word

LEXICON_MAGIC = b"ABBL"
LEXICON_VERSION = 1
EMBED_MAGIC = b"ABBE"
EMBED_VERSION = 1

# Contraction indexing skips words shorter than this (normalized length).
MIN_INDEXED_WORD_LENGTH = 2

KIND_CONTRACTION = "cont"
KIND_ABBREVIATION = "abb"
_KIND_CODES = {KIND_CONTRACTION: 0, KIND_ABBREVIATION: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class LexiconFormatError(ValueError):
    """Base class for on-disk format violations."""


class VersionMismatchError(LexiconFormatError):
    pass


class ChecksumError(LexiconFormatError):
    pass


class TruncatedFileError(LexiconFormatError):
    pass


class CorpusReadError(IOError):
    """Corpus ingestion failure, annotated with file and line number."""


def checksum64(data: bytes) -> int:
    """64-bit content checksum (leading 8 bytes of SHA-256)."""
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


@dataclass
class LexiconStats:
    kind: str
    key_count: int
    expansion_count: int
    max_options_per_key: int
    single_char_key_count: int
    corpus_id: str

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "key_count": self.key_count,
            "expansion_count": self.expansion_count,
            "max_options_per_key": self.max_options_per_key,
            "single_char_key_count": self.single_char_key_count,
            "corpus_id": self.corpus_id,
        }


class Lexicon:
    """Short-form key -> frequency-ranked list of (expansion, count).

    Immutable after build/load; concurrent readers need no coordination.
    """

    def __init__(
        self,
        kind: str,
        entries: dict[str, list[tuple[str, int]]],
        corpus_id: str = "",
    ):
        if kind not in _KIND_CODES:
            raise ValueError(f"unknown lexicon kind: {kind!r}")
        self.kind = kind
        self.entries = entries
        self.corpus_id = corpus_id

    def lookup(self, key: str, limit: int) -> list[str]:
        """First ``limit`` expansions for ``key`` in stored order.

        Unknown keys yield an empty list; that is not an error.
        """
        if limit < 1:
            raise ValueError("limit must be >= 1")
        return [expansion for expansion, _ in self.entries.get(key, [])[:limit]]

    def lookup_with_counts(self, key: str, limit: int) -> list[tuple[str, int]]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        return list(self.entries.get(key, [])[:limit])

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Lexicon)
            and self.kind == other.kind
            and self.corpus_id == other.corpus_id
            and self.entries == other.entries
        )

    def stats(self) -> LexiconStats:
        option_counts = [len(v) for v in self.entries.values()]
        return LexiconStats(
            kind=self.kind,
            key_count=len(self.entries),
            expansion_count=sum(option_counts),
            max_options_per_key=max(option_counts, default=0),
            single_char_key_count=sum(1 for k in self.entries if len(k) == 1),
            corpus_id=self.corpus_id,
        )

    # -- persistence -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        body = bytearray()
        for key in sorted(self.entries):
            for expansion, count in self.entries[key]:
                line = f"{key}\t{_escape(expansion)}\t{count}\n"
                body.extend(line.encode("utf-8"))
        corpus_bytes = self.corpus_id.encode("utf-8")
        footer = struct.pack(
            "<4sIBIQQ",
            LEXICON_MAGIC,
            LEXICON_VERSION,
            _KIND_CODES[self.kind],
            len(corpus_bytes),
            self._record_count(),
            checksum64(bytes(body) + corpus_bytes),
        )
        Path(path).write_bytes(bytes(body) + corpus_bytes + footer)

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        raw = Path(path).read_bytes()
        footer_size = struct.calcsize("<4sIBIQQ")
        if len(raw) < footer_size:
            raise TruncatedFileError(f"{path}: shorter than footer")
        magic, version, kind_code, corpus_len, count, stored_sum = struct.unpack(
            "<4sIBIQQ", raw[-footer_size:]
        )
        if magic != LEXICON_MAGIC:
            raise LexiconFormatError(f"{path}: bad magic {magic!r}")
        if version != LEXICON_VERSION:
            raise VersionMismatchError(
                f"{path}: format version {version}, expected {LEXICON_VERSION}"
            )
        payload = raw[:-footer_size]
        if len(payload) < corpus_len:
            raise TruncatedFileError(f"{path}: corpus identifier cut short")
        if checksum64(payload) != stored_sum:
            raise ChecksumError(f"{path}: checksum mismatch")
        corpus_id = payload[len(payload) - corpus_len:].decode("utf-8")
        body = payload[: len(payload) - corpus_len]

        entries: dict[str, list[tuple[str, int]]] = defaultdict(list)
        records = 0
        for line in body.decode("utf-8").splitlines():
            key, expansion, count_str = line.split("\t")
            entries[key].append((_unescape(expansion), int(count_str)))
            records += 1
        if records != count:
            raise TruncatedFileError(
                f"{path}: footer promises {count} records, found {records}"
            )
        return cls(_KIND_NAMES[kind_code], dict(entries), corpus_id)

    def _record_count(self) -> int:
        return sum(len(v) for v in self.entries.values())


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out = []
    it = iter(text)
    for c in it:
        if c != "\\":
            out.append(c)
            continue
        nxt = next(it, "")
        out.append({"t": "\t", "n": "\n", "\\": "\\"}.get(nxt, "\\" + nxt))
    return "".join(out)


def _ranked(counter: Counter) -> list[tuple[str, int]]:
    """Frequency descending, ties broken lexicographically ascending."""
    return sorted(counter.items(), key=lambda item: (-item[1], item[0]))


def build_contraction_lexicon(
    corpus: Iterable[str], corpus_id: str = ""
) -> Lexicon:
    """Index every corpus word under each of its contraction keys."""
    word_freq: Counter = Counter()
    for sentence in corpus:
        for token in sentence.split():
            word = normalize_word(token)
            if len(word) >= MIN_INDEXED_WORD_LENGTH:
                word_freq[word] += 1

    inverse: dict[str, Counter] = defaultdict(Counter)
    for word, freq in word_freq.items():
        for key in contractions_of(word):
            inverse[key][word] += freq

    entries = {key: _ranked(options) for key, options in inverse.items()}
    return Lexicon(KIND_CONTRACTION, entries, corpus_id)


def build_abbreviation_lexicon(
    corpus: Iterable[str], corpus_id: str = ""
) -> Lexicon:
    """Index every extracted capitalized phrase under its initials key."""
    pair_freq: Counter = Counter()
    for sentence in corpus:
        for found in extract_abbreviations(sentence):
            pair_freq[(found.key, found.expansion)] += 1

    inverse: dict[str, Counter] = defaultdict(Counter)
    for (key, expansion), freq in pair_freq.items():
        inverse[key][expansion] += freq

    entries = {key: _ranked(options) for key, options in inverse.items()}
    return Lexicon(KIND_ABBREVIATION, entries, corpus_id)


def iter_corpus_file(path: str | Path) -> Iterator[str]:
    """Yield corpus lines, converting I/O failures into CorpusReadError
    carrying file and line context."""
    line_no = 0
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                stripped = line.strip()
                if stripped:
                    yield stripped
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusReadError(f"{path}:{line_no}: {exc}") from exc


class EmbeddingTable:
    """Frozen map from expansion string to a unit-norm option embedding.

    Vectors are held in float32, matching the serialized form exactly, so
    a save/load round-trip is bit-identical.
    """

    def __init__(self, dim: int, records: dict[str, np.ndarray]):
        self.dim = dim
        self.records = records

    def __contains__(self, expansion: str) -> bool:
        return expansion in self.records

    def __len__(self) -> int:
        return len(self.records)

    def get(self, expansion: str) -> np.ndarray | None:
        return self.records.get(expansion)

    def vectors_for(self, expansions: list[str]) -> np.ndarray:
        """Stack vectors for the given expansions; KeyError when absent."""
        return np.stack([self.records[e] for e in expansions])

    def serialize(self) -> bytes:
        out = bytearray()
        out.extend(
            struct.pack("<4sIIQ", EMBED_MAGIC, EMBED_VERSION, self.dim, len(self.records))
        )
        for expansion in sorted(self.records):
            text = expansion.encode("utf-8")
            out.extend(struct.pack("<I", len(text)))
            out.extend(text)
            vec = self.records[expansion]
            out.extend(vec.astype("<f4", copy=False).tobytes())
        return bytes(out)

    def content_hash(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.serialize())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        raw = Path(path).read_bytes()
        header_size = struct.calcsize("<4sIIQ")
        if len(raw) < header_size:
            raise TruncatedFileError(f"{path}: shorter than header")
        magic, version, dim, count = struct.unpack("<4sIIQ", raw[:header_size])
        if magic != EMBED_MAGIC:
            raise LexiconFormatError(f"{path}: bad magic {magic!r}")
        if version != EMBED_VERSION:
            raise VersionMismatchError(
                f"{path}: format version {version}, expected {EMBED_VERSION}"
            )
        records: dict[str, np.ndarray] = {}
        offset = header_size
        vec_bytes = 4 * dim
        for _ in range(count):
            if offset + 4 > len(raw):
                raise TruncatedFileError(f"{path}: record header cut short")
            (text_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            if offset + text_len + vec_bytes > len(raw):
                raise TruncatedFileError(f"{path}: record payload cut short")
            expansion = raw[offset:offset + text_len].decode("utf-8")
            offset += text_len
            vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
            offset += vec_bytes
            records[expansion] = vec
        return cls(dim, records)


def build_embedding_table(lexicons, encoder, batch_size: int = 256) -> EmbeddingTable:
    """Encode one vector per distinct expansion across the given lexicons.

    ``lexicons`` may be a single Lexicon or an iterable of them.  The
    encoder must already be initialized; its parameters and the returned
    table are treated as frozen from here on.
    """
    if isinstance(lexicons, Lexicon):
        lexicons = [lexicons]
    expansions: set[str] = set()
    for lexicon in lexicons:
        for options in lexicon.entries.values():
            expansions.update(expansion for expansion, _ in options)

    ordered = sorted(expansions)
    records: dict[str, np.ndarray] = {}
    for start in range(0, len(ordered), batch_size):
        chunk = ordered[start:start + batch_size]
        vectors = encoder.encode_options(chunk)
        for expansion, vec in zip(chunk, vectors):
            records[expansion] = vec.astype(np.float32)
    return EmbeddingTable(encoder.dim, records)
