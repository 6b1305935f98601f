"""The dual-encoder core.

One shared transformer encodes both sides of the ranking problem: a
context pass returns unit-norm slot vectors at the positions of the
``[ABB]`` token, and an option pass returns a unit-norm vector read at
the leading ``[CLS]`` position of each candidate expansion.  Cosine
between the two sides is the ranking score.

The reference configuration (2 layers, width 64, 4 heads) trains from
scratch on a CPU in minutes; the architecture is a configuration, not a
constant, so a larger encoder drops in with no interface change.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .checkpoint import load_tensors, save_tensors, tensors_hash

PAD, UNK, CLS, ABB = 0, 1, 2, 3
RESERVED_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[ABB]"]
ABB_TOKEN = "[ABB]"

_ABB_SPLIT_RE = re.compile(r"(\[ABB\])")
_EDGE_PUNCT_RE = re.compile(r"^\W+|\W+$")


class SequenceTooLongError(ValueError):
    """Input exceeds the encoder's maximum sequence length."""


class Vocabulary:
    """Token-to-id map with reserved ids for [PAD], [UNK], [CLS], [ABB]."""

    def __init__(self, tokens: Sequence[str]):
        if list(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def build(cls, corpus: Iterable[str], size: int = 8192) -> "Vocabulary":
        """Top ``size - 4`` corpus tokens by frequency (ties alphabetic)."""
        counts: Counter = Counter()
        for sentence in corpus:
            for token in sentence.split():
                cleaned = clean_token(token)
                if cleaned and cleaned != ABB_TOKEN:
                    counts[cleaned] += 1
        kept = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [tok for tok, _ in kept[: max(size - len(RESERVED_TOKENS), 0)]]
        return cls(RESERVED_TOKENS + kept)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


def clean_token(token: str) -> str:
    """Lowercase and trim edge punctuation; [ABB] passes through intact."""
    if token == ABB_TOKEN:
        return token
    return _EDGE_PUNCT_RE.sub("", token).lower()


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Whitespace tokenization with a leading [CLS].

    Literal ``[ABB]`` substrings map to the reserved id even when glued
    to punctuation (``[ABB].``); unknown tokens map to [UNK].
    """
    ids = [CLS]
    for raw in text.split():
        for piece in _ABB_SPLIT_RE.split(raw):
            if piece == ABB_TOKEN:
                ids.append(ABB)
                continue
            cleaned = clean_token(piece)
            if cleaned:
                ids.append(vocab.token_to_id.get(cleaned, UNK))
    return ids


@dataclass
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 256
    max_len: int = 128

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")


def init_params(config: EncoderConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    d, ff = config.dim, config.ff_dim

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params = {
        "tok_emb": normal(config.vocab_size, d),
        "pos_emb": normal(config.max_len, d),
        "lnf.g": np.ones(d),
        "lnf.b": np.zeros(d),
        "head.w": normal(d, d),
        "head.b": np.zeros(d),
    }
    for i in range(config.layers):
        p = f"l{i}"
        params[f"{p}.ln1.g"] = np.ones(d)
        params[f"{p}.ln1.b"] = np.zeros(d)
        params[f"{p}.ln2.g"] = np.ones(d)
        params[f"{p}.ln2.b"] = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{p}.attn.{name}"] = normal(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[f"{p}.attn.{name}"] = np.zeros(d)
        params[f"{p}.mlp.w1"] = normal(d, ff)
        params[f"{p}.mlp.b1"] = np.zeros(ff)
        params[f"{p}.mlp.w2"] = normal(ff, d)
        params[f"{p}.mlp.b2"] = np.zeros(d)
    return params


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in params.items()}


def transformer_fwd(params, config, ids, mask):
    """Pre-LN transformer over padded id batch [B, T] -> per-token z."""
    x = params["tok_emb"][ids] + params["pos_emb"][: ids.shape[1]]
    caches = []
    for i in range(config.layers):
        p = f"l{i}"
        normed1, ln1_cache = nn.layernorm_fwd(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        attn_out, attn_cache = nn.attention_fwd(
            normed1, mask, params, f"{p}.attn", config.heads
        )
        x = x + attn_out
        normed2, ln2_cache = nn.layernorm_fwd(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        h1, h1_in = nn.linear_fwd(normed2, params[f"{p}.mlp.w1"], params[f"{p}.mlp.b1"])
        act, act_cache = nn.gelu_fwd(h1)
        h2, h2_in = nn.linear_fwd(act, params[f"{p}.mlp.w2"], params[f"{p}.mlp.b2"])
        x = x + h2
        caches.append((ln1_cache, attn_cache, ln2_cache, h1_in, act_cache, h2_in))
    z, lnf_cache = nn.layernorm_fwd(x, params["lnf.g"], params["lnf.b"])
    return z, (ids, caches, lnf_cache)


def transformer_bwd(dz, cache, params, config, grads):
    ids, caches, lnf_cache = cache
    dx = nn.layernorm_bwd(dz, lnf_cache, params["lnf.g"], grads, "lnf.g", "lnf.b")
    for i in reversed(range(config.layers)):
        p = f"l{i}"
        ln1_cache, attn_cache, ln2_cache, h1_in, act_cache, h2_in = caches[i]
        dh2 = dx
        dact = nn.linear_bwd(dh2, h2_in, params[f"{p}.mlp.w2"], grads,
                             f"{p}.mlp.w2", f"{p}.mlp.b2")
        dh1 = nn.gelu_bwd(dact, act_cache)
        dnormed2 = nn.linear_bwd(dh1, h1_in, params[f"{p}.mlp.w1"], grads,
                                 f"{p}.mlp.w1", f"{p}.mlp.b1")
        dx = dx + nn.layernorm_bwd(dnormed2, ln2_cache, params[f"{p}.ln2.g"],
                                   grads, f"{p}.ln2.g", f"{p}.ln2.b")
        dattn_out = dx
        dnormed1 = nn.attention_bwd(dattn_out, attn_cache, params, f"{p}.attn", grads)
        dx = dx + nn.layernorm_bwd(dnormed1, ln1_cache, params[f"{p}.ln1.g"],
                                   grads, f"{p}.ln1.g", f"{p}.ln1.b")
    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"][: ids.shape[1]] += dx.sum(axis=0)


def head_fwd(z, params):
    """Projection head: affine, tanh, L2 normalization."""
    u, u_in = nn.linear_fwd(z, params["head.w"], params["head.b"])
    t, t_cache = nn.tanh_fwd(u)
    y, norm_cache = nn.l2norm_fwd(t)
    return y, (u_in, t_cache, norm_cache)


def head_bwd(dy, cache, params, grads):
    u_in, t_cache, norm_cache = cache
    dt = nn.l2norm_bwd(dy, norm_cache)
    du = nn.tanh_bwd(dt, t_cache)
    return nn.linear_bwd(du, u_in, params["head.w"], grads, "head.w", "head.b")


def pad_batch(sequences: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Pad id lists to a [B, T] array plus a same-shape real-token mask."""
    longest = max(len(s) for s in sequences)
    ids = np.full((len(sequences), longest), PAD, dtype=np.int64)
    mask = np.zeros((len(sequences), longest))
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = seq
        mask[row, : len(seq)] = 1.0
    return ids, mask


class Encoder:
    """Shared context/option encoder over a fixed vocabulary.

    Parameters are immutable during inference; training code owns the
    single writer.  ``forward_calls`` counts batched transformer passes,
    which the table-backed ranking path uses to assert it never encodes
    options on the fly.
    """

    def __init__(self, config: EncoderConfig, vocab: Vocabulary,
                 params: dict[str, np.ndarray] | None = None, seed: int = 0):
        if config.vocab_size != len(vocab):
            raise ValueError("config.vocab_size disagrees with vocabulary")
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else init_params(config, seed)
        self.forward_calls = 0

    @property
    def dim(self) -> int:
        return self.config.dim

    def tokenize(self, text: str) -> list[int]:
        return tokenize(text, self.vocab)

    def _check_length(self, n_tokens: int) -> None:
        if n_tokens > self.config.max_len:
            raise SequenceTooLongError(
                f"{n_tokens} tokens exceeds maximum {self.config.max_len}"
            )

    def _forward(self, sequences: list[list[int]]):
        for seq in sequences:
            self._check_length(len(seq))
        ids, mask = pad_batch(sequences)
        self.forward_calls += 1
        return transformer_fwd(self.params, self.config, ids, mask)

    def encode_context(self, tokens: Sequence[int], positions: Sequence[int]) -> np.ndarray:
        """Unit-norm slot embeddings gathered at ``positions`` [k, d]."""
        if not positions:
            return np.zeros((0, self.dim))
        z, _ = self._forward([list(tokens)])
        slots = z[0, np.asarray(positions)]
        y, _ = head_fwd(slots, self.params)
        return y

    def encode_option(self, option: str) -> np.ndarray:
        """Unit-norm embedding of one candidate expansion [d]."""
        if not option:
            raise ValueError("option text must be non-empty")
        return self.encode_options([option])[0]

    def encode_options(self, options: list[str]) -> np.ndarray:
        """Batched option encoding via the [CLS] position [n, d]."""
        if not options:
            return np.zeros((0, self.dim))
        if any(not o for o in options):
            raise ValueError("option text must be non-empty")
        z, _ = self._forward([self.tokenize(o) for o in options])
        y, _ = head_fwd(z[:, 0, :], self.params)
        return y

    # -- training-facing passes (keep caches, return gradients) ----------

    def context_pass(self, token_lists: list[list[int]], positions: list[list[int]]):
        """Forward for training: returns stacked slot embeddings plus a
        closure-friendly cache for the matching backward."""
        z, tf_cache = self._forward(token_lists)
        rows = np.concatenate([
            np.full(len(pos), i) for i, pos in enumerate(positions)
        ]).astype(np.int64) if positions else np.zeros(0, dtype=np.int64)
        cols = np.concatenate([np.asarray(pos, dtype=np.int64) for pos in positions]) \
            if positions else np.zeros(0, dtype=np.int64)
        slots = z[rows, cols]
        y, h_cache = head_fwd(slots, self.params)
        return y, (tf_cache, h_cache, rows, cols, z.shape)

    def context_pass_bwd(self, dy, cache, grads):
        tf_cache, h_cache, rows, cols, z_shape = cache
        dslots = head_bwd(dy, h_cache, self.params, grads)
        dz = np.zeros(z_shape)
        np.add.at(dz, (rows, cols), dslots)
        transformer_bwd(dz, tf_cache, self.params, self.config, grads)

    def option_pass(self, token_lists: list[list[int]]):
        z, tf_cache = self._forward(token_lists)
        y, h_cache = head_fwd(z[:, 0, :], self.params)
        return y, (tf_cache, h_cache, z.shape)

    def option_pass_bwd(self, dy, cache, grads):
        tf_cache, h_cache, z_shape = cache
        dcls = head_bwd(dy, h_cache, self.params, grads)
        dz = np.zeros(z_shape)
        dz[:, 0, :] = dcls
        transformer_bwd(dz, tf_cache, self.params, self.config, grads)

    # -- persistence ------------------------------------------------------

    def content_hash(self) -> str:
        return tensors_hash(self.params)

    def save(self, path: str | Path) -> None:
        metadata = {
            "kind": "encoder",
            "config": asdict(self.config),
            "vocab": self.vocab.id_to_token,
        }
        save_tensors(path, self.params, metadata)

    @classmethod
    def load(cls, path: str | Path) -> "Encoder":
        tensors, metadata = load_tensors(path)
        config = EncoderConfig(**metadata["config"])
        vocab = Vocabulary(metadata["vocab"])
        return cls(config, vocab, params=tensors)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Standard cosine similarity; errors on zero vectors."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))
