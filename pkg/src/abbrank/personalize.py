"""Low-compute personalization on top of a frozen encoder.

A single affine-plus-renormalization layer ``g`` is applied identically
to slot embeddings and option embeddings before cosine scoring.  It is
initialized to the exact identity, so rankings are untouched until
feedback arrives; training then updates only the adapter's d*d + d
parameters while the encoder and the precomputed option-embedding table
stay frozen (verified by content hash before and after).

Serving reads option vectors straight from the table; options missing
from it fall back to one logged encoder pass and live in a session-local
overlay, never mutating the frozen base.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_tensors, save_tensors, tensors_hash
from .dataset import AbbSentence
from .encoder import Encoder
from .lexicon import EmbeddingTable
from .training import Adam, TrainConfig, ams_loss_with_grads, rank_permutation

logger = logging.getLogger(__name__)


class FrozenArtifactError(RuntimeError):
    """A frozen artifact's content hash changed during personalization."""


@dataclass
class AdapterParams:
    """Affine adapter g(v) = normalize(W v + b)."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "AdapterParams":
        return cls(weight=np.eye(dim), bias=np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.bias.shape[0]

    def copy(self) -> "AdapterParams":
        return AdapterParams(self.weight.copy(), self.bias.copy())

    def tensors(self) -> dict[str, np.ndarray]:
        return {"adapter.W": self.weight, "adapter.b": self.bias}

    def content_hash(self) -> str:
        return tensors_hash(self.tensors())


@dataclass
class FeedbackRecord:
    """One human judgment: which presented option was correct."""

    sentence: AbbSentence
    slot_index: int
    options: list[str]
    chosen: int
    timestamp: float = field(default_factory=time.time)
    source: str = "user"

    def __post_init__(self):
        if not 0 <= self.chosen < len(self.options):
            raise ValueError("chosen index outside the presented options")
        if not 0 <= self.slot_index < len(self.sentence.slots):
            raise ValueError("slot index outside the sentence")


def adapter_apply(vectors: np.ndarray, adapter: AdapterParams) -> np.ndarray:
    """Apply g to one vector [d] or a batch of rows [n, d]."""
    out, _ = _adapter_fwd(np.atleast_2d(vectors), adapter)
    return out[0] if vectors.ndim == 1 else out


def _adapter_fwd(rows: np.ndarray, adapter: AdapterParams):
    if rows.shape[-1] != adapter.dim:
        raise ValueError(
            f"vector dim {rows.shape[-1]} does not match adapter dim {adapter.dim}"
        )
    affine = rows @ adapter.weight.T + adapter.bias
    norms = np.linalg.norm(affine, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("adapter output collapsed to a zero vector")
    out = affine / norms
    return out, (rows, out, norms)


def _adapter_bwd(dout: np.ndarray, cache, dW: np.ndarray, db: np.ndarray,
                 weight: np.ndarray | None = None) -> np.ndarray | None:
    rows, out, norms = cache
    daffine = (dout - out * (out * dout).sum(axis=-1, keepdims=True)) / norms
    dW += daffine.T @ rows
    db += daffine.sum(axis=0)
    return daffine @ weight if weight is not None else None


class OptionVectorStore:
    """Option vectors from the frozen table, with an encoder fallback.

    Missing options are encoded once, logged, and cached in a
    session-local overlay; the base table is never written.
    """

    def __init__(self, table: EmbeddingTable, encoder: Encoder):
        self.table = table
        self.encoder = encoder
        self.overlay: dict[str, np.ndarray] = {}
        self.fallback_count = 0

    def vectors_for(self, options: list[str]) -> np.ndarray:
        missing = [
            o for o in options if o not in self.table and o not in self.overlay
        ]
        if missing:
            self.fallback_count += len(missing)
            logger.info("encoding %d options missing from dict_embed", len(missing))
            encoded = self.encoder.encode_options(missing)
            for option, vec in zip(missing, encoded):
                self.overlay[option] = vec
        out = np.empty((len(options), self.table.dim))
        for i, option in enumerate(options):
            base = self.table.get(option)
            out[i] = base.astype(np.float64) if base is not None else self.overlay[option]
        return out


@dataclass
class RankedSlot:
    """Option indices sorted best-first with their cosine scores."""

    order: list[int]
    scores: list[float]


def rank_with_adapter(sentence: AbbSentence, adapter: AdapterParams,
                      store: OptionVectorStore) -> list[RankedSlot]:
    """Rank every slot of a sentence through the adapter.

    Does exactly one encoder forward pass (the context); option vectors
    come from the store.  A slot with zero options is an error.
    """
    for slot in sentence.slots:
        if not slot.options:
            raise ValueError("slot with no options cannot be ranked")
    positions = [slot.pos for slot in sentence.slots]
    ys = store.encoder.encode_context(sentence.tokens, positions)
    adapted_ys = adapter_apply(ys, adapter)

    ranked = []
    for y, slot in zip(adapted_ys, sentence.slots):
        options = store.vectors_for(slot.options)
        adapted = adapter_apply(options, adapter)
        phi = adapted @ y
        order = rank_permutation(phi)
        ranked.append(RankedSlot(order=[int(i) for i in order],
                                 scores=[float(phi[i]) for i in order]))
    return ranked


def personalize_train(feedback: list[FeedbackRecord], table: EmbeddingTable,
                      encoder: Encoder, config: TrainConfig,
                      adapter: AdapterParams | None = None) -> AdapterParams:
    """Fit the adapter to feedback; everything else stays frozen.

    Option embeddings are read from the table (no option forward passes);
    slot embeddings take one context pass each, computed up front.  Only
    the adapter parameters receive gradient updates.
    """
    if not feedback:
        raise ValueError("personalization requires at least one feedback record")

    encoder_hash_before = encoder.content_hash()
    table_hash_before = table.content_hash()

    adapter = adapter.copy() if adapter is not None else AdapterParams.identity(encoder.dim)
    store = OptionVectorStore(table, encoder)

    # Frozen inputs, computed once: slot embedding and option matrix per record.
    ys = np.empty((len(feedback), encoder.dim))
    option_mats: list[np.ndarray] = []
    for i, record in enumerate(feedback):
        slot = record.sentence.slots[record.slot_index]
        ys[i] = encoder.encode_context(record.sentence.tokens, [slot.pos])[0]
        option_mats.append(store.vectors_for(record.options))

    params = {"W": adapter.weight, "b": adapter.bias}
    optimizer = Adam(params, config.learning_rate)
    rng = np.random.default_rng(config.seed)

    for _ in range(config.epochs):
        order = rng.permutation(len(feedback))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            dW = np.zeros_like(adapter.weight)
            db = np.zeros_like(adapter.bias)

            slots = []
            caches = []
            z_batch, z_cache = _adapter_fwd(ys[idx], adapter)
            for row, i in enumerate(idx):
                u, u_cache = _adapter_fwd(option_mats[i], adapter)
                slots.append((z_batch[row], u, feedback[i].chosen))
                caches.append(u_cache)
            _, dzs, dus = ams_loss_with_grads(slots, config.margin, config.scale)

            _adapter_bwd(np.stack(dzs), z_cache, dW, db)
            for du, cache in zip(dus, caches):
                _adapter_bwd(du, cache, dW, db)
            optimizer.step(params, {"W": dW, "b": db})

    if encoder.content_hash() != encoder_hash_before:
        raise FrozenArtifactError("encoder parameters changed during personalization")
    if table.content_hash() != table_hash_before:
        raise FrozenArtifactError("embedding table changed during personalization")
    return adapter


def adapter_loss_and_grads(feedback_slots, adapter: AdapterParams,
                           margin: float, scale: float):
    """Loss over (y, option_matrix, gold) triples plus adapter gradients.

    Exposed for gradient verification; the train loop uses the same path.
    """
    dW = np.zeros_like(adapter.weight)
    db = np.zeros_like(adapter.bias)
    slots = []
    z_caches = []
    u_caches = []
    for y, options, gold in feedback_slots:
        z, z_cache = _adapter_fwd(y[None, :], adapter)
        u, u_cache = _adapter_fwd(options, adapter)
        slots.append((z[0], u, gold))
        z_caches.append(z_cache)
        u_caches.append(u_cache)
    report, dzs, dus = ams_loss_with_grads(slots, margin, scale)
    for dz, z_cache in zip(dzs, z_caches):
        _adapter_bwd(dz[None, :], z_cache, dW, db)
    for du, u_cache in zip(dus, u_caches):
        _adapter_bwd(du, u_cache, dW, db)
    return report.loss, dW, db


def save_adapter(adapter: AdapterParams, path: str | Path, *,
                 encoder_hash: str, table_hash: str, version: int = 1) -> None:
    """Adapter checkpoint; records the frozen artifacts' hashes so loads
    can verify the adapter is applied to what it was trained against."""
    save_tensors(path, adapter.tensors(), {
        "kind": "adapter",
        "base_model_hash": encoder_hash,
        "embedding_table_hash": table_hash,
        "version": version,
    })


def load_adapter(path: str | Path) -> tuple[AdapterParams, dict]:
    tensors, metadata = load_tensors(path)
    adapter = AdapterParams(weight=tensors["adapter.W"], bias=tensors["adapter.b"])
    return adapter, metadata
