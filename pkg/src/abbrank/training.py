"""Additive-margin-softmax training and ranking evaluation.

Scoring is cosine between a slot embedding and each option embedding.
For training, the gold option's logit is reduced by a margin ``m`` before
scaling by ``s`` and taking softmax cross-entropy; the margin widens the
decision boundary around the correct option, and the large scale speeds
up and stabilizes optimization.

Evaluation reports the average rank of the gold option, the mean gap
between the gold cosine and the mean distractor cosine, and top-k hit
rates.  Ranking sorts scores descending with ties broken by the original
option index, which is stable and deliberately conservative: gold-first
option lists cannot win ties by accident of ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import AbbSentence, DatasetSplit
from .encoder import Encoder

# Fine-tuning rate for a pretrained backbone; from-scratch training of the
# small reference encoder wants the larger TrainConfig default.
FINETUNE_LEARNING_RATE = 5e-6


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the offending epoch and batch."""


@dataclass
class TrainConfig:
    margin: float = 0.8
    scale: float = 30.0
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not -1.0 <= self.margin <= 1.0:
            raise ValueError("margin must lie in [-1, 1]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


@dataclass
class LossReport:
    loss: float
    grad_norm: float
    slot_count: int


@dataclass
class EvalMetrics:
    avg_rank: float
    avg_dif: float
    top1: float
    top3: float
    slot_count: int

    def as_dict(self) -> dict:
        return {
            "avg_rank": self.avg_rank,
            "avg_dif": self.avg_dif,
            "top1": self.top1,
            "top3": self.top3,
            "slot_count": self.slot_count,
        }


def phi_scores(y: np.ndarray, options: np.ndarray) -> np.ndarray:
    """Cosine of the slot vector against each option row (unit inputs)."""
    return options @ y


def margin_logits(phi: np.ndarray, gold: int, margin: float, scale: float) -> np.ndarray:
    """Scaled logits with the margin subtracted on the gold option only."""
    logits = phi.astype(np.float64).copy()
    logits[gold] -= margin
    return scale * logits


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def option_probability(y: np.ndarray, options: np.ndarray, gold: int,
                       margin: float, scale: float) -> np.ndarray:
    """P(option | slot) under the margin-adjusted softmax."""
    if len(options) == 0:
        raise ValueError("options must be non-empty")
    if not 0 <= gold < len(options):
        raise ValueError("gold index out of range")
    phi = phi_scores(y, options)
    return stable_softmax(margin_logits(phi, gold, margin, scale))


def _slot_loss_and_dphi(phi: np.ndarray, gold: int, margin: float,
                        scale: float) -> tuple[float, np.ndarray]:
    p = stable_softmax(margin_logits(phi, gold, margin, scale))
    loss = -float(np.log(max(p[gold], np.finfo(np.float64).tiny)))
    dphi = scale * p
    dphi[gold] -= scale
    return loss, dphi


def ams_loss_with_grads(slots: Sequence[tuple[np.ndarray, np.ndarray, int]],
                        margin: float, scale: float):
    """Margin-softmax cross-entropy, averaged over slots.

    ``slots`` holds (y, option_matrix, gold) triples.  Returns the report
    plus dL/dy per slot and dL/doptions per slot.
    """
    if not slots:
        raise ValueError("empty batch")
    n = len(slots)
    total = 0.0
    dys, dts = [], []
    for y, options, gold in slots:
        if len(options) == 0:
            raise ValueError("slot with no options")
        if not 0 <= gold < len(options):
            raise ValueError("gold index out of range")
        phi = phi_scores(y, options)
        loss, dphi = _slot_loss_and_dphi(phi, gold, margin, scale)
        total += loss
        dys.append((options.T @ dphi) / n)
        dts.append(np.outer(dphi, y) / n)
    grad_norm = float(np.sqrt(
        sum(float(np.sum(g * g)) for g in dys) +
        sum(float(np.sum(g * g)) for g in dts)
    ))
    report = LossReport(loss=total / n, grad_norm=grad_norm, slot_count=n)
    return report, dys, dts


def ams_loss(slots: Sequence[tuple[np.ndarray, np.ndarray, int]],
             margin: float, scale: float) -> LossReport:
    report, _, _ = ams_loss_with_grads(slots, margin, scale)
    return report


def rank_permutation(phi: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending; ties keep original order."""
    return np.argsort(-np.asarray(phi), kind="stable")


def rank_options(y: np.ndarray, options: np.ndarray) -> np.ndarray:
    return rank_permutation(phi_scores(y, options))


def gold_rank(phi: np.ndarray, gold: int) -> int:
    """1-based position of the gold option under rank_permutation."""
    order = rank_permutation(phi)
    return int(np.nonzero(order == gold)[0][0]) + 1


def metrics_from_scores(scored_slots: Iterable[tuple[np.ndarray, int]]) -> EvalMetrics:
    """Aggregate rank/Dif/top-k over (phi, gold) pairs.

    Single-option slots count as rank 1 and are excluded from Dif.
    """
    ranks, difs = [], []
    for phi, gold in scored_slots:
        phi = np.asarray(phi, dtype=np.float64)
        ranks.append(gold_rank(phi, gold))
        if len(phi) > 1:
            others = np.delete(phi, gold)
            difs.append(float(phi[gold] - others.mean()))
    if not ranks:
        raise ValueError("no slots to evaluate")
    ranks_arr = np.asarray(ranks, dtype=np.float64)
    return EvalMetrics(
        avg_rank=float(ranks_arr.mean()),
        avg_dif=float(np.mean(difs)) if difs else 0.0,
        top1=float((ranks_arr <= 1).mean()),
        top3=float((ranks_arr <= 3).mean()),
        slot_count=len(ranks),
    )


ScoreFn = Callable[[AbbSentence], list[np.ndarray]]


def encoder_scorer(encoder: Encoder) -> ScoreFn:
    """Score slots with fresh context and option forward passes."""

    def score(sentence: AbbSentence) -> list[np.ndarray]:
        positions = [slot.pos for slot in sentence.slots]
        ys = encoder.encode_context(sentence.tokens, positions)
        out = []
        for y, slot in zip(ys, sentence.slots):
            options = encoder.encode_options(slot.options)
            out.append(phi_scores(y, options))
        return out

    return score


def evaluate(dataset: DatasetSplit | Iterable[AbbSentence], scorer: ScoreFn,
             shuffle_options: bool = False, rng=None) -> EvalMetrics:
    """Rank every slot and aggregate metrics.

    ``shuffle_options`` permutes each option list (tracking gold) before
    scoring, guarding against any gold-first ordering artifact; the
    default keeps stored order, where stable tie-breaking already cannot
    favor gold.
    """
    if shuffle_options and rng is None:
        rng = np.random.default_rng(0)

    def scored():
        for sentence in dataset:
            work = sentence
            if shuffle_options:
                work = _shuffled_sentence(sentence, rng)
            for phi, slot in zip(scorer(work), work.slots):
                if slot.gold is None:
                    raise ValueError("evaluation requires gold indices")
                yield phi, slot.gold

    return metrics_from_scores(scored())


def _shuffled_sentence(sentence: AbbSentence, rng) -> AbbSentence:
    from .dataset import Slot

    slots = []
    for slot in sentence.slots:
        perm = rng.permutation(len(slot.options))
        options = [slot.options[i] for i in perm]
        gold = int(np.nonzero(perm == slot.gold)[0][0])
        slots.append(Slot(pos=slot.pos, options=options, gold=gold))
    return AbbSentence(text=sentence.text, tokens=sentence.tokens, slots=slots)


class Adam:
    """Standard Adam over a named-parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for name, grad in grads.items():
            self.m[name] = b1 * self.m[name] + (1 - b1) * grad
            self.v[name] = b2 * self.v[name] + (1 - b2) * grad * grad
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            params[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    grad_norm: float
    slot_count: int
    val_metrics: EvalMetrics | None = None

    def as_dict(self) -> dict:
        record = {
            "epoch": self.epoch,
            "loss": self.loss,
            "grad_norm": self.grad_norm,
            "slots": self.slot_count,
        }
        if self.val_metrics is not None:
            record.update(
                R=self.val_metrics.avg_rank,
                Dif=self.val_metrics.avg_dif,
                top1=self.val_metrics.top1,
                top3=self.val_metrics.top3,
            )
        return record


@dataclass
class TrainResult:
    logs: list[EpochLog] = field(default_factory=list)
    best_params: dict[str, np.ndarray] | None = None
    best_epoch: int = -1
    best_val_rank: float = float("inf")


def _batch_step(encoder: Encoder, batch: list[AbbSentence], config: TrainConfig,
                token_cache: dict[str, list[int]]):
    """One forward/backward over a sentence batch; returns loss report
    and parameter gradients."""
    from .encoder import zero_grads

    token_lists = [s.tokens for s in batch]
    positions = [[slot.pos for slot in s.slots] for s in batch]
    y, ctx_cache = encoder.context_pass(token_lists, positions)

    option_tokens: list[list[int]] = []
    slot_spans: list[tuple[int, int, int]] = []  # (offset, count, gold)
    offset = 0
    for sentence in batch:
        for slot in sentence.slots:
            for option in slot.options:
                if option not in token_cache:
                    token_cache[option] = encoder.tokenize(option)
                option_tokens.append(token_cache[option])
            slot_spans.append((offset, len(slot.options), slot.gold))
            offset += len(slot.options)
    t, opt_cache = encoder.option_pass(option_tokens)

    slots = [
        (y[i], t[off:off + count], gold)
        for i, (off, count, gold) in enumerate(slot_spans)
    ]
    report, dys, dts = ams_loss_with_grads(slots, config.margin, config.scale)

    dy = np.stack(dys)
    dt = np.zeros_like(t)
    for (off, count, _), slot_dt in zip(slot_spans, dts):
        dt[off:off + count] = slot_dt

    grads = zero_grads(encoder.params)
    encoder.context_pass_bwd(dy, ctx_cache, grads)
    encoder.option_pass_bwd(dt, opt_cache, grads)
    return report, grads


def train(config: TrainConfig, train_split: DatasetSplit, encoder: Encoder,
          val_split: DatasetSplit | None = None,
          log_path: str | Path | None = None) -> TrainResult:
    """Minimize the margin-softmax loss with Adam.

    Emits one JSON log record per epoch (loss plus validation metrics when
    a validation split is given) and keeps the best-validation parameters.
    Aborts with TrainingDivergedError if the loss goes non-finite.
    """
    sentences = [s for s in train_split.sentences if s.slots]
    if not sentences:
        raise ValueError("training split has no slots")

    optimizer = Adam(encoder.params, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    token_cache: dict[str, list[int]] = {}
    result = TrainResult()
    log_handle = open(log_path, "w", encoding="utf-8") if log_path else None

    try:
        for epoch in range(config.epochs):
            order = rng.permutation(len(sentences))
            epoch_loss = 0.0
            epoch_grad_norm = 0.0
            epoch_slots = 0
            n_batches = 0
            for start in range(0, len(order), config.batch_size):
                batch = [sentences[i] for i in order[start:start + config.batch_size]]
                report, grads = _batch_step(encoder, batch, config, token_cache)
                if not np.isfinite(report.loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {n_batches}"
                    )
                param_norm = float(np.sqrt(sum(
                    float(np.sum(g * g)) for g in grads.values()
                )))
                optimizer.step(encoder.params, grads)
                epoch_loss += report.loss * report.slot_count
                epoch_grad_norm += param_norm
                epoch_slots += report.slot_count
                n_batches += 1

            val_metrics = None
            if val_split is not None:
                val_metrics = evaluate(val_split, encoder_scorer(encoder))
                if val_metrics.avg_rank < result.best_val_rank:
                    result.best_val_rank = val_metrics.avg_rank
                    result.best_epoch = epoch
                    result.best_params = {
                        k: v.copy() for k, v in encoder.params.items()
                    }

            log = EpochLog(
                epoch=epoch,
                loss=epoch_loss / max(epoch_slots, 1),
                grad_norm=epoch_grad_norm / max(n_batches, 1),
                slot_count=epoch_slots,
                val_metrics=val_metrics,
            )
            result.logs.append(log)
            if log_handle:
                log_handle.write(json.dumps(log.as_dict()) + "\n")
                log_handle.flush()
    finally:
        if log_handle:
            log_handle.close()

    if result.best_params is None:
        result.best_params = {k: v.copy() for k, v in encoder.params.items()}
        result.best_epoch = config.epochs - 1
    return result
