"""Shared fixtures-in-code for the acceptance suite.

Builds the synthetic separable ranking task: a 500-word vocabulary split
into topics, sentences drawn from one topic each, and slots whose gold
option is the replaced word while distractors come from distinct other
topics.  Context alone identifies the topic, so a converged model ranks
gold first; nine distinct-topic distractors keep score gaps wide.
"""

from dataclasses import dataclass

import numpy as np

from abbrank.dataset import AbbSentence, DatasetSplit, Slot
from abbrank.encoder import ABB, Encoder, EncoderConfig, Vocabulary
from abbrank.lexicon import EmbeddingTable, Lexicon
from abbrank.training import TrainConfig, train

N_TOPICS = 25
WORDS_PER_TOPIC = 20
VOCAB_WORDS = N_TOPICS * WORDS_PER_TOPIC  # 500
OPTIONS_PER_SLOT = 10

_CONSONANTS = "bcdfghjklmnpqrstvwxz"
_VOWELS = "aeiou"


def synthetic_words(rng) -> list[str]:
    """500 distinct pronounceable alphabetic words."""
    words: set[str] = set()
    while len(words) < VOCAB_WORDS:
        length = int(rng.integers(4, 9))
        chars = []
        for i in range(length):
            pool = _CONSONANTS if i % 2 == 0 else _VOWELS
            chars.append(pool[int(rng.integers(len(pool)))])
        words.add("".join(chars))
    return sorted(words)


@dataclass
class SyntheticWorld:
    vocab: Vocabulary
    topics: list[list[str]]
    word_topic: dict[str, int]

    def sample_sentence(self, rng) -> AbbSentence:
        topic = int(rng.integers(N_TOPICS))
        length = int(rng.integers(8, 13))
        words = [self.topics[topic][int(rng.integers(WORDS_PER_TOPIC))]
                 for _ in range(length)]
        n_slots = int(rng.integers(1, 3))
        slot_word_idx = sorted(rng.choice(length, size=n_slots, replace=False))

        golds = [words[i] for i in slot_word_idx]
        for i in slot_word_idx:
            words[i] = "[ABB]"
        text = " ".join(words)
        tokens = [2] + [self.vocab.token_to_id[w] if w != "[ABB]" else ABB
                        for w in words]
        positions = [i for i, t in enumerate(tokens) if t == ABB]

        slots = []
        for pos, gold in zip(positions, golds):
            other_topics = rng.choice(
                [t for t in range(N_TOPICS) if t != topic],
                size=OPTIONS_PER_SLOT - 1, replace=False)
            distractors = [
                self.topics[t][int(rng.integers(WORDS_PER_TOPIC))]
                for t in other_topics
            ]
            slots.append(Slot(pos=pos, options=[gold] + distractors, gold=0))
        return AbbSentence(text=text, tokens=tokens, slots=slots)


def build_world(seed: int = 0) -> SyntheticWorld:
    rng = np.random.default_rng(seed)
    words = synthetic_words(rng)
    order = rng.permutation(VOCAB_WORDS)
    topics = [
        [words[order[t * WORDS_PER_TOPIC + i]] for i in range(WORDS_PER_TOPIC)]
        for t in range(N_TOPICS)
    ]
    vocab = Vocabulary(["[PAD]", "[UNK]", "[CLS]", "[ABB]"] + words)
    word_topic = {w: t for t, topic in enumerate(topics) for w in topic}
    return SyntheticWorld(vocab=vocab, topics=topics, word_topic=word_topic)


def build_splits(world: SyntheticWorld, n_train: int = 2000, n_val: int = 400,
                 seed: int = 1) -> tuple[DatasetSplit, DatasetSplit]:
    rng = np.random.default_rng(seed)
    train_sentences = [world.sample_sentence(rng) for _ in range(n_train)]
    val_sentences = [world.sample_sentence(rng) for _ in range(n_val)]
    return (DatasetSplit("train", train_sentences, seed=seed),
            DatasetSplit("val", val_sentences, seed=seed))


def reference_encoder(world: SyntheticWorld, seed: int = 2) -> Encoder:
    config = EncoderConfig(vocab_size=len(world.vocab), dim=64, layers=2,
                           heads=4, ff_dim=256, max_len=128)
    return Encoder(config, world.vocab, seed=seed)


def train_reference(encoder: Encoder, train_split: DatasetSplit,
                    val_split: DatasetSplit, epochs: int = 6,
                    learning_rate: float = 2e-3, seed: int = 3):
    config = TrainConfig(margin=0.8, scale=30.0, learning_rate=learning_rate,
                         epochs=epochs, batch_size=32, seed=seed)
    return train(config, train_split, encoder, val_split=val_split)


def option_lexicon(world: SyntheticWorld) -> Lexicon:
    """A synthetic 'contraction' lexicon so service lookups and the
    embedding table cover every vocabulary word."""
    entries = {}
    for topic_words in world.topics:
        for word in topic_words:
            entries.setdefault(word[:2], []).append((word, 1))
    for key in entries:
        entries[key] = sorted(entries[key], key=lambda kv: (-kv[1], kv[0]))
    return Lexicon("cont", entries, corpus_id="synthetic")


def embedding_table_for(world: SyntheticWorld, encoder: Encoder) -> EmbeddingTable:
    all_words = [w for topic in world.topics for w in topic]
    vectors = encoder.encode_options(sorted(all_words))
    return EmbeddingTable(encoder.dim, {
        w: v.astype(np.float32) for w, v in zip(sorted(all_words), vectors)
    })
