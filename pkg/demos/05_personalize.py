"""Walkthrough: feedback-driven personalization with a frozen base.

The base model matches options to the context's topic.  A new "domain"
disagrees: its correct expansion comes from the next topic over, so the
base model mid-ranks it.  Two hundred feedback clicks train only the
adapter (d*d + d parameters); the encoder and the option-embedding table
are hash-verified frozen, and held-out rank improves.

Run:  python3 demos/05_personalize.py  (about a minute on one core)
"""

import numpy as np

from abbrank import (
    AbbSentence,
    AdapterParams,
    DatasetSplit,
    Encoder,
    EncoderConfig,
    EmbeddingTable,
    FeedbackRecord,
    OptionVectorStore,
    Slot,
    TrainConfig,
    Vocabulary,
    personalize_train,
    rank_with_adapter,
    train,
)
from abbrank.encoder import ABB

N_TOPICS, WORDS_PER_TOPIC = 10, 8
rng = np.random.default_rng(0)
words = [f"{c}{v}{c2}" for c in "bdfgklmnpr" for v in "aeiou" for c2 in "bdfgklmnpr"]
rng.shuffle(words)
topics = [words[t * WORDS_PER_TOPIC:(t + 1) * WORDS_PER_TOPIC] for t in range(N_TOPICS)]
vocab = Vocabulary(["[PAD]", "[UNK]", "[CLS]", "[ABB]"]
                   + sorted(w for topic in topics for w in topic))


def sentence_for(topic, options, gold_index):
    length = int(rng.integers(6, 10))
    chosen = [topics[topic][int(rng.integers(WORDS_PER_TOPIC))] for _ in range(length)]
    chosen[int(rng.integers(length))] = "[ABB]"
    tokens = [2] + [vocab.token_to_id[w] if w != "[ABB]" else ABB for w in chosen]
    return AbbSentence(" ".join(chosen), tokens,
                       [Slot(tokens.index(ABB), options, gold_index)])


def base_example():
    topic = int(rng.integers(N_TOPICS))
    gold = topics[topic][int(rng.integers(WORDS_PER_TOPIC))]
    other = rng.choice([t for t in range(N_TOPICS) if t != topic], size=5, replace=False)
    distractors = [topics[t][int(rng.integers(WORDS_PER_TOPIC))] for t in other]
    return sentence_for(topic, [gold] + distractors, 0)


def domain_example():
    topic = int(rng.integers(N_TOPICS))
    trap = topics[topic][int(rng.integers(WORDS_PER_TOPIC))]
    gold = topics[(topic + 1) % N_TOPICS][int(rng.integers(WORDS_PER_TOPIC))]
    other = rng.choice([t for t in range(N_TOPICS)
                        if t not in (topic, (topic + 1) % N_TOPICS)],
                       size=4, replace=False)
    distractors = [topics[t][int(rng.integers(WORDS_PER_TOPIC))] for t in other]
    return sentence_for(topic, [trap, gold] + distractors, 1)


print("training the base model...")
encoder = Encoder(EncoderConfig(vocab_size=len(vocab), dim=32, layers=2,
                                heads=4, ff_dim=128, max_len=32), vocab, seed=1)
train(TrainConfig(margin=0.8, scale=30.0, learning_rate=3e-3, epochs=8,
                  batch_size=32, seed=2),
      DatasetSplit("base", [base_example() for _ in range(600)]), encoder)

all_words = sorted(w for topic in topics for w in topic)
table = EmbeddingTable(encoder.dim, {
    w: v.astype(np.float32) for w, v in zip(all_words, encoder.encode_options(all_words))
})
store = OptionVectorStore(table, encoder)
print(f"frozen table: {len(table)} options, hash {table.content_hash()[:12]}...")

feedback = []
for _ in range(200):
    s = domain_example()
    feedback.append(FeedbackRecord(sentence=s, slot_index=0,
                                   options=s.slots[0].options, chosen=1))
heldout = [domain_example() for _ in range(200)]


def avg_rank(adapter):
    return float(np.mean([
        rank_with_adapter(s, adapter, store)[0].order.index(s.slots[0].gold) + 1
        for s in heldout
    ]))


identity = AdapterParams.identity(encoder.dim)
pre = avg_rank(identity)
print(f"\nheld-out average gold rank before personalization: {pre:.2f}")

adapter = personalize_train(
    feedback, table, encoder,
    TrainConfig(margin=0.8, scale=30.0, learning_rate=2e-2, epochs=25,
                batch_size=32, seed=0))
post = avg_rank(adapter)
print(f"held-out average gold rank after  personalization: {post:.2f}")
print(f"encoder hash unchanged: {encoder.content_hash()[:12]}...  "
      f"table hash unchanged: {table.content_hash()[:12]}...")

sample = heldout[0]
print("\none held-out sentence:", sample.text)
for name, adp in [("identity", identity), ("personalized", adapter)]:
    ranked = rank_with_adapter(sample, adp, store)[0]
    top = [(sample.slots[0].options[i], round(s, 3))
           for i, s in zip(ranked.order[:3], ranked.scores[:3])]
    gold_pos = ranked.order.index(sample.slots[0].gold) + 1
    print(f"  {name:12} top-3: {top}   gold rank: {gold_pos}")
