"""Tests for dataset synthesis and JSON-lines serialization."""

import json

import numpy as np
import pytest

from abbrank.dataset import (
    DatasetSchemaError,
    eligible_for_contraction,
    export_split,
    import_split,
    make_abbreviation_example,
    make_contraction_example,
    make_mixed_example,
    synthesize_split,
)
from abbrank.encoder import ABB, CLS, Vocabulary
from abbrank.lexicon import build_abbreviation_lexicon, build_contraction_lexicon
from abbrank.shortforms import contractions_of, extract_abbreviations, normalize_word

CORPUS = [
    "the doctor saw the patient at the trial",
    "a potent patent for the doctor",
    "the housekeeper told me that Hermione was in her room",
    "they were brought to the World Court",
    "he visited the United States of America",
    "the World Court ruled for the United States of America",
    "when the doctor got to the house the housekeeper spoke",
]


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.build(CORPUS, size=64)


@pytest.fixture(scope="module")
def cont_lexicon():
    return build_contraction_lexicon(CORPUS, corpus_id="fixture")


@pytest.fixture(scope="module")
def abb_lexicon():
    return build_abbreviation_lexicon(CORPUS, corpus_id="fixture")


class TestEligibility:
    def test_short_words_excluded(self):
        assert not eligible_for_contraction("am")
        assert not eligible_for_contraction("I")

    def test_degenerate_skeleton_excluded(self):
        # "eye" devowels to "y" (length 1).
        assert not eligible_for_contraction("eye")

    def test_normal_word_eligible(self):
        assert eligible_for_contraction("doctor")
        assert eligible_for_contraction("Housekeeper,")


class TestMakeContractionExample:
    def test_gold_first_and_key_membership(self, cont_lexicon, vocab):
        rng = np.random.default_rng(0)
        example = make_contraction_example(
            "the doctor saw the patient at the trial", cont_lexicon, vocab,
            rate=0.9, rng=rng)
        assert example.slots, "high rate should select at least one word"
        for slot in example.slots:
            assert example.tokens[slot.pos] == ABB
            assert slot.gold == 0
            gold = slot.options[0]
            assert any(gold in dict(cont_lexicon.entries[k])
                       for k in contractions_of(gold))

    def test_zero_selection_keeps_tokens(self, cont_lexicon, vocab):
        rng = np.random.default_rng(1)
        example = make_contraction_example(
            "the doctor saw the patient", cont_lexicon, vocab,
            rate=1e-12, rng=rng)
        assert example.slots == []
        assert example.tokens[0] == CLS
        assert ABB not in example.tokens

    def test_seeded_determinism(self, cont_lexicon, vocab):
        sentence = "the doctor saw the patient at the trial"
        a = make_contraction_example(sentence, cont_lexicon, vocab, rate=0.5,
                                     rng=np.random.default_rng(42))
        b = make_contraction_example(sentence, cont_lexicon, vocab, rate=0.5,
                                     rng=np.random.default_rng(42))
        assert a == b

    def test_identity_key_never_sampled(self, cont_lexicon, vocab):
        # With the full devoweled word excluded, no slot can show options
        # drawn from the identity key only; gold must still re-generate a
        # non-identity key that the slot's distractors share.
        rng = np.random.default_rng(3)
        for _ in range(20):
            example = make_contraction_example(
                "the doctor saw the patient at the trial", cont_lexicon, vocab,
                rate=0.8, rng=rng)
            for slot in example.slots:
                gold = slot.options[0]
                assert len(slot.options) == len(set(slot.options))

    def test_rate_bounds_enforced(self, cont_lexicon, vocab):
        with pytest.raises(ValueError):
            make_contraction_example("the doctor", cont_lexicon, vocab,
                                     rate=1.5, rng=np.random.default_rng(0))

    def test_existing_marker_rejected(self, cont_lexicon, vocab):
        with pytest.raises(ValueError):
            make_contraction_example("already has [ABB] here", cont_lexicon,
                                     vocab, rate=0.5,
                                     rng=np.random.default_rng(0))


class TestMakeAbbreviationExample:
    def test_world_court(self, abb_lexicon, vocab):
        example = make_abbreviation_example(
            "they were brought to the World Court", abb_lexicon, vocab)
        assert len(example.slots) == 1
        slot = example.slots[0]
        assert example.tokens[slot.pos] == ABB
        assert slot.options[0] == "World Court"
        assert "[ABB]" in example.text

    def test_no_capitalized_runs(self, abb_lexicon, vocab):
        example = make_abbreviation_example("nothing capitalized here",
                                            abb_lexicon, vocab)
        assert example.slots == []
        assert example.text == "nothing capitalized here"

    def test_no_duplicate_gold_in_options(self, abb_lexicon, vocab):
        example = make_abbreviation_example(
            "he visited the United States of America", abb_lexicon, vocab)
        options = example.slots[0].options
        assert options.count("United States of America") == 1


class TestMakeMixedExample:
    def test_contraction_then_abbreviation(self, cont_lexicon, abb_lexicon, vocab):
        rng = np.random.default_rng(5)
        example = make_mixed_example(
            "the doctor was brought to the World Court", cont_lexicon,
            abb_lexicon, vocab, rate=0.6, rng=rng)
        n_markers = example.text.count("[ABB]")
        assert n_markers == len(example.slots)
        positions = [i for i, t in enumerate(example.tokens) if t == ABB]
        assert positions == [s.pos for s in example.slots]
        assert positions == sorted(positions)

    def test_slot_order_is_left_to_right(self, cont_lexicon, abb_lexicon, vocab):
        # Force every eligible word to be selected: slots then interleave
        # around the abbreviation slot in text order.
        rng = np.random.default_rng(9)
        example = make_mixed_example(
            "the housekeeper went to the World Court yesterday evening",
            cont_lexicon, abb_lexicon, vocab, rate=0.97, rng=rng)
        golds = [s.options[0] for s in example.slots]
        if "World Court" in golds:
            # Words before the phrase must appear before it in slot order.
            wc_index = golds.index("World Court")
            for i, gold in enumerate(golds):
                if gold in ("housekeeper", "went"):
                    assert i < wc_index
                if gold in ("yesterday", "evening"):
                    assert i > wc_index


class TestSynthesizeSplit:
    def test_deterministic_and_drops_empty(self, cont_lexicon, abb_lexicon, vocab):
        a = synthesize_split(CORPUS, "train", vocab, cont_lexicon, abb_lexicon,
                             rate=0.4, seed=11)
        b = synthesize_split(CORPUS, "train", vocab, cont_lexicon, abb_lexicon,
                             rate=0.4, seed=11)
        assert a == b
        assert all(s.slots for s in a.sentences)

    def test_different_seed_changes_output(self, cont_lexicon, vocab):
        a = synthesize_split(CORPUS, "t", vocab, cont_lexicon, rate=0.4, seed=1)
        b = synthesize_split(CORPUS, "t", vocab, cont_lexicon, rate=0.4, seed=2)
        assert a.sentences != b.sentences

    def test_gold_membership_invariant(self, cont_lexicon, abb_lexicon, vocab):
        split = synthesize_split(CORPUS, "train", vocab, cont_lexicon,
                                 abb_lexicon, rate=0.5, seed=3)
        for sentence in split:
            for slot in sentence.slots:
                gold = slot.options[0]
                if gold == gold.lower():
                    assert normalize_word(gold) == gold
                    keys = contractions_of(gold)
                    assert any(gold in dict(cont_lexicon.entries.get(k, []))
                               for k in keys)
                else:
                    found = extract_abbreviations(gold)
                    assert len(found) == 1 and found[0].expansion == gold


class TestSerialization:
    def make_split(self, cont_lexicon, abb_lexicon, vocab):
        return synthesize_split(CORPUS, "round", vocab, cont_lexicon,
                                abb_lexicon, rate=0.5, seed=21)

    def test_round_trip(self, cont_lexicon, abb_lexicon, vocab, tmp_path):
        split = self.make_split(cont_lexicon, abb_lexicon, vocab)
        path = tmp_path / "round.jsonl"
        export_split(split, path)
        loaded = import_split(path, name="round")
        assert loaded.sentences == split.sentences
        assert loaded.seed == split.seed

    def test_byte_identical_reexport(self, cont_lexicon, abb_lexicon, vocab, tmp_path):
        split = self.make_split(cont_lexicon, abb_lexicon, vocab)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        export_split(split, p1)
        export_split(import_split(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_schema_violation_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"text": "x [ABB]", "tokens": [2, 3], "slots":
                           [{"pos": 1, "options": ["a"], "gold": 0}], "seed": 0})
        bad = json.dumps({"text": "x", "tokens": [2, 9],
                          "slots": [{"pos": 1, "options": ["a"], "gold": 0}],
                          "seed": 0})
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(DatasetSchemaError, match="line 2"):
            import_split(path)

    def test_gold_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "bad2.jsonl"
        record = {"text": "x [ABB]", "tokens": [2, 3],
                  "slots": [{"pos": 1, "options": ["a"], "gold": 5}], "seed": 0}
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(DatasetSchemaError, match="gold"):
            import_split(path)

    def test_null_gold_allowed(self, tmp_path):
        record = {"text": "x [ABB]", "tokens": [2, 3],
                  "slots": [{"pos": 1, "options": ["a", "b"], "gold": None}],
                  "seed": 0}
        path = tmp_path / "null.jsonl"
        path.write_text(json.dumps(record) + "\n")
        split = import_split(path)
        assert split.sentences[0].slots[0].gold is None
