"""Tests for the /v1 HTTP API."""

import pytest
from fastapi.testclient import TestClient

from abbrank.dataset import AbbSentence, Slot
from abbrank.encoder import ABB, Encoder, EncoderConfig, Vocabulary
from abbrank.lexicon import (
    build_abbreviation_lexicon,
    build_contraction_lexicon,
    build_embedding_table,
)
from abbrank.personalize import rank_with_adapter
from abbrank.service import (
    Profile,
    ServiceState,
    candidate_pool,
    create_app,
    load_feedback_records,
    parse_markers,
)

CORPUS = [
    "the doctor saw the patient at the trial",
    "the doctor saw the patient at the table",
    "a potent patent for the doctor",
    "the patient sat at the table",
    "trials are held at the World Court",
    "the World Court heard the patient",
    "he spoke for the United States of America",
    "the United States of America replied to the World Court",
]


@pytest.fixture(scope="module")
def artifacts():
    vocab = Vocabulary.build(CORPUS, size=64)
    config = EncoderConfig(vocab_size=len(vocab), dim=24, layers=1, heads=2,
                           ff_dim=32, max_len=32)
    encoder = Encoder(config, vocab, seed=1)
    cont = build_contraction_lexicon(CORPUS, corpus_id="svc")
    abb = build_abbreviation_lexicon(CORPUS, corpus_id="svc")
    table = build_embedding_table([cont, abb], encoder)
    return encoder, cont, abb, table


@pytest.fixture()
def app_state(artifacts, tmp_path):
    encoder, cont, abb, table = artifacts
    profile = Profile(
        profile_id="demo",
        encoder=encoder,
        cont_lexicon=cont,
        abb_lexicon=abb,
        table=table,
        feedback_path=tmp_path / "feedback.jsonl",
        adapter_path=tmp_path / "adapter.ckpt",
    )
    return ServiceState({"demo": profile})


@pytest.fixture()
def client(app_state):
    return TestClient(create_app(app_state))


class TestParseMarkers:
    def test_extracts_short_forms_in_order(self):
        text, forms = parse_markers("the doctor saw an [ABB:AS] [ABB:cd] at [ABB:tl]")
        assert forms == ["AS", "cd", "tl"]
        assert text == "the doctor saw an [ABB] [ABB] at [ABB]"

    def test_no_markers(self):
        text, forms = parse_markers("plain sentence")
        assert forms == [] and text == "plain sentence"


class TestCandidatePool:
    def test_merges_both_lexicons(self, artifacts, tmp_path):
        encoder, cont, abb, table = artifacts
        profile = Profile("p", encoder, cont, abb, table,
                          feedback_path=tmp_path / "f.jsonl")
        pool = candidate_pool(profile, "pt", limit=10)
        names = [name for name, _ in pool]
        assert "patient" in names

    def test_respects_limit(self, artifacts, tmp_path):
        encoder, cont, abb, table = artifacts
        profile = Profile("p", encoder, cont, abb, table,
                          feedback_path=tmp_path / "f.jsonl")
        assert len(candidate_pool(profile, "pt", limit=2)) <= 2


class TestExpand:
    def test_basic_expand(self, client):
        response = client.post("/v1/expand", json={
            "text": "the [ABB:dctr] saw the [ABB:ptnt]",
            "profile": "demo",
            "top_k": 3,
        })
        assert response.status_code == 200
        body = response.json()
        assert len(body["slots"]) == 2
        assert body["slots"][0]["short_form"] == "dctr"
        top = body["slots"][0]["candidates"]
        assert len(top) <= 3
        assert {"expansion", "score", "frequency"} <= set(top[0])
        assert "doctor" in [c["expansion"] for c in top]

    def test_zero_markers_ok(self, client):
        response = client.post("/v1/expand", json={
            "text": "no short forms here", "profile": "demo"})
        assert response.status_code == 200
        assert response.json()["slots"] == []

    def test_unknown_profile_404(self, client):
        response = client.post("/v1/expand", json={
            "text": "[ABB:pt]", "profile": "ghost"})
        assert response.status_code == 404

    def test_empty_pool_422(self, client):
        response = client.post("/v1/expand", json={
            "text": "a [ABB:qqqq] here", "profile": "demo"})
        assert response.status_code == 422

    def test_schema_violation_400(self, client):
        response = client.post("/v1/expand", json={"profile": "demo"})
        assert response.status_code == 400

    def test_client_supplied_options(self, client):
        response = client.post("/v1/expand", json={
            "text": "the [ABB:x]",
            "profile": "demo",
            "options": [["patient", "patent", "doctor"]],
        })
        assert response.status_code == 200
        names = [c["expansion"] for c in response.json()["slots"][0]["candidates"]]
        assert set(names) <= {"patient", "patent", "doctor"}

    def test_misaligned_options_400(self, client):
        response = client.post("/v1/expand", json={
            "text": "the [ABB:pt] and [ABB:dr]",
            "profile": "demo",
            "options": [["patient"]],
        })
        assert response.status_code == 400

    def test_scores_match_offline_ranking(self, client, app_state):
        profile = app_state.profiles["demo"]
        response = client.post("/v1/expand", json={
            "text": "the [ABB:ptnt] sat at the [ABB:tbl]",
            "profile": "demo",
            "top_k": 50,
        })
        body = response.json()

        marked, _ = parse_markers("the [ABB:ptnt] sat at the [ABB:tbl]")
        tokens = profile.encoder.tokenize(marked)
        positions = [i for i, t in enumerate(tokens) if t == ABB]
        pools = [candidate_pool(profile, sf, 50) for sf in ["ptnt", "tbl"]]
        sentence = AbbSentence(marked, tokens, [
            Slot(pos=p, options=[e for e, _ in pool], gold=None)
            for p, pool in zip(positions, pools)
        ])
        offline = rank_with_adapter(sentence, profile.adapter, profile.store)
        for slot_body, slot_rank, pool in zip(body["slots"], offline, pools):
            names = [e for e, _ in pool]
            assert [c["expansion"] for c in slot_body["candidates"]] == \
                [names[i] for i in slot_rank.order]
            assert [c["score"] for c in slot_body["candidates"]] == slot_rank.scores


class TestFeedback:
    def expand(self, client):
        response = client.post("/v1/expand", json={
            "text": "the [ABB:ptnt] was seen", "profile": "demo", "top_k": 5})
        return response.json()

    def test_feedback_recorded(self, client, app_state):
        body = self.expand(client)
        response = client.post("/v1/feedback", json={
            "request_id": body["request_id"], "slot": 0,
            "profile": "demo", "chosen": 1})
        assert response.status_code == 200
        records = load_feedback_records(app_state.profiles["demo"].feedback_path)
        assert len(records) == 1
        assert records[0].chosen == 1

    def test_unknown_request_404(self, client):
        response = client.post("/v1/feedback", json={
            "request_id": "nope", "slot": 0, "profile": "demo", "chosen": 0})
        assert response.status_code == 404

    def test_free_text_correction_appended(self, client, app_state):
        body = self.expand(client)
        response = client.post("/v1/feedback", json={
            "request_id": body["request_id"], "slot": 0,
            "profile": "demo", "chosen": "my private word"})
        assert response.status_code == 200
        records = load_feedback_records(app_state.profiles["demo"].feedback_path)
        record = records[-1]
        assert record.options[record.chosen] == "my private word"

    def test_chosen_index_out_of_range_400(self, client):
        body = self.expand(client)
        response = client.post("/v1/feedback", json={
            "request_id": body["request_id"], "slot": 0,
            "profile": "demo", "chosen": 999})
        assert response.status_code == 400

    def test_feedback_survives_restart(self, client, app_state):
        body = self.expand(client)
        client.post("/v1/feedback", json={
            "request_id": body["request_id"], "slot": 0,
            "profile": "demo", "chosen": 0})
        # A new app over the same artifacts replays the same log.
        fresh_client = TestClient(create_app(app_state))
        records = load_feedback_records(app_state.profiles["demo"].feedback_path)
        assert len(records) == 1
        response = fresh_client.post("/v1/personalize/train", json={
            "profile": "demo", "epochs": 1, "learning_rate": 1e-4})
        assert response.status_code == 200
        assert response.json()["feedback_count"] == 1


class TestPersonalizeEndpoint:
    def test_train_without_feedback_400(self, client):
        response = client.post("/v1/personalize/train", json={"profile": "demo"})
        assert response.status_code == 400

    def test_train_bumps_version_and_health_reflects(self, client):
        body = client.post("/v1/expand", json={
            "text": "the [ABB:ptnt] was seen", "profile": "demo"}).json()
        assert body["adapter_version"] == 0
        client.post("/v1/feedback", json={
            "request_id": body["request_id"], "slot": 0,
            "profile": "demo", "chosen": 0})
        response = client.post("/v1/personalize/train", json={
            "profile": "demo", "epochs": 2, "learning_rate": 1e-3})
        assert response.status_code == 200
        assert response.json()["adapter_version"] == 1

        health = client.get("/v1/health").json()
        assert health["profiles"]["demo"]["adapter_version"] == 1

        after = client.post("/v1/expand", json={
            "text": "the [ABB:ptnt] was seen", "profile": "demo"}).json()
        assert after["adapter_version"] == 1

    def test_conflict_while_training(self, client, app_state):
        profile = app_state.profiles["demo"]
        assert profile.training_lock.acquire(blocking=False)
        try:
            response = client.post("/v1/personalize/train", json={"profile": "demo"})
            assert response.status_code == 409
        finally:
            profile.training_lock.release()


class TestHealthAndStats:
    def test_health(self, client):
        body = client.get("/v1/health").json()
        assert body["status"] == "ok"
        assert "demo" in body["profiles"]
        assert len(body["profiles"]["demo"]["encoder_hash"]) == 64

    def test_lexicon_stats(self, client):
        body = client.get("/v1/lexicon/stats", params={"profile": "demo"}).json()
        assert body["contractions"]["key_count"] > 0
        assert body["abbreviations"]["key_count"] > 0

    def test_stats_unknown_profile(self, client):
        response = client.get("/v1/lexicon/stats", params={"profile": "ghost"})
        assert response.status_code == 404
