"""Walkthrough: the /v1 HTTP API end to end, in process.

Builds artifacts from a toy corpus, mounts them in the service, and runs
the interactive loop: expand -> feedback -> personalize -> expand again.

Run:  python3 demos/06_service_walkthrough.py
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from abbrank import (
    Encoder,
    EncoderConfig,
    Vocabulary,
    build_abbreviation_lexicon,
    build_contraction_lexicon,
    build_embedding_table,
)
from abbrank.service import Profile, ServiceState, create_app

CORPUS = [
    "the doctor saw the patient at the trial",
    "the doctor saw the patient at the table",
    "a potent patent for the doctor",
    "the patient sat at the table",
    "trials are held at the World Court",
    "the World Court heard the patient",
]

vocab = Vocabulary.build(CORPUS, size=64)
encoder = Encoder(EncoderConfig(vocab_size=len(vocab), dim=24, layers=1,
                                heads=2, ff_dim=48, max_len=32), vocab, seed=1)
cont = build_contraction_lexicon(CORPUS, corpus_id="demo")
abb = build_abbreviation_lexicon(CORPUS, corpus_id="demo")
table = build_embedding_table([cont, abb], encoder)

tmp = tempfile.mkdtemp()
profile = Profile(
    profile_id="demo",
    encoder=encoder,
    cont_lexicon=cont,
    abb_lexicon=abb,
    table=table,
    feedback_path=Path(tmp) / "feedback.jsonl",
    adapter_path=Path(tmp) / "adapter.ckpt",
)
client = TestClient(create_app(ServiceState({"demo": profile})))

print("=== GET /v1/health ===")
print(json.dumps(client.get("/v1/health").json(), indent=2)[:300], "...")

print("\n=== POST /v1/expand ===")
body = client.post("/v1/expand", json={
    "text": "the [ABB:dctr] saw the [ABB:ptnt]",
    "profile": "demo",
    "top_k": 3,
}).json()
print("request id:", body["request_id"], " adapter version:", body["adapter_version"])
for slot in body["slots"]:
    print(f"  [ABB:{slot['short_form']}] ->")
    for c in slot["candidates"]:
        print(f"      {c['expansion']!r:12} score={c['score']:.4f} freq={c['frequency']}")

print("\n=== POST /v1/feedback (choose 'patient' for slot 1) ===")
chosen = next(i for i, c in enumerate(
    body["slots"][1]["candidates"]) if c["expansion"] == "patient")
print(client.post("/v1/feedback", json={
    "request_id": body["request_id"], "slot": 1,
    "profile": "demo", "chosen": chosen,
}).json())

print("\n=== POST /v1/personalize/train ===")
print(client.post("/v1/personalize/train", json={
    "profile": "demo", "epochs": 10, "learning_rate": 5e-3,
}).json())

print("\n=== Expand again: adapter version bumped, rankings may move ===")
after = client.post("/v1/expand", json={
    "text": "the [ABB:dctr] saw the [ABB:ptnt]",
    "profile": "demo",
    "top_k": 3,
}).json()
print("adapter version:", after["adapter_version"])
for slot in after["slots"]:
    names = [c["expansion"] for c in slot["candidates"]]
    print(f"  [ABB:{slot['short_form']}] -> {names}")

print("\n=== GET /v1/lexicon/stats ===")
print(json.dumps(client.get("/v1/lexicon/stats",
                            params={"profile": "demo"}).json(), indent=2))
