"""Stand up a throwaway expansion service for frontend integration tests.

Builds small artifacts in a temp directory, mounts one profile, and
serves the /v1 API on the requested port until killed.

Usage: python3 scripts/bootstrap_service.py --port 8931
"""

import argparse
import tempfile
from pathlib import Path

import uvicorn

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
    "the patient trusted the doctor",
    "trials are held at the World Court",
    "the World Court heard the patient",
]


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, required=True)
    args = parser.parse_args()

    vocab = Vocabulary.build(CORPUS, size=64)
    cont = build_contraction_lexicon(CORPUS, corpus_id="frontend-fixture")
    abb = build_abbreviation_lexicon(CORPUS, corpus_id="frontend-fixture")

    workdir = Path(tempfile.mkdtemp(prefix="abbrank-frontend-"))
    profiles = {}
    # Two independently initialized profiles: the same sentence ranks
    # differently under each, like two domains with their own models.
    for profile_id, seed in (("default", 1), ("newsroom", 9)):
        encoder = Encoder(
            EncoderConfig(vocab_size=len(vocab), dim=24, layers=1, heads=2,
                          ff_dim=48, max_len=32),
            vocab, seed=seed,
        )
        table = build_embedding_table([cont, abb], encoder)
        profiles[profile_id] = Profile(
            profile_id=profile_id,
            encoder=encoder,
            cont_lexicon=cont,
            abb_lexicon=abb,
            table=table,
            feedback_path=workdir / f"{profile_id}-feedback.jsonl",
            adapter_path=workdir / f"{profile_id}-adapter.ckpt",
        )
    app = create_app(ServiceState(profiles))
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
