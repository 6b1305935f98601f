"""HTTP service for interactive expansion, feedback, and personalization.

The /v1 API serves ranked expansions for ``[ABB:<shortform>]`` markers,
captures human feedback durably (JSON-lines log per profile), and runs
adapter-only training on demand, swapping the profile's adapter
atomically.  Expansion scoring goes through exactly the same code path
as offline ranking, so online and offline scores agree to the last bit.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .dataset import AbbSentence, Slot
from .encoder import ABB, ABB_TOKEN, Encoder
from .lexicon import EmbeddingTable, Lexicon
from .personalize import (
    AdapterParams,
    FeedbackRecord,
    OptionVectorStore,
    load_adapter,
    personalize_train,
    rank_with_adapter,
    save_adapter,
)
from .shortforms import normalize_word
from .training import TrainConfig

MARKER_RE = re.compile(r"\[ABB:([^\]]+)\]")

DEFAULT_TOP_K = 5
DEFAULT_POOL_LIMIT = 50
DEFAULT_RETENTION_SECONDS = 24 * 3600


class ProfileConfigError(ValueError):
    """Profile artifacts missing or failing their hash checks."""


# -- request/response schemas ----------------------------------------------

class ExpandRequest(BaseModel):
    text: str
    profile: str
    top_k: Optional[int] = Field(default=None, ge=1)
    pool_limit: Optional[int] = Field(default=None, ge=1)
    options: Optional[list[list[str]]] = None


class Candidate(BaseModel):
    expansion: str
    score: float
    frequency: int


class ExpandSlot(BaseModel):
    index: int
    short_form: Optional[str]
    candidates: list[Candidate]


class ExpandResponse(BaseModel):
    request_id: str
    profile: str
    adapter_version: int
    slots: list[ExpandSlot]


class FeedbackRequest(BaseModel):
    request_id: str
    slot: int = Field(ge=0)
    profile: str
    chosen: Union[int, str]
    source: str = "user"


class PersonalizeRequest(BaseModel):
    profile: str
    epochs: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=2e-2, gt=0)
    batch_size: int = Field(default=32, ge=1)
    margin: float = 0.8
    scale: float = 30.0
    seed: int = 0


# -- profile plumbing --------------------------------------------------------

@dataclass
class CachedRequest:
    timestamp: float
    text: str
    tokens: list[int]
    slot_positions: list[int]
    slot_options: list[list[str]]


@dataclass
class Profile:
    profile_id: str
    encoder: Encoder
    cont_lexicon: Lexicon
    abb_lexicon: Lexicon
    table: EmbeddingTable
    feedback_path: Path
    adapter: AdapterParams = None  # type: ignore[assignment]
    adapter_version: int = 0
    adapter_path: Optional[Path] = None
    top_k_default: int = DEFAULT_TOP_K
    pool_limit_default: int = DEFAULT_POOL_LIMIT
    store: OptionVectorStore = dc_field(init=False)
    training_lock: threading.Lock = dc_field(default_factory=threading.Lock)
    requests: dict[str, CachedRequest] = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.adapter is None:
            self.adapter = AdapterParams.identity(self.encoder.dim)
        self.store = OptionVectorStore(self.table, self.encoder)

    def snapshot(self) -> tuple[AdapterParams, int]:
        """One atomic read of (adapter, version) for a whole request."""
        return self.adapter, self.adapter_version

    def swap_adapter(self, adapter: AdapterParams) -> int:
        self.adapter = adapter
        self.adapter_version += 1
        return self.adapter_version


@dataclass
class ProfileConfig:
    profile_id: str
    encoder_path: Path
    cont_lexicon_path: Path
    abb_lexicon_path: Path
    table_path: Path
    feedback_path: Path
    adapter_path: Optional[Path] = None
    top_k_default: int = DEFAULT_TOP_K


def load_profile(config: ProfileConfig) -> Profile:
    """Load artifacts from disk, verifying the adapter's recorded hashes
    against the encoder and table it will be applied to."""
    for path in (config.encoder_path, config.cont_lexicon_path,
                 config.abb_lexicon_path, config.table_path):
        if not Path(path).exists():
            raise ProfileConfigError(f"{config.profile_id}: missing artifact {path}")
    encoder = Encoder.load(config.encoder_path)
    table = EmbeddingTable.load(config.table_path)
    adapter = None
    version = 0
    if config.adapter_path and Path(config.adapter_path).exists():
        adapter, metadata = load_adapter(config.adapter_path)
        if metadata.get("base_model_hash") != encoder.content_hash():
            raise ProfileConfigError(
                f"{config.profile_id}: adapter was trained against a different encoder"
            )
        if metadata.get("embedding_table_hash") != table.content_hash():
            raise ProfileConfigError(
                f"{config.profile_id}: adapter was trained against a different table"
            )
        version = int(metadata.get("version", 1))
    return Profile(
        profile_id=config.profile_id,
        encoder=encoder,
        cont_lexicon=Lexicon.load(config.cont_lexicon_path),
        abb_lexicon=Lexicon.load(config.abb_lexicon_path),
        table=table,
        feedback_path=Path(config.feedback_path),
        adapter=adapter,
        adapter_version=version,
        adapter_path=Path(config.adapter_path) if config.adapter_path else None,
        top_k_default=config.top_k_default,
    )


def discover_profiles(home: str | Path) -> dict[str, Profile]:
    """Load every profile directory under ``<home>/profiles``.

    Expected files per profile: encoder.ckpt, cont.lex, abb.lex,
    table.abbe; optional adapter.ckpt; feedback.jsonl is created on use.
    """
    home = Path(home)
    profiles = {}
    root = home / "profiles"
    if not root.is_dir():
        return profiles
    for directory in sorted(root.iterdir()):
        if not directory.is_dir():
            continue
        config = ProfileConfig(
            profile_id=directory.name,
            encoder_path=directory / "encoder.ckpt",
            cont_lexicon_path=directory / "cont.lex",
            abb_lexicon_path=directory / "abb.lex",
            table_path=directory / "table.abbe",
            feedback_path=directory / "feedback.jsonl",
            adapter_path=directory / "adapter.ckpt",
        )
        profiles[directory.name] = load_profile(config)
    return profiles


def parse_markers(text: str) -> tuple[str, list[str]]:
    """Replace ``[ABB:xyz]`` markers with the [ABB] token; return the
    rewritten text and the short forms in order."""
    short_forms = MARKER_RE.findall(text)
    return MARKER_RE.sub(ABB_TOKEN, text), short_forms


def candidate_pool(profile: Profile, short_form: str,
                   limit: int) -> list[tuple[str, int]]:
    """Merge contraction and abbreviation lookups for a short form,
    ordered by frequency descending then alphabetically."""
    key = normalize_word(short_form)
    merged: dict[str, int] = {}
    for lexicon in (profile.cont_lexicon, profile.abb_lexicon):
        for expansion, count in lexicon.lookup_with_counts(key, limit):
            merged[expansion] = max(merged.get(expansion, 0), count)
    ranked = sorted(merged.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:limit]


def load_feedback_records(path: str | Path) -> list[FeedbackRecord]:
    """Replay the durable feedback log into training records."""
    records = []
    path = Path(path)
    if not path.exists():
        return records
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            sentence = AbbSentence(
                text=entry.get("text", ""),
                tokens=entry["tokens"],
                slots=[Slot(pos=entry["pos"], options=entry["options"],
                            gold=entry["chosen"])],
            )
            records.append(FeedbackRecord(
                sentence=sentence,
                slot_index=0,
                options=entry["options"],
                chosen=entry["chosen"],
                timestamp=entry.get("ts", 0.0),
                source=entry.get("source", "user"),
            ))
    return records


class ServiceState:
    def __init__(self, profiles: dict[str, Profile],
                 retention_seconds: float = DEFAULT_RETENTION_SECONDS):
        self.profiles = profiles
        self.retention_seconds = retention_seconds


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="abbrank", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def schema_violation(_request: Request, exc: RequestValidationError):
        return _error(400, f"schema violation: {exc.errors()}")

    def get_profile(profile_id: str) -> Profile | None:
        return state.profiles.get(profile_id)

    @app.post("/v1/expand")
    def expand(body: ExpandRequest):
        profile = get_profile(body.profile)
        if profile is None:
            return _error(404, f"unknown profile {body.profile!r}")
        adapter, adapter_version = profile.snapshot()

        marked_text, short_forms = parse_markers(body.text)
        top_k = body.top_k or profile.top_k_default
        pool_limit = body.pool_limit or profile.pool_limit_default

        if body.options is not None and len(body.options) != len(short_forms):
            return _error(400, "options list must align with [ABB:...] markers")

        tokens = profile.encoder.tokenize(marked_text)
        positions = [i for i, t in enumerate(tokens) if t == ABB]
        if len(positions) != len(short_forms):
            return _error(400, "marker parsing failed to align with tokens")

        pools: list[list[tuple[str, int]]] = []
        for index, short_form in enumerate(short_forms):
            if body.options is not None:
                pool = [(o, _frequency_of(profile, o)) for o in body.options[index]]
            else:
                pool = candidate_pool(profile, short_form, pool_limit)
            if not pool:
                return _error(422, f"slot {index}: empty candidate pool "
                                   f"for short form {short_form!r}")
            pools.append(pool)

        response_slots = []
        if short_forms:
            sentence = AbbSentence(
                text=marked_text,
                tokens=tokens,
                slots=[Slot(pos=p, options=[e for e, _ in pool], gold=None)
                       for p, pool in zip(positions, pools)],
            )
            ranked = rank_with_adapter(sentence, adapter, profile.store)
            for index, (slot_rank, pool) in enumerate(zip(ranked, pools)):
                frequency = dict(pool)
                candidates = [
                    Candidate(
                        expansion=pool[opt_index][0],
                        score=score,
                        frequency=frequency[pool[opt_index][0]],
                    )
                    for opt_index, score in zip(slot_rank.order[:top_k],
                                                slot_rank.scores[:top_k])
                ]
                response_slots.append(ExpandSlot(
                    index=index,
                    short_form=short_forms[index],
                    candidates=candidates,
                ))

        request_id = uuid.uuid4().hex
        _prune_requests(profile, state.retention_seconds)
        profile.requests[request_id] = CachedRequest(
            timestamp=time.time(),
            text=marked_text,
            tokens=tokens,
            slot_positions=positions,
            slot_options=[[e for e, _ in pool] for pool in pools],
        )
        return ExpandResponse(
            request_id=request_id,
            profile=body.profile,
            adapter_version=adapter_version,
            slots=response_slots,
        )

    @app.post("/v1/feedback")
    def feedback(body: FeedbackRequest):
        profile = get_profile(body.profile)
        if profile is None:
            return _error(404, f"unknown profile {body.profile!r}")
        cached = profile.requests.get(body.request_id)
        if cached is None or \
                time.time() - cached.timestamp > state.retention_seconds:
            return _error(404, f"unknown or expired request id {body.request_id!r}")
        if not 0 <= body.slot < len(cached.slot_positions):
            return _error(400, f"slot {body.slot} out of range")

        options = list(cached.slot_options[body.slot])
        if isinstance(body.chosen, int):
            if not 0 <= body.chosen < len(options):
                return _error(400, f"chosen index {body.chosen} out of range")
            chosen = body.chosen
        else:
            # Free-text correction: append when not already an option.
            if body.chosen in options:
                chosen = options.index(body.chosen)
            else:
                options.append(body.chosen)
                chosen = len(options) - 1

        entry = {
            "ts": time.time(),
            "request_id": body.request_id,
            "slot": body.slot,
            "text": cached.text,
            "tokens": cached.tokens,
            "pos": cached.slot_positions[body.slot],
            "options": options,
            "chosen": chosen,
            "source": body.source,
        }
        profile.feedback_path.parent.mkdir(parents=True, exist_ok=True)
        with open(profile.feedback_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
            handle.flush()
        return {"status": "recorded", "profile": body.profile,
                "request_id": body.request_id, "slot": body.slot, "chosen": chosen}

    @app.post("/v1/personalize/train")
    def personalize(body: PersonalizeRequest):
        profile = get_profile(body.profile)
        if profile is None:
            return _error(404, f"unknown profile {body.profile!r}")
        if not profile.training_lock.acquire(blocking=False):
            return _error(409, f"training already in progress for {body.profile!r}")
        try:
            records = load_feedback_records(profile.feedback_path)
            if not records:
                return _error(400, f"no feedback recorded for {body.profile!r}")
            config = TrainConfig(
                margin=body.margin, scale=body.scale,
                learning_rate=body.learning_rate, epochs=body.epochs,
                batch_size=body.batch_size, seed=body.seed,
            )
            adapter = personalize_train(records, profile.table, profile.encoder,
                                        config, adapter=profile.adapter)
            version = profile.swap_adapter(adapter)
            if profile.adapter_path is not None:
                save_adapter(adapter, profile.adapter_path,
                             encoder_hash=profile.encoder.content_hash(),
                             table_hash=profile.table.content_hash(),
                             version=version)
            return {"status": "trained", "profile": body.profile,
                    "adapter_version": version, "feedback_count": len(records)}
        finally:
            profile.training_lock.release()

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "profiles": {
                pid: {
                    "adapter_version": p.adapter_version,
                    "encoder_hash": p.encoder.content_hash(),
                    "table_hash": p.table.content_hash(),
                }
                for pid, p in state.profiles.items()
            },
        }

    @app.get("/v1/lexicon/stats")
    def lexicon_stats(profile: str):
        prof = get_profile(profile)
        if prof is None:
            return _error(404, f"unknown profile {profile!r}")
        return {
            "profile": profile,
            "contractions": prof.cont_lexicon.stats().as_dict(),
            "abbreviations": prof.abb_lexicon.stats().as_dict(),
        }

    return app


def _frequency_of(profile: Profile, expansion: str) -> int:
    """Corpus frequency of a client-supplied option, when known."""
    for lexicon in (profile.cont_lexicon, profile.abb_lexicon):
        for options in ([lexicon.entries.get(k, [])
                         for k in _keys_of(lexicon, expansion)]):
            for candidate, count in options:
                if candidate == expansion:
                    return count
    return 0


def _keys_of(lexicon: Lexicon, expansion: str) -> list[str]:
    # Frequency recovery only; a miss just reports 0.
    from .shortforms import contractions_of, extract_abbreviations

    if lexicon.kind == "cont":
        return sorted(contractions_of(normalize_word(expansion)))
    found = extract_abbreviations(expansion)
    return [found[0].key] if found else []


def _prune_requests(profile: Profile, retention_seconds: float) -> None:
    cutoff = time.time() - retention_seconds
    stale = [rid for rid, req in profile.requests.items()
             if req.timestamp < cutoff]
    for rid in stale:
        del profile.requests[rid]
