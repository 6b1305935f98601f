"""Command-line surface for the offline pipeline.

Every producing command writes a ``<out>.manifest.json`` recording the
package version, resolved configuration, seeds, and content hashes of
inputs and outputs, so runs can be verified across machines.  Options
may also come from a TOML config file; when a key is set both ways with
different values the command errors unless ``--force``, in which case
the flag wins.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path

import click

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version specific
    import tomli as tomllib

from . import __version__
from .dataset import export_split, import_split, synthesize_split
from .encoder import Encoder, EncoderConfig, Vocabulary
from .lexicon import (
    CorpusReadError,
    EmbeddingTable,
    Lexicon,
    build_abbreviation_lexicon,
    build_contraction_lexicon,
    build_embedding_table,
    iter_corpus_file,
)
from .personalize import (
    OptionVectorStore,
    load_adapter,
    personalize_train,
    rank_with_adapter,
    save_adapter,
)
from .service import (
    ServiceState,
    create_app,
    discover_profiles,
    load_feedback_records,
)
from .training import (
    FINETUNE_LEARNING_RATE,
    TrainConfig,
    encoder_scorer,
    evaluate,
    train as run_training,
)

EXIT_BAD_INPUT = 2


def hash_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_path: str | Path, command: str, config: dict,
                   inputs: list[str | Path], outputs: list[str | Path]) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": config,
        "inputs": {str(p): hash_file(p) for p in inputs},
        "outputs": {str(p): hash_file(p) for p in outputs},
    }
    manifest_path = Path(str(out_path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")


def apply_config_file(ctx: click.Context, config_path: str | None,
                      section: str, force: bool) -> dict:
    """Merge a TOML section under the click flags.

    Explicit flags that disagree with the file are an error without
    ``--force``; unset flags take the file's value.
    """
    if not config_path:
        return {k: v for k, v in ctx.params.items()
                if k not in ("config", "force")}
    with open(config_path, "rb") as handle:
        file_config = tomllib.load(handle).get(section, {})
    resolved = {}
    for name, value in ctx.params.items():
        if name in ("config", "force"):
            continue
        source = ctx.get_parameter_source(name)
        from_flag = source == click.core.ParameterSource.COMMANDLINE
        if name in file_config:
            if from_flag and file_config[name] != value:
                if not force:
                    raise click.ClickException(
                        f"--{name.replace('_', '-')}={value!r} conflicts with "
                        f"config file value {file_config[name]!r}; pass --force "
                        f"to let the flag win"
                    )
                resolved[name] = value
            elif from_flag:
                resolved[name] = value
            else:
                resolved[name] = file_config[name]
        else:
            resolved[name] = value
    return resolved


@click.group()
@click.version_option(version=__version__)
def main():
    """Short-form expansion pipeline."""


@main.command("build-lexicon")
@click.option("--corpus", required=True, type=click.Path(), help="Corpus text file.")
@click.option("--kind", type=click.Choice(["cont", "abb"]), required=True)
@click.option("--out", required=True, type=click.Path())
def build_lexicon(corpus, kind, out):
    """Build a contraction or abbreviation lexicon from a corpus."""
    builder = build_contraction_lexicon if kind == "cont" else build_abbreviation_lexicon
    try:
        lexicon = builder(iter_corpus_file(corpus), corpus_id=str(corpus))
    except CorpusReadError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    lexicon.save(out)
    write_manifest(out, "build-lexicon", {"kind": kind},
                   inputs=[corpus] if Path(corpus).exists() else [], outputs=[out])
    click.echo(json.dumps(lexicon.stats().as_dict(), indent=2))


@main.command("build-vocab")
@click.option("--corpus", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--size", default=8192, show_default=True)
def build_vocab(corpus, out, size):
    """Derive the encoder vocabulary (top tokens plus reserved ids)."""
    try:
        vocab = Vocabulary.build(iter_corpus_file(corpus), size=size)
    except CorpusReadError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    vocab.save(out)
    write_manifest(out, "build-vocab", {"size": size}, inputs=[corpus], outputs=[out])
    click.echo(f"vocabulary of {len(vocab)} tokens written to {out}")


@main.command("build-dataset")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--cont-lexicon", type=click.Path(exists=True))
@click.option("--abb-lexicon", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--name", default="train", show_default=True)
@click.option("--rate", default=0.15, show_default=True,
              help="Per-word contraction selection probability.")
@click.option("--seed", default=0, show_default=True)
@click.option("--max-options", default=50, show_default=True)
@click.option("--max-tokens", default=128, show_default=True)
def build_dataset(corpus, vocab_path, cont_lexicon, abb_lexicon, out, name,
                  rate, seed, max_options, max_tokens):
    """Synthesize [ABB] training data from clean text."""
    if not cont_lexicon and not abb_lexicon:
        raise click.ClickException("need --cont-lexicon and/or --abb-lexicon")
    vocab = Vocabulary.load(vocab_path)
    cont = Lexicon.load(cont_lexicon) if cont_lexicon else None
    abb = Lexicon.load(abb_lexicon) if abb_lexicon else None
    split = synthesize_split(
        iter_corpus_file(corpus), name, vocab, cont_lexicon=cont,
        abb_lexicon=abb, rate=rate, seed=seed, max_options=max_options,
        max_tokens=max_tokens, corpus_id=str(corpus),
    )
    export_split(split, out)
    inputs = [corpus, vocab_path] + [p for p in (cont_lexicon, abb_lexicon) if p]
    write_manifest(out, "build-dataset",
                   {"name": name, "rate": rate, "seed": seed,
                    "max_options": max_options, "max_tokens": max_tokens},
                   inputs=inputs, outputs=[out])
    click.echo(f"{len(split)} sentences, {split.slot_count()} slots -> {out}")


@main.command("train")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--val", "val_path", type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True),
              help="Build a fresh encoder over this vocabulary.")
@click.option("--init", "init_path", type=click.Path(exists=True),
              help="Fine-tune an existing encoder checkpoint.")
@click.option("--out", required=True, type=click.Path())
@click.option("--epochs", default=5, show_default=True)
@click.option("--lr", "learning_rate", default=None, type=float,
              help="Defaults to 1e-3 from scratch, 5e-6 when fine-tuning.")
@click.option("--batch-size", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--margin", default=0.8, show_default=True)
@click.option("--scale", default=30.0, show_default=True)
@click.option("--dim", default=64, show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--log", "log_path", type=click.Path(), help="Per-epoch metrics JSONL.")
@click.option("--config", "config", type=click.Path(exists=True),
              help="TOML config file with a [train] section.")
@click.option("--force", is_flag=True, help="Let flags override config file values.")
@click.pass_context
def train_cmd(ctx, **_kwargs):
    """Train the dual encoder with additive margin softmax."""
    params = apply_config_file(ctx, ctx.params.get("config"), "train",
                               ctx.params.get("force", False))
    dataset_path, val_path = params["dataset_path"], params["val_path"]
    if bool(params["vocab_path"]) == bool(params["init_path"]):
        raise click.ClickException("pass exactly one of --vocab or --init")

    if params["init_path"]:
        encoder = Encoder.load(params["init_path"])
        default_lr = FINETUNE_LEARNING_RATE
    else:
        vocab = Vocabulary.load(params["vocab_path"])
        config = EncoderConfig(vocab_size=len(vocab), dim=params["dim"],
                               layers=params["layers"], heads=params["heads"],
                               ff_dim=4 * params["dim"])
        encoder = Encoder(config, vocab, seed=params["seed"])
        default_lr = 1e-3

    train_config = TrainConfig(
        margin=params["margin"], scale=params["scale"],
        learning_rate=params["learning_rate"] or default_lr,
        epochs=params["epochs"], batch_size=params["batch_size"],
        seed=params["seed"],
    )
    split = import_split(dataset_path, name="train")
    val_split = import_split(val_path, name="val") if val_path else None
    if train_config.epochs > 0:
        result = run_training(train_config, split, encoder, val_split=val_split,
                              log_path=params["log_path"])
        if result.best_params is not None:
            encoder.params = result.best_params
        for log in result.logs:
            click.echo(json.dumps(log.as_dict()))
    encoder.save(params["out"])
    inputs = [p for p in (dataset_path, val_path, params["vocab_path"],
                          params["init_path"]) if p]
    write_manifest(params["out"], "train",
                   {k: params[k] for k in ("margin", "scale", "epochs",
                                           "batch_size", "seed")}
                   | {"learning_rate": train_config.learning_rate},
                   inputs=inputs, outputs=[params["out"]])


@main.command("eval")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--adapter", "adapter_path", type=click.Path(exists=True))
@click.option("--table", "table_path", type=click.Path(exists=True))
@click.option("--shuffle", is_flag=True, help="Shuffle option order before ranking.")
@click.option("--seed", default=0, show_default=True)
def eval_cmd(dataset_path, encoder_path, adapter_path, table_path, shuffle, seed):
    """Report average rank, Dif, and top-k on a dataset."""
    import numpy as np

    encoder = Encoder.load(encoder_path)
    split = import_split(dataset_path)
    rng = np.random.default_rng(seed) if shuffle else None
    if adapter_path or table_path:
        if not (adapter_path and table_path):
            raise click.ClickException("--adapter and --table go together")
        adapter, _ = load_adapter(adapter_path)
        store = OptionVectorStore(EmbeddingTable.load(table_path), encoder)

        def scorer(sentence):
            ranked = rank_with_adapter(sentence, adapter, store)
            out = []
            for slot_rank in ranked:
                phi = np.empty(len(slot_rank.order))
                for position, index in enumerate(slot_rank.order):
                    phi[index] = slot_rank.scores[position]
                out.append(phi)
            return out
    else:
        scorer = encoder_scorer(encoder)
    metrics = evaluate(split, scorer, shuffle_options=shuffle, rng=rng)
    click.echo(json.dumps(metrics.as_dict(), indent=2))


@main.command("embed-options")
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--lexicon", "lexicon_paths", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def embed_options(encoder_path, lexicon_paths, out):
    """Precompute the frozen option-embedding table."""
    encoder = Encoder.load(encoder_path)
    lexicons = [Lexicon.load(p) for p in lexicon_paths]
    table = build_embedding_table(lexicons, encoder)
    table.save(out)
    write_manifest(out, "embed-options", {"records": len(table)},
                   inputs=[encoder_path, *lexicon_paths], outputs=[out])
    click.echo(f"{len(table)} option embeddings (dim {table.dim}) -> {out}")


@main.command("personalize")
@click.option("--feedback", "feedback_path", required=True, type=click.Path(exists=True))
@click.option("--encoder", "encoder_path", required=True, type=click.Path(exists=True))
@click.option("--table", "table_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--init", "init_adapter", type=click.Path(exists=True),
              help="Continue from an existing adapter checkpoint.")
@click.option("--epochs", default=20, show_default=True)
@click.option("--lr", "learning_rate", default=2e-2, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--margin", default=0.8, show_default=True)
@click.option("--scale", default=30.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def personalize_cmd(feedback_path, encoder_path, table_path, out, init_adapter,
                    epochs, learning_rate, batch_size, margin, scale, seed):
    """Fit the personalization adapter on recorded feedback."""
    encoder = Encoder.load(encoder_path)
    table = EmbeddingTable.load(table_path)
    records = load_feedback_records(feedback_path)
    if not records:
        raise click.ClickException(f"no feedback records in {feedback_path}")
    adapter = None
    version = 1
    if init_adapter:
        adapter, metadata = load_adapter(init_adapter)
        version = int(metadata.get("version", 0)) + 1
    trained = personalize_train(
        records, table, encoder,
        TrainConfig(margin=margin, scale=scale, learning_rate=learning_rate,
                    epochs=epochs, batch_size=batch_size, seed=seed),
        adapter=adapter,
    )
    save_adapter(trained, out, encoder_hash=encoder.content_hash(),
                 table_hash=table.content_hash(), version=version)
    write_manifest(out, "personalize",
                   {"epochs": epochs, "learning_rate": learning_rate,
                    "batch_size": batch_size, "margin": margin, "scale": scale,
                    "seed": seed, "feedback_count": len(records)},
                   inputs=[feedback_path, encoder_path, table_path], outputs=[out])
    click.echo(f"adapter (version {version}) trained on {len(records)} records -> {out}")


@main.command("serve")
@click.option("--home", default=None,
              help="Artifact directory; defaults to $ABB_HOME.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
def serve(home, host, port):
    """Serve the /v1 expansion API over the profiles under HOME."""
    import uvicorn

    home = home or os.environ.get("ABB_HOME")
    if not home:
        raise click.ClickException("pass --home or set ABB_HOME")
    profiles = discover_profiles(home)
    if not profiles:
        raise click.ClickException(f"no profiles found under {home}/profiles")
    app = create_app(ServiceState(profiles))
    click.echo(f"serving profiles {sorted(profiles)} on {host}:{port}")
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
