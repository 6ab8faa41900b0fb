"""Command-line entry point.

Subcommands: ``ingest`` (CHAT tree -> normalized corpus JSON + stats CSV),
``evaluate`` (corpus JSON -> report/profile files), ``score`` (serialized
model + tokenized text -> perplexity), ``report`` (report JSON -> CSV).

Exit codes: 0 success (possibly with warnings), 1 configuration/validation
error, 2 ingestion fatal, 3 scorer failure, 4 unknown word at scoring time.
Every file-producing run also writes ``run_manifest.json`` with the resolved
configuration and SHA-256 hashes of its inputs, so identical manifests imply
identical n-gram results.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import __version__
from .chat import (
    Group,
    corpus_stats,
    filter_multi_session,
    load_corpus,
    load_corpus_json,
    save_corpus,
    write_stats_csv,
)
from .errors import (
    MissingClassDirectoryError,
    DuplicateSessionError,
    PplkitError,
    ProtocolViolationError,
    ScorerCrashedError,
    ScorerStartError,
    TrainingFailedError,
    UnknownWordError,
)
from .harness import evaluate_all, profiles_to_csv
from .metrics import EvaluationReport
from .ngram import NgramLanguageModel
from .scorers import ScorerSpec

EXIT_CONFIG = 1
EXIT_INGEST = 2
EXIT_SCORER = 3
EXIT_UNKNOWN_WORD = 4

SCORER_FAILURES = (ScorerStartError, TrainingFailedError, ScorerCrashedError, ProtocolViolationError)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: list[Path], seed) -> None:
    manifest = {
        "command": command,
        "config": config,
        "input_hashes": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "tool": {"name": "pplkit", "version": __version__},
    }
    _write_json(out_dir / "run_manifest.json", manifest)


@click.group()
@click.version_option(version=__version__, prog_name="pplkit")
def main() -> None:
    """Perplexity-profile analysis of transcript corpora."""


@main.command()
@click.argument("input_dir", type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Corpus JSON path.")
@click.option("--stats-csv", type=click.Path(path_type=Path), help="Statistics CSV path (default: alongside --out).")
@click.option("--speaker", default="PAR", show_default=True, help="Target speaker tier.")
@click.option("--control-dir", default="Control", show_default=True)
@click.option("--dementia-dir", default="Dementia", show_default=True)
def ingest(input_dir, out, stats_csv, speaker, control_dir, dementia_dir):
    """Parse a CHAT directory tree into a normalized corpus JSON."""
    if not input_dir.is_dir():
        click.echo(f"error: input directory not found: {input_dir}", err=True)
        sys.exit(EXIT_INGEST)
    class_dirs = {control_dir: Group.CONTROL, dementia_dir: Group.AD}
    try:
        corpus = load_corpus(input_dir, class_dirs=class_dirs, speaker=speaker)
    except (MissingClassDirectoryError, DuplicateSessionError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INGEST)

    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    log_path = out.with_suffix(".parse-log.txt")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(f"subjects={len(corpus.subjects)} transcripts={corpus.num_transcripts} "
                 f"failures={len(corpus.failures)}\n")
        for path, reason in corpus.failures:
            fh.write(f"SKIP {path}: {reason}\n")
    for path, reason in corpus.failures:
        click.echo(f"warning: skipped {path}: {reason}", err=True)

    # statistics follow the multi-interview protocol: subjects with a single
    # session are not part of the experiment material
    stats_path = stats_csv or out.with_suffix(".stats.csv")
    filtered = filter_multi_session(corpus)
    if filtered.num_transcripts:
        write_stats_csv(corpus_stats(filtered), stats_path)
    _write_manifest(
        out.parent,
        "ingest",
        {
            "input_dir": str(input_dir),
            "speaker": speaker,
            "class_dirs": {k: v.value for k, v in class_dirs.items()},
            "out": str(out),
        },
        inputs=sorted(p for d in class_dirs for p in (input_dir / d).glob("*.cha")),
        seed=None,
    )
    click.echo(
        f"ingested {len(corpus.subjects)} subjects / {corpus.num_transcripts} transcripts "
        f"({len(corpus.failures)} skipped) -> {out}"
    )


def _resolve_evaluate_config(config_path, corpus, scorer, order, discount, epochs,
                             k_sigma, seed, workers, cache_dir, out) -> dict:
    config: dict = {}
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    if corpus is not None:
        config["corpus"] = str(corpus)
    if scorer is not None:
        spec = config.setdefault("scorer", {})
        spec["kind"] = scorer
    if order is not None:
        config.setdefault("scorer", {})["order"] = order
    if discount is not None:
        config.setdefault("scorer", {})["discount"] = discount
    if epochs is not None:
        params = config.setdefault("scorer", {}).setdefault("params", {})
        params["epochs"] = epochs
    if k_sigma is not None:
        config["k_sigma"] = k_sigma
    if seed is not None:
        config["seed"] = seed
    if workers is not None:
        config["workers"] = workers
    if cache_dir is not None:
        config["cache_dir"] = str(cache_dir)
    if out is not None:
        config["out"] = str(out)
    config.setdefault("k_sigma", 2)
    config.setdefault("sigma_mode", "population")
    config.setdefault("tie", "AD")
    config.setdefault("workers", 1)
    config.setdefault("out", "results")
    return config


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              help="Experiment configuration JSON; flags override its fields.")
@click.option("--corpus", type=click.Path(path_type=Path))
@click.option("--scorer", type=click.Choice(["ngram-mle", "ngram-kn", "external"]))
@click.option("--order", type=int)
@click.option("--discount", type=float)
@click.option("--epochs", type=int)
@click.option("--k-sigma", type=int)
@click.option("--seed", type=int)
@click.option("--workers", type=int)
@click.option("--cache-dir", type=click.Path(path_type=Path))
@click.option("--out", type=click.Path(path_type=Path))
def evaluate(config_path, corpus, scorer, order, discount, epochs, k_sigma, seed,
             workers, cache_dir, out):
    """Run the leave-one-subject-out experiment and write the reports."""
    config = _resolve_evaluate_config(config_path, corpus, scorer, order, discount,
                                      epochs, k_sigma, seed, workers, cache_dir, out)
    if "corpus" not in config:
        click.echo("error: no corpus given (--corpus or config file)", err=True)
        sys.exit(EXIT_CONFIG)
    if not config.get("scorer", {}).get("kind"):
        click.echo("error: no scorer configured (--scorer or config file)", err=True)
        sys.exit(EXIT_CONFIG)
    if not 0 <= config["k_sigma"] <= 3:
        click.echo(f"error: k_sigma must be in 0..3, got {config['k_sigma']}", err=True)
        sys.exit(EXIT_CONFIG)
    if config["tie"] not in ("AD", "Control"):
        click.echo(f"error: tie must be 'AD' or 'Control', got {config['tie']!r}", err=True)
        sys.exit(EXIT_CONFIG)

    scorer_cfg = dict(config["scorer"])
    if config.get("seed") is not None and scorer_cfg.get("kind") == "external":
        scorer_cfg.setdefault("params", {})["seed"] = config["seed"]
    try:
        spec = ScorerSpec.from_dict(scorer_cfg)
    except ValueError as exc:
        click.echo(f"error: bad scorer spec: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    corpus_path = Path(config["corpus"])
    if not corpus_path.exists():
        click.echo(f"error: corpus file not found: {corpus_path}", err=True)
        sys.exit(EXIT_CONFIG)
    loaded = filter_multi_session(load_corpus_json(corpus_path))

    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        result = evaluate_all(
            loaded,
            spec,
            k_sigma=config["k_sigma"],
            sigma_mode=config["sigma_mode"],
            tie=Group(config["tie"]),
            workers=config["workers"],
            cache_dir=config.get("cache_dir"),
        )
    except SCORER_FAILURES as exc:
        click.echo(f"error: scorer failure: {exc}", err=True)
        click.echo("note: completed folds remain in the cache directory", err=True)
        sys.exit(EXIT_SCORER)
    except PplkitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    _write_json(out_dir / "report.json", result.report.to_dict())
    (out_dir / "report.csv").write_text(result.report.to_csv(), encoding="utf-8")
    (out_dir / "profiles.csv").write_text(
        profiles_to_csv(result.profiles, result.predictions), encoding="utf-8"
    )
    _write_manifest(out_dir, "evaluate", config, inputs=[corpus_path], seed=config.get("seed"))
    click.echo(f"wrote report.json, report.csv, profiles.csv -> {out_dir}")
    for rule, res in result.report.rules.items():
        click.echo(f"  {rule}: acc={res.accuracy:.2f} hm={'n/a' if res.hm is None else f'{res.hm:.2f}'}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--text", "text_path", required=True, type=click.Path(exists=True, path_type=Path))
def score(model_path, text_path):
    """Perplexity of a tokenized text (one utterance per line) under a
    serialized model."""
    try:
        model = NgramLanguageModel.load(model_path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot load model {model_path}: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    utterances = [
        line.split() for line in text_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    try:
        ppl = model.perplexity(utterances)
    except UnknownWordError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_UNKNOWN_WORD)
    k = model.num_positions(utterances)
    click.echo(f"ppl={ppl!r} k={k}")


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), help="CSV destination (default: stdout).")
def report(report_path, out):
    """Render a report JSON as the results-table CSV."""
    with open(report_path, "r", encoding="utf-8") as fh:
        loaded = EvaluationReport.from_dict(json.load(fh))
    text = loaded.to_csv()
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
