"""``emoxplain`` command line.

Exit codes: 0 success, 2 config error, 3 data error, 4 generator backend
error, 5 output directory busy.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from .classification.classifier import DegenerateCorpusError
from .classification.pipelines import PipelineError
from .config import ConfigError, load_config
from .corpus import CorpusError, build_corpus_store, ingest_annotations, write_annotations
from .evaluation import EvaluationError, mcnemar_test, paired_from_dumps, read_prediction_dump
from .experiment import DataError, ExperimentBusyError, generate_only, load_items, run_experiment
from .generation.core import GenerationError
from .prompting.sampling import MissingFrameError
from .synthetic import make_corpus

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4
EXIT_BUSY = 5

_ERRORS = (
    (ConfigError, EXIT_CONFIG, "config error"),
    (PipelineError, EXIT_CONFIG, "config error"),
    (GenerationError, EXIT_BACKEND, "backend error"),
    (ExperimentBusyError, EXIT_BUSY, "busy"),
    (CorpusError, EXIT_DATA, "data error"),
    (DataError, EXIT_DATA, "data error"),
    (DegenerateCorpusError, EXIT_DATA, "data error"),
    (MissingFrameError, EXIT_DATA, "data error"),
    (EvaluationError, EXIT_DATA, "data error"),
)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except tuple(e for e, _, _ in _ERRORS) as exc:
            for cls, code, label in _ERRORS:
                if isinstance(exc, cls):
                    click.echo(f"{label}: {exc}", err=True)
                    sys.exit(code)
    return wrapper


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug logging.")
def main(verbose: int) -> None:
    """Predict readers' dominant emotion for news headlines via generated explanations."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--cr-threshold", default=5, show_default=True, help="Minimum dominant-emotion count for the CR subset.")
@click.option("--seed", default=0, show_default=True, help="Split seed.")
@click.option("--non-canonical", is_flag=True, help="Accept items with other than 10 annotations.")
@_guard
def ingest(input_path: str, out_dir: str, cr_threshold: int, seed: int, non_canonical: bool) -> None:
    """Validate an annotation file and write the EE / CR / CEE corpus store."""
    items = ingest_annotations(input_path, non_canonical=non_canonical)
    manifests = build_corpus_store(items, out_dir, cr_threshold=cr_threshold, seed=seed)
    n_ann = sum(len(it.annotations) for it in items)
    click.echo(f"{len(items)} items, {n_ann} annotations")
    click.echo(f"{manifests['cr'].n_items} items at clear-agreement threshold {cr_threshold}")
    for name in ("cee_train", "cee_validation", "cee_test"):
        if name in manifests:
            click.echo(f"{name}: {manifests[name].n_items} items")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@_guard
def build(config_path: str, out_dir: str) -> None:
    """Build the corpus store for the data a config points at."""
    cfg = load_config(config_path)
    items = load_items(cfg)
    manifests = build_corpus_store(items, out_dir, cr_threshold=cfg.cr_threshold, seed=cfg.split_seed)
    for name, m in sorted(manifests.items()):
        click.echo(f"{name}: {m.n_items} items, {m.n_examples} examples, hash {m.data_hash[:12]}")


_BACKENDS = click.Choice(["llm_service", "local_seq2seq", "mock"])


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--backend", type=_BACKENDS, default=None, help="Override the generator kind.")
@_guard
def generate(config_path: str, out_dir: str | None, backend: str | None) -> None:
    """Fill the generation cache for every generative pipeline without training anything."""
    cfg = load_config(config_path).with_overrides(backend=backend)
    counts = generate_only(cfg, out_dir)
    for key, (n, failed) in counts.items():
        click.echo(f"{key}: {n} generations, {failed} unparsable")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--seed-override", type=int, default=None, help="First run seed (runs use seed, seed+1, ...).")
@click.option("--backend", type=_BACKENDS, default=None, help="Override the generator kind.")
@click.option("--runs", type=click.IntRange(min=1), default=None, help="Override the run count.")
@click.option("--strict-unpredicted/--lenient-unpredicted", default=None,
              help="Count unparsable generations as wrong instead of excluding them.")
@_guard
def run(config_path: str, out_dir: str | None, seed_override: int | None, backend: str | None,
        runs: int | None, strict_unpredicted: bool | None) -> None:
    """Run a full experiment from a config and write reports."""
    cfg = load_config(config_path).with_overrides(runs=runs, seed=seed_override, backend=backend,
                                                  strict_unpredicted=strict_unpredicted)
    result = run_experiment(cfg, out_dir)
    click.echo((result.out_dir / "summary.txt").read_text(encoding="utf-8"), nl=False)
    click.echo(f"reports written to {result.out_dir}")


@main.command()
@click.argument("dump_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("dump_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Print a JSON object instead of text.")
@_guard
def compare(dump_a: str, dump_b: str, as_json: bool) -> None:
    """McNemar test between two prediction dumps over the same test set."""
    res = mcnemar_test(paired_from_dumps(read_prediction_dump(dump_a), read_prediction_dump(dump_b)))
    if as_json:
        click.echo(json.dumps({"b": res.b, "c": res.c, "method": res.method, "p_value": res.p_value,
                               "statistic": res.statistic, "degenerate": res.degenerate}, sort_keys=True))
        return
    click.echo(f"b (only A correct): {res.b}")
    click.echo(f"c (only B correct): {res.c}")
    click.echo(f"test: {res.method}" + (" (no discordant pairs)" if res.degenerate else ""))
    click.echo(f"p-value: {res.p_value:.10g}")


@main.command()
@click.option("--items", "n_items", default=60, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def synth(n_items: int, seed: int, out_path: str) -> None:
    """Write a synthetic annotation file (ten annotations per item, all frames)."""
    items = make_corpus(n_items, seed)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_annotations(items, out_path)
    click.echo(f"{len(items)} items written to {out_path}")


if __name__ == "__main__":
    main()
