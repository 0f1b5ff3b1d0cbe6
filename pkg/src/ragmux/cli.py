"""Command-line surface: ingest -> index -> query / eval / explain-plan.

Exit codes: 0 success, 1 user error (bad paths, malformed corpus or
dataset, bad flags), 2 environment error (index IO, gateway failures).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .corpus import CorpusError, load_corpus
from .doctree import DocModelError
from .evals import BadDataset, EvalError, load_dataset, run_eval
from .gateway import GatewayError, MockGateway, MockPolicy, RemoteGateway
from .pipeline import explain_plan, run_pipeline
from .planning import LevelProfile, PlanningError
from .spaces import SpacesError, build_indexes
from .store import IoFailure, StoreError, load_bundle, persist_bundle

_USER_ERRORS = (
    ConfigError,
    CorpusError,
    DocModelError,
    BadDataset,
    EvalError,
    PlanningError,
    SpacesError,
    ValueError,
)
_ENV_ERRORS = (StoreError, GatewayError, OSError)


def _fail(exc: Exception, code: int) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _run(fn) -> None:
    try:
        fn()
    except _USER_ERRORS as exc:
        _fail(exc, 1)
    except IoFailure as exc:
        _fail(exc, 2)
    except _ENV_ERRORS as exc:
        _fail(exc, 2)


def _build_config(config_path: str | None, **overrides) -> PipelineConfig:
    return load_config(config_path, overrides)


def _gateway_for(cfg: PipelineConfig):
    if cfg.mock_llm or cfg.gateway is None:
        return MockGateway(MockPolicy(), dim=cfg.embedder.dim)
    return RemoteGateway(cfg.gateway)


def _echo_effective(cfg: PipelineConfig, verbose: bool) -> None:
    if verbose:
        click.echo("effective config:", err=True)
        click.echo(json.dumps(cfg.as_dict(), sort_keys=True, indent=1), err=True)
        click.echo(f"config digest: {cfg.digest()}", err=True)


config_option = click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file; flags override its values.")
verbose_option = click.option("--verbose", is_flag=True, help="Print the effective config to stderr.")
profile_option = click.option("--profile", type=click.Choice(["l1", "l2", "l3", "l4"]), default=None, help="Pipeline level profile.")
format_option = click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text", help="Output format.")
mock_option = click.option("--mock-llm/--no-mock-llm", "mock_llm", default=None, help="Use the deterministic offline gateway.")


@click.group()
@click.version_option(version=__version__, prog_name="ragmux")
def main() -> None:
    """Structure-aware multi-space retrieval QA engine."""


@main.command()
@click.argument("corpus_dir", type=click.Path())
@config_option
@verbose_option
def ingest(corpus_dir: str, config_path: str | None, verbose: bool) -> None:
    """Parse and chunk a corpus directory, reporting counts."""

    def body() -> None:
        cfg = _build_config(config_path, corpus_dir=corpus_dir)
        _echo_effective(cfg, verbose)
        corpus = load_corpus(corpus_dir, cfg.chunking)
        refs = sum(len(t.cross_refs) for t in corpus.trees)
        resolved = sum(
            1 for t in corpus.trees for r in t.cross_refs if r.target_node is not None
        )
        click.echo(
            f"documents: {len(corpus.docs)}  chunks: {len(corpus.chunks)}  "
            f"cross_refs: {refs} ({resolved} resolved)"
        )

    _run(body)


@main.command()
@click.argument("corpus_dir", type=click.Path())
@click.option("--index-dir", required=True, type=click.Path(), help="Output index directory.")
@config_option
@verbose_option
def index(corpus_dir: str, index_dir: str, config_path: str | None, verbose: bool) -> None:
    """Build all four index views and persist them."""

    def body() -> None:
        cfg = _build_config(config_path, corpus_dir=corpus_dir, index_dir=index_dir)
        _echo_effective(cfg, verbose)
        corpus = load_corpus(corpus_dir, cfg.chunking)
        gateway = _gateway_for(cfg)
        bundle = build_indexes(
            corpus.chunks,
            corpus.docs,
            gateway.embed,
            cfg.embedder,
            cross_links=corpus.cross_links,
            node_kinds=corpus.node_kinds,
            corpus_hash=corpus.corpus_hash,
        )
        digest = persist_bundle(bundle, index_dir)
        click.echo(f"indexed {bundle.manifest.chunk_count} chunks into {index_dir}")
        click.echo(f"manifest digest: {digest}")

    _run(body)


@main.command()
@click.argument("question")
@click.option("--index-dir", required=True, type=click.Path(), help="Index directory to search.")
@config_option
@verbose_option
@profile_option
@format_option
@mock_option
def query(
    question: str,
    index_dir: str,
    config_path: str | None,
    verbose: bool,
    profile: str | None,
    output_format: str,
    mock_llm: bool | None,
) -> None:
    """Answer one question over an index."""

    def body() -> None:
        cfg = _build_config(config_path, index_dir=index_dir, profile=profile, mock_llm=mock_llm)
        _echo_effective(cfg, verbose)
        bundle = load_bundle(index_dir)
        gateway = _gateway_for(cfg)
        answer = run_pipeline(
            question, cfg.profile, bundle, gateway,
            cfg=cfg.reflection, fusion=cfg.fusion,
        )
        if output_format == "json":
            click.echo(
                json.dumps(
                    {
                        "question": question,
                        "profile": answer.profile.value,
                        "answer": answer.text,
                        "citations": answer.citations,
                        "plan_trace": [s.as_dict() for s in answer.plan_trace],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                    indent=1,
                )
            )
        else:
            click.echo(answer.text)
            click.echo(f"citations: {', '.join(answer.citations)}")

    _run(body)


@main.command("eval")
@click.option("--index-dir", required=True, type=click.Path(), help="Index directory to search.")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(), help="JSONL dataset.")
@click.option(
    "--profiles",
    default="l1,l2,l3,l4",
    show_default=True,
    help="Comma-separated list of profiles to evaluate.",
)
@click.option("--judge", "judge_kind", type=click.Choice(["lexical", "llm"]), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Also write the JSON report here.")
@config_option
@verbose_option
@format_option
@mock_option
def eval_command(
    index_dir: str,
    dataset_path: str,
    profiles: str,
    judge_kind: str | None,
    out_path: str | None,
    config_path: str | None,
    verbose: bool,
    output_format: str,
    mock_llm: bool | None,
) -> None:
    """Run profiles over a dataset and print the accuracy report."""

    def body() -> None:
        cfg = _build_config(
            config_path, index_dir=index_dir, judge=judge_kind, mock_llm=mock_llm
        )
        _echo_effective(cfg, verbose)
        try:
            profile_list = [LevelProfile(p.strip()) for p in profiles.split(",") if p.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --profiles value: {exc}") from None
        if not profile_list:
            raise ConfigError("--profiles selected nothing")
        items = load_dataset(dataset_path)
        bundle = load_bundle(index_dir)
        gateway = _gateway_for(cfg)
        report = run_eval(
            items,
            profile_list,
            bundle,
            gateway,
            judge_kind=cfg.judge,
            dataset_name=Path(dataset_path).name,
            config_digest=cfg.digest(),
            reflection_cfg=cfg.reflection,
            fusion_cfg=cfg.fusion,
        )
        rendered = report.to_json() if output_format == "json" else report.to_text()
        click.echo(rendered, nl=False)
        if out_path:
            Path(out_path).write_text(report.to_json(), encoding="utf-8")

    _run(body)


@main.command("explain-plan")
@click.argument("question")
@config_option
@verbose_option
@profile_option
def explain_plan_command(
    question: str, config_path: str | None, verbose: bool, profile: str | None
) -> None:
    """Print the serialized plan for a question without executing it."""

    def body() -> None:
        cfg = _build_config(config_path, profile=profile)
        _echo_effective(cfg, verbose)
        plan = explain_plan(question, cfg.profile, cfg.reflection)
        click.echo(json.dumps(plan, ensure_ascii=False, sort_keys=True, indent=1))

    _run(body)


if __name__ == "__main__":
    main()
