"""Command-line interface: extract, evaluate, compare, and cache upkeep.

Exit codes: 0 clean, 2 completed with degraded records (missing or
out-of-vocabulary fields), 1 fatal error. Any flag may also be supplied via
a JSON config file; explicit flags win.
"""

from __future__ import annotations

import datetime
import json
import sys
from pathlib import Path

import click

from . import extraction as ex
from .corpus import corpus_digest, load_corpus, select_exemplars
from .errors import CorpusMismatch, GoldMissing, PolicyxError
from .evaluation import EvalReport, build_report, render_report, sort_reports
from .gateway import BackendConfig, LlmGateway, ResponseCache
from .prompting import MethodId, TemplateSet, parse_method
from .taxonomy import Taxonomy, default_taxonomy

_CONFIG_KEYS = (
    "corpus", "format", "method", "backend", "base_url", "model_id",
    "template_dir", "taxonomy", "exemplar_k", "seed", "concurrency",
    "max_tokens", "attempts", "cache_dir", "output_dir", "mock_script",
    "figures",
)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}")
    unknown = set(config) - set(_CONFIG_KEYS)
    if unknown:
        raise click.ClickException(f"unknown config keys: {sorted(unknown)}")
    return config


def _resolve(cli_value, config: dict, key: str, default=None):
    if cli_value is not None:
        return cli_value
    return config.get(key, default)


def _load_taxonomy(path: str | None) -> Taxonomy:
    return Taxonomy.from_file(path) if path else default_taxonomy()


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Role-based policy information extraction and evaluation."""


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(), help="Corpus CSV/JSONL file.")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@click.option("--method", "method_name", help="RoleBased, ZeroShot, FewShot, or ChainOfThought.")
@click.option("--backend", type=click.Choice(["http", "mock", "replay"]), default=None)
@click.option("--base-url", default=None, help="HTTP backend base URL.")
@click.option("--model-id", default=None)
@click.option("--template-dir", type=click.Path(), default=None)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None,
              help="Taxonomy extension JSON file.")
@click.option("--exemplar-k", type=int, default=None, help="Few-shot exemplar count.")
@click.option("--seed", type=int, default=None, help="Exemplar tie-break seed.")
@click.option("--concurrency", type=int, default=None, help="In-flight request limit.")
@click.option("--max-tokens", type=int, default=None)
@click.option("--attempts", type=int, default=None, help="HTTP retry attempt limit.")
@click.option("--cache-dir", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--mock-script", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
def extract(corpus_path, fmt, method_name, backend, base_url, model_id, template_dir,
            taxonomy_path, exemplar_k, seed, concurrency, max_tokens, attempts,
            cache_dir, output_dir, mock_script, config_path):
    """Run one extraction method over a corpus, writing journal + manifest."""
    config = _load_config(config_path)
    corpus_path = _resolve(corpus_path, config, "corpus")
    fmt = _resolve(fmt, config, "format")
    method_name = _resolve(method_name, config, "method", "RoleBased")
    backend = _resolve(backend, config, "backend", "mock")
    base_url = _resolve(base_url, config, "base_url", "")
    model_id = _resolve(model_id, config, "model_id", "mock-model")
    template_dir = _resolve(template_dir, config, "template_dir")
    taxonomy_path = _resolve(taxonomy_path, config, "taxonomy")
    exemplar_k = _resolve(exemplar_k, config, "exemplar_k", 2)
    seed = _resolve(seed, config, "seed", 0)
    concurrency = _resolve(concurrency, config, "concurrency", 4)
    max_tokens = _resolve(max_tokens, config, "max_tokens", 1024)
    attempts = _resolve(attempts, config, "attempts", 3)
    cache_dir = _resolve(cache_dir, config, "cache_dir", "cache")
    output_dir = _resolve(output_dir, config, "output_dir", "out")
    mock_script = _resolve(mock_script, config, "mock_script")

    if not corpus_path:
        _fail("--corpus is required")

    try:
        method = parse_method(method_name)
    except ValueError as exc:
        _fail(str(exc))

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    journal_path = out / "journal.jsonl"
    manifest_path = out / "manifest.json"

    try:
        taxonomy = _load_taxonomy(taxonomy_path)
        records = load_corpus(corpus_path, fmt, taxonomy)
        templates = TemplateSet.load(template_dir)

        exemplars = None
        split = None
        run_records = records
        if method is MethodId.FEW_SHOT:
            split = select_exemplars(records, exemplar_k, seed)
            by_id = {r.id: r for r in records}
            exemplars = [(by_id[i], by_id[i].gold) for i in sorted(split.exemplar_ids)]
            run_records = [r for r in records if r.id in split.eval_ids]

        gateway = LlmGateway(
            BackendConfig(
                kind=backend,
                base_url=base_url,
                model_id=model_id,
                max_attempts=attempts,
                script_path=mock_script,
            ),
            cache_dir=cache_dir,
            concurrency_limit=concurrency,
        )

        extractions: list[ex.Extraction] = []
        with journal_path.open("w", encoding="utf-8") as journal_fh:
            extractions = ex.run_extraction(
                run_records,
                method,
                gateway,
                templates,
                model_id,
                exemplars=exemplars,
                taxonomy=taxonomy,
                max_workers=concurrency,
                max_tokens=max_tokens,
                journal_fh=journal_fh,
            )

        manifest = {
            "corpus_digest": corpus_digest(records),
            "method": method.value,
            "model_id": model_id,
            "template_digests": templates.digests(),
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "n_records": len(extractions),
            "max_tokens": max_tokens,
            "seed": seed,
            "exemplar_ids": sorted(split.exemplar_ids) if split else [],
        }
        ex.write_manifest(manifest_path, manifest)
    except PolicyxError as exc:
        _fail(str(exc))

    degraded = [e for e in extractions if e.degraded_fields()]
    for entry in degraded:
        fields = ", ".join(entry.degraded_fields())
        click.echo(f"degraded: {entry.record_id} ({fields})", err=True)
    click.echo(f"wrote {len(extractions)} extractions to {journal_path}")
    sys.exit(2 if degraded else 0)


def _reports_for_journal(journal_path: Path, records, taxonomy) -> list[EvalReport]:
    extractions = ex.read_journal(journal_path)
    if not extractions:
        raise GoldMissing(f"journal {journal_path} is empty")
    manifest_path = journal_path.parent / "manifest.json"
    model_id = ""
    if manifest_path.is_file():
        model_id = ex.read_manifest(manifest_path).get("model_id", "")
    by_method: dict[MethodId, list[ex.Extraction]] = {}
    for entry in extractions:
        by_method.setdefault(entry.method, []).append(entry)
    return [
        build_report(group, records, taxonomy, model_id=model_id)
        for group in by_method.values()
    ]


def _write_reports(reports: list[EvalReport], out: Path, figures: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for fmt, name in (("markdown", "report.md"), ("csv", "report.csv"), ("json", "report.json")):
        (out / name).write_text(render_report(reports, fmt), encoding="utf-8")
    if figures:
        from .figures import save_report_figures

        save_report_figures(reports, out)
    click.echo(f"wrote report.md, report.csv, report.json to {out}")


@main.command()
@click.option("--journal", "journal_path", type=click.Path(), required=True)
@click.option("--corpus", "corpus_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(), default="out")
@click.option("--figures/--no-figures", default=True)
def evaluate(journal_path, corpus_path, fmt, taxonomy_path, output_dir, figures):
    """Score a run journal against its corpus and write report files."""
    try:
        taxonomy = _load_taxonomy(taxonomy_path)
        records = load_corpus(corpus_path, fmt, taxonomy)
        reports = _reports_for_journal(Path(journal_path), records, taxonomy)
        _write_reports(sort_reports(reports), Path(output_dir), figures)
    except PolicyxError as exc:
        _fail(str(exc))
    sys.exit(0)


@main.command()
@click.argument("journals", nargs=-1, required=True, type=click.Path())
@click.option("--corpus", "corpus_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None)
@click.option("--output-dir", type=click.Path(), default="out")
@click.option("--figures/--no-figures", default=True)
def compare(journals, corpus_path, fmt, taxonomy_path, output_dir, figures):
    """Merge several run journals into one multi-method comparison report."""
    if len(journals) < 2:
        _fail("compare needs at least two journals")
    try:
        taxonomy = _load_taxonomy(taxonomy_path)
        records = load_corpus(corpus_path, fmt, taxonomy)
        expected_digest = corpus_digest(records)
        digests = {}
        for journal in journals:
            manifest_path = Path(journal).parent / "manifest.json"
            if not manifest_path.is_file():
                raise CorpusMismatch(f"no manifest next to {journal}")
            digests[journal] = ex.read_manifest(manifest_path).get("corpus_digest")
        if len(set(digests.values())) > 1:
            raise CorpusMismatch(f"journals span different corpora: {digests}")
        if set(digests.values()) != {expected_digest}:
            raise CorpusMismatch("journals were produced from a different corpus")

        reports: list[EvalReport] = []
        for journal in journals:
            reports.extend(_reports_for_journal(Path(journal), records, taxonomy))
        _write_reports(sort_reports(reports), Path(output_dir), figures)
    except PolicyxError as exc:
        _fail(str(exc))
    sys.exit(0)


@main.group()
def cache() -> None:
    """Inspect or clear the response cache."""


@cache.command()
@click.option("--cache-dir", type=click.Path(), default="cache")
def stats(cache_dir):
    """Print entry count and total size."""
    info = ResponseCache(cache_dir).stats()
    click.echo(f"entries: {info['entries']}")
    click.echo(f"bytes: {info['bytes']}")


@cache.command()
@click.option("--cache-dir", type=click.Path(), default="cache")
@click.option("--older-than-days", type=float, default=None,
              help="Only remove entries older than this many days.")
def prune(cache_dir, older_than_days):
    """Delete cached responses."""
    older_than_s = older_than_days * 86400 if older_than_days is not None else None
    removed = ResponseCache(cache_dir).prune(older_than_s)
    click.echo(f"removed {removed} entries")


if __name__ == "__main__":
    main()
