"""Command-line interface wiring the pipeline, review queue, queries, and benchmarks."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

import click

from . import bench as bench_mod
from . import compliance, costmodel, extraction, llm, pipeline, vkg
from .config import AppConfig, ConfigError, load_config
from .kg import TripleStore

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _fail_config(message: str) -> "click.exceptions.Exit":
    click.echo(f"configuration error: {message}", err=True)
    return click.exceptions.Exit(EXIT_CONFIG)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file.")
@click.option("--backend", "backend_name", default=None, help="Backend override: mock, replay[:FIXTURE], http.")
@click.option("--seed", type=int, default=None, help="Seed for the mock backend.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], backend_name: Optional[str], seed: Optional[int], verbose: bool) -> None:
    """Extract, validate, and integrate electronic-board test reports."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)
    try:
        app = load_config(config_path)
    except ConfigError as exc:
        raise _fail_config(str(exc))
    ctx.obj = {"app": app, "backend": backend_name, "seed": seed}


def _app(ctx: click.Context) -> AppConfig:
    return ctx.obj["app"]


def _backend(ctx: click.Context):
    app = _app(ctx)
    try:
        cfg = app.backend_config(ctx.obj["backend"], ctx.obj["seed"])
        return llm.make_backend(cfg), cfg
    except (ConfigError, ValueError, OSError) as exc:
        raise _fail_config(f"backend: {exc}")


def _pipeline_config(ctx: click.Context) -> pipeline.PipelineConfig:
    app = _app(ctx)
    try:
        paths = app.pipeline_paths()
        backend, backend_cfg = _backend(ctx)
        config = pipeline.PipelineConfig(
            ontology_path=paths["ontology"],
            mappings_path=paths["mappings"],
            data_dir=paths["data_dir"],
            review_queue_path=paths["review_queue"],
            backend=backend,
            template=app.template() or llm.DEFAULT_TEMPLATE,
            registry=app.registry(),
            synonyms=app.synonyms(),
            retry=llm.RetryPolicy(
                max_attempts=backend_cfg.max_attempts if backend_cfg.kind == "http" else 1,
                backoff_base=backend_cfg.backoff_base,
            ),
            max_in_flight=backend_cfg.max_in_flight,
        )
        config.validate()
        return config
    except (ConfigError, pipeline.PipelineError) as exc:
        raise _fail_config(str(exc))


def _load_store(ctx: click.Context) -> TripleStore:
    app = _app(ctx)
    paths = app.pipeline_paths()
    store = TripleStore()
    store.load_turtle_subset(Path(paths["ontology"]).read_text(encoding="utf-8"))
    metadata = pipeline.kg_path(paths["data_dir"])
    if metadata.exists():
        store.load_turtle_subset(metadata.read_text(encoding="utf-8"))
    return store


@main.command()
@click.argument("documents", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write observations as JSONL.")
@click.pass_context
def extract(ctx: click.Context, documents, out) -> None:
    """Extract observations and metadata from normalized report documents."""
    store = _load_store(ctx)
    app = _app(ctx)
    synonyms = app.synonyms()
    registry = app.registry()
    records = []
    failures = 0
    for document in documents:
        try:
            report = extraction.load_report_file(document)
            meta, observations = extraction.extract_observations(
                report, store, synonyms=synonyms, registry=registry
            )
        except (extraction.ExtractionError, json.JSONDecodeError) as exc:
            click.echo(f"{document}: FAILED: {exc}", err=True)
            failures += 1
            continue
        click.echo(
            f"{meta.reference}: {len(observations)} observations, "
            f"properties: {', '.join(p.value.rsplit('#', 1)[-1] for p in meta.properties)}"
        )
        for obs in observations:
            record = {
                "id": obs.id,
                "observed_property": obs.observed_property.value,
                "result_raw": obs.result_raw,
                "limits_raw": obs.limits_raw,
                "success_raw": obs.success_raw,
                "report_reference": obs.report_reference,
                "date": obs.date,
            }
            records.append(record)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        click.echo(f"wrote {len(records)} observations to {out}")
    if failures:
        raise click.exceptions.Exit(EXIT_PARTIAL)


@main.command()
@click.argument("documents", nargs=-1, required=True, type=click.Path(exists=True))
@click.pass_context
def validate(ctx: click.Context, documents) -> None:
    """Deterministically validate report rows (no LLM, no state change)."""
    store = _load_store(ctx)
    app = _app(ctx)
    registry = app.registry()
    synonyms = app.synonyms()
    failures = 0
    for document in documents:
        try:
            report = extraction.load_report_file(document)
            _, observations = extraction.extract_observations(
                report, store, synonyms=synonyms, registry=registry
            )
        except (extraction.ExtractionError, json.JSONDecodeError) as exc:
            click.echo(f"{document}: FAILED: {exc}", err=True)
            failures += 1
            continue
        status, anomalies = compliance.validate_observations(observations, registry)
        click.echo(f"{report.reference}: {status.value} ({len(observations)} rows)")
        for anomaly in anomalies:
            click.echo(f"  {anomaly.observation_id}: {anomaly.reason}")
    if failures:
        raise click.exceptions.Exit(EXIT_PARTIAL)


@main.command()
@click.argument("documents", nargs=-1, required=True, type=click.Path(exists=True))
@click.pass_context
def run(ctx: click.Context, documents) -> None:
    """Run the full pipeline: extract, register, check, queue, integrate."""
    config = _pipeline_config(ctx)
    try:
        summary = pipeline.run_pipeline([Path(d) for d in documents], config)
    except pipeline.LockHeld as exc:
        raise _fail_config(str(exc))
    click.echo(summary.render())
    if summary.failed:
        raise click.exceptions.Exit(EXIT_PARTIAL)


@main.command()
@click.argument("observations_file", type=click.Path(exists=True))
@click.pass_context
def integrate(ctx: click.Context, observations_file) -> None:
    """Integrate extracted observations (JSONL from `extract --out`) without the LLM.

    Rows passing deterministic validation go to the row tables; the rest are
    queued for review.
    """
    config = _pipeline_config(ctx)
    from .kg import Iri

    observations = []
    with open(observations_file, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            data["observed_property"] = Iri(data["observed_property"])
            observations.append(extraction.Observation(**data))
    with pipeline.data_dir_lock(config.data_dir):
        ontology = TripleStore()
        ontology.load_turtle_subset(Path(config.ontology_path).read_text(encoding="utf-8"))
        store = pipeline.load_stores(config)
        mappings = pipeline.load_mappings(config)
        queue = pipeline.ReviewQueue(config.review_queue_path)
        done = pipeline.integrated_ids(store, config, mappings)
        integrated = 0
        queued = 0
        for obs in observations:
            if obs.id in done:
                log.warning("observation %s already integrated; skipping", obs.id)
                continue
            verdict, validity, reason = compliance.check_row_raw(
                obs.result_raw, obs.limits_raw, obs.success_raw, config.registry
            )
            if validity is not None and validity.validity is compliance.Validity.VALID:
                pipeline.integrate_observation(obs, store, config, mappings)
                integrated += 1
            else:
                record = {
                    "id": obs.id,
                    "observed_property": obs.observed_property.value,
                    "result_raw": obs.result_raw,
                    "limits_raw": obs.limits_raw,
                    "success_raw": obs.success_raw,
                    "report_reference": obs.report_reference,
                    "date": obs.date,
                }
                queue.append(
                    pipeline.ReviewItem(
                        item_id=obs.id,
                        report_reference=obs.report_reference,
                        reason=reason,
                        status=pipeline.ReviewStatus.OPEN,
                        observation=record,
                    )
                )
                queued += 1
    click.echo(f"integrated {integrated} rows, queued {queued} for review")


@main.group()
def review() -> None:
    """Inspect and resolve the anomaly review queue."""


@review.command("list")
@click.option("--all", "show_all", is_flag=True, help="Include resolved items.")
@click.pass_context
def review_list(ctx: click.Context, show_all: bool) -> None:
    """List open review items."""
    config = _pipeline_config(ctx)
    queue = pipeline.ReviewQueue(config.review_queue_path)
    items = queue.load()
    shown = 0
    for item_id in sorted(items):
        item = items[item_id]
        if not show_all and item.status is not pipeline.ReviewStatus.OPEN:
            continue
        click.echo(f"{item.item_id} [{item.status.value}] {item.report_reference}: {item.reason}")
        shown += 1
    if shown == 0:
        click.echo("no open review items")


@review.command("show")
@click.argument("item_id")
@click.pass_context
def review_show(ctx: click.Context, item_id: str) -> None:
    """Show one review item in full."""
    config = _pipeline_config(ctx)
    items = pipeline.ReviewQueue(config.review_queue_path).load()
    if item_id not in items:
        click.echo(f"no review item {item_id!r}", err=True)
        raise click.exceptions.Exit(EXIT_PARTIAL)
    click.echo(json.dumps(items[item_id].to_record(), indent=2, sort_keys=True))


@review.command("resolve")
@click.argument("item_id")
@click.option("--confirm", is_flag=True, help="Confirm the row as a real anomaly.")
@click.option("--correct-measured", default=None, help="Corrected measured value (raw text).")
@click.option("--correct-success", default=None, help="Corrected success mark (raw text).")
@click.pass_context
def review_resolve(ctx, item_id, confirm, correct_measured, correct_success) -> None:
    """Resolve an open review item by confirmation or correction."""
    config = _pipeline_config(ctx)
    try:
        item = pipeline.resolve_item(
            item_id,
            config,
            confirm=confirm,
            corrected_measured=correct_measured,
            corrected_success=correct_success,
        )
    except (pipeline.UnknownItem, pipeline.AlreadyResolved, pipeline.CorrectionRejected, pipeline.PipelineError) as exc:
        click.echo(str(exc), err=True)
        raise click.exceptions.Exit(EXIT_PARTIAL)
    click.echo(f"{item.item_id}: {item.status.value}")


@main.command()
@click.option("--query", "query_text", default=None, help="Inline BGP query.")
@click.option("--file", "query_file", type=click.Path(exists=True), default=None, help="Query file.")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON bindings.")
@click.pass_context
def query(ctx: click.Context, query_text, query_file, as_json) -> None:
    """Answer a basic-graph-pattern query over the KG plus virtual triples."""
    if (query_text is None) == (query_file is None):
        raise _fail_config("provide exactly one of --query or --file")
    if query_file is not None:
        query_text = Path(query_file).read_text(encoding="utf-8")
    config = _pipeline_config(ctx)
    store = pipeline.load_stores(config)
    mappings = pipeline.load_mappings(config)
    tables = {}
    for mapping in mappings:
        prop = mapping.observed_property()
        if prop is None:
            continue
        sd = store.structure_def(prop)
        if not sd.results_location:
            continue
        path = Path(config.data_dir) / sd.results_location
        if path.exists():
            tables[mapping.source.table] = vkg.load_row_table(path, name=mapping.source.table)
    try:
        parsed = vkg.parse_bgp_query(query_text)
        bindings = vkg.answer(parsed, store, mappings, tables)
    except vkg.VkgError as exc:
        click.echo(f"query failed: {exc}", err=True)
        raise click.exceptions.Exit(EXIT_PARTIAL)
    if as_json:
        rows = [
            {name: _term_json(term) for name, term in binding.items()} for binding in bindings
        ]
        click.echo(json.dumps(rows, indent=2))
    else:
        for binding in bindings:
            click.echo("  ".join(f"{name}={_term_text(term)}" for name, term in binding.items()))
        click.echo(f"({len(bindings)} result{'s' if len(bindings) != 1 else ''})")


def _term_text(term) -> str:
    from .kg import Iri

    if isinstance(term, Iri):
        return f"<{term.value}>"
    return json.dumps(term.text)


def _term_json(term) -> dict:
    from .kg import Iri

    if isinstance(term, Iri):
        return {"type": "iri", "value": term.value}
    out = {"type": "literal", "value": term.text, "datatype": term.datatype}
    if term.lang:
        out["lang"] = term.lang
    return out


@main.command(name="bench")
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--json", "json_out", type=click.Path(), default=None, help="Write metrics JSON here.")
@click.option("--flip-in", type=float, default=None, help="Mock flip rate for in-range rows.")
@click.option("--flip-out", type=float, default=None, help="Mock flip rate for out-of-range rows.")
@click.pass_context
def bench_cmd(ctx: click.Context, dataset, json_out, flip_in, flip_out) -> None:
    """Benchmark a checker backend on a dataset CSV against the oracle."""
    app = _app(ctx)
    try:
        cfg = app.backend_config(ctx.obj["backend"], ctx.obj["seed"])
        if flip_in is not None:
            cfg.mock_flip_in_range = flip_in
        if flip_out is not None:
            cfg.mock_flip_out_of_range = flip_out
        backend = llm.make_backend(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        raise _fail_config(f"backend: {exc}")
    rows = bench_mod.load_dataset(dataset)
    try:
        result = bench_mod.bench_run(
            rows,
            backend,
            template=app.template() or llm.DEFAULT_TEMPLATE,
            retry=llm.RetryPolicy(max_attempts=cfg.max_attempts if cfg.kind == "http" else 1),
            max_in_flight=cfg.max_in_flight,
            registry=app.registry(),
        )
    except bench_mod.BenchError as exc:
        click.echo(f"benchmark failed: {exc}", err=True)
        raise click.exceptions.Exit(EXIT_PARTIAL)
    click.echo(result.render())
    if json_out:
        Path(json_out).write_text(json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8")
        click.echo(f"wrote {json_out}")
    if result.partial:
        raise click.exceptions.Exit(EXIT_PARTIAL)


@main.command()
@click.option("--templates", "-n", type=int, required=True, help="Number of report templates.")
@click.option("--test-types", "-t", type=int, default=30, show_default=True)
@click.option("--max-reports", "-r", type=int, default=12, show_default=True)
@click.option("--csv", "csv_out", type=click.Path(), default=None, help="Write the table as CSV.")
@click.pass_context
def cost(ctx: click.Context, templates, test_types, max_reports, csv_out) -> None:
    """Compare manual vs automated effort and report the break-even point."""
    app = _app(ctx)
    try:
        coeffs = app.cost_coefficients()
    except ConfigError as exc:
        raise _fail_config(str(exc))
    try:
        even = costmodel.break_even(templates, test_types, coeffs)
        click.echo(
            f"break-even for n={templates}, t={test_types}: "
            f"automation wins strictly from report {even}"
        )
    except costmodel.NoBreakEven as exc:
        click.echo(f"no break-even: {exc}")
        even = None
    header = f"{'r':>4}  {'as-is':>12}  {'automated':>12}  {'saving':>8}"
    click.echo(header)
    lines = [("r", "asis_person_days", "automated_person_days", "break_even")]
    for r, asis, auto, marker in costmodel.cost_table(templates, test_types, max_reports, coeffs):
        saving = "" if asis == 0 else f"{float(1 - auto / asis):7.1%}"
        star = "  <- break-even" if marker else ""
        click.echo(f"{r:>4}  {asis:>12}  {auto:>12}  {saving:>8}{star}")
        lines.append((str(r), str(asis), str(auto), "1" if marker else ""))
    if csv_out:
        import csv as csv_lib

        with open(csv_out, "w", newline="", encoding="utf-8") as fh:
            csv_lib.writer(fh).writerows(lines)
        click.echo(f"wrote {csv_out}")


if __name__ == "__main__":
    main()
