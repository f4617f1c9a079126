import json
from dataclasses import replace
from pathlib import Path

import pytest
from click.testing import CliRunner

from boardcheck import cli, llm, pipeline, vkg
from boardcheck.pipeline import (
    AlreadyResolved,
    CorrectionRejected,
    LockHeld,
    PipelineError,
    ReviewQueue,
    ReviewStatus,
    UnknownItem,
    data_dir_lock,
    resolve_item,
    run_pipeline,
)


def run_batch(pipeline_config, report_batch):
    return run_pipeline(report_batch, pipeline_config)


def test_run_pipeline_batch(pipeline_config, report_batch):
    summary = run_batch(pipeline_config, report_batch)
    assert not summary.failed
    assert summary.queued == 3
    pending = [o for o in summary.outcomes if o.status == "Pending"]
    assert {o.reference for o in pending} == {"TASI-2003", "TASI-2005", "TASI-2008"}
    clean_rows = sum(o.rows_total for o in summary.outcomes) - 3
    assert summary.integrated == clean_rows

    queue = ReviewQueue(pipeline_config.review_queue_path)
    items = queue.open_items()
    assert len(items) == 3
    reasons = {i.item_id: i.reason for i in items}
    assert "successful column reads '-'" in reasons["TASI-2003-Core2"]
    assert "outside limits" in reasons["TASI-2005-P2-P3"]
    assert "unparseable" in reasons["TASI-2008-Case-P2"]

    store = pipeline.load_stores(pipeline_config)
    assert store.report_meta("TASI-2001").validation == "OK"
    assert store.report_meta("TASI-2003").validation == "Pending"


def test_rerun_is_noop(pipeline_config, report_batch):
    first = run_batch(pipeline_config, report_batch)
    second = run_batch(pipeline_config, report_batch)
    assert second.integrated == 0
    assert second.queued == 0
    assert all(o.skipped for o in second.outcomes)
    assert len(ReviewQueue(pipeline_config.review_queue_path).open_items()) == 3
    # Row tables unchanged byte for byte.
    pol = pipeline_config.data_dir / "VALIDATED" / "pol" / "pol.csv"
    before = pol.read_bytes()
    run_batch(pipeline_config, report_batch)
    assert pol.read_bytes() == before


def test_no_unreviewed_row_reaches_tables(pipeline_config, report_batch):
    run_batch(pipeline_config, report_batch)
    queue = ReviewQueue(pipeline_config.review_queue_path)
    queued_ids = set(queue.load())
    store = pipeline.load_stores(pipeline_config)
    mappings = pipeline.load_mappings(pipeline_config)
    integrated = pipeline.integrated_ids(store, pipeline_config, mappings)
    assert queued_ids  # sanity
    assert not (queued_ids & integrated)


def test_resolve_flow_flips_statuses(pipeline_config, report_batch):
    run_batch(pipeline_config, report_batch)

    item = resolve_item("TASI-2003-Core2", pipeline_config, corrected_success="OK")
    assert item.status is ReviewStatus.CORRECTED
    store = pipeline.load_stores(pipeline_config)
    assert store.report_meta("TASI-2003").validation == "OK"

    item = resolve_item("TASI-2005-P2-P3", pipeline_config, confirm=True)
    assert item.status is ReviewStatus.CONFIRMED_ANOMALY
    store = pipeline.load_stores(pipeline_config)
    assert store.report_meta("TASI-2005").validation == "Pending"

    item = resolve_item("TASI-2008-Case-P2", pipeline_config, confirm=True)
    store = pipeline.load_stores(pipeline_config)
    assert store.report_meta("TASI-2008").validation == "Pending"

    queue = ReviewQueue(pipeline_config.review_queue_path)
    assert queue.open_items() == []
    # The queue file is append-only: the original Open record is still there,
    # superseded by the resolution record.
    lines = pipeline_config.review_queue_path.read_text().splitlines()
    core2 = [json.loads(l) for l in lines if json.loads(l)["item_id"] == "TASI-2003-Core2"]
    assert [r["status"] for r in core2] == ["Open", "Corrected"]
    # Confirmed rows are integrated with the anomaly flag set.
    ist = pipeline_config.data_dir / "VALIDATED" / "ist" / "ist.csv"
    table = vkg.load_row_table(ist, name="tasi.internal_isolation")
    flags = {row[1]: row[-1] for row in table.rows if row[0] == "TASI-2005"}
    assert flags["P2-P3"] == "true"
    assert flags["P1-P2"] == ""


def test_resolve_correction_rejected_when_still_invalid(pipeline_config, report_batch):
    run_batch(pipeline_config, report_batch)
    # The row is in range; a mark that still is not a pass keeps it anomalous.
    with pytest.raises(CorrectionRejected):
        resolve_item("TASI-2003-Core2", pipeline_config, corrected_success="NOK")
    queue = ReviewQueue(pipeline_config.review_queue_path)
    assert "TASI-2003-Core2" in {i.item_id for i in queue.open_items()}


def test_resolve_corrected_measured_value(pipeline_config, report_batch):
    run_batch(pipeline_config, report_batch)
    item = resolve_item("TASI-2005-P2-P3", pipeline_config, corrected_measured="1.4MΩ")
    assert item.status is ReviewStatus.CORRECTED
    assert item.correction == {"measured_raw": "1.4MΩ"}


def test_resolve_errors(pipeline_config, report_batch):
    run_batch(pipeline_config, report_batch)
    with pytest.raises(UnknownItem):
        resolve_item("nope", pipeline_config, confirm=True)
    resolve_item("TASI-2003-Core2", pipeline_config, confirm=True)
    with pytest.raises(AlreadyResolved):
        resolve_item("TASI-2003-Core2", pipeline_config, confirm=True)
    with pytest.raises(PipelineError):
        resolve_item("TASI-2005-P2-P3", pipeline_config)  # no action given
    with pytest.raises(PipelineError):
        resolve_item("TASI-2005-P2-P3", pipeline_config, confirm=True, corrected_success="OK")


def test_failed_report_is_isolated(pipeline_config, report_batch, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{"nope": true}')
    documents = [report_batch[0], broken, report_batch[1]]
    summary = run_pipeline(documents, pipeline_config)
    assert len(summary.failed) == 1
    ok = [o for o in summary.outcomes if not o.error]
    assert {o.reference for o in ok} == {"TASI-2001", "TASI-2002"}


def test_lock_excludes_concurrent_runs(pipeline_config, report_batch):
    with data_dir_lock(pipeline_config.data_dir):
        with pytest.raises(LockHeld):
            run_pipeline(report_batch[:1], pipeline_config)
    # Lock is released afterwards.
    summary = run_pipeline(report_batch[:1], pipeline_config)
    assert not summary.failed


def test_llm_oracle_mismatch_is_queued(pipeline_config, report_batch):
    config = replace(
        pipeline_config,
        backend=llm.mock_backend(9, flip_rate_in_range=1.0, flip_rate_out_of_range=1.0),
    )
    summary = run_pipeline([report_batch[0]], config)
    outcome = summary.outcomes[0]
    assert outcome.queued == outcome.rows_total  # every row disagrees now
    queue = ReviewQueue(config.review_queue_path)
    assert all("oracle/LLM mismatch" in i.reason for i in queue.open_items())


# ---------------------------------------------------------------------------
# CLI


def _write_config(tmp_path: Path, fixtures: Path, backend: str = "mock") -> Path:
    config = tmp_path / "config.toml"
    config.write_text(
        f"""
[pipeline]
ontology = "{fixtures / 'ontology.ttl'}"
mappings = "{fixtures / 'mappings' / 'default.map'}"
data_dir = "{tmp_path / 'data'}"
review_queue = "{tmp_path / 'data' / 'review_queue.jsonl'}"

[llm]
backend = "{backend}"

[llm.mock]
seed = 7

[llm.replay]
fixture = "{fixtures / 'bench' / 'replay_gpt4.jsonl'}"
"""
    )
    return config


def test_cli_run_review_and_exit_codes(tmp_path, fixtures_dir, report_batch):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    args = ["--config", str(config), "run"] + [str(p) for p in report_batch]
    result = runner.invoke(cli.main, args)
    assert result.exit_code == 0, result.output
    assert "3 review items" in result.output

    result = runner.invoke(cli.main, ["--config", str(config), "review", "list"])
    assert result.exit_code == 0
    assert result.output.count("[Open]") == 3

    result = runner.invoke(
        cli.main,
        ["--config", str(config), "review", "resolve", "TASI-2003-Core2", "--correct-success", "OK"],
    )
    assert result.exit_code == 0
    assert "Corrected" in result.output

    result = runner.invoke(cli.main, ["--config", str(config), "review", "show", "TASI-2005-P2-P3"])
    assert result.exit_code == 0
    assert json.loads(result.output)["status"] == "Open"


def test_cli_partial_failure_exit_code(tmp_path, fixtures_dir, report_batch):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    broken = tmp_path / "broken.json"
    broken.write_text("{}")
    result = runner.invoke(
        cli.main, ["--config", str(config), "run", str(report_batch[0]), str(broken)]
    )
    assert result.exit_code == 1


def test_cli_config_error_exit_code(tmp_path):
    runner = CliRunner()
    missing = tmp_path / "missing.toml"
    result = runner.invoke(cli.main, ["--config", str(missing), "review", "list"])
    assert result.exit_code == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[pipeline]\nontology = \"/nowhere/x.ttl\"\nmappings = \"/nowhere/y.map\"\ndata_dir = \"d\"\nreview_queue = \"q\"\n")
    result = runner.invoke(cli.main, ["--config", str(bad), "review", "list"])
    assert result.exit_code == 2


def test_cli_validate_and_extract(tmp_path, fixtures_dir, report_batch):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    result = runner.invoke(
        cli.main, ["--config", str(config), "validate", str(report_batch[2])]
    )
    assert result.exit_code == 0
    assert "Pending" in result.output
    out_file = tmp_path / "obs.jsonl"
    result = runner.invoke(
        cli.main,
        ["--config", str(config), "extract", str(report_batch[0]), "--out", str(out_file)],
    )
    assert result.exit_code == 0
    records = [json.loads(line) for line in out_file.read_text().splitlines()]
    assert len(records) == 5


def test_cli_integrate_from_extracted(tmp_path, fixtures_dir, report_batch):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    out_file = tmp_path / "obs.jsonl"
    runner.invoke(
        cli.main,
        ["--config", str(config), "extract", str(report_batch[0]), "--out", str(out_file)],
    )
    result = runner.invoke(cli.main, ["--config", str(config), "integrate", str(out_file)])
    assert result.exit_code == 0
    assert "integrated 5 rows" in result.output
    pol = tmp_path / "data" / "VALIDATED" / "pol" / "pol.csv"
    assert pol.exists()


def test_cli_query_over_integrated_data(tmp_path, fixtures_dir, report_batch):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    runner.invoke(cli.main, ["--config", str(config), "run"] + [str(p) for p in report_batch])
    result = runner.invoke(
        cli.main,
        [
            "--config",
            str(config),
            "query",
            "--query",
            "SELECT ?o WHERE { ?o sosa:observedProperty tasi:Isolation }",
        ],
    )
    assert result.exit_code == 0
    assert "results)" in result.output
    result_json = runner.invoke(
        cli.main,
        [
            "--config",
            str(config),
            "query",
            "--json",
            "--query",
            'SELECT ?o WHERE { ?o tasi:reportedIn "TASI-2001" }',
        ],
    )
    rows = json.loads(result_json.output[: result_json.output.rfind("]") + 1])
    assert len(rows) == 5


def test_cli_bench_and_cost(tmp_path, fixtures_dir):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    dataset = fixtures_dir / "bench" / "dataset_198.csv"
    json_out = tmp_path / "metrics.json"
    result = runner.invoke(
        cli.main,
        ["--config", str(config), "--backend", "replay", "bench", str(dataset), "--json", str(json_out)],
    )
    assert result.exit_code == 0, result.output
    payload = json.loads(json_out.read_text())
    assert payload["overall"]["accuracy"] == "0.990"
    assert payload["overall"]["f1"] == "0.938"

    csv_out = tmp_path / "cost.csv"
    result = runner.invoke(
        cli.main,
        ["--config", str(config), "cost", "-n", "1", "-t", "30", "-r", "8", "--csv", str(csv_out)],
    )
    assert result.exit_code == 0
    assert "from report 6" in result.output
    assert csv_out.exists()


def test_cli_seed_flag_controls_mock(tmp_path, fixtures_dir):
    runner = CliRunner()
    config = _write_config(tmp_path, fixtures_dir)
    dataset = fixtures_dir / "bench" / "dataset_198.csv"
    outputs = []
    for seed in ("3", "3", "4"):
        result = runner.invoke(
            cli.main,
            ["--config", str(config), "--seed", seed, "bench", str(dataset), "--flip-out", "0.5"],
        )
        assert result.exit_code == 0, result.output
        outputs.append(result.output)
    assert outputs[0] == outputs[1]
    assert outputs[0] != outputs[2]
