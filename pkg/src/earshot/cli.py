"""Operator command line: validate manifests, build schedules, export, report.

Exit codes: 0 success, 1 domain violation (invalid manifest, infeasible
pool, no data), 2 IO or usage problems.  Everything is scriptable; tables
render as text, JSON, or CSV.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import render
from .assignment import SizingError, build_trial_schedule
from .core import EarshotError, ManifestParseError, load_manifest
from .eventlog import FileEventLog, export_responses
from .server import create_app, load_config, load_study_dir
from .stats import (
    CI_METHODS,
    ResponseSet,
    SchemaError,
    compute_marker_rates,
    compute_mushra,
    exclude_rushed,
    hfr_table,
    timing_stats,
)

REPORT_KINDS = ("hfr-table", "marker-table", "mushra-table", "timing-table")


def _usage_fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _domain_fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(package_name="earshot")
def main():
    """Listening-study operations: validate, schedule, serve, export, report."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(), help="Study manifest JSON.")
def validate(manifest_path):
    """Check a manifest; silent and exit 0 when valid."""
    try:
        _, _, report = load_manifest(manifest_path)
    except ManifestParseError as e:
        _usage_fail(str(e))
    if report.ok:
        sys.exit(0)
    click.echo(report.render())
    sys.exit(1)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--pool", required=True, type=int, help="Rater pool size to schedule for.")
@click.option("--seed", type=int, default=None, help="Shuffle seed (default: the manifest's rng_seed).")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write here instead of stdout.")
@click.option("--one-per-utterance", is_flag=True, help="Cap raters to one rendition per utterance.")
@click.option("--uniform-order", is_flag=True, help="Plain shuffle instead of anti-streak ordering.")
def schedule(manifest_path, pool, seed, out_path, one_per_utterance, uniform_order):
    """Build the deterministic per-rater trial schedule."""
    try:
        study, stimuli, report = load_manifest(manifest_path)
    except ManifestParseError as e:
        _usage_fail(str(e))
    if not report.ok:
        click.echo(report.render(), err=True)
        _domain_fail("manifest invalid; fix it before scheduling")
    try:
        sched = build_trial_schedule(
            study,
            stimuli,
            pool,
            study.rng_seed if seed is None else seed,
            one_per_utterance=one_per_utterance,
            anti_streak=not uniform_order,
        )
    except SizingError as e:
        _domain_fail(str(e))
    text = sched.to_json()
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--data-dir", "data_dir", required=True, type=click.Path(), help="Service data directory.")
@click.option("--study", "study_id", required=True, help="Study id to export.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write here instead of stdout.")
def export(data_dir, study_id, out_path):
    """Export a study's accepted responses from the event log as CSV."""
    data_dir = Path(data_dir)
    study_dir = data_dir / "studies" / study_id
    if not (study_dir / "manifest.json").is_file():
        _domain_fail(f"unknown study {study_id!r} (no {study_dir / 'manifest.json'})")
    try:
        bundle = load_study_dir(study_dir)
        log = FileEventLog(data_dir / "events.log")
        csv_text = export_responses(log.replay(), bundle.study, bundle.stimuli, bundle.schedule)
        log.close()
    except OSError as e:
        _usage_fail(str(e))
    except EarshotError as e:
        _domain_fail(str(e))
    if out_path:
        Path(out_path).write_text(csv_text)
    else:
        click.echo(csv_text, nl=False)


def _parse_cohorts(spec: str | None, systems) -> dict:
    if not spec:
        return {s: s for s in systems}
    out = {}
    for pair in spec.split(","):
        if "=" not in pair:
            _usage_fail(f"--cohorts entries look like system=cohort, got {pair!r}")
        system, cohort = pair.split("=", 1)
        out[system.strip()] = cohort.strip()
    return out


@main.command()
@click.option("--results", "results_path", required=True, type=click.Path(), help="Results CSV to analyze.")
@click.option("--report", "report_kind", required=True, type=click.Choice(REPORT_KINDS))
@click.option("--group-rows", default="system", show_default=True, help="CSV column for table rows.")
@click.option("--group-cols", default="study_id", show_default=True, help="CSV column for table columns.")
@click.option("--format", "format_", default="text", type=click.Choice(render.FORMATS), show_default=True)
@click.option("--ci-method", default="wald", type=click.Choice(CI_METHODS), show_default=True)
@click.option("--min-decision-ms", default=500, show_default=True, help="Rush-flag threshold.")
@click.option("--exclude-rushed", "drop_rushed", is_flag=True, help="Drop rush-flagged responses before computing.")
@click.option("--cohorts", default=None, help="marker-table cohorts as system=cohort,... (default: one per system).")
@click.option("--manifest", "manifest_path", default=None, type=click.Path(),
              help="Manifest supplying the marker catalog for marker-table.")
def report(results_path, report_kind, group_rows, group_cols, format_, ci_method,
           min_decision_ms, drop_rushed, cohorts, manifest_path):
    """Render one of the standard result tables from an exported CSV."""
    try:
        responses = ResponseSet.from_csv(results_path)
    except OSError as e:
        _usage_fail(str(e))
    except SchemaError as e:
        _domain_fail(str(e))
    if drop_rushed:
        responses = exclude_rushed(responses, min_decision_ms)
    try:
        if report_kind == "hfr-table":
            table = hfr_table(responses, row_key=group_rows, col_key=group_cols, ci_method=ci_method)
            click.echo(render.render_hfr_table(table, format_), nl=False)
        elif report_kind == "marker-table":
            catalog = _catalog_from_manifest(manifest_path)
            cohort_map = _parse_cohorts(cohorts, sorted({r.system for r in responses}))
            table = compute_marker_rates(responses, cohort_map, catalog)
            click.echo(render.render_marker_table(table, format_, catalog=catalog), nl=False)
        elif report_kind == "mushra-table":
            click.echo(render.render_mushra_table(compute_mushra(responses), format_), nl=False)
        else:
            click.echo(render.render_timing_table(timing_stats(responses), format_), nl=False)
    except EarshotError as e:
        _domain_fail(str(e))


def _catalog_from_manifest(manifest_path):
    from .core import DEFAULT_MARKER_CATALOG

    if not manifest_path:
        return DEFAULT_MARKER_CATALOG
    try:
        study, _, _ = load_manifest(manifest_path)
    except ManifestParseError as e:
        _usage_fail(str(e))
    return study.marker_catalog or DEFAULT_MARKER_CATALOG


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(), help="Service config JSON.")
def serve(config_path):
    """Run the HTTP session service (EARSHOT_PORT/DATA_DIR/MAC_KEY override)."""
    import uvicorn

    try:
        cfg = load_config(config_path)
        app = create_app(cfg)
    except OSError as e:
        _usage_fail(str(e))
    except EarshotError as e:
        _domain_fail(str(e))
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")


if __name__ == "__main__":
    main()
