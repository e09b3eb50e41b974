"""Command line entry point: ``aegis run | eval | testbed``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .agent import AgentEndpoint
from .evaluation import (
    MissingPrediction,
    confusion,
    format_table,
    load_labels,
    load_predictions,
    metrics,
    write_report,
)
from .ingestion import FetchConfig, SourceRequest
from .pipeline import PipelineError, RunConfig, TrackSelectionRequired, run_pipeline

logger = logging.getLogger("aegis")


def _track_list(text: str) -> set[int]:
    try:
        return {int(p) for p in text.split(",") if p.strip()}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of track numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aegis", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="crawl a proceedings page and nominate matching papers")
    run.add_argument("--url", required=True, help="proceedings page url")
    run.add_argument("--conference", required=True, help="conference id, e.g. neurips, acl")
    run.add_argument("--year", required=True, type=int)
    run.add_argument("--limit", type=int, help="process at most this many papers")
    run.add_argument("--resume-offset", type=int, help="skip this many papers of the normalized list")
    run.add_argument("--backend", choices=("offline", "live"), default="offline")
    run.add_argument("--agent-url", help="agent base url (live backend)")
    run.add_argument("--agent-route", default="/api/command")
    run.add_argument("--agent-timeout", type=float, default=30.0, help="connect/request timeout, seconds")
    run.add_argument("--stream-idle-timeout", type=float, default=120.0, help="seconds without a chunk")
    run.add_argument("--workers", type=int, default=1, help="parallel agent calls")
    run.add_argument("--tracks", type=_track_list, help="track numbers for track-based pages, e.g. 0,2")
    run.add_argument("--layout", choices=("flat", "tracked"), help="override the layout registry")
    run.add_argument("--dry-run", action="store_true", help="fill the form but do not submit")
    run.add_argument("--labels", type=Path, help="ground-truth CSV; writes metrics for the run")
    run.add_argument("--run-id")
    run.add_argument("--runs-dir", type=Path, default=Path("runs"))
    run.add_argument("--cache-dir", type=Path, default=Path("cache"))
    run.add_argument("--render-wait-ms", type=int, default=15000)
    run.add_argument("--refetch", action="store_true", help="ignore the page cache")
    run.add_argument("--rules-dir", type=Path)
    run.add_argument("--prompt-dir", type=Path)
    run.add_argument("--form-spec", type=Path)
    run.add_argument("--webdriver-url", help="remote WebDriver endpoint; default is a local headless Chrome")
    run.add_argument("--fixtures", type=Path, help="fixture corpus for the offline backend")

    ev = sub.add_parser("eval", help="score predictions against labels")
    ev.add_argument("--predictions", required=True, type=Path, help="JSON {url: bool} or CSV url,is_positive")
    ev.add_argument("--labels", required=True, type=Path)
    ev.add_argument("--name", default="", help="dataset name for the table")
    ev.add_argument("--out", type=Path, help="write metrics.json/metrics.txt here")

    tb = sub.add_parser("testbed", help="serve the fixture corpus, form and emulated browser")
    tb.add_argument("--corpus", type=Path, help="corpus directory (default: bundled)")
    tb.add_argument("--port", type=int, default=8765)
    tb.add_argument("--host", default="127.0.0.1")
    return parser


def _run(args) -> int:
    if args.backend == "live" and not args.agent_url:
        print("error: --backend live needs --agent-url", file=sys.stderr)
        return 2
    agent = (
        AgentEndpoint(args.agent_url, args.agent_route, args.agent_timeout, args.stream_idle_timeout)
        if args.agent_url
        else None
    )
    cfg = RunConfig(
        source=SourceRequest(args.url, args.conference, args.year, args.limit, args.resume_offset),
        backend=args.backend,
        agent=agent,
        form_spec_path=args.form_spec,
        rules_dir=args.rules_dir,
        prompt_dir=args.prompt_dir,
        fixtures_dir=args.fixtures,
        workers=args.workers,
        dry_run=args.dry_run,
        run_id=args.run_id,
        runs_dir=args.runs_dir,
        evaluate_against=args.labels,
        tracks=args.tracks,
        layout=args.layout,
        fetch=FetchConfig(cache_dir=args.cache_dir, render_wait_ms=args.render_wait_ms, force_refetch=args.refetch),
        webdriver_url=args.webdriver_url,
    )
    try:
        summary = run_pipeline(cfg)
    except TrackSelectionRequired as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    counts = ", ".join(f"{k}={v}" for k, v in sorted(summary.counts.items())) or "nothing to do"
    print(f"run {summary.run_id}: {counts} in {summary.elapsed_s:.1f}s")
    if summary.metrics:
        print(format_table([summary.metrics]))
    if summary.excluded_from_scoring:
        print(f"warning: {len(summary.excluded_from_scoring)} labeled paper(s) not scored", file=sys.stderr)
    for url in summary.failed_urls:
        print(f"FAILED {url}", file=sys.stderr)
    return summary.exit_code


def _eval(args) -> int:
    predictions = load_predictions(args.predictions)
    labels = load_labels(args.labels)
    try:
        report = metrics(confusion(predictions, labels), dataset_name=args.name)
    except MissingPrediction as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(format_table([report]))
    if args.out:
        write_report(report, args.out)
    return 0


def _testbed(args) -> int:
    from .testbed import default_corpus_dir, serve_fixtures

    server = serve_fixtures(args.corpus or default_corpus_dir(), port=args.port, host=args.host)
    print(f"testbed on {server.base_url} (webdriver: {server.webdriver_url}); Ctrl-C to stop")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "eval": _eval, "testbed": _testbed}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
