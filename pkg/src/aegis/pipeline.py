"""End-to-end run: fetch, normalize, prompt, extract, verify, nominate.

Per-url progress lives in ``runs/<run_id>/journal.jsonl``. Re-running with
the same run id only touches urls that have not reached NEGATIVE or
SUBMITTED, and never posts a nomination twice.

Run directory::

    runs/<run_id>/journal.jsonl
    runs/<run_id>/transcripts/<ordinal>.txt
    runs/<run_id>/records/<ordinal>.json
    runs/<run_id>/submitted.jsonl
    runs/<run_id>/summary.json
    runs/<run_id>/metrics.json, metrics.txt   # only with labels
"""

from __future__ import annotations

import json
import logging
import re
import sys
import time
from collections import Counter, deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Sequence

from . import agent as agent_mod
from .agent import AgentEndpoint, AgentError, FixtureMissing, FixtureStore, KeywordConfig
from .browser import open_session
from .evaluation import MetricsReport, confusion, load_labels, metrics, write_report
from .ingestion import FetchConfig, SourceRequest, fetch_and_cache
from .journal import TERMINAL, RunJournal, State
from .links import (
    Layout,
    PaperLink,
    Track,
    detect_layout,
    discover_links,
    extract_tracks,
    flatten_selected,
    load_rules,
    normalize_flat,
    prompt_track_selection,
)
from .parsing import Rejection, decide_positive, parse_transcript, verify_record
from .prompts import load_library, render_prompt, select_template
from .rpa import NominationFormSpec, SubmissionJournal, SubmissionStatus, submit_nomination

logger = logging.getLogger(__name__)

_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class TrackSelectionRequired(RuntimeError):
    pass


def bundled(*parts: str) -> Path:
    return Path(str(resources.files("aegis").joinpath("data", *parts)))


@dataclass
class RunConfig:
    source: SourceRequest
    backend: str = "offline"
    agent: AgentEndpoint | None = None
    form_spec_path: Path | None = None
    rules_dir: Path | None = None
    prompt_dir: Path | None = None
    fixtures_dir: Path | None = None
    workers: int = 1
    dry_run: bool = False
    run_id: str | None = None
    runs_dir: Path = Path("runs")
    evaluate_against: Path | None = None
    tracks: set[int] | None = None
    layout: str | None = None
    fetch: FetchConfig = field(default_factory=FetchConfig)
    webdriver_url: str | None = None
    keywords: KeywordConfig = field(default_factory=KeywordConfig)
    agent_retries: int = 2
    retry_backoff_s: float = 1.0

    def __post_init__(self):
        if self.backend not in ("live", "offline"):
            raise ValueError(f"backend must be live or offline, not {self.backend!r}")
        if self.backend == "live" and self.agent is None:
            raise ValueError("the live backend needs an agent endpoint")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.run_id is None:
            self.run_id = f"{self.source.conference_id}-{self.source.year}"
        if not _RUN_ID.match(self.run_id):
            raise ValueError(f"run id is not filesystem safe: {self.run_id!r}")
        self.runs_dir = Path(self.runs_dir)

    @property
    def run_dir(self) -> Path:
        return self.runs_dir / self.run_id


@dataclass
class RunSummary:
    run_id: str
    counts: dict[str, int]
    elapsed_s: float
    metrics: MetricsReport | None = None
    failed_urls: list[str] = field(default_factory=list)
    excluded_from_scoring: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failed_urls else 0

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "counts": self.counts,
            "elapsed_s": round(self.elapsed_s, 3),
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "failed_urls": self.failed_urls,
            "excluded_from_scoring": self.excluded_from_scoring,
        }


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(path)


class _Run:
    def __init__(self, cfg: RunConfig, open_browser, choose_tracks, on_boundary):
        self.cfg = cfg
        self.open_browser = open_browser or partial(open_session, cfg.webdriver_url)
        self.choose_tracks = choose_tracks
        self.boundary = on_boundary or (lambda stage, url: None)
        self.dir = cfg.run_dir
        self.journal = RunJournal(self.dir / "journal.jsonl")
        self.submissions = SubmissionJournal(self.dir / "submitted.jsonl")
        self.counts: Counter[str] = Counter()
        self.driver = None
        self.library = load_library(cfg.prompt_dir)
        self.store = (
            FixtureStore.from_corpus(cfg.fixtures_dir or bundled("corpus"))
            if cfg.backend == "offline"
            else None
        )

    # stage 1-2 ---------------------------------------------------------------

    def paper_links(self) -> list[PaperLink]:
        cfg = self.cfg
        try:
            doc = fetch_and_cache(cfg.source, cfg.fetch, self.open_browser)
        except Exception as exc:
            raise PipelineError("fetch", exc) from exc
        self.source_url = doc.url
        self.boundary("fetch", None)

        try:
            rules = load_rules(cfg.source.conference_id, cfg.rules_dir)
            layout = detect_layout(cfg.source.conference_id, override=cfg.layout or rules.layout)
            ruleset = rules.ruleset(doc.url)
            if layout is Layout.FLAT:
                links = normalize_flat(discover_links(doc), ruleset)
            else:
                tracks = extract_tracks(doc, rules.heading_levels, rules.min_links_per_track)
                links = flatten_selected(tracks, self.select_tracks(tracks), ruleset)
        except Exception as exc:
            raise PipelineError("normalize", exc) from exc
        for link in links:
            if self.journal.state(link.absolute_url) is None:
                self.journal.record(link.absolute_url, State.PENDING, ordinal=link.ordinal)
        self.boundary("normalize", None)
        logger.info("%d paper links after normalization", len(links))
        return links

    def select_tracks(self, tracks: Sequence[Track]) -> set[int]:
        if self.cfg.tracks is not None:
            return set(self.cfg.tracks)
        if self.choose_tracks is not None:
            return set(self.choose_tracks(tracks))
        if not sys.stdin.isatty():
            labels = ", ".join(f"{t.heading_ordinal}={t.label}" for t in tracks)
            raise TrackSelectionRequired(f"track-based page and no TTY; pass --tracks (available: {labels})")
        return prompt_track_selection(tracks)

    # stage 3-4: prompting and the agent, possibly on worker threads ----------

    def transcript_path(self, link: PaperLink) -> Path:
        return self.dir / "transcripts" / f"{link.ordinal}.txt"

    def call_agent(self, link: PaperLink):
        cfg = self.cfg
        template = select_template(self.library, cfg.source.conference_id, link.publisher)
        prompt = render_prompt(template, link)
        path = self.transcript_path(link)
        path.parent.mkdir(parents=True, exist_ok=True)
        for attempt in range(cfg.agent_retries + 1):
            try:
                with path.open("w", encoding="utf-8") as log:

                    def on_chunk(text: str) -> None:
                        log.write(text)
                        log.flush()

                    if cfg.backend == "live":
                        return agent_mod.invoke_agent(cfg.agent, prompt, on_chunk=on_chunk)
                    return agent_mod.offline_extract(
                        link, self.store, cfg.keywords, on_chunk=on_chunk, prompt=prompt
                    )
            except FixtureMissing:
                raise
            except AgentError as exc:
                if attempt == cfg.agent_retries:
                    raise
                delay = cfg.retry_backoff_s * 2**attempt
                logger.warning("agent call for %s failed (%s), retry in %.1fs", link.absolute_url, exc, delay)
                time.sleep(delay)

    def agent_results(self, links: Sequence[PaperLink]) -> Iterator[tuple[PaperLink, object]]:
        """Yield ``(link, transcript | exception | None)`` in list order.

        Only PENDING links go to the agent; at most ``2 * workers`` calls are
        in flight so finished transcripts never pile up ahead of the consumer.
        """
        limit = self.cfg.workers * 2
        with ThreadPoolExecutor(max_workers=self.cfg.workers, thread_name_prefix="agent") as pool:
            queue: deque[tuple[PaperLink, Future | None]] = deque()
            it = iter(links)
            exhausted = False
            while queue or not exhausted:
                while not exhausted and len(queue) < limit:
                    link = next(it, None)
                    if link is None:
                        exhausted = True
                        break
                    needs_agent = self.journal.state(link.absolute_url) is State.PENDING
                    queue.append((link, pool.submit(self.call_agent, link) if needs_agent else None))
                if not queue:
                    break
                link, future = queue.popleft()
                if future is None:
                    yield link, None
                    continue
                try:
                    yield link, future.result()
                except Exception as exc:
                    yield link, exc

    # stage 5-6 ---------------------------------------------------------------

    def decide(self, link: PaperLink) -> State:
        url = link.absolute_url
        text = self.transcript_path(link).read_text(encoding="utf-8")
        record = parse_transcript(url, text)
        reason = None
        try:
            record = verify_record(record)
        except Rejection as rej:
            reason = rej.reason.value
            logger.info("verification rejected %s: %s", url, rej)
        if decide_positive(record):
            payload = record.to_json(
                conference=self.cfg.source.conference_id,
                year=self.cfg.source.year,
                fallback_area=link.track_label,
            )
            rel = Path("records") / f"{link.ordinal}.json"
            _write_json(self.dir / rel, payload)
            self.journal.record(url, State.POSITIVE, record=str(rel))
            return State.POSITIVE
        self.journal.record(
            url,
            State.NEGATIVE,
            claimed_match=record.agent_claims_match,
            rejection=reason,
        )
        return State.NEGATIVE

    # stage 7 -----------------------------------------------------------------

    def form_spec(self) -> NominationFormSpec:
        path = self.cfg.form_spec_path or bundled("forms", "testbed.json")
        return NominationFormSpec.load(path, base_url=self.source_url)

    def submit(self, link: PaperLink) -> State:
        url = link.absolute_url
        payload = json.loads((self.dir / self.journal.entry(url)["record"]).read_text(encoding="utf-8"))
        if self.driver is None:
            self.driver = self.open_browser()
            self.spec = self.form_spec()
        result = submit_nomination(self.driver, self.spec, payload, self.submissions, dry_run=self.cfg.dry_run)
        self.boundary("submit", url)
        if result.status is SubmissionStatus.DRY_RUN:
            self.counts["DRY_RUN"] += 1
            return State.POSITIVE
        if result.status in (SubmissionStatus.CONFIRMED, SubmissionStatus.SKIPPED):
            self.journal.record(url, State.SUBMITTED, submission=result.status.value)
            return State.SUBMITTED
        self.journal.record(
            url, State.FAILED, stage="submit", submission=result.status.value, error=result.error
        )
        return State.FAILED

    # driver ------------------------------------------------------------------

    def process(self, links: Sequence[PaperLink]) -> None:
        todo = []
        for link in links:
            state = self.journal.state(link.absolute_url)
            if state in TERMINAL:
                self.counts[State.SKIPPED.value] += 1
                continue
            if state is State.FAILED:
                self.journal.record(link.absolute_url, State.PENDING, resumed=True)
            todo.append(link)

        for link, result in self.agent_results(todo):
            url = link.absolute_url
            state = self.journal.state(url)
            if state is State.PENDING:
                if isinstance(result, BaseException):
                    logger.error("agent failed for %s: %s", url, result)
                    self.journal.record(url, State.FAILED, stage="agent", error=str(result))
                    self.counts[State.FAILED.value] += 1
                    continue
                self.journal.record(
                    url,
                    State.EXTRACTED,
                    transcript=str(self.transcript_path(link).relative_to(self.dir)),
                    backend=result.backend,
                    events=result.event_count,
                )
                self.counts[State.EXTRACTED.value] += 1
                self.boundary("extract", url)
                state = State.EXTRACTED
            if state is State.EXTRACTED:
                state = self.decide(link)
                self.counts[state.value] += 1
                self.boundary("decide", url)
            if state is State.POSITIVE:
                new_state = self.submit(link)
                if new_state is not State.POSITIVE:
                    self.counts[new_state.value] += 1

    def evaluate(self, links: Sequence[PaperLink]) -> tuple[MetricsReport, list[str]]:
        window = {link.absolute_url for link in links}
        labels = [l for l in load_labels(self.cfg.evaluate_against, base_url=self.source_url) if l.url in window]
        states = self.journal.states()
        predictions = {}
        excluded = []
        for label in labels:
            state = states.get(label.url)
            if state in (State.POSITIVE, State.SUBMITTED):
                predictions[label.url] = True
            elif state is State.NEGATIVE:
                predictions[label.url] = False
            else:
                excluded.append(label.url)
        if excluded:
            logger.warning(
                "%d labeled paper(s) have no decision (FAILED or unprocessed) and are NOT scored: %s",
                len(excluded),
                ", ".join(excluded),
            )
        scored = [l for l in labels if l.url in predictions]
        name = f"{self.cfg.source.conference_id}-{self.cfg.source.year}"
        report = metrics(confusion(predictions, scored), dataset_name=name)
        write_report(report, self.dir)
        return report, excluded

    def close(self) -> None:
        if self.driver is not None:
            try:
                self.driver.quit()
            except Exception:
                logger.debug("browser quit failed", exc_info=True)
            self.driver = None


def run_pipeline(
    cfg: RunConfig,
    open_browser: Callable[[], object] | None = None,
    choose_tracks: Callable[[Sequence[Track]], set[int]] | None = None,
    on_boundary: Callable[[str, str | None], None] | None = None,
) -> RunSummary:
    """Run every stage for ``cfg``.

    ``open_browser`` returns a selenium WebDriver (default: ``--webdriver-url``
    or a local headless Chrome). ``on_boundary(stage, url)`` is called after
    each stage completes; tests use it to interrupt a run at a known point.
    """
    started = time.monotonic()
    run = _Run(cfg, open_browser, choose_tracks, on_boundary)
    try:
        links = run.paper_links()
        offset = cfg.source.resume_offset or 0
        end = offset + cfg.source.paper_limit if cfg.source.paper_limit else None
        window = links[offset:end]
        run.process(window)
    finally:
        run.close()

    report = excluded = None
    if cfg.evaluate_against:
        report, excluded = run.evaluate(window)
    states = run.journal.states()
    summary = RunSummary(
        run_id=cfg.run_id,
        counts=dict(run.counts),
        elapsed_s=time.monotonic() - started,
        metrics=report,
        failed_urls=sorted(url for url, s in states.items() if s is State.FAILED),
        excluded_from_scoring=excluded or [],
    )
    _write_json(cfg.run_dir / "summary.json", summary.to_dict())
    return summary
