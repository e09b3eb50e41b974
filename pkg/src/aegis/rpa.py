"""Fill and submit the nomination form for verified positives.

One browser session, one submission at a time. The form grows its author
rows through an "add author" control, so rows are added first, then every
field is scrolled into view and typed into, the form is submitted and the
page is watched for the confirmation message.
"""

from __future__ import annotations

import enum
import json
import logging
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from urllib.parse import urljoin

from selenium.common.exceptions import (
    StaleElementReferenceException,
    TimeoutException,
    WebDriverException,
)
from selenium.webdriver.common.by import By
from selenium.webdriver.support.ui import WebDriverWait

from .browser import SCROLL_INTO_VIEW

logger = logging.getLogger(__name__)


class RPAError(RuntimeError):
    pass


class ControlNotFound(RPAError):
    pass


class RowCountMismatch(RPAError):
    pass


class ElementGone(RPAError):
    pass


class SubmissionStatus(str, enum.Enum):
    CONFIRMED = "CONFIRMED"
    TIMEOUT = "TIMEOUT"
    ERROR = "ERROR"
    # not posted: already in the submission journal
    SKIPPED = "SKIPPED"
    # filled but submit deliberately not clicked
    DRY_RUN = "DRY_RUN"


@dataclass(frozen=True)
class NominationFormSpec:
    form_url: str
    title_selector: str
    author_name_selector_pattern: str
    author_affiliation_selector_pattern: str
    add_author_selector: str
    research_area_selector: str
    submit_selector: str
    confirmation_text: str
    confirmation_timeout_s: float = 20.0
    paper_url_selector: str | None = None
    institutions_selector: str | None = None

    def __post_init__(self):
        for name in (
            "form_url",
            "title_selector",
            "author_name_selector_pattern",
            "author_affiliation_selector_pattern",
            "add_author_selector",
            "research_area_selector",
            "submit_selector",
            "confirmation_text",
        ):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if self.confirmation_timeout_s <= 0:
            raise ValueError("confirmation_timeout_s must be positive")
        if "{i}" not in self.author_name_selector_pattern or "{i}" not in self.author_affiliation_selector_pattern:
            raise ValueError("author selector patterns need an {i} index placeholder")

    @classmethod
    def load(cls, path: str | Path, base_url: str | None = None, **overrides) -> NominationFormSpec:
        """Read ``forms/<target>.json``; a relative ``form_url`` resolves against ``base_url``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data.update(overrides)
        if base_url:
            data["form_url"] = urljoin(base_url, data["form_url"])
        return cls(**data)


@dataclass
class SubmissionResult:
    record_url: str
    status: SubmissionStatus
    confirmation_text_seen: str | None = None
    attempts: int = 0
    duration_ms: float = 0.0
    error: str | None = None


class SubmissionJournal:
    """``submitted.jsonl``: one line per confirmed nomination, keyed by source url."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def submitted_urls(self) -> set[str]:
        if not self.path.exists():
            return set()
        urls = set()
        for line in self.path.read_text(encoding="utf-8").splitlines():
            try:
                entry = json.loads(line)
            except ValueError:
                # torn last line from a crash
                continue
            if entry.get("status") == SubmissionStatus.CONFIRMED.value:
                urls.add(entry["source_url"])
        return urls

    def __contains__(self, url: str) -> bool:
        return url in self.submitted_urls()

    def append(self, url: str, status: SubmissionStatus) -> None:
        entry = {
            "source_url": url,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "status": status.value,
        }
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
                fh.flush()


def scroll_into_view(driver, element) -> None:
    try:
        driver.execute_script(SCROLL_INTO_VIEW, element)
    except StaleElementReferenceException as exc:
        raise ElementGone("element was detached from the page") from exc


def count_author_rows(driver, spec: NominationFormSpec) -> int:
    n = 0
    while driver.find_elements(By.CSS_SELECTOR, spec.author_name_selector_pattern.format(i=n)):
        n += 1
    return n


def ensure_author_rows(driver, spec: NominationFormSpec, n: int) -> int:
    """Click "add author" until ``n`` rows exist. Returns the number of clicks."""
    if n < 1:
        raise ValueError("a nomination needs at least one author row")
    initial = count_author_rows(driver, spec)
    clicks = n - initial
    if clicks < 0:
        raise RowCountMismatch(f"form already shows {initial} author rows, record has {n}")
    if clicks:
        controls = driver.find_elements(By.CSS_SELECTOR, spec.add_author_selector)
        if not controls:
            raise ControlNotFound(f"no element matches {spec.add_author_selector!r}")
        for _ in range(clicks):
            control = driver.find_element(By.CSS_SELECTOR, spec.add_author_selector)
            scroll_into_view(driver, control)
            control.click()
    rows = count_author_rows(driver, spec)
    if rows != n:
        raise RowCountMismatch(f"expected {n} author rows after {clicks} clicks, found {rows}")
    return clicks


def _fill(driver, selector: str, value: str) -> None:
    element = driver.find_element(By.CSS_SELECTOR, selector)
    scroll_into_view(driver, element)
    element.clear()
    if value:
        element.send_keys(value)


def fill_form(driver, spec: NominationFormSpec, payload: dict) -> None:
    authors = payload["authors"]
    ensure_author_rows(driver, spec, len(authors))
    if spec.paper_url_selector:
        _fill(driver, spec.paper_url_selector, payload["source_url"])
    _fill(driver, spec.title_selector, payload["title"])
    for i, author in enumerate(authors):
        _fill(driver, spec.author_name_selector_pattern.format(i=i), author["name"])
        _fill(driver, spec.author_affiliation_selector_pattern.format(i=i), author["affiliation"])
    if spec.institutions_selector:
        _fill(driver, spec.institutions_selector, "\n".join(payload["institutions"]))
    _fill(driver, spec.research_area_selector, payload["research_area"])


def _wait_for_confirmation(driver, spec: NominationFormSpec) -> str | None:
    def seen(d):
        bodies = d.find_elements(By.TAG_NAME, "body")
        text = bodies[0].text if bodies else ""
        return text if spec.confirmation_text in text else False

    try:
        return WebDriverWait(driver, spec.confirmation_timeout_s, poll_frequency=0.1).until(seen)
    except TimeoutException:
        return None


def submit_nomination(
    driver,
    spec: NominationFormSpec,
    payload: dict,
    journal: SubmissionJournal,
    dry_run: bool = False,
) -> SubmissionResult:
    """Submit one nomination. ``payload`` is the record JSON of a verified positive.

    A url already in ``journal`` is never posted again. After a TIMEOUT the
    page is reloaded with a plain GET and checked once more; the form is not
    re-posted, so a slow confirmation cannot turn into a duplicate entry.
    """
    url = payload["source_url"]
    started = time.monotonic()

    def result(status, seen=None, attempts=0, error=None):
        return SubmissionResult(url, status, seen, attempts, (time.monotonic() - started) * 1000, error)

    if url in journal:
        logger.info("SKIPPED %s: already submitted", url)
        return result(SubmissionStatus.SKIPPED)

    try:
        driver.get(spec.form_url)
        fill_form(driver, spec, payload)
        if dry_run:
            logger.info("dry run: filled form for %s, not submitting", url)
            return result(SubmissionStatus.DRY_RUN)
        submit = driver.find_element(By.CSS_SELECTOR, spec.submit_selector)
        scroll_into_view(driver, submit)
        submit.click()
        attempts = 1
        seen = _wait_for_confirmation(driver, spec)
        if seen is None:
            attempts += 1
            logger.warning("no confirmation for %s, reloading once", url)
            driver.get(driver.current_url)
            seen = _wait_for_confirmation(driver, spec)
    except (WebDriverException, RPAError) as exc:
        logger.error("submission of %s failed: %s", url, exc)
        return result(SubmissionStatus.ERROR, error=str(exc))

    if seen is None:
        return result(SubmissionStatus.TIMEOUT, attempts=attempts)
    journal.append(url, SubmissionStatus.CONFIRMED)
    return result(SubmissionStatus.CONFIRMED, seen, attempts)
