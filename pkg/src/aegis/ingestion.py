"""Fetch proceedings pages through a browser and keep them in a local cache.

Cache layout::

    <cache_dir>/<conference_id>/<year>/<sha256(url)[:32]>.html
    <cache_dir>/<conference_id>/<year>/<sha256(url)[:32]>.json   # {url, fetched_at, conference_id, year}

A cache hit performs no network I/O. Entries never expire; pass
``force_refetch`` to replace one.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable
from urllib.parse import urlsplit

from selenium.common.exceptions import WebDriverException

from .browser import wait_for_render

logger = logging.getLogger(__name__)

_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


class IngestionError(RuntimeError):
    pass


class NavigationTimeout(IngestionError):
    pass


class CacheWriteError(IngestionError):
    pass


@dataclass(frozen=True)
class SourceRequest:
    url: str
    conference_id: str
    year: int
    paper_limit: int | None = None
    resume_offset: int | None = None

    def __post_init__(self):
        parts = urlsplit(self.url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"not an absolute http(s) url: {self.url!r}")
        if not self.conference_id or self.conference_id != self.conference_id.lower():
            raise ValueError(f"conference_id must be a lowercase token: {self.conference_id!r}")
        if not (1000 <= int(self.year) <= 9999):
            raise ValueError(f"year must have 4 digits: {self.year!r}")
        if self.paper_limit is not None and self.paper_limit < 1:
            raise ValueError("paper_limit must be >= 1")
        if self.resume_offset is not None and self.resume_offset < 0:
            raise ValueError("resume_offset must be >= 0")


@dataclass
class FetchConfig:
    cache_dir: Path = Path("cache")
    render_wait_ms: int = 15000
    nav_timeout_ms: int = 30000
    idle_ms: int = 500
    force_refetch: bool = False


@dataclass
class SourceDocument:
    url: str
    html: str
    fetched_at: datetime
    cache_path: str
    from_cache: bool = field(default=False)


def cache_key(conference_id: str, year: int, url: str) -> str:
    """Relative cache path; only ``[A-Za-z0-9._-]`` appears in each component."""
    digest = hashlib.sha256(url.encode("utf-8")).hexdigest()[:32]
    conf = _SAFE.sub("_", conference_id).strip(".") or "_"
    return f"{conf}/{int(year)}/{digest}.html"


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_cached(req: SourceRequest, cfg: FetchConfig) -> SourceDocument | None:
    rel = cache_key(req.conference_id, req.year, req.url)
    path = Path(cfg.cache_dir) / rel
    # only the final name counts; leftover *.tmp files from a killed run are ignored
    if not path.is_file():
        return None
    # bytes, not read_text: newline translation would break byte-identity
    html = path.read_bytes().decode("utf-8")
    if not html:
        return None
    fetched_at = datetime.fromtimestamp(path.stat().st_mtime, timezone.utc)
    meta = path.with_suffix(".json")
    if meta.is_file():
        try:
            fetched_at = datetime.fromisoformat(json.loads(meta.read_text())["fetched_at"])
        except (ValueError, KeyError):
            logger.warning("unreadable cache metadata %s", meta)
    return SourceDocument(req.url, html, fetched_at, rel, from_cache=True)


def fetch_and_cache(
    req: SourceRequest, cfg: FetchConfig, open_browser: Callable[[], object]
) -> SourceDocument:
    """Serve ``req`` from cache, or render it in a browser and cache the result.

    ``open_browser`` returns a selenium WebDriver; it is only called on a miss.
    """
    if not cfg.force_refetch:
        cached = read_cached(req, cfg)
        if cached is not None:
            logger.info("cache hit for %s (%s)", req.url, cached.cache_path)
            return cached

    driver = open_browser()
    try:
        driver.set_page_load_timeout(cfg.nav_timeout_ms / 1000)
        driver.get(req.url)
        wait_for_render(driver, cfg.render_wait_ms, cfg.idle_ms)
        html = driver.page_source
    except WebDriverException as exc:
        raise NavigationTimeout(f"could not load {req.url}: {exc.msg or exc}") from exc
    finally:
        try:
            driver.quit()
        except WebDriverException:
            pass
    if not html:
        raise NavigationTimeout(f"{req.url} rendered an empty document")

    fetched_at = datetime.now(timezone.utc)
    rel = cache_key(req.conference_id, req.year, req.url)
    path = Path(cfg.cache_dir) / rel
    meta = {
        "url": req.url,
        "fetched_at": fetched_at.isoformat(),
        "conference_id": req.conference_id,
        "year": req.year,
    }
    try:
        _atomic_write(path.with_suffix(".json"), (json.dumps(meta) + "\n").encode())
        _atomic_write(path, html.encode("utf-8"))
    except OSError as exc:
        raise CacheWriteError(f"could not write {path}: {exc}") from exc
    logger.info("cached %s at %s", req.url, rel)
    return SourceDocument(req.url, html, fetched_at, rel, from_cache=False)
