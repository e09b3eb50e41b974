from __future__ import annotations

import pytest

from aegis.browser import open_session
from aegis.testbed import default_corpus_dir, serve_fixtures


@pytest.fixture(scope="session")
def corpus_dir():
    return default_corpus_dir()


@pytest.fixture
def testbed(corpus_dir, tmp_path):
    server = serve_fixtures(corpus_dir, submissions_path=tmp_path / "received_submissions.jsonl")
    yield server
    server.stop()


@pytest.fixture
def driver(testbed):
    drv = open_session(testbed.webdriver_url)
    yield drv
    drv.quit()


@pytest.fixture
def make_cfg(testbed, tmp_path):
    """RunConfig factory aimed at the running testbed; runs and cache live in tmp_path."""
    from aegis.ingestion import FetchConfig, SourceRequest
    from aegis.pipeline import RunConfig

    def make(conference="neurips", limit=None, offset=None, **kw):
        path = {"neurips": "/neurips/2024/", "acl": "/acl/2024/"}[conference]
        kw.setdefault("tracks", {0, 1} if conference == "acl" else None)
        kw.setdefault("runs_dir", tmp_path / "runs")
        kw.setdefault("fetch", FetchConfig(cache_dir=tmp_path / "cache", render_wait_ms=3000, idle_ms=100))
        kw.setdefault("webdriver_url", testbed.webdriver_url)
        kw.setdefault("evaluate_against", testbed.labels_path)
        kw.setdefault("retry_backoff_s", 0.01)
        return RunConfig(source=SourceRequest(testbed.url(path), conference, 2024, limit, offset), **kw)

    return make
