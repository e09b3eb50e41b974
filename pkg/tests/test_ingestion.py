from __future__ import annotations

import re
from functools import partial

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aegis.browser import open_session, wait_for_render
from aegis.ingestion import (
    CacheWriteError,
    FetchConfig,
    NavigationTimeout,
    SourceRequest,
    cache_key,
    fetch_and_cache,
    read_cached,
)


def cfg(tmp_path, **kw):
    return FetchConfig(cache_dir=tmp_path / "cache", render_wait_ms=3000, idle_ms=200, **kw)


def test_fetch_then_cache_hit_is_byte_identical(testbed, tmp_path):
    req = SourceRequest(testbed.url("/neurips/2024/"), "neurips", 2024)
    opened = []

    def browser():
        opened.append(1)
        return open_session(testbed.webdriver_url)

    first = fetch_and_cache(req, cfg(tmp_path), browser)
    assert not first.from_cache and len(opened) == 1
    assert first.html.count("<a ") == 12
    second = fetch_and_cache(req, cfg(tmp_path), browser)
    assert second.from_cache and len(opened) == 1
    assert second.html == first.html
    assert second.fetched_at == first.fetched_at
    third = fetch_and_cache(req, cfg(tmp_path, force_refetch=True), browser)
    assert not third.from_cache and len(opened) == 2


def test_navigation_failure_leaves_no_cache(tmp_path):
    import socket

    from aegis.testbed import default_corpus_dir, serve_fixtures

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        dead = s.getsockname()[1]
    with serve_fixtures(default_corpus_dir(), submissions_path=tmp_path / "s.jsonl") as tb:
        req = SourceRequest(f"http://127.0.0.1:{dead}/x", "neurips", 2024)
        with pytest.raises(NavigationTimeout):
            fetch_and_cache(req, cfg(tmp_path), partial(open_session, tb.webdriver_url))
    assert read_cached(req, cfg(tmp_path)) is None


def test_leftover_tmp_is_ignored(tmp_path):
    req = SourceRequest("http://h/p", "acl", 2024)
    c = cfg(tmp_path)
    target = c.cache_dir / cache_key("acl", 2024, req.url)
    target.parent.mkdir(parents=True)
    (target.parent / (target.name + "abc.tmp")).write_text("<html>half")
    assert read_cached(req, c) is None


def test_cache_write_error(testbed, tmp_path):
    blocker = tmp_path / "cache"
    blocker.write_text("not a directory")
    req = SourceRequest(testbed.url("/acl/2024/"), "acl", 2024)
    with pytest.raises(CacheWriteError):
        fetch_and_cache(req, FetchConfig(cache_dir=blocker, render_wait_ms=1000, idle_ms=100),
                        partial(open_session, testbed.webdriver_url))


@pytest.mark.parametrize(
    "kw",
    [
        {"url": "ftp://x", "conference_id": "acl", "year": 2024},
        {"url": "http://x", "conference_id": "ACL", "year": 2024},
        {"url": "http://x", "conference_id": "acl", "year": 24},
        {"url": "http://x", "conference_id": "acl", "year": 2024, "paper_limit": 0},
        {"url": "http://x", "conference_id": "acl", "year": 2024, "resume_offset": -1},
    ],
)
def test_source_request_validation(kw):
    with pytest.raises(ValueError):
        SourceRequest(**kw)


@given(st.text(min_size=1, max_size=200), st.text(alphabet="abc./-_ ", min_size=1, max_size=10))
def test_cache_key_is_filesystem_safe(url, conf):
    key = cache_key(conf, 2024, url)
    assert all(re.fullmatch(r"[A-Za-z0-9._-]+", part) for part in key.split("/"))
    assert ".." not in key.split("/")
    assert key == cache_key(conf, 2024, url)


class _Probe:
    def __init__(self, states):
        self.states = iter(states)
        self.last = None

    def execute_script(self, script):
        self.last = next(self.states, self.last)
        return self.last


def test_wait_for_render_waits_for_stability():
    d = _Probe([["loading", 0, 1], ["complete", 1, 5], ["complete", 2, 9]])
    assert wait_for_render(d, render_wait_ms=2000, idle_ms=100, poll_ms=10)


def test_wait_for_render_caps():
    class Busy:
        n = 0

        def execute_script(self, script):
            self.n += 1
            return ["complete", self.n, self.n]

    assert not wait_for_render(Busy(), render_wait_ms=150, idle_ms=100, poll_ms=10)
