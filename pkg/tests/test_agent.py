from __future__ import annotations

import socket
import time

import pytest

from aegis.agent import (
    AgentEndpoint,
    ConnectTimeout,
    FixtureMissing,
    FixtureStore,
    HttpError,
    KeywordConfig,
    StreamIdleTimeout,
    format_answer,
    institution_name,
    invoke_agent,
    offline_extract,
    parse_paper_page,
)
from aegis.parsing import parse_transcript


def endpoint(testbed, idle=5.0):
    return AgentEndpoint(testbed.base_url, request_timeout_s=5, stream_idle_timeout_s=idle)


def test_three_chunks_in_order(testbed):
    seen = []
    t = invoke_agent(endpoint(testbed), "please ECHO-ABC", on_chunk=seen.append)
    assert t.assembled_text == "ABC"
    assert seen == ["A", "B", "C"]
    assert t.event_count == 3 and t.backend == "live"


def test_stall_raises_idle_timeout(testbed):
    seen = []
    started = time.monotonic()
    with pytest.raises(StreamIdleTimeout):
        invoke_agent(endpoint(testbed, idle=0.5), "STALL-ME", on_chunk=seen.append)
    assert seen == ["partial answer "]
    assert time.monotonic() - started < 5


def test_http_error_and_unmatched(testbed):
    with pytest.raises(HttpError) as err:
        invoke_agent(endpoint(testbed), "SERVER-ERROR")
    assert err.value.status == 500
    with pytest.raises(HttpError) as err:
        invoke_agent(endpoint(testbed), "nothing scripted for this")
    assert err.value.status == 404


def test_connection_refused():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(ConnectTimeout):
        invoke_agent(AgentEndpoint(f"http://127.0.0.1:{port}", request_timeout_s=1), "x")


def test_per_paper_script_matches_offline_answer(testbed, corpus_dir):
    url = testbed.url("/acl/2024.acl-long.1/")
    live = invoke_agent(endpoint(testbed), f"Open the paper page at {url} now")
    offline = offline_extract(url, FixtureStore.from_corpus(corpus_dir))
    assert live.assembled_text == offline.assembled_text
    assert live.event_count > 1


def test_endpoint_validation():
    with pytest.raises(ValueError):
        AgentEndpoint("http://x", stream_idle_timeout_s=0)
    assert AgentEndpoint("http://x/", "api/command").url == "http://x/api/command"


def test_superscript_parsing_multi_affiliation(corpus_dir):
    store = FixtureStore.from_corpus(corpus_dir)
    html = store.get("http://any/neurips/paper/2024/hash/a8eb0221eddeba5b0fc44c4e2eb1aa93-Abstract.html")
    page = parse_paper_page(html)
    assert page.title == "Scaling Sparse Mixtures for Long-Context Retrieval"
    assert page.authors[0] == ("A. Kumar", ["IIT Bombay, Mumbai, India", "Google DeepMind, London, UK"])
    assert page.authors[2] == ("R. Iyer", ["IIT Bombay, Mumbai, India"])
    assert page.research_area == "Deep Learning"


def test_affiliation_matching_is_scoped_to_affiliations(corpus_dir):
    # abstract mentions India, affiliations do not
    store = FixtureStore.from_corpus(corpus_dir)
    t = offline_extract("http://h/neurips/paper/2024/hash/1cae81ffc64adba71e7ac514f0b6b96a-Abstract.html", store)
    assert parse_transcript("u", t.assembled_text).agent_claims_match is False


def test_front_matter_claims_match_with_no_authors(corpus_dir):
    store = FixtureStore.from_corpus(corpus_dir)
    rec = parse_transcript("u", offline_extract("http://h/acl/2024.acl-long.0/", store).assembled_text)
    assert rec.agent_claims_match is True and rec.authors == ()


def test_fixture_missing(corpus_dir):
    with pytest.raises(FixtureMissing):
        offline_extract("http://h/nope", FixtureStore.from_corpus(corpus_dir))


def test_keyword_markers():
    kw = KeywordConfig()
    assert kw.matches("iisc bangalore")
    assert not kw.matches("University of Toronto")
    with pytest.raises(ValueError):
        KeywordConfig(country_markers=())


def test_format_answer_round_trips_through_parser():
    from aegis.agent import PaperPage

    page = PaperPage("T", [("A", ["X Univ, City, India", "Y Lab"]), ("B", [])], "NLP")
    rec = parse_transcript("u", format_answer(page, True))
    assert [(a.name, a.affiliation) for a in rec.authors] == [("A", "X Univ, City, India; Y Lab"), ("B", "")]
    assert rec.institutions == ("X Univ", "Y Lab")
    assert rec.research_area == "NLP" and rec.agent_claims_match
    assert institution_name("IIT Bombay, Mumbai, India") == "IIT Bombay"
