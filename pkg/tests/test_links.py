from __future__ import annotations

from urllib.parse import urljoin

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aegis.links import (
    EmptySelection,
    FilterRuleSet,
    Layout,
    NoTracksFound,
    RawLink,
    UnknownConference,
    detect_layout,
    discover_links,
    extract_tracks,
    flatten_selected,
    load_rules,
    normalize_flat,
    parse_track_selection,
    prompt_track_selection,
)

BASE = "http://testbed.local"


def page(corpus_dir, name):
    return (corpus_dir / "pages" / name).read_text(encoding="utf-8")


def test_flat_fixture_anchors_and_normalization(corpus_dir):
    html = page(corpus_dir, "neurips_2024.html")
    raw = discover_links(html)
    assert len(raw) == 12
    links = normalize_flat(raw, load_rules("neurips").ruleset(BASE + "/neurips/2024/"))
    assert len(links) == 10
    assert [l.ordinal for l in links] == list(range(10))
    assert all(l.absolute_url.startswith(BASE + "/neurips/paper/2024/hash/") for l in links)
    assert not any("toc" in l.absolute_url for l in links)
    assert all(l.track_label is None and l.publisher == "neurips" for l in links)


def test_tracked_fixture_partition(corpus_dir):
    html = page(corpus_dir, "acl_2024.html")
    tracks = extract_tracks(html)
    assert [(t.label, len(t.links)) for t in tracks] == [("Main Track", 5), ("Industry Track", 3)]
    rules = load_rules("acl").ruleset(BASE + "/acl/2024/")
    both = flatten_selected(tracks, {0, 1}, rules)
    assert len(both) == 8
    assert [l.track_label for l in both] == ["Main Track"] * 5 + ["Industry Track"] * 3
    industry = flatten_selected(tracks, {1}, rules)
    assert [l.absolute_url for l in industry] == [BASE + f"/acl/2024.acl-industry.{i}/" for i in (1, 2, 3)]
    assert [l.ordinal for l in industry] == [0, 1, 2]


def test_links_outside_tracks_are_dropped(corpus_dir):
    html = page(corpus_dir, "acl_2024.html")
    in_tracks = {l.href for t in extract_tracks(html) for l in t.links}
    every = {l.href for l in discover_links(html)}
    assert "/faq/" in every and "/faq/" not in in_tracks
    # the footer repeats long.3 but only the in-track occurrence counts
    footer = [l for l in discover_links(html) if l.anchor_text == "Most downloaded"]
    assert footer and footer[0].dom_ordinal not in {l.dom_ordinal for t in extract_tracks(html) for l in t.links}


def test_nested_headings_each_become_a_track():
    html = """<h2>Session A</h2><ul><li><a href="/p/1">1</a></li></ul>
    <h3>Session A.1</h3><ul><li><a href="/p/2">2</a></li><li><a href="/p/3">3</a></li></ul>
    <h2>Session B</h2><p>none</p>"""
    tracks = extract_tracks(html)
    assert [(t.label, len(t.links)) for t in tracks] == [("Session A", 1), ("Session A.1", 2)]
    assert [t.heading_ordinal for t in tracks] == [0, 1]


def test_no_tracks_raises():
    with pytest.raises(NoTracksFound):
        extract_tracks("<p><a href='/x'>x</a></p>")


def test_selection_errors(corpus_dir):
    tracks = extract_tracks(page(corpus_dir, "acl_2024.html"))
    rules = load_rules("acl").ruleset(BASE + "/acl/2024/")
    with pytest.raises(EmptySelection):
        flatten_selected(tracks, set(), rules)
    with pytest.raises(ValueError):
        flatten_selected(tracks, {7}, rules)


def test_track_selection_parsing_and_prompt(corpus_dir):
    tracks = extract_tracks(page(corpus_dir, "acl_2024.html"))
    assert parse_track_selection("a", tracks) == {0, 1}
    assert parse_track_selection(" 1, ", tracks) == {1}
    answers = iter(["x", "5", "0,1"])
    shown = []
    assert prompt_track_selection(tracks, ask=lambda _: next(answers), out=shown.append) == {0, 1}
    assert any("Industry Track" in s for s in shown)


def test_layout_registry():
    assert detect_layout("neurips") is Layout.FLAT
    assert detect_layout("ACL") is Layout.TRACKED
    assert detect_layout("whatever", override="tracked") is Layout.TRACKED
    with pytest.raises(UnknownConference):
        detect_layout("whatever")
    with pytest.raises(UnknownConference):
        load_rules("no-such-conf")


def test_exclude_wins_over_include():
    rules = FilterRuleSet("x", [r"/paper/"], BASE, [r"toc"])
    assert rules.accepts(BASE + "/paper/1")
    assert not rules.accepts(BASE + "/paper/toc.pdf")


def test_bad_base_url_and_empty_include():
    with pytest.raises(ValueError):
        FilterRuleSet("x", [r"."], "/relative")
    with pytest.raises(ValueError):
        FilterRuleSet("x", [], BASE)


def test_non_http_and_fragments():
    raw = [RawLink(h, "", i) for i, h in enumerate(["mailto:a@b", "#top", "", "javascript:void(0)", "/p/1#abs", "/p/1"])]
    links = normalize_flat(raw, FilterRuleSet("x", ["/p/"], BASE + "/"))
    assert [l.absolute_url for l in links] == [BASE + "/p/1"]


# random flat pages: output is a deduplicated, ordered, filtered subset of the input
hrefs = st.lists(
    st.one_of(
        st.builds(lambda n: f"/paper/{n}.html", st.integers(0, 30)),
        st.builds(lambda n: f"../paper/{n}.html", st.integers(0, 30)),
        st.builds(lambda n: f"/misc/{n}", st.integers(0, 5)),
        st.sampled_from(["#", "", "mailto:x@y", "/paper/toc.pdf", "http://elsewhere.org/paper/9.html"]),
    ),
    max_size=40,
)


@given(hrefs)
def test_flat_normalization_properties(items):
    page_url = BASE + "/conf/2024/"
    html = "".join(f'<a href="{h}">t</a>' for h in items)
    rules = FilterRuleSet("x", [r"/paper/\d+\.html$"], page_url, [r"toc"])
    links = normalize_flat(discover_links(html), rules)
    urls = [l.absolute_url for l in links]
    resolved = [urljoin(page_url, h) for h in items if h and not h.startswith("#")]
    assert set(urls) <= set(resolved)
    assert len(urls) == len(set(urls))
    assert [l.ordinal for l in links] == list(range(len(links)))
    # first-occurrence order
    firsts = []
    for u in resolved:
        if u in urls and u not in firsts:
            firsts.append(u)
    assert urls == firsts


sections = st.lists(st.lists(st.integers(0, 50), max_size=6), min_size=1, max_size=5)


@given(sections)
def test_track_partition_property(groups):
    html = "<h1>Proceedings</h1><a href='/home'>home</a>" + "".join(
        f"<h2>Track {i}</h2><ul>" + "".join(f"<li><a href='/p/{n}'>p</a></li>" for n in g) + "</ul>"
        for i, g in enumerate(groups)
    )
    if not any(groups):
        with pytest.raises(NoTracksFound):
            extract_tracks(html)
        return
    tracks = extract_tracks(html)
    expected = [(f"Track {i}", len(g)) for i, g in enumerate(groups) if g]
    assert [(t.label, len(t.links)) for t in tracks] == expected
    ordinals = [l.dom_ordinal for t in tracks for l in t.links]
    assert len(ordinals) == len(set(ordinals))
