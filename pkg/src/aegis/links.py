"""Hyperlink discovery and layout-aware normalization of proceedings pages.

Two page shapes are handled:

* flat: one continuous list of papers (NeurIPS, IEEE Xplore). Links are
  filtered with include/exclude regular expressions.
* tracked: papers grouped under session headings (ACL, ACM). Each heading
  is associated with the links that follow it, and the user picks which
  tracks to keep before the same filter runs.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import urldefrag, urljoin, urlsplit

from bs4 import BeautifulSoup, Tag

logger = logging.getLogger(__name__)

_HEADING = re.compile(r"^h([1-6])$")


class Layout(str, enum.Enum):
    FLAT = "flat"
    TRACKED = "tracked"


# Defaults keyed by conference id or publisher token; rules files and the
# CLI can override.
LAYOUT_REGISTRY: dict[str, Layout] = {
    "ieee": Layout.FLAT,
    "neurips": Layout.FLAT,
    "icdm": Layout.FLAT,
    "acm": Layout.TRACKED,
    "kdd": Layout.TRACKED,
    "acl": Layout.TRACKED,
}


class UnknownConference(LookupError):
    pass


class NoTracksFound(ValueError):
    pass


class EmptySelection(ValueError):
    pass


@dataclass(frozen=True)
class RawLink:
    href: str
    anchor_text: str
    dom_ordinal: int


@dataclass(frozen=True)
class Track:
    label: str
    heading_ordinal: int
    links: tuple[RawLink, ...]


@dataclass(frozen=True)
class PaperLink:
    absolute_url: str
    publisher: str
    track_label: str | None
    ordinal: int


@dataclass
class FilterRuleSet:
    publisher: str
    include_patterns: list[str]
    base_url: str
    exclude_patterns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.include_patterns:
            raise ValueError("include_patterns must not be empty")
        parts = urlsplit(self.base_url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"base_url must be an absolute http(s) url: {self.base_url!r}")
        # re.error surfaces here for a bad pattern
        self._include = [re.compile(p) for p in self.include_patterns]
        self._exclude = [re.compile(p) for p in self.exclude_patterns]

    def accepts(self, absolute_url: str) -> bool:
        # exclusion wins over inclusion
        if any(p.search(absolute_url) for p in self._exclude):
            return False
        return any(p.search(absolute_url) for p in self._include)


@dataclass
class ConferenceRules:
    """Contents of ``rules/<conference_id>.json``."""

    conference_id: str
    publisher: str
    include_patterns: list[str]
    exclude_patterns: list[str] = field(default_factory=list)
    layout: Layout | None = None
    base_url: str | None = None
    heading_levels: tuple[int, ...] = (2, 3, 4)
    min_links_per_track: int = 1

    def ruleset(self, page_url: str) -> FilterRuleSet:
        """Relative hrefs resolve against ``base_url`` when set, else the page url."""
        return FilterRuleSet(
            publisher=self.publisher,
            include_patterns=self.include_patterns,
            exclude_patterns=self.exclude_patterns,
            base_url=self.base_url or page_url,
        )


def default_rules_dir() -> Path:
    return Path(str(resources.files("aegis") / "data" / "rules"))


def load_rules(conference_id: str, rules_dir: str | Path | None = None) -> ConferenceRules:
    path = Path(rules_dir or default_rules_dir()) / f"{conference_id}.json"
    if not path.exists():
        raise UnknownConference(f"no rules file for {conference_id!r} at {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    layout = data.get("layout")
    return ConferenceRules(
        conference_id=conference_id,
        publisher=data.get("publisher", conference_id),
        include_patterns=list(data["include_patterns"]),
        exclude_patterns=list(data.get("exclude_patterns", [])),
        layout=Layout(layout) if layout else None,
        base_url=data.get("base_url"),
        heading_levels=tuple(data.get("heading_levels", (2, 3, 4))),
        min_links_per_track=int(data.get("min_links_per_track", 1)),
    )


def detect_layout(
    conference_id: str,
    override: Layout | str | None = None,
    registry: dict[str, Layout] = LAYOUT_REGISTRY,
) -> Layout:
    if override:
        return Layout(override)
    try:
        return registry[conference_id.lower()]
    except KeyError:
        raise UnknownConference(
            f"no layout registered for {conference_id!r}; pass a layout override"
        ) from None


def _soup(html: str) -> BeautifulSoup:
    return BeautifulSoup(html, "html.parser")


def _html_of(doc) -> str:
    return doc if isinstance(doc, str) else doc.html


def _raw_link(tag: Tag, ordinal: int) -> RawLink:
    href = tag.get("href")
    if isinstance(href, list):
        href = " ".join(href)
    return RawLink(href or "", " ".join(tag.get_text(" ").split()), ordinal)


def discover_links(doc) -> list[RawLink]:
    """Every ``<a>`` in document order, unfiltered. ``doc`` is a SourceDocument or html text."""
    soup = _soup(_html_of(doc))
    return [_raw_link(a, i) for i, a in enumerate(soup.find_all("a"))]


def _resolve(href: str, base_url: str) -> str | None:
    href = href.strip()
    if not href or href.startswith("#"):
        return None
    url, _ = urldefrag(urljoin(base_url, href))
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        return None
    return url


def _normalize(
    items: Iterable[tuple[RawLink, str | None]], rules: FilterRuleSet
) -> list[PaperLink]:
    seen: set[str] = set()
    out: list[PaperLink] = []
    for raw, label in items:
        url = _resolve(raw.href, rules.base_url)
        if url is None or url in seen or not rules.accepts(url):
            continue
        seen.add(url)
        out.append(PaperLink(url, rules.publisher, label, len(out)))
    if not out:
        logger.warning("every link was filtered out for publisher %s", rules.publisher)
    return out


def normalize_flat(raw: Sequence[RawLink], rules: FilterRuleSet) -> list[PaperLink]:
    return _normalize(((link, None) for link in raw), rules)


def _heading_level(tag, levels: Sequence[int]) -> int | None:
    if not isinstance(tag, Tag):
        return None
    m = _HEADING.match(tag.name or "")
    if m and int(m.group(1)) in levels:
        return int(m.group(1))
    return None


def _has_content(tag: Tag, levels: Sequence[int]) -> bool:
    if tag.name == "a" or _heading_level(tag, levels):
        return True
    return any(
        t.name == "a" or _heading_level(t, levels) for t in tag.find_all(True)
    )


def _section_siblings(heading: Tag, levels: Sequence[int]) -> list[Tag]:
    """Siblings that make up a heading's section.

    A heading wrapped in its own container (``<div><h2>..</h2><span>..</span></div>``)
    has no useful siblings, so climb until the siblings carry links.
    """
    node = heading
    while node is not None and node.name not in ("body", "[document]"):
        siblings = [s for s in node.find_next_siblings() if isinstance(s, Tag)]
        if any(_has_content(s, levels) for s in siblings):
            return siblings
        node = node.parent
    return []


def _section_links(heading: Tag, levels: Sequence[int], ordinals: dict[int, int]) -> list[RawLink]:
    links: list[RawLink] = []
    for sibling in _section_siblings(heading, levels):
        for el in [sibling, *sibling.find_all(True)]:
            # any configured heading ends the section, so nested sub-sessions
            # become their own tracks and no link is counted twice
            if _heading_level(el, levels):
                return links
            if el.name == "a":
                links.append(_raw_link(el, ordinals[id(el)]))
    return links


def extract_tracks(
    doc, heading_levels: Sequence[int] = (2, 3, 4), min_links_per_track: int = 1
) -> list[Track]:
    soup = _soup(_html_of(doc))
    ordinals = {id(a): i for i, a in enumerate(soup.find_all("a"))}
    tracks: list[Track] = []
    for heading in soup.find_all(_HEADING):
        if not _heading_level(heading, heading_levels):
            continue
        label = " ".join(heading.get_text(" ").split())
        links = _section_links(heading, heading_levels, ordinals)
        if not label or len(links) < min_links_per_track:
            continue
        tracks.append(Track(label, len(tracks), tuple(links)))
    if not tracks:
        raise NoTracksFound("no heading has links under it; is the layout really track-based?")
    return tracks


def flatten_selected(
    tracks: Sequence[Track], selection: Iterable[int], rules: FilterRuleSet
) -> list[PaperLink]:
    selection = set(selection)
    if not selection:
        raise EmptySelection("select at least one track")
    known = {t.heading_ordinal for t in tracks}
    unknown = selection - known
    if unknown:
        raise ValueError(f"unknown track number(s): {sorted(unknown)}")
    chosen = sorted((t for t in tracks if t.heading_ordinal in selection), key=lambda t: t.heading_ordinal)
    return _normalize(((link, t.label) for t in chosen for link in t.links), rules)


def parse_track_selection(text: str, tracks: Sequence[Track]) -> set[int]:
    """``"a"`` selects everything, otherwise a comma list such as ``"0,2"``."""
    text = text.strip().lower()
    if text in ("a", "all"):
        return {t.heading_ordinal for t in tracks}
    picked = set()
    for part in text.split(","):
        part = part.strip()
        if part:
            picked.add(int(part))
    return picked


def prompt_track_selection(tracks: Sequence[Track], ask=input, out=print) -> set[int]:
    """Numbered menu on the terminal; re-asks until the answer parses."""
    out("Tracks found on the page:")
    for t in tracks:
        out(f"  [{t.heading_ordinal}] {t.label} ({len(t.links)} links)")
    while True:
        answer = ask("Select tracks (comma list, 'a' for all): ")
        try:
            picked = parse_track_selection(answer, tracks)
        except ValueError:
            out("could not parse that, try again")
            continue
        if picked and picked <= {t.heading_ordinal for t in tracks}:
            return picked
        out("pick at least one of the listed numbers")
