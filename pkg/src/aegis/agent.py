"""Talk to the extraction agent, or stand in for it offline.

Live backend: one POST of ``{"command": prompt}`` to the agent's REST
route; the reply is streamed text and every chunk is logged as it arrives.

Offline backend: reads the paper's metadata page from a fixture corpus and
writes the same answer format the prompt templates ask for, deciding the
geography question by keyword markers.
"""

from __future__ import annotations

import codecs
import json
import logging
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator
from urllib.parse import urlsplit

import requests
from bs4 import BeautifulSoup
from urllib3.exceptions import ReadTimeoutError

logger = logging.getLogger(__name__)


class AgentError(RuntimeError):
    """Any failure that should journal the paper as FAILED rather than negative."""


class ConnectTimeout(AgentError):
    pass


class StreamIdleTimeout(AgentError):
    pass


class HttpError(AgentError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        super().__init__(f"agent returned HTTP {status}: {body[:200]}")


class FixtureMissing(AgentError):
    pass


@dataclass(frozen=True)
class AgentEndpoint:
    base_url: str
    route: str = "/api/command"
    request_timeout_s: float = 30.0
    stream_idle_timeout_s: float = 120.0

    def __post_init__(self):
        if self.request_timeout_s <= 0 or self.stream_idle_timeout_s <= 0:
            raise ValueError("timeouts must be positive")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + "/" + self.route.lstrip("/")


@dataclass
class AgentTranscript:
    prompt: str
    assembled_text: str
    event_count: int
    duration_ms: float
    backend: str  # "live" or "offline"


@dataclass(frozen=True)
class KeywordConfig:
    country_markers: tuple[str, ...] = ("India",)
    institution_markers: tuple[str, ...] = (
        "Indian Institute of Technology",
        "Indian Institute of Science",
        "IIT",
        "IISc",
        "IIIT",
        "ISI Kolkata",
        "TIFR",
    )

    def __post_init__(self):
        if not self.country_markers or not self.institution_markers:
            raise ValueError("marker lists must not be empty")

    def matches(self, text: str) -> bool:
        folded = text.casefold()
        return any(m.casefold() in folded for m in (*self.country_markers, *self.institution_markers))


def _is_read_timeout(exc: BaseException | None) -> bool:
    # requests wraps a mid-stream urllib3 ReadTimeoutError inside ConnectionError
    seen = set()
    while exc is not None and id(exc) not in seen:
        seen.add(id(exc))
        if isinstance(exc, (requests.exceptions.ReadTimeout, ReadTimeoutError, socket.timeout)):
            return True
        nested = exc.args[0] if exc.args and isinstance(exc.args[0], BaseException) else None
        exc = nested or exc.__cause__ or exc.__context__
    return False


def invoke_agent(
    endpoint: AgentEndpoint,
    prompt: str,
    on_chunk: Callable[[str], None] | None = None,
    session: requests.Session | None = None,
) -> AgentTranscript:
    """POST the prompt and assemble the streamed reply in arrival order."""
    http = session or requests
    started = time.monotonic()
    try:
        response = http.post(
            endpoint.url,
            json={"command": prompt},
            stream=True,
            timeout=(endpoint.request_timeout_s, endpoint.stream_idle_timeout_s),
        )
    except requests.exceptions.ConnectTimeout as exc:
        raise ConnectTimeout(f"connecting to {endpoint.url} timed out") from exc
    except requests.exceptions.ReadTimeout as exc:
        raise StreamIdleTimeout(f"no response from {endpoint.url} within {endpoint.stream_idle_timeout_s}s") from exc
    except requests.exceptions.ConnectionError as exc:
        raise ConnectTimeout(f"could not connect to {endpoint.url}: {exc}") from exc

    with response:
        if not 200 <= response.status_code < 300:
            raise HttpError(response.status_code, response.text)
        decoder = codecs.getincrementaldecoder(response.encoding or "utf-8")(errors="replace")
        parts: list[str] = []
        events = 0
        try:
            for raw in response.iter_content(chunk_size=None):
                if not raw:
                    continue
                events += 1
                text = decoder.decode(raw)
                parts.append(text)
                logger.debug("agent chunk %d: %r", events, text)
                if on_chunk and text:
                    on_chunk(text)
        except (requests.exceptions.ConnectionError, requests.exceptions.Timeout) as exc:
            if _is_read_timeout(exc):
                raise StreamIdleTimeout(
                    f"stream from {endpoint.url} idle for {endpoint.stream_idle_timeout_s}s after {events} chunk(s)"
                ) from exc
            raise AgentError(f"stream from {endpoint.url} broke: {exc}") from exc
        tail = decoder.decode(b"", final=True)
        if tail:
            parts.append(tail)
            if on_chunk:
                on_chunk(tail)
    return AgentTranscript(
        prompt=prompt,
        assembled_text="".join(parts),
        event_count=events,
        duration_ms=(time.monotonic() - started) * 1000,
        backend="live",
    )


class FixtureStore:
    """Paper pages of a fixture corpus, looked up by url path.

    The host is ignored so the same corpus answers for whatever address the
    testbed happens to listen on.
    """

    def __init__(self, pages: dict[str, Path]):
        self._pages = dict(pages)

    @classmethod
    def from_corpus(cls, corpus_dir: str | Path) -> FixtureStore:
        corpus_dir = Path(corpus_dir)
        manifest = json.loads((corpus_dir / "manifest.json").read_text(encoding="utf-8"))
        return cls({p["path"]: corpus_dir / p["file"] for p in manifest["pages"]})

    def get(self, url: str) -> bytes:
        parts = urlsplit(url)
        path = parts.path + (f"?{parts.query}" if parts.query else "")
        try:
            return self._pages[path].read_bytes()
        except KeyError:
            raise FixtureMissing(f"no fixture page for {url}") from None


@dataclass
class PaperPage:
    title: str | None
    authors: list[tuple[str, list[str]]] = field(default_factory=list)
    research_area: str | None = None
    text: str = ""


def _meta(soup: BeautifulSoup, name: str) -> list[str]:
    return [m.get("content", "").strip() for m in soup.find_all("meta", attrs={"name": name})]


def _markers(text: str) -> list[str]:
    return [m.strip() for m in text.replace(";", ",").split(",") if m.strip()]


def parse_paper_page(html: str | bytes) -> PaperPage:
    """Read title, authors and affiliations from a paper landing page.

    Highwire ``citation_*`` meta tags are used when present (each
    ``citation_author_institution`` belongs to the preceding author).
    Otherwise the body is read: ``.author`` entries whose ``<sup>`` markers
    point into an ``.affiliations`` list, the usual superscript style.
    """
    soup = BeautifulSoup(html, "html.parser")
    area = (_meta(soup, "DC.subject") or [None])[0] or None
    for junk in soup(["script", "style", "template"]):
        junk.decompose()
    text = " ".join(soup.get_text(" ").split())

    title = (_meta(soup, "citation_title") or [None])[0]
    authors: list[tuple[str, list[str]]] = []
    for meta in soup.find_all("meta"):
        name = meta.get("name")
        content = " ".join(meta.get("content", "").split())
        if name == "citation_author" and content:
            authors.append((content, []))
        elif name == "citation_author_institution" and content and authors:
            authors[-1][1].append(content)
    if title or authors:
        return PaperPage(title, authors, area, text)

    heading = soup.select_one(".paper-title") or soup.find("h1")
    title = " ".join(heading.get_text(" ").split()) if heading else None
    affiliations: dict[str, str] = {}
    for item in soup.select(".affiliations li, .affiliations .affiliation"):
        sup = item.find("sup")
        marker = item.get("data-aff") or (sup.get_text().strip() if sup else "")
        if sup:
            sup.extract()
        affiliations[marker] = " ".join(item.get_text(" ").split())
    for node in soup.select(".authors .author"):
        markers = []
        for sup in node.find_all("sup"):
            markers.extend(_markers(sup.get_text()))
            sup.extract()
        name = " ".join(node.get_text(" ").split()).rstrip(",")
        if not name:
            continue
        if not markers and len(affiliations) == 1:
            markers = list(affiliations)
        authors.append((name, [affiliations[m] for m in markers if m in affiliations]))
    return PaperPage(title, authors, area, text)


def institution_name(affiliation: str) -> str:
    """First comma-separated part of an affiliation: ``"IIT Bombay, Mumbai, India"`` -> ``"IIT Bombay"``."""
    return affiliation.split(",")[0].strip()


def format_answer(page: PaperPage, claims_match: bool) -> str:
    """The answer layout every prompt template asks for."""
    authors = [{"name": name, "affiliation": "; ".join(affs)} for name, affs in page.authors]
    institutions: list[str] = []
    for _, affs in page.authors:
        for aff in affs:
            inst = institution_name(aff)
            if inst and inst not in institutions:
                institutions.append(inst)
    lines = [f"Paper Title: {page.title or ''}"]
    if page.research_area:
        lines.append(f"Research Area: {page.research_area}")
    lines.append("```json")
    lines.append(json.dumps({"authors": authors, "institutions": institutions}, ensure_ascii=False))
    lines.append("```")
    lines.append(f"India Affiliation: {'YES' if claims_match else 'NO'}")
    return "\n".join(lines) + "\n"


def _lines(text: str) -> Iterator[str]:
    yield from text.splitlines(keepends=True)


def offline_extract(
    paper_link,
    fixture_store: FixtureStore,
    keyword_cfg: KeywordConfig = KeywordConfig(),
    on_chunk: Callable[[str], None] | None = None,
    prompt: str = "",
) -> AgentTranscript:
    """Deterministic stand-in for the agent.

    The match claim is decided on the author affiliations. A page that lists
    no authors at all is judged on its whole text instead, which is how a
    keyword-happy agent ends up claiming a "Table of Contents" document; the
    verification layer downstream has to catch that.
    """
    started = time.monotonic()
    url = getattr(paper_link, "absolute_url", paper_link)
    page = parse_paper_page(fixture_store.get(url))
    if page.authors:
        claims = any(keyword_cfg.matches(aff) for _, affs in page.authors for aff in affs)
    else:
        claims = keyword_cfg.matches(page.text)
    answer = format_answer(page, claims)
    chunks = list(_lines(answer))
    for chunk in chunks:
        if on_chunk:
            on_chunk(chunk)
    return AgentTranscript(
        prompt=prompt,
        assembled_text="".join(chunks),
        event_count=len(chunks),
        duration_ms=(time.monotonic() - started) * 1000,
        backend="offline",
    )
