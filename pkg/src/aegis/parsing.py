"""Turn an agent transcript into a verified extraction record.

The agent is asked for three things: a ``Paper Title:`` line, a JSON block
with ``authors``/``institutions`` and an ``India Affiliation: YES|NO`` line.
Agents drift from that format, so the JSON block is decoded strictly first
and reconstructed with regular expressions when decoding fails.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Any

logger = logging.getLogger(__name__)

NULL_TOKENS = frozenset({"none", "null", "n/a", ""})

# Leading markdown decoration (bullets, bold, quotes) is tolerated before a key.
_LEAD = r"^[ \t>*_#-]*"
_FIELD_PATTERNS = (
    ("title", re.compile(_LEAD + r"Paper Title[*_]*:[*_]*[ \t]*(.+)$", re.I | re.M)),
    ("research_area", re.compile(_LEAD + r"Research Area[*_]*:[*_]*[ \t]*(.+)$", re.I | re.M)),
    (
        "agent_claims_match",
        re.compile(_LEAD + r"India Affiliation[*_]*:[*_]*[ \t]*(YES|NO)\b", re.I | re.M),
    ),
)

_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n(.*?)```", re.S)
# a double- or single-quoted string literal, backslash escapes allowed
_STR = r"""(?:"((?:[^"\\]|\\.)*)"|'((?:[^'\\]|\\.)*)')"""
_NAME = re.compile(r"""["']name["']\s*:\s*""" + _STR, re.S)
_AFFILIATION = re.compile(r"""["']affiliation["']\s*:\s*""" + _STR, re.S)
_INSTITUTIONS = re.compile(r"""["']institutions["']\s*:\s*\[""")
_ARRAY_ITEM = re.compile(_STR + r"|(\])", re.S)


class RejectReason(str, enum.Enum):
    EMPTY_AUTHORS = "EMPTY_AUTHORS"
    EMPTY_INSTITUTIONS = "EMPTY_INSTITUTIONS"
    NULL_VALUE = "NULL_VALUE"
    MISSING_TITLE = "MISSING_TITLE"


class Rejection(Exception):
    """Raised by :func:`verify_record`; ``reason`` is machine readable."""

    def __init__(self, reason: RejectReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)


@dataclass(frozen=True)
class AuthorEntry:
    name: str
    affiliation: str = ""


@dataclass(frozen=True)
class ExtractionRecord:
    source_url: str
    title: str | None = None
    authors: tuple[AuthorEntry, ...] = ()
    institutions: tuple[str, ...] = ()
    research_area: str | None = None
    agent_claims_match: bool = False
    verified: bool = False

    def to_json(self, *, conference: str, year: int, fallback_area: str | None = None) -> dict:
        """The record file / nomination payload shape."""
        return {
            "source_url": self.source_url,
            "title": self.title,
            "authors": [{"name": a.name, "affiliation": a.affiliation} for a in self.authors],
            "institutions": list(self.institutions),
            "research_area": self.research_area or fallback_area or "Unspecified",
            "conference": conference,
            "year": year,
        }


@dataclass
class StructuredBlock:
    authors: list[AuthorEntry] = field(default_factory=list)
    institutions: list[str] = field(default_factory=list)
    # "json" when strict decoding worked, "regex" for the reconstruction, None if both failed
    stage: str | None = None


def parse_fields(transcript: str) -> dict[str, Any]:
    """Regex key-value pass. Only keys that were found appear in the result."""
    found: dict[str, Any] = {}
    for key, pattern in _FIELD_PATTERNS:
        m = pattern.search(transcript)
        if not m:
            continue
        value = m.group(1).strip()
        if key == "agent_claims_match":
            found[key] = value.upper() == "YES"
        else:
            value = value.strip("*_ \t")
            if value:
                found[key] = value
    return found


def _balanced_region(text: str, start: int) -> str | None:
    """The brace-balanced object starting at ``text[start] == '{'``, or None if unterminated."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def locate_json_region(transcript: str) -> tuple[str | None, bool]:
    """Return ``(region, complete)``.

    A fenced block wins over a bare object. An opening brace that never
    closes yields the tail of the text with ``complete=False`` so the
    fallback can still salvage entries from a truncated answer.
    """
    fenced = _FENCE.search(transcript)
    if fenced:
        return fenced.group(1), True
    start = transcript.find("{")
    if start < 0:
        # an unterminated fence still marks where the block begins
        open_fence = transcript.find("```")
        if open_fence >= 0:
            return transcript[open_fence + 3 :], False
        return None, False
    region = _balanced_region(transcript, start)
    if region is None:
        return transcript[start:], False
    return region, True


def _coerce_decoded(obj: Any) -> StructuredBlock | None:
    if not isinstance(obj, dict) or not ({"authors", "institutions"} & obj.keys()):
        return None
    if not isinstance(obj.get("authors", []), list):
        return None
    authors = []
    for item in obj.get("authors", []):
        if isinstance(item, dict) and isinstance(item.get("name"), str):
            affiliation = item.get("affiliation")
            authors.append(AuthorEntry(item["name"].strip(), str(affiliation or "").strip()))
        elif isinstance(item, str):
            authors.append(AuthorEntry(item.strip(), ""))
        else:
            return None
    institutions = obj.get("institutions", [])
    if not isinstance(institutions, list):
        return None
    return StructuredBlock(
        authors=authors,
        institutions=[str(i).strip() for i in institutions if i is not None],
        stage="json",
    )


def _literal(m: re.Match) -> str:
    """Value of a matched string literal with its escapes decoded."""
    if m.group(1) is not None:
        try:
            return json.loads(f'"{m.group(1)}"')
        except ValueError:
            return m.group(1)
    return re.sub(r"\\(['\\])", r"\1", m.group(2))


def reconstruct_block(text: str) -> StructuredBlock:
    """Regex reconstruction used when strict JSON decoding fails.

    Each ``name`` is paired with the nearest ``affiliation`` that follows it
    but comes before the next ``name``, which keeps authorship order and
    never lends one author's affiliation to another.
    """
    names = list(_NAME.finditer(text))
    affiliations = list(_AFFILIATION.finditer(text))
    authors = []
    for i, m in enumerate(names):
        limit = names[i + 1].start() if i + 1 < len(names) else len(text)
        affiliation = next(
            (_literal(a) for a in affiliations if m.end() <= a.start() < limit), ""
        )
        authors.append(AuthorEntry(_literal(m).strip(), affiliation.strip()))

    institutions = []
    inst = _INSTITUTIONS.search(text)
    if inst:
        for item in _ARRAY_ITEM.finditer(text, inst.end()):
            if item.group(3):
                break
            institutions.append(_literal(item).strip())
    stage = "regex" if authors or institutions else None
    return StructuredBlock(authors=authors, institutions=institutions, stage=stage)


def parse_structured_block(transcript: str) -> StructuredBlock:
    region, complete = locate_json_region(transcript)
    if region is None:
        return StructuredBlock()
    if complete:
        try:
            block = _coerce_decoded(json.loads(region))
        except (ValueError, RecursionError):
            block = None
        if block is not None:
            return block
    logger.debug("strict JSON decode failed, reconstructing with regex")
    block = reconstruct_block(region)
    if block.stage is None and region != transcript:
        block = reconstruct_block(transcript)
    return block


def parse_transcript(source_url: str, transcript: str) -> ExtractionRecord:
    fields = parse_fields(transcript)
    block = parse_structured_block(transcript)
    return ExtractionRecord(
        source_url=source_url,
        title=fields.get("title"),
        authors=tuple(block.authors),
        institutions=tuple(block.institutions),
        research_area=fields.get("research_area"),
        agent_claims_match=fields.get("agent_claims_match", False),
    )


def _is_null(value: str | None) -> bool:
    return value is None or value.strip().casefold() in NULL_TOKENS


def verify_record(record: ExtractionRecord) -> ExtractionRecord:
    """Return the record with ``verified=True`` or raise :class:`Rejection`."""
    if not record.authors:
        raise Rejection(RejectReason.EMPTY_AUTHORS)
    if not record.institutions:
        raise Rejection(RejectReason.EMPTY_INSTITUTIONS)
    if record.title is None or not record.title.strip():
        raise Rejection(RejectReason.MISSING_TITLE)
    if _is_null(record.title):
        raise Rejection(RejectReason.NULL_VALUE, f"title={record.title!r}")
    for author in record.authors:
        if _is_null(author.name):
            raise Rejection(RejectReason.NULL_VALUE, f"author name={author.name!r}")
    for institution in record.institutions:
        if _is_null(institution):
            raise Rejection(RejectReason.NULL_VALUE, f"institution={institution!r}")
    return replace(record, verified=True)


def decide_positive(record: ExtractionRecord) -> bool:
    return record.agent_claims_match and record.verified
