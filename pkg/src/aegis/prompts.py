"""Per-publisher prompt templates with a specificity fallback chain.

Template files live in one directory and are named after their key with
``:`` spelled as ``.``: ``conference.icdm.txt``, ``publisher.ieee.txt``,
``generic.txt``. An optional first line ``# v<N>`` carries the version.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

PLACEHOLDER = "{{url}}"
GENERIC = "generic"
_VERSION_LINE = re.compile(r"#\s*v(\d+)\s*$")


class MissingGenericTemplate(LookupError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    key: str
    body: str
    version: int = 1

    def __post_init__(self):
        if PLACEHOLDER not in self.body:
            raise ValueError(f"template {self.key!r} has no {PLACEHOLDER} placeholder")


def default_prompt_dir() -> Path:
    return Path(str(resources.files("aegis") / "data" / "prompts"))


def _key_for(path: Path) -> str:
    kind, _, name = path.stem.partition(".")
    return f"{kind}:{name}" if name else kind


def parse_template(key: str, text: str) -> PromptTemplate:
    version = 1
    first, _, rest = text.partition("\n")
    m = _VERSION_LINE.match(first.strip())
    if m:
        version = int(m.group(1))
        text = rest
    return PromptTemplate(key=key, body=text, version=version)


def load_library(prompt_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    prompt_dir = Path(prompt_dir) if prompt_dir else default_prompt_dir()
    library: dict[str, PromptTemplate] = {}
    for path in sorted(prompt_dir.glob("*.txt")):
        key = _key_for(path)
        library[key] = parse_template(key, path.read_text(encoding="utf-8"))
    return library


def select_template(
    library: dict[str, PromptTemplate], conference_id: str | None, publisher: str | None
) -> PromptTemplate:
    if GENERIC not in library:
        raise MissingGenericTemplate("prompt library has no 'generic' template")
    for key in (f"conference:{conference_id}", f"publisher:{publisher}"):
        if key in library:
            return library[key]
    return library[GENERIC]


def render_prompt(template: PromptTemplate, paper_link) -> str:
    """Substitute the paper url for every ``{{url}}``; nothing else is touched.

    ``paper_link`` is a :class:`~aegis.links.PaperLink` or a plain url string.
    """
    url = getattr(paper_link, "absolute_url", paper_link)
    return template.body.replace(PLACEHOLDER, url)
