"""Append-only per-url state log that lets an interrupted run resume."""

from __future__ import annotations

import enum
import json
import logging
import threading
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)


class State(str, enum.Enum):
    PENDING = "PENDING"
    EXTRACTED = "EXTRACTED"
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"
    FAILED = "FAILED"
    SUBMITTED = "SUBMITTED"
    SKIPPED = "SKIPPED"


TERMINAL = frozenset({State.NEGATIVE, State.SUBMITTED})

_ALLOWED = {
    None: {State.PENDING},
    State.PENDING: {State.EXTRACTED, State.FAILED},
    State.EXTRACTED: {State.POSITIVE, State.NEGATIVE, State.FAILED},
    State.POSITIVE: {State.SUBMITTED, State.FAILED},
    State.FAILED: {State.PENDING},
    State.NEGATIVE: set(),
    State.SUBMITTED: set(),
}


class IllegalTransition(RuntimeError):
    pass


class RunJournal:
    """JSONL journal; the last line for a url wins.

    Every write goes through one lock, so worker threads may report into it
    but lines never interleave.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        for line in self.path.read_text(encoding="utf-8").splitlines():
            try:
                entry = json.loads(line)
                State(entry["state"])
            except (ValueError, KeyError):
                logger.warning("ignoring unreadable journal line in %s", self.path)
                continue
            self._entries[entry["url"]] = entry

    def state(self, url: str) -> State | None:
        entry = self._entries.get(url)
        return State(entry["state"]) if entry else None

    def entry(self, url: str) -> dict | None:
        return self._entries.get(url)

    def states(self) -> dict[str, State]:
        return {url: State(e["state"]) for url, e in self._entries.items()}

    def record(self, url: str, state: State, **detail) -> None:
        with self._lock:
            current = self.state(url)
            if state not in _ALLOWED[current]:
                raise IllegalTransition(f"{url}: {current} -> {state.value}")
            entry = {
                "url": url,
                "state": state.value,
                "timestamp": datetime.now(timezone.utc).isoformat(),
                **detail,
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
                fh.flush()
            self._entries[url] = entry
