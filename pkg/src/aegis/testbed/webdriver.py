"""A small W3C WebDriver endpoint backed by a script-less emulated browser.

No browser binary is needed to exercise the RPA and fetch code paths: the
testbed mounts this under ``/wd`` and selenium's remote client talks to it
like to chromedriver. What it emulates:

* navigation (GET), form submission (POST of the enclosing form), link clicks
* CSS selectors through soupsieve, element references, stale-element errors
* typing into inputs and textareas, clearing them
* the declarative "add row" control of the testbed form
  (``data-action="add-row"`` clones a ``<template>`` with ``{i}`` replaced
  by the current row count; the form page carries equivalent JavaScript for
  real browsers)
* a crude vertical layout (24px per leaf element, inline ``height: Npx``
  honoured) so scrolling into view and viewport checks mean something
* only the page scripts in :mod:`aegis.browser`; anything else is a
  ``javascript error``
"""

from __future__ import annotations

import re
import threading
import uuid
from dataclasses import dataclass, field
from urllib.parse import urlencode, urljoin

import requests
from bs4 import BeautifulSoup, Tag

from .. import browser as scripts

ELEMENT_KEY = "element-6066-11e4-a52e-4f735466cecf"
LINE_HEIGHT = 24
VIEWPORT_HEIGHT = 600
_HEIGHT_STYLE = re.compile(r"height\s*:\s*(\d+)px")
_INVISIBLE = {"head", "script", "style", "template", "title", "meta", "link"}
# WebDriver key codes live in the private use area
_KEYCODES = re.compile("[\ue000-\uf8ff]")

_STATUS = {
    "invalid argument": 400,
    "invalid selector": 400,
    "element not interactable": 400,
    "invalid session id": 404,
    "no such element": 404,
    "stale element reference": 404,
    "unknown command": 404,
    "javascript error": 500,
    "timeout": 500,
    "unknown error": 500,
}


class WebDriverError(Exception):
    def __init__(self, error: str, message: str):
        self.error = error
        super().__init__(message)


@dataclass
class Page:
    url: str = "about:blank"
    soup: BeautifulSoup = field(default_factory=lambda: BeautifulSoup("<html><head></head><body></body></html>", "html.parser"))


class BrowserSession:
    """One emulated browsing context."""

    def __init__(self, http: requests.Session | None = None):
        self.http = http or requests.Session()
        self.page = Page()
        self.scroll_y = 0
        self.page_load_timeout_s = 300.0
        self.script_timeout_s = 30.0
        self.implicit_wait_s = 0.0
        self._by_id: dict[str, Tag] = {}
        self._ids: dict[int, str] = {}

    # navigation -------------------------------------------------------------

    def _load(self, method: str, url: str, data=None) -> None:
        try:
            resp = self.http.request(method, url, data=data, timeout=self.page_load_timeout_s)
        except requests.exceptions.Timeout:
            raise WebDriverError("timeout", f"timed out receiving message from {url}") from None
        except requests.exceptions.RequestException:
            raise WebDriverError("unknown error", "net::ERR_CONNECTION_REFUSED") from None
        resp.encoding = resp.encoding or "utf-8"
        self.page = Page(resp.url, BeautifulSoup(resp.text, "html.parser"))
        self.scroll_y = 0

    def navigate(self, url: str) -> None:
        if not re.match(r"^https?://", url):
            raise WebDriverError("invalid argument", f"unsupported url {url!r}")
        self._load("GET", url)

    # elements ---------------------------------------------------------------

    def ref(self, tag: Tag) -> dict:
        eid = self._ids.get(id(tag))
        if eid is None or self._by_id.get(eid) is not tag:
            eid = str(uuid.uuid4())
            self._ids[id(tag)] = eid
            self._by_id[eid] = tag
        return {ELEMENT_KEY: eid}

    def _attached(self, tag: Tag) -> bool:
        node = tag
        while node.parent is not None:
            node = node.parent
        return node is self.page.soup

    def resolve(self, eid: str) -> Tag:
        tag = self._by_id.get(eid)
        if tag is None:
            raise WebDriverError("no such element", f"unknown element reference {eid}")
        if not self._attached(tag):
            raise WebDriverError("stale element reference", "element is not attached to the page document")
        return tag

    def find(self, using: str, value: str, root: Tag | None = None) -> list[Tag]:
        scope = root if root is not None else self.page.soup
        try:
            if using == "css selector":
                return scope.select(value)
            if using == "tag name":
                return scope.find_all(value)
            if using in ("link text", "partial link text"):
                anchors = scope.find_all("a")
                exact = using == "link text"
                return [a for a in anchors if (self.text(a) == value if exact else value in self.text(a))]
        except Exception as exc:
            raise WebDriverError("invalid selector", str(exc)) from None
        raise WebDriverError("invalid argument", f"unsupported locator strategy {using!r}")

    def text(self, tag: Tag) -> str:
        parts = []
        for node in tag.descendants:
            if isinstance(node, str) and not any(p.name in _INVISIBLE for p in node.parents if isinstance(p, Tag)):
                parts.append(node)
        if tag.name == "textarea":
            return ""
        return " ".join(" ".join(parts).split())

    def value(self, tag: Tag) -> str:
        if tag.name == "textarea":
            return tag.string or ""
        return tag.get("value", "")

    def set_value(self, tag: Tag, value: str) -> None:
        if tag.name == "textarea":
            tag.string = value
        else:
            tag["value"] = value

    def send_keys(self, tag: Tag, text: str) -> None:
        if tag.name not in ("input", "textarea") or tag.has_attr("disabled"):
            raise WebDriverError("element not interactable", f"<{tag.name}> does not take keys")
        self.set_value(tag, self.value(tag) + _KEYCODES.sub("", text))

    def clear(self, tag: Tag) -> None:
        if tag.name in ("input", "textarea"):
            self.set_value(tag, "")

    def click(self, tag: Tag) -> None:
        if tag.get("data-action") == "add-row":
            self._add_row(tag)
            return
        if tag.name == "a" and tag.get("href"):
            self._load("GET", urljoin(self.page.url, tag["href"]))
            return
        is_submit = (tag.name == "button" and tag.get("type", "submit") == "submit") or (
            tag.name == "input" and tag.get("type") == "submit"
        )
        if is_submit:
            form = tag.find_parent("form")
            if form is not None:
                self._submit(form)

    def _add_row(self, control: Tag) -> None:
        soup = self.page.soup
        template = soup.find(id=control.get("data-template"))
        target = soup.find(id=control.get("data-target"))
        if template is None or target is None:
            raise WebDriverError("javascript error", "add-row control points at missing elements")
        row_class = control.get("data-row-class", "row")
        count = len(target.find_all(class_=row_class, recursive=False))
        fragment = BeautifulSoup(template.decode_contents().replace("{i}", str(count)), "html.parser")
        for node in list(fragment.contents):
            target.append(node.extract())

    def _submit(self, form: Tag) -> None:
        fields = []
        for control in form.find_all(["input", "textarea", "select"]):
            name = control.get("name")
            kind = control.get("type", "text")
            if not name or control.has_attr("disabled") or kind in ("submit", "button", "reset"):
                continue
            if kind in ("checkbox", "radio") and not control.has_attr("checked"):
                continue
            fields.append((name, self.value(control)))
        method = form.get("method", "get").upper()
        action = urljoin(self.page.url, form.get("action") or self.page.url)
        if method == "POST":
            self._load("POST", action, data=fields)
        else:
            self._load("GET", action.split("?")[0] + "?" + urlencode(fields))

    # layout -----------------------------------------------------------------

    def _layout(self) -> dict[int, tuple[int, int]]:
        boxes: dict[int, tuple[int, int]] = {}

        def walk(tag: Tag, y: int) -> int:
            if tag.name in _INVISIBLE or (tag.name == "input" and tag.get("type") == "hidden"):
                return y
            m = _HEIGHT_STYLE.search(tag.get("style", ""))
            children = [c for c in tag.children if isinstance(c, Tag)]
            if m:
                height = int(m.group(1))
            elif not children:
                height = LINE_HEIGHT
            else:
                end = y
                for child in children:
                    end = walk(child, end)
                boxes[id(tag)] = (y, end)
                return end
            boxes[id(tag)] = (y, y + height)
            for child in children:
                walk(child, y)
            return y + height

        body = self.page.soup.body or self.page.soup
        walk(body, 0)
        return boxes

    def rect(self, tag: Tag) -> tuple[int, int]:
        top, bottom = self._layout().get(id(tag), (0, 0))
        return top - self.scroll_y, bottom - self.scroll_y

    # scripts ----------------------------------------------------------------

    def execute(self, script: str, args: list):
        script = script.strip()
        if script == scripts.SCROLL_INTO_VIEW.strip():
            top, bottom = self.rect(args[0])
            centre = self.scroll_y + (top + bottom) // 2
            self.scroll_y = max(0, centre - VIEWPORT_HEIGHT // 2)
            return None
        if script == scripts.ELEMENT_IN_VIEWPORT.strip():
            top, bottom = self.rect(args[0])
            return bottom > 0 and top < VIEWPORT_HEIGHT
        if script == scripts.RENDER_PROBE.strip():
            return ["complete", 0, len(str(self.page.soup))]
        if script == scripts.REMOVE_ELEMENT.strip():
            args[0].extract()
            return None
        if script in ("return document.readyState;", "return document.readyState"):
            return "complete"
        if script in ("return document.title;", "return document.title"):
            return self.page.soup.title.get_text() if self.page.soup.title else ""
        raise WebDriverError("javascript error", "the testbed browser only runs the pipeline's own page scripts")


class WebDriverEmulator:
    """Routes W3C WebDriver commands (path relative to the mount point)."""

    def __init__(self):
        self.sessions: dict[str, BrowserSession] = {}
        self._lock = threading.Lock()

    def handle(self, method: str, path: str, body: dict | None) -> tuple[int, dict]:
        try:
            value = self._dispatch(method, [p for p in path.split("/") if p], body or {})
            return 200, {"value": value}
        except WebDriverError as exc:
            status = _STATUS.get(exc.error, 500)
            return status, {"value": {"error": exc.error, "message": str(exc), "stacktrace": ""}}

    def _session(self, sid: str) -> BrowserSession:
        try:
            return self.sessions[sid]
        except KeyError:
            raise WebDriverError("invalid session id", f"no session {sid}") from None

    def _args(self, session: BrowserSession, value):
        if isinstance(value, dict) and ELEMENT_KEY in value:
            return session.resolve(value[ELEMENT_KEY])
        if isinstance(value, list):
            return [self._args(session, v) for v in value]
        return value

    def _result(self, session: BrowserSession, value):
        if isinstance(value, Tag):
            return session.ref(value)
        if isinstance(value, list):
            return [self._result(session, v) for v in value]
        return value

    def _dispatch(self, method: str, parts: list[str], body: dict):
        if parts == ["status"]:
            return {"ready": True, "message": "aegis testbed browser"}
        if parts == ["session"] and method == "POST":
            sid = uuid.uuid4().hex
            with self._lock:
                self.sessions[sid] = BrowserSession()
            return {
                "sessionId": sid,
                "capabilities": {
                    "browserName": "aegis-testbed",
                    "browserVersion": "1",
                    "platformName": "any",
                    "pageLoadStrategy": "normal",
                    "timeouts": {"implicit": 0, "pageLoad": 300000, "script": 30000},
                },
            }
        if len(parts) < 2 or parts[0] != "session":
            raise WebDriverError("unknown command", "/".join(parts))
        sid, rest = parts[1], parts[2:]
        if not rest and method == "DELETE":
            with self._lock:
                self.sessions.pop(sid, None)
            return None
        s = self._session(sid)
        route = (method, *rest)

        if route == ("POST", "timeouts"):
            if "pageLoad" in body:
                s.page_load_timeout_s = body["pageLoad"] / 1000
            if "script" in body and body["script"] is not None:
                s.script_timeout_s = body["script"] / 1000
            if "implicit" in body:
                s.implicit_wait_s = body["implicit"] / 1000
            return None
        if route == ("GET", "timeouts"):
            return {
                "implicit": int(s.implicit_wait_s * 1000),
                "pageLoad": int(s.page_load_timeout_s * 1000),
                "script": int(s.script_timeout_s * 1000),
            }
        if route == ("POST", "url"):
            s.navigate(body.get("url", ""))
            return None
        if route == ("GET", "url"):
            return s.page.url
        if route == ("POST", "refresh"):
            if s.page.url.startswith("http"):
                s.navigate(s.page.url)
            return None
        if route == ("GET", "title"):
            return s.page.soup.title.get_text() if s.page.soup.title else ""
        if route == ("GET", "source"):
            return str(s.page.soup)
        if route == ("POST", "execute", "sync"):
            return self._result(s, s.execute(body.get("script", ""), self._args(s, body.get("args", []))))
        if route in (("POST", "element"), ("POST", "elements")):
            found = s.find(body.get("using"), body.get("value"))
            return self._found(s, found, many=rest[0] == "elements", what=body.get("value"))
        if rest and rest[0] == "element" and len(rest) >= 3:
            tag = s.resolve(rest[1])
            action = tuple(rest[2:])
            if method == "POST" and action in (("element",), ("elements",)):
                found = s.find(body.get("using"), body.get("value"), root=tag)
                return self._found(s, found, many=action[0] == "elements", what=body.get("value"))
            if method == "POST" and action == ("click",):
                s.click(tag)
                return None
            if method == "POST" and action == ("clear",):
                s.clear(tag)
                return None
            if method == "POST" and action == ("value",):
                text = body.get("text")
                if text is None:
                    text = "".join(body.get("value", []))
                s.send_keys(tag, text)
                return None
            if method == "GET" and action == ("text",):
                return s.text(tag)
            if method == "GET" and action == ("name",):
                return tag.name
            if method == "GET" and len(action) == 2 and action[0] == "attribute":
                value = tag.get(action[1])
                return " ".join(value) if isinstance(value, list) else value
            if method == "GET" and len(action) == 2 and action[0] == "property":
                if action[1] == "value":
                    return s.value(tag)
                return tag.get(action[1])
            if method == "GET" and action == ("rect",):
                top, bottom = s.rect(tag)
                return {"x": 0, "y": top, "width": 800, "height": bottom - top}
        raise WebDriverError("unknown command", f"{method} /{'/'.join(parts)}")

    def _found(self, s: BrowserSession, found: list[Tag], many: bool, what):
        if many:
            return [s.ref(t) for t in found]
        if not found:
            raise WebDriverError("no such element", f"no element matches {what!r}")
        return s.ref(found[0])
