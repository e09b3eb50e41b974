"""Local fixture server: proceedings pages, paper pages, a scripted streaming
agent, the nomination form, and the emulated WebDriver endpoint.

Manifest (``manifest.json`` in the corpus directory)::

    {
      "pages": [{"path": "/neurips/2024/", "file": "pages/neurips_2024.html"}, ...],
      "labels_csv": "labels.csv",
      "agent_route": "/api/command",
      "agent_scripts": [
        {"match_substring": "...", "chunks": ["A", "B"],
         "status": 200, "delay_ms": 0, "stall_after": null, "stall_s": 30}
      ],
      "form": {"path": "/nominate", "page": "form.html",
               "confirmation_text": "Nomination received", "confirms": true}
    }

Agent scripts are matched by substring of the posted prompt (the paper url
is a good key); the first match wins. ``stall_after: n`` sends ``n`` chunks
and then holds the connection open for ``stall_s`` seconds.
"""

from __future__ import annotations

import errno
import html
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qsl, urlsplit

from .webdriver import WebDriverEmulator

logger = logging.getLogger(__name__)

WEBDRIVER_PREFIX = "/wd"


class ManifestInvalid(ValueError):
    pass


class PortInUse(OSError):
    pass


def load_manifest(corpus_dir: Path) -> dict:
    path = corpus_dir / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ManifestInvalid(f"cannot read {path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ManifestInvalid("manifest must be a JSON object")
    for key, kind in (("pages", list), ("agent_scripts", list), ("form", dict), ("labels_csv", str)):
        if not isinstance(manifest.get(key), kind):
            raise ManifestInvalid(f"manifest field {key!r} must be a {kind.__name__}")
    for page in manifest["pages"]:
        if not isinstance(page, dict) or not {"path", "file"} <= page.keys():
            raise ManifestInvalid(f"page entry needs path and file: {page!r}")
        if not (corpus_dir / page["file"]).is_file():
            raise ManifestInvalid(f"page file missing: {page['file']}")
    for script in manifest["agent_scripts"]:
        if not isinstance(script, dict) or not script.get("match_substring"):
            raise ManifestInvalid(f"agent script needs match_substring: {script!r}")
        if not isinstance(script.get("chunks", []), list):
            raise ManifestInvalid("agent script chunks must be a list")
    form = manifest["form"]
    if not form.get("confirmation_text"):
        raise ManifestInvalid("form.confirmation_text is required")
    if form.get("page") and not (corpus_dir / form["page"]).is_file():
        raise ManifestInvalid(f"form page missing: {form['page']}")
    if not (corpus_dir / manifest["labels_csv"]).is_file():
        raise ManifestInvalid(f"labels file missing: {manifest['labels_csv']}")
    return manifest


def parse_nomination(fields: list[tuple[str, str]]) -> dict:
    """Form fields -> recorded payload (same shape as a record JSON, minus conference/year)."""
    data = dict(fields)
    authors = []
    i = 0
    while f"author_name_{i}" in data:
        authors.append(
            {"name": data[f"author_name_{i}"], "affiliation": data.get(f"author_affiliation_{i}", "")}
        )
        i += 1
    institutions = [line.strip() for line in data.get("institutions", "").splitlines() if line.strip()]
    return {
        "source_url": data.get("paper_url", ""),
        "title": data.get("title", ""),
        "authors": authors,
        "institutions": institutions,
        "research_area": data.get("research_area", ""),
    }


class Testbed:
    __test__ = False  # not a pytest class despite the name

    def __init__(
        self,
        corpus_dir: str | Path,
        port: int = 0,
        host: str = "127.0.0.1",
        submissions_path: str | Path | None = None,
    ):
        self.corpus_dir = Path(corpus_dir)
        self.manifest = load_manifest(self.corpus_dir)
        self.host = host
        self.port = port
        self.pages = {p["path"]: (self.corpus_dir / p["file"]).read_bytes() for p in self.manifest["pages"]}
        self.agent_route = self.manifest.get("agent_route", "/api/command")
        self.scripts = list(self.manifest["agent_scripts"])
        form = self.manifest["form"]
        self.form_path = form.get("path", "/nominate")
        self.form_page = (self.corpus_dir / form["page"]).read_bytes() if form.get("page") else b""
        self.confirmation_text = form["confirmation_text"]
        self.form_confirms = bool(form.get("confirms", True))
        self.submissions_path = Path(submissions_path) if submissions_path else self.corpus_dir / "received_submissions.jsonl"
        self.requests_log: list[tuple[str, str]] = []
        self.webdriver = WebDriverEmulator()
        self._submit_lock = threading.Lock()
        self._log_lock = threading.Lock()
        self._stop = threading.Event()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def webdriver_url(self) -> str:
        return self.base_url + WEBDRIVER_PREFIX

    @property
    def labels_path(self) -> Path:
        return self.corpus_dir / self.manifest["labels_csv"]

    def url(self, path: str) -> str:
        return self.base_url + path

    def start(self) -> Testbed:
        handler = type("Handler", (_Handler,), {"testbed": self})
        try:
            self._server = ThreadingHTTPServer((self.host, self.port), handler)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(exc.errno, f"port {self.port} is already in use") from exc
            raise
        self._server.daemon_threads = True
        self._server.block_on_close = False
        self.port = self._server.server_address[1]
        self._stop.clear()
        self._thread = threading.Thread(target=self._server.serve_forever, name="testbed", daemon=True)
        self._thread.start()
        logger.info("testbed listening on %s", self.base_url)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> Testbed:
        return self.start() if self._server is None else self

    def __exit__(self, *exc) -> None:
        self.stop()

    def log_request(self, method: str, path: str) -> None:
        with self._log_lock:
            self.requests_log.append((method, path))

    def submissions(self) -> list[dict]:
        if not self.submissions_path.exists():
            return []
        return [json.loads(line) for line in self.submissions_path.read_text(encoding="utf-8").splitlines() if line]

    def record_submission(self, payload: dict) -> None:
        with self._submit_lock:
            self.submissions_path.parent.mkdir(parents=True, exist_ok=True)
            with self.submissions_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(payload, ensure_ascii=False) + "\n")

    def script_for(self, prompt: str) -> dict | None:
        return next((s for s in self.scripts if s["match_substring"] in prompt), None)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    testbed: Testbed

    def log_message(self, fmt, *args):
        logger.debug("testbed: " + fmt, *args)

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send(self, status: int, body: bytes, content_type: str = "text/html; charset=utf-8") -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def _json(self, status: int, payload) -> None:
        self._send(status, json.dumps(payload).encode(), "application/json; charset=utf-8")

    def _route(self, method: str) -> None:
        tb = self.testbed
        path = urlsplit(self.path).path
        tb.log_request(method, self.path)
        body = self._body() if method in ("POST", "DELETE") else b""

        if path == WEBDRIVER_PREFIX or path.startswith(WEBDRIVER_PREFIX + "/"):
            try:
                payload = json.loads(body) if body else {}
            except ValueError:
                self._json(400, {"value": {"error": "invalid argument", "message": "bad JSON", "stacktrace": ""}})
                return
            status, result = tb.webdriver.handle(method, path[len(WEBDRIVER_PREFIX) :], payload)
            self._json(status, result)
            return
        if path == tb.agent_route and method == "POST":
            self._agent(body)
            return
        if path == tb.form_path:
            if method == "POST":
                self._nominate(body)
            else:
                self._send(200, tb.form_page)
            return
        if method in ("GET", "HEAD") and self.path in tb.pages:
            self._send(200, tb.pages[self.path])
            return
        if method in ("GET", "HEAD") and path in tb.pages:
            self._send(200, tb.pages[path])
            return
        self._send(404, b"<html><body><h1>404 Not Found</h1></body></html>")

    def do_GET(self):
        self._route("GET")

    def do_HEAD(self):
        self._route("HEAD")

    def do_POST(self):
        self._route("POST")

    def do_DELETE(self):
        self._route("DELETE")

    def _agent(self, body: bytes) -> None:
        tb = self.testbed
        try:
            prompt = json.loads(body)["command"]
            if not isinstance(prompt, str):
                raise TypeError
        except (ValueError, KeyError, TypeError):
            self._send(400, b"expected {\"command\": <string>}", "text/plain")
            return
        script = tb.script_for(prompt)
        if script is None:
            self._send(404, b"no agent script matches this prompt", "text/plain")
            return
        status = int(script.get("status", 200))
        if status != 200:
            self._send(status, f"scripted failure {status}".encode(), "text/plain")
            return
        self.send_response(200)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()
        delay = script.get("delay_ms", 0) / 1000
        stall_after = script.get("stall_after")
        for n, chunk in enumerate(script.get("chunks", [])):
            if stall_after is not None and n >= stall_after:
                break
            data = chunk.encode("utf-8")
            self.wfile.write(f"{len(data):x}\r\n".encode() + data + b"\r\n")
            self.wfile.flush()
            if delay and tb._stop.wait(delay):
                break
        if stall_after is not None:
            tb._stop.wait(script.get("stall_s", 30))
            self.close_connection = True
            return
        self.wfile.write(b"0\r\n\r\n")
        self.wfile.flush()

    def _nominate(self, body: bytes) -> None:
        tb = self.testbed
        fields = parse_qsl(body.decode("utf-8"), keep_blank_values=True)
        payload = parse_nomination(fields)
        valid = bool(payload["title"].strip()) and any(a["name"].strip() for a in payload["authors"])
        if not valid:
            self._send(400, b"<html><body><p class='error'>Title and at least one author are required.</p></body></html>")
            return
        tb.record_submission(payload)
        if tb.form_confirms:
            message = f"<p class='confirmation'>{html.escape(tb.confirmation_text)}</p>"
        else:
            message = "<p class='pending'>Your request is being processed.</p>"
        page = f"<html><head><title>Nomination</title></head><body>{message}</body></html>"
        self._send(200, page.encode("utf-8"))


def serve_fixtures(corpus_dir: str | Path, port: int = 0, **kwargs) -> Testbed:
    """Start a testbed in a background thread and return its handle."""
    return Testbed(corpus_dir, port=port, **kwargs).start()
