"""WebDriver session setup and the page scripts the pipeline executes.

Everything goes through the W3C WebDriver wire protocol via selenium's
remote client, so the same code drives a real chromedriver/geckodriver or
the emulated browser bundled with the testbed.
"""

from __future__ import annotations

import logging
import time

from selenium import webdriver
from selenium.webdriver.remote.file_detector import UselessFileDetector

logger = logging.getLogger(__name__)

# Page scripts are module constants: the testbed browser recognizes them by text.
SCROLL_INTO_VIEW = "arguments[0].scrollIntoView({block: 'center', inline: 'nearest'});"
ELEMENT_IN_VIEWPORT = (
    "const r = arguments[0].getBoundingClientRect();"
    " return r.bottom > 0 && r.top < window.innerHeight;"
)
RENDER_PROBE = (
    "return [document.readyState,"
    " performance.getEntriesByType('resource').length,"
    " document.documentElement.outerHTML.length];"
)
REMOVE_ELEMENT = "arguments[0].remove();"


def open_session(webdriver_url: str | None = None, headless: bool = True):
    """Connect to a WebDriver endpoint, or start a local headless Chrome."""
    if webdriver_url:
        options = webdriver.ChromeOptions()
        driver = webdriver.Remote(command_executor=webdriver_url, options=options)
    else:
        options = webdriver.ChromeOptions()
        if headless:
            options.add_argument("--headless=new")
        driver = webdriver.Chrome(options=options)
    # form values must never be mistaken for local file uploads
    driver.file_detector = UselessFileDetector()
    return driver


def wait_for_render(driver, render_wait_ms: int, idle_ms: int = 500, poll_ms: int = 100) -> bool:
    """Block until the page looks settled, capped at ``render_wait_ms``.

    Settled means ``readyState == "complete"`` and neither the resource count
    nor the document size changed for ``idle_ms``. Returns False when the cap
    was hit first.
    """
    deadline = time.monotonic() + render_wait_ms / 1000
    last = None
    stable_since = None
    while True:
        now = time.monotonic()
        probe = driver.execute_script(RENDER_PROBE)
        if probe and probe[0] == "complete":
            if probe == last:
                if stable_since is not None and (now - stable_since) * 1000 >= idle_ms:
                    return True
            else:
                stable_since = now
            last = probe
        if now >= deadline:
            logger.info("render cap of %d ms reached before the page went idle", render_wait_ms)
            return False
        time.sleep(min(poll_ms / 1000, max(deadline - now, 0)))
