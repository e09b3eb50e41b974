from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aegis.links import PaperLink
from aegis.prompts import (
    MissingGenericTemplate,
    PromptTemplate,
    load_library,
    render_prompt,
    select_template,
)


def test_bundled_library_keys_and_versions():
    lib = load_library()
    assert {"generic", "publisher:ieee", "publisher:acm", "publisher:acl", "conference:neurips"} <= set(lib)
    assert all(t.version == 1 and "{{url}}" in t.body for t in lib.values())
    assert not lib["generic"].body.startswith("#")


def test_fallback_chain():
    lib = load_library()
    assert select_template(lib, "neurips", "ieee").key == "conference:neurips"
    assert select_template(lib, "icdm", "ieee").key == "publisher:ieee"
    assert select_template(lib, "custom", "nobody").key == "generic"
    assert select_template(lib, None, None).key == "generic"


def test_missing_generic(tmp_path):
    (tmp_path / "publisher.ieee.txt").write_text("look at {{url}}")
    lib = load_library(tmp_path)
    with pytest.raises(MissingGenericTemplate):
        select_template(lib, "icdm", "ieee")


def test_version_header_parsed(tmp_path):
    (tmp_path / "generic.txt").write_text("# v3\nread {{url}} twice: {{url}}")
    t = load_library(tmp_path)["generic"]
    assert t.version == 3
    assert render_prompt(t, "http://a/b") == "read http://a/b twice: http://a/b"


def test_template_needs_placeholder():
    with pytest.raises(ValueError):
        PromptTemplate("generic", "no placeholder")


urls = st.builds(lambda p: "http://host/" + p, st.text(alphabet="abcdef0123456789/-._{}", max_size=30))


@given(urls)
def test_render_substitutes_only_the_placeholder(url):
    t = load_library()["generic"]
    out = render_prompt(t, PaperLink(url, "x", None, 0))
    assert url in out
    assert out.replace(url, "{{url}}") == t.body or "{{url}}" in url
    assert render_prompt(t, url) == out
