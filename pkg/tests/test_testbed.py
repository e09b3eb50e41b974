from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from aegis.testbed import ManifestInvalid, PortInUse, Testbed, serve_fixtures


def test_static_pages_are_deterministic(testbed, corpus_dir):
    url = testbed.url("/neurips/2024/")
    a, b = requests.get(url), requests.get(url)
    assert a.status_code == 200 and a.content == b.content
    assert a.content == (corpus_dir / "pages" / "neurips_2024.html").read_bytes()
    assert requests.get(testbed.url("/missing")).status_code == 404


def test_every_label_is_served(testbed):
    import csv

    with open(testbed.labels_path) as fh:
        for row in csv.DictReader(fh):
            assert requests.get(testbed.url(row["url"])).status_code == 200, row["url"]


def test_form_post_with_three_authors(testbed):
    fields = {
        "paper_url": "http://p",
        "title": "T",
        "author_name_0": "A",
        "author_affiliation_0": "X",
        "author_name_1": "B",
        "author_affiliation_1": "Y",
        "author_name_2": "C",
        "author_affiliation_2": "",
        "institutions": "X\nY\n",
        "research_area": "NLP",
    }
    r = requests.post(testbed.url("/nominate"), data=fields)
    assert "Nomination received" in r.text
    (sub,) = testbed.submissions()
    assert [a["name"] for a in sub["authors"]] == ["A", "B", "C"]
    assert sub["institutions"] == ["X", "Y"]


def test_concurrent_posts_do_not_interleave(testbed):
    def post(i):
        return requests.post(testbed.url("/nominate"), data={"title": f"T{i}", "author_name_0": "A" * 500})

    with ThreadPoolExecutor(8) as pool:
        list(pool.map(post, range(24)))
    subs = testbed.submissions()
    assert sorted(s["title"] for s in subs) == sorted(f"T{i}" for i in range(24))


def test_port_in_use(corpus_dir, tmp_path):
    with serve_fixtures(corpus_dir, submissions_path=tmp_path / "a.jsonl") as first:
        with pytest.raises(PortInUse):
            Testbed(corpus_dir, port=first.port).start()


def test_manifest_invalid(tmp_path, corpus_dir):
    with pytest.raises(ManifestInvalid):
        Testbed(tmp_path)
    broken = tmp_path / "c"
    shutil.copytree(corpus_dir, broken)
    manifest = json.loads((broken / "manifest.json").read_text())
    manifest["pages"].append({"path": "/x", "file": "pages/none.html"})
    (broken / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ManifestInvalid):
        Testbed(broken)


def test_corpus_shape(corpus_dir):
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    rows = (corpus_dir / "labels.csv").read_text().splitlines()[1:]
    assert len(rows) >= 10
    assert sum(r.endswith(",1") for r in rows) >= 2
    assert {s["match_substring"] for s in manifest["agent_scripts"]} >= {"ECHO-ABC", "STALL-ME"}
