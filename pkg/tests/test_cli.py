from __future__ import annotations

import json

import pytest

from aegis.cli import build_parser, main


def test_eval_subcommand(tmp_path, capsys):
    labels = tmp_path / "labels.csv"
    labels.write_text("url,is_positive\nhttp://a,1\nhttp://b,0\nhttp://c,0\n")
    preds = tmp_path / "p.json"
    preds.write_text(json.dumps({"http://a": True, "http://b": True, "http://c": False}))
    assert main(["eval", "--predictions", str(preds), "--labels", str(labels), "--name", "demo", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    # display values are truncated, so 2/3 shows as 0.66
    assert "demo" in out and "0.66" in out and "0.50" in out
    assert (tmp_path / "o" / "metrics.json").exists()


def test_eval_missing_prediction(tmp_path, capsys):
    labels = tmp_path / "labels.csv"
    labels.write_text("url,is_positive\nhttp://a,1\n")
    preds = tmp_path / "p.json"
    preds.write_text("{}")
    assert main(["eval", "--predictions", str(preds), "--labels", str(labels)]) == 1


def test_run_subcommand(testbed, tmp_path, capsys):
    code = main([
        "run", "--url", testbed.url("/acl/2024/"), "--conference", "acl", "--year", "2024",
        "--tracks", "1", "--webdriver-url", testbed.webdriver_url, "--labels", str(testbed.labels_path),
        "--runs-dir", str(tmp_path / "runs"), "--cache-dir", str(tmp_path / "cache"), "--render-wait-ms", "2000",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "run acl-2024" in out and "SUBMITTED=1" in out
    assert len(testbed.submissions()) == 1


def test_live_needs_agent_url(capsys):
    assert main(["run", "--url", "http://x/", "--conference", "acl", "--year", "2024", "--backend", "live"]) == 2


def test_bad_track_list():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--url", "u", "--conference", "c", "--year", "2024", "--tracks", "a,b"])
