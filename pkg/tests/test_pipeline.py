from __future__ import annotations

import json
import shutil

import pytest

from aegis.agent import AgentEndpoint
from aegis.journal import RunJournal, State
from aegis.pipeline import PipelineError, TrackSelectionRequired, run_pipeline
from aegis.testbed import serve_fixtures


def states(cfg):
    return {u: s.value for u, s in RunJournal(cfg.run_dir / "journal.jsonl").states().items()}


def test_flat_run_offline(make_cfg, testbed):
    cfg = make_cfg("neurips")
    summary = run_pipeline(cfg)
    assert summary.exit_code == 0
    assert summary.counts == {"EXTRACTED": 10, "POSITIVE": 2, "NEGATIVE": 8, "SUBMITTED": 2}
    assert summary.metrics.rounded() == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0}
    assert len(testbed.submissions()) == 2
    assert json.loads((cfg.run_dir / "summary.json").read_text())["run_id"] == "neurips-2024"
    # a rerun does nothing new
    again = run_pipeline(cfg)
    assert again.counts == {"SKIPPED": 10}
    assert len(testbed.submissions()) == 2


def test_records_and_transcripts_written(make_cfg):
    cfg = make_cfg("acl")
    run_pipeline(cfg)
    records = sorted((cfg.run_dir / "records").glob("*.json"))
    assert len(records) == 2
    areas = {json.loads(p.read_text())["research_area"] for p in records}
    assert areas == {"Main Track", "Industry Track"}
    assert len(list((cfg.run_dir / "transcripts").glob("*.txt"))) == 8
    front = next(e for u, e in RunJournal(cfg.run_dir / "journal.jsonl")._entries.items() if "long.0" in u)
    assert front["state"] == "NEGATIVE" and front["rejection"] == "EMPTY_AUTHORS" and front["claimed_match"]


def test_limit_and_offset(make_cfg):
    cfg = make_cfg("neurips", limit=3, offset=2)
    summary = run_pipeline(cfg)
    assert summary.counts["EXTRACTED"] == 3
    assert summary.metrics.counts.total == 3
    done = [u for u, s in states(cfg).items() if s != "PENDING"]
    assert len(done) == 3


def test_dry_run_submits_nothing(make_cfg, testbed):
    cfg = make_cfg("neurips", dry_run=True)
    summary = run_pipeline(cfg)
    assert summary.counts["DRY_RUN"] == 2
    assert testbed.submissions() == []
    assert sorted(states(cfg).values()).count("POSITIVE") == 2


def test_workers_do_not_change_the_outcome(make_cfg, tmp_path):
    one = make_cfg("acl", run_id="w1")
    four = make_cfg("acl", run_id="w4", workers=4, dry_run=True)
    run_pipeline(one)
    run_pipeline(four)
    a, b = states(one), states(four)
    assert {u: ("POS" if s in ("POSITIVE", "SUBMITTED") else s) for u, s in a.items()} == {
        u: ("POS" if s in ("POSITIVE", "SUBMITTED") else s) for u, s in b.items()
    }


def test_tracked_page_without_tty_needs_tracks(make_cfg, monkeypatch):
    monkeypatch.setattr("sys.stdin.isatty", lambda: False)
    with pytest.raises(PipelineError) as err:
        run_pipeline(make_cfg("acl", tracks=None))
    assert isinstance(err.value.cause, TrackSelectionRequired)
    # a chooser callback stands in for the terminal
    summary = run_pipeline(make_cfg("acl", tracks=None), choose_tracks=lambda tracks: {1})
    assert summary.counts["EXTRACTED"] == 3


def test_live_backend_against_scripted_agent(make_cfg, testbed):
    cfg = make_cfg("acl", backend="live", agent=AgentEndpoint(testbed.base_url, stream_idle_timeout_s=5))
    summary = run_pipeline(cfg)
    assert summary.exit_code == 0
    assert summary.metrics.rounded()["recall"] == 1.0
    assert len(testbed.submissions()) == 2


def test_agent_failure_is_failed_not_negative(make_cfg, testbed, tmp_path, corpus_dir):
    broken = tmp_path / "corpus"
    shutil.copytree(corpus_dir, broken)
    manifest = json.loads((broken / "manifest.json").read_text())
    manifest["agent_scripts"].insert(0, {"match_substring": "/acl/2024.acl-long.1/", "status": 500})
    (broken / "manifest.json").write_text(json.dumps(manifest))
    with serve_fixtures(broken, submissions_path=tmp_path / "subs.jsonl") as bad:
        cfg = make_cfg("acl", backend="live", agent=AgentEndpoint(bad.base_url), agent_retries=1)
        summary = run_pipeline(cfg)
    url = testbed.url("/acl/2024.acl-long.1/")
    assert states(cfg)[url] == "FAILED"
    assert summary.exit_code == 1 and summary.failed_urls == [url]
    assert url in summary.excluded_from_scoring
    # resume against the healthy agent finishes the job
    retry = make_cfg("acl", backend="live", agent=AgentEndpoint(testbed.base_url))
    summary = run_pipeline(retry)
    assert summary.exit_code == 0 and states(retry)[url] == "SUBMITTED"


def test_fetch_failure_is_reported_by_stage(make_cfg, testbed):
    cfg = make_cfg("neurips")
    testbed.stop()
    with pytest.raises(PipelineError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "fetch"


def test_run_config_validation(make_cfg):
    with pytest.raises(ValueError):
        make_cfg(run_id="../escape")
    with pytest.raises(ValueError):
        make_cfg(backend="live")
    with pytest.raises(ValueError):
        make_cfg(workers=0)
