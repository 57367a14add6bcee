"""Run-event log."""
from utils.analytics import clear_events, get_summary, log_event, read_events


def test_log_and_read(tmp_path):
    path = tmp_path / "run" / "events.jsonl"
    log_event(path, "run_started", run_id="r", repeats=2)
    log_event(path, "repeat_done", repeat=0, accuracy=0.5, T_f=4)
    events = read_events(path)
    assert [e["event"] for e in events] == ["run_started", "repeat_done"]
    assert "ts" in events[0]


def test_summary_counts_and_insights(tmp_path):
    path = tmp_path / "events.jsonl"
    log_event(path, "run_started")
    log_event(path, "repeat_done", accuracy=0.6, T_f=3)
    log_event(path, "repeat_done", accuracy=0.8, T_f=None)
    log_event(path, "repeat_failed", error="boom")
    log_event(path, "mystery")
    summary = get_summary(path)
    assert summary["total_events"] == 5
    assert summary["repeats_done"] == 2
    assert summary["failed_repeats"] == 1
    assert summary["mean_accuracy"] == 0.7
    notes = " ".join(summary["insights"])
    assert "started without finishing" in notes
    assert "never reached" in notes
    assert "mystery" in notes


def test_clean_run_has_no_problems(tmp_path):
    path = tmp_path / "events.jsonl"
    log_event(path, "run_started")
    log_event(path, "repeat_done", accuracy=0.9, T_f=2)
    log_event(path, "run_finished")
    assert get_summary(path)["insights"] == ["No problems recorded."]


def test_empty_and_cleared_logs(tmp_path):
    path = tmp_path / "events.jsonl"
    assert get_summary(path) == {"error": "No events recorded"}
    log_event(path, "run_started")
    assert clear_events(path) == "Events cleared."
    assert not path.exists()
    assert clear_events(path) == "Events cleared."


def test_unwritable_log_is_ignored(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    log_event(blocker / "events.jsonl", "run_started")
    assert read_events(blocker / "events.jsonl") == []
