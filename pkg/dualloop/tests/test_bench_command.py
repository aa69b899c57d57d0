import json
from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from dualloop.experiment import LATENCY_FILE, REPORT_FILE, SR_FILE
from dualloop.models import ExperimentRun, TaskRunRecord


def bench(*args):
    out = StringIO()
    call_command("bench", *args, stdout=out)
    return out.getvalue()


@pytest.fixture
def corpus_path(tmp_path):
    path = tmp_path / "corpus.json"
    bench("gen", "--seed", "7", "--easy", "1", "--medium", "1", "--hard", "1", "--out", str(path))
    return path


def test_gen_writes_corpus(tmp_path):
    path = tmp_path / "nested" / "corpus.json"
    output = bench("gen", "--easy", "2", "--medium", "0", "--hard", "1", "--out", str(path))
    assert "Wrote 3 tasks" in output
    data = json.loads(path.read_text(encoding="utf-8"))
    assert [t["difficulty"] for t in data["tasks"]] == ["easy", "easy", "hard"]


def test_gen_is_deterministic(tmp_path, corpus_path):
    again = tmp_path / "again.json"
    bench("gen", "--seed", "7", "--easy", "1", "--medium", "1", "--hard", "1", "--out", str(again))
    assert again.read_bytes() == corpus_path.read_bytes()


def test_run_writes_report(tmp_path, corpus_path):
    out = tmp_path / "report"
    output = bench(
        "run", "--corpus", str(corpus_path), "--scheme", "flat", "--scheme", "dual-loop",
        "--eps", "0", "--seeds", "2", "--out", str(out),
    )
    assert "Completed 12 runs, 12 successful" in output
    for filename in (SR_FILE, LATENCY_FILE, REPORT_FILE):
        assert (out / filename).exists()
    report = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
    assert report["seeds"] == [0, 1]
    assert report["config"]["schemes"] == ["flat", "dual-loop"]


def test_flags_override_config_file(tmp_path, corpus_path):
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps({"corpus": str(corpus_path), "schemes": ["react"], "eps": 0.3, "budgets": {"react_steps": 3}}),
        encoding="utf-8",
    )
    out = tmp_path / "report"
    bench("run", "--config", str(config), "--eps", "0", "--max-replans", "1", "--out", str(out))
    report = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
    assert report["config"]["eps"] == 0.0
    assert report["config"]["budgets"]["react_steps"] == 3
    assert report["config"]["budgets"]["max_replans"] == 1
    assert {r["scheme"] for r in report["records"]} == {"react"}


@pytest.mark.django_db
def test_run_can_record_to_database(tmp_path, corpus_path):
    out = tmp_path / "report"
    output = bench(
        "run", "--corpus", str(corpus_path), "--scheme", "flat", "--eps", "0",
        "--out", str(out), "--record", "--name", "smoke",
    )
    run = ExperimentRun.objects.get(name="smoke")
    assert f"recorded run {run.pk}" in output
    assert run.record_count == 3
    assert run.success_rate == 1.0
    assert run.out_dir == str(out)
    assert TaskRunRecord.objects.filter(run=run, scheme="flat").count() == 3


def test_report_prints_tables(tmp_path, corpus_path):
    out = tmp_path / "report"
    bench("run", "--corpus", str(corpus_path), "--scheme", "flat", "--eps", "0", "--out", str(out))
    output = bench("report", "--in", str(out))
    assert "Success rate by difficulty" in output
    assert "flat" in output


def test_report_requires_directory(tmp_path):
    with pytest.raises(CommandError):
        bench("report", "--in", str(tmp_path / "missing"))


def test_run_without_corpus_fails(tmp_path):
    with pytest.raises(CommandError):
        bench("run", "--out", str(tmp_path / "report"))


def test_run_with_missing_corpus_file_fails(tmp_path):
    with pytest.raises(CommandError):
        bench("run", "--corpus", str(tmp_path / "nope.json"), "--out", str(tmp_path / "report"))


def test_replay_backend_needs_log(tmp_path, corpus_path):
    with pytest.raises(CommandError):
        bench("run", "--corpus", str(corpus_path), "--backend", "replay", "--out", str(tmp_path / "report"))
