import io
import json

import pytest

from byzext.cli.dispatch import build_system, run_check
from byzext.cli.main import run_cli
from byzext.cli.report import EXIT_BUDGET, EXIT_FAIL, EXIT_OK, EXIT_SCENARIO, EXIT_USAGE, Report
from byzext.cli.scenario import BUNDLED, ScenarioError, load_scenario, resolve_path, scenario_from_text

DEMO_TEXT = resolve_path("compose-order-demo")[0]


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def records(text):
    return [json.loads(line) for line in text.splitlines()]


@pytest.mark.parametrize("name", [n for n in BUNDLED if not n.endswith("-nsr")])
def test_bundled_scenarios_pass(name):
    code, out, err = cli("check", "--scenario", name)
    assert code == EXIT_OK, out + err


def test_records_are_byte_identical_across_runs():
    a = cli("check", "--scenario", "sync-brainvat", "--format", "records")[1]
    b = cli("check", "--scenario", "sync-brainvat", "--format", "records")[1]
    assert a == b
    recs = records(a)
    assert recs[0]["record"] == "header"
    assert all("elapsed" not in json.dumps(r) for r in recs)
    for line in a.splitlines():
        assert line == json.dumps(json.loads(line), sort_keys=True)


def test_seed_gives_reproducible_samples():
    a = cli("enumerate", "--scenario", "sync-brainvat", "--seed", "5", "--format", "records")[1]
    b = cli("enumerate", "--scenario", "sync-brainvat", "--seed", "5", "--format", "records")[1]
    c = cli("enumerate", "--scenario", "sync-brainvat", "--seed", "6", "--format", "records")[1]
    assert a == b and a != c
    assert records(a)[0]["mode"] == "seeded(5)"


def test_timing_only_in_human_output():
    _, out, _ = cli("matrix", "EvFJP", "EvFJP", "--timing")
    assert out.splitlines()[1] == "r" and "elapsed" in out
    _, out, _ = cli("matrix", "EvFJP", "EvFJP", "--timing", "--format", "records")
    assert "elapsed" not in out


def test_usage_errors_exit_2():
    assert cli("bogus")[0] == EXIT_USAGE
    assert cli("matrix", "Foo", "Bar")[0] == EXIT_USAGE
    assert cli("matrix", "Adm")[0] == EXIT_USAGE
    assert cli("check", "--scenario", "sync-brainvat", "--only", "nothing")[0] == EXIT_USAGE
    assert cli("check", "--scenario", "sync-brainvat", "--formula", "K 1 (")[0] == EXIT_USAGE
    assert cli("brainvat", "--scenario", "sync-brainvat", "--t", "99")[0] == EXIT_USAGE
    assert cli("check")[0] == EXIT_USAGE


def test_scenario_errors_exit_3(tmp_path):
    assert cli("enumerate", "--scenario", "no-such-scenario")[0] == EXIT_SCENARIO
    bad = tmp_path / "bad.yaml"
    bad.write_text(DEMO_TEXT.replace("horizon: 1", "horizon: 0"))
    code, _, err = cli("enumerate", "--scenario", str(bad))
    assert code == EXIT_SCENARIO and f"{bad}:8:" in err


def test_budget_exit_4():
    assert cli("check", "--scenario", "sync-nsr", "--budget", "10")[0] == EXIT_BUDGET


def test_failing_formula_exits_1_and_expectations_flip_it():
    code, out, _ = cli("check", "--scenario", "sync-brainvat", "--only", "invariants",
                       "--formula", "K 1 faulty(2)")
    assert code == EXIT_FAIL and "FAIL" in out
    code, _, _ = cli("check", "--scenario", "sync-brainvat", "--only", "invariants",
                     "--formula", "K 1 faulty(2)", "--expect", "unsatisfiable")
    assert code == EXIT_OK


def test_pending_needs_allow_pending():
    # agent 1 sends but nothing is ever delivered: eventual delivery stays open
    text = DEMO_TEXT.replace("extension: compose(B,S)", "extension: compose(RC(all),B,S)")
    text = text.replace('''      - ["go(1)", "recv(2<-1,m)"]
      - ["go(*)", "recv(2<-1,m)"]''', '''      - ["go(*)"]''')
    sc = scenario_from_text(text)
    ctx, system = build_system(sc)
    rep = Report("check", sc.name)
    rep.add(run_check(sc, ctx, system, {"kind": "admissibility"}))
    assert rep.checks[0].verdict == "pending"
    assert rep.exit_code(False) == EXIT_FAIL
    assert rep.exit_code(True) == EXIT_OK


def test_brainvat_command():
    code, out, _ = cli("brainvat", "--scenario", "sync-brainvat", "--claim", "occurred", "--hap", "tick",
                       "--t", "2", "--format", "records")
    assert code == EXIT_OK
    check = [r for r in records(out) if r["record"] == "check"][0]
    assert check["tag"] == "brain-in-a-vat/not-knows"
    assert check["details"]["example"]["passed"]
    assert check["details"]["example"]["witness_run"]["origin"] == "adjusted"
    code, _, _ = cli("brainvat", "--scenario", "lss-brainvat", "--variant", "lockstep")
    assert code == EXIT_OK
    code, _, _ = cli("brainvat", "--scenario", "sync-brainvat", "--claim", "other-correct", "--others", "2",
                     "--run", "3")
    assert code == EXIT_OK


def test_compose_and_matrix_commands():
    code, out, _ = cli("compose", "B", "S")
    assert code == EXIT_OK and "EvFJP-AFB" in out
    code, out, _ = cli("matrix", "--format", "records")
    rows = [r for r in records(out) if r["record"] == "row"]
    assert len(rows) == 17 and rows[3] == {"record": "row", "left": "EvFJP", "cells": "cc.r.c.r..cccffcc"}


def test_out_file(tmp_path):
    target = tmp_path / "report.txt"
    code, out, _ = cli("enumerate", "--scenario", "compose-order-demo", "--out", str(target))
    assert code == EXIT_OK and out == ""
    assert "compose-order-demo" in target.read_text()


def test_overrides_apply():
    sc = load_scenario("sync-brainvat", agents=3, horizon=2)
    assert sc.n == 3 and sc.horizon == 2


def test_scenario_error_carries_a_line():
    bad = DEMO_TEXT.replace('["go(1)", "recv(2<-1,m)"]', '["go(1)", "zap(2)"]')
    with pytest.raises(ScenarioError) as exc:
        scenario_from_text(bad, "demo.yaml").env_protocol().choices(0)
    assert exc.value.line == 13


def test_lockstep_witness_context_has_one_admissible_run():
    code, out, _ = cli("compose", "LSS", "--format", "records")
    check = [r for r in records(out) if r["record"] == "check"][0]
    assert code == EXIT_OK
    assert check["summary"].startswith("compatible via the silent context (1 admissible runs")
