import pytest

from byzext.adjustments import (
    FAKE,
    FAKE_PRIME,
    FFREEZE,
    FREEZE,
    LOCKSTEP,
    AdjustmentError,
    BrainScenario,
    adjusted_prefix,
    apply_adjustment,
    brain_adjustment,
    delay_adjustment,
    obligations_created,
    replay_adjustment,
    verify_brain_properties,
)
from byzext.cli.dispatch import build_system
from byzext.cli.scenario import load_scenario
from byzext.core_model import fail, synced_rounds
from byzext.epistemics.checks import unprimed


@pytest.fixture(scope="module")
def sync_system():
    return build_system(load_scenario("sync-brainvat"))


@pytest.fixture(scope="module")
def lss_system():
    return build_system(load_scenario("lss-brainvat"))


def test_replay_reproduces_the_prefix(sync_system):
    ctx, system = sync_system
    for run in system.runs[::17]:
        for e in range(run.horizon):
            states, _ = adjusted_prefix(run, replay_adjustment(2, e), 2)
            assert states == run.states[: e + 2]


def test_delay_keeps_everyone_initial(sync_system):
    ctx, system = sync_system
    run = system.runs[5]
    states, rounds = adjusted_prefix(run, delay_adjustment(2), 2)
    assert states[1].locals == run.states[0].locals
    assert not rounds[0].beta_env and not any(rounds[0].beta_actions)


def test_extent_must_fit_in_the_run(sync_system):
    _, system = sync_system
    with pytest.raises(AdjustmentError):
        adjusted_prefix(system.runs[0], replay_adjustment(2, system.horizon), 2)


def test_brain_scenario_interventions():
    adj = brain_adjustment(3, 1, 2, {3: "ffreeze-first"})
    assert [b[0].kind for b in adj.rounds] == [FAKE] * 3
    assert [b[1].kind for b in adj.rounds] == [FREEZE] * 3
    assert [b[2].kind for b in adj.rounds] == [FFREEZE, FREEZE, FREEZE]
    assert adj.uses(3, FFREEZE) and not adj.uses(2, FFREEZE)
    lock = brain_adjustment(2, 2, 0, variant=LOCKSTEP)
    assert lock.rounds[0][1].kind == FAKE_PRIME
    assert unprimed(lock).rounds[0][1].kind == FAKE


def test_brain_runs_have_every_property(sync_system):
    ctx, system = sync_system
    checked = 0
    for run in system.runs[::7]:
        for t in range(1, run.horizon):
            for others in ({}, {2: "ffreeze-first"}):
                sc = BrainScenario(1, 2, t - 1, tuple(others.items()))
                r2 = apply_adjustment(run, sc.adjustment(), ctx, limit=1)[0]
                assert r2.states[t].local(1) == run.states[t].local(1)
                assert r2.origin == "adjusted"
                report = verify_brain_properties(run, r2, sc, ctx)
                assert report.passed, [f.to_record() for f in report.failures()]
                # the vat leaves no synced round behind
                assert synced_rounds(r2.states[t]) == 0
                checked += 1
    assert checked > 50


def test_ffreeze_makes_the_other_agent_faulty(sync_system):
    ctx, system = sync_system
    run = system.runs[0]
    adj = brain_adjustment(2, 1, 0, {2: "ffreeze-first"})
    states, rounds = adjusted_prefix(run, adj, 2)
    assert fail(2) in rounds[0].beta_env


def test_lockstep_primed_is_clean_and_plain_fake_leaves_obligations(lss_system):
    ctx, system = lss_system
    risky = 0
    for run in system.runs:
        for t in range(1, run.horizon):
            sc = BrainScenario(1, 2, t - 1, variant=LOCKSTEP)
            adj = sc.adjustment()
            r2 = apply_adjustment(run, adj, ctx, limit=1)[0]
            report = verify_brain_properties(run, r2, sc, ctx)
            assert report.passed, [f.to_record() for f in report.failures()]
            assert obligations_created(adj, run, 2) == []
            plain = unprimed(adj)
            if obligations_created(plain, run, 2):
                risky += 1
                r3 = apply_adjustment(run, plain, ctx, limit=1)
                if r3:
                    bad = verify_brain_properties(run, r3[0], sc, ctx, plain)
                    assert "no-delivery-obligations" in {f.name for f in bad.failures()}
    assert risky > 0
