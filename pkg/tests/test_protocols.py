import pytest

from byzext.core_model import TICK, LocalHistory, Recv, Send, fail, go, grecv, hibernate, sleep
from byzext.protocols import (
    DELAYABLE,
    FALLIBLE,
    GULLIBLE,
    OMEGA,
    Alphabet,
    ClosedEnvProtocol,
    ProtocolError,
    Rule,
    RuleProtocol,
    UpperBounds,
    broadcast_every_round,
    broadcast_problem,
    classify_agent,
    constant_env,
    silent_tick,
    validate_multicast,
    validate_synchronous,
    validate_time_bounded,
)

A2 = Alphabet(2)
BASE = constant_env({go(1), go(2)}, frozenset())


def test_alphabet_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        Alphabet(1)
    with pytest.raises(ValueError):
        Alphabet(2, copies=0)


def test_alphabet_vocabulary():
    a = Alphabet(2, messages=("m", "w"), internals=("x",))
    assert a.local_actions()[0] == TICK
    assert len(a.local_actions()) == 1 + 2 * 2 + 1
    assert Recv(2, "w") in a.local_haps()


def test_table_env_rejects_incoherent_choices():
    with pytest.raises(ProtocolError):
        constant_env({go(1), sleep(1)}).choices(0)
    assert constant_env({go(1)}, {go(1)}).choices(0) == (frozenset({go(1)}),)


def test_rule_protocol_first_match_wins():
    p = RuleProtocol([Rule({"length": 0}, (frozenset({TICK, Send(2, "m")}),))], [{TICK}])
    assert p(LocalHistory("s1")) == (frozenset({TICK, Send(2, "m")}),)
    later = LocalHistory("s1", (frozenset({TICK}),))
    assert p(later) == (frozenset({TICK}),)
    with pytest.raises(ProtocolError):
        RuleProtocol([Rule({"bogus": 1}, ())], [{TICK}])


def test_rule_conditions_on_receipts():
    h = LocalHistory("s2", (frozenset({Recv(1, "m")}),))
    assert Rule({"received": (1, "m")}, ()).matches(h)
    assert Rule({"last_received": (1, "m")}, ()).matches(h)
    assert not Rule({"not_received": (1, "m")}, ()).matches(h)


def test_closure_membership():
    env = ClosedEnvProtocol(BASE, gullible=[1], fallible=[2])
    assert env.admits(0, {go(2)})                      # 1 delayed
    assert env.admits(0, {hibernate(1), go(2)})        # 1 fed fault events only
    assert env.admits(0, {go(1), go(2), fail(2)})      # 2 fails
    assert not env.admits(0, {go(1), fail(1)})         # 1 is not fallible
    assert not env.admits(0, {go(1)})                  # 2 is not delayable


@pytest.mark.parametrize(
    "kw, caps1",
    [
        ({}, set()),
        ({"delayable": [1]}, {DELAYABLE}),
        ({"fallible": [1]}, {FALLIBLE}),
        ({"gullible": [1]}, {GULLIBLE, DELAYABLE}),
        ({"gullible": [1], "fallible": [1]}, {GULLIBLE, DELAYABLE, FALLIBLE}),
    ],
)
def test_classify_agent(kw, caps1):
    env = ClosedEnvProtocol(BASE, **kw)
    assert classify_agent(env, 1, 1, A2) == caps1
    assert classify_agent(env, 2, 1, A2) == frozenset()


def test_classify_needs_some_fault_alphabet():
    with pytest.raises(ValueError):
        classify_agent(BASE, 1, 1)


def test_validators():
    joint = (silent_tick(), broadcast_every_round(2))
    probe = [LocalHistory("s1"), LocalHistory("s2")]
    assert validate_synchronous(joint, probe)
    assert validate_multicast(joint, broadcast_problem(2), probe)
    lonely = (broadcast_every_round(2), broadcast_every_round(2))
    assert not validate_multicast(lonely, {1: frozenset({frozenset({1})}), 2: frozenset({frozenset({1})})}, probe)
    with pytest.raises(ValueError):
        validate_synchronous(joint, [])


def test_time_bounded_validation():
    late = constant_env({go(2), grecv(2, 1, "m", send_time=0)})
    sc = UpperBounds.synchronous([(1, 2)])
    assert sc.delta(1, 2) == 0 and sc.delta(2, 1) == OMEGA
    assert validate_time_bounded(late, sc, 0)
    late1 = type(late)(lambda t: [{go(2), grecv(2, 1, "m", send_time=0)}] if t == 1 else [set()])
    assert not validate_time_bounded(late1, sc, 1)
    assert validate_time_bounded(late1, UpperBounds(), 1)
