import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzext.core_model import (
    TICK,
    ByzAction,
    ByzEvent,
    CorrectAction,
    CorrectEvent,
    GlobalState,
    Internal,
    LocalHistory,
    Recv,
    Send,
    byzantine_nodes,
    coherence_violations,
    default_initial_state,
    fail,
    faulty_by,
    go,
    grecv,
    hap_key,
    hibernate,
    is_fault_event,
    localize,
    make_gmi,
    sleep,
    sorted_haps,
    synced_rounds,
    to_global,
    to_local,
    update_agent,
    update_global,
)
from byzext.runner import Run, RoundRecord

from helpers import action_tuple, candidate_events, coherent_subset, random_state


def test_send_needs_gmi_and_others_must_not_have_one():
    with pytest.raises(ValueError):
        CorrectAction(1, Send(2, "m"), 0)
    with pytest.raises(ValueError):
        CorrectAction(1, TICK, 0, make_gmi(1, 2, "m", 0, 0))
    a = to_global(1, 3, Send(2, "m"))
    assert a.gmi == make_gmi(1, 2, "m", 0, 3)


def test_correct_event_gmi_must_match_the_receive():
    with pytest.raises(ValueError):
        CorrectEvent(2, Recv(1, "m"), make_gmi(1, 3, "m", 0, 0))
    e = grecv(2, 1, "m", send_time=1)
    assert e.gmi.sender == 1 and e.gmi.recipient == 2


def test_local_and_global_forms_round_trip():
    for a in (TICK, Internal("x"), Send(2, "m", 1)):
        assert to_local(to_global(1, 4, a)) == a
    with pytest.raises(ValueError):
        to_local(go(1))


def test_localize_keeps_what_the_agent_sees():
    e = grecv(1, 2, "m")
    xs = {e, ByzEvent(1, grecv(1, 2, "w")), ByzAction(1, None, to_global(1, 0, TICK)), fail(1), go(1)}
    assert localize(xs) == {Recv(2, "m"), Recv(2, "w"), TICK}


def test_fault_events():
    assert is_fault_event(sleep(1)) and is_fault_event(hibernate(1)) and is_fault_event(fail(1))
    assert not is_fault_event(go(1))
    assert fail(1).is_fail


# update_agent: unchanged iff nothing perceived and not woken by exactly {go} or {sleep}


@pytest.mark.parametrize(
    "events, changed",
    [
        (set(), False),
        ({go(1)}, True),
        ({sleep(1)}, True),
        ({hibernate(1)}, False),
        ({fail(1)}, False),
        ({hibernate(1), grecv(1, 2, "m")}, True),
        ({go(2)}, False),
    ],
)
def test_update_agent_cases(events, changed):
    h = LocalHistory("s1")
    out = update_agent(1, h, frozenset({to_global(1, 0, TICK)}), frozenset(events))
    assert (out != h) == changed
    if changed:
        assert len(out) == 1


def test_update_agent_records_actions_and_events():
    acts = {to_global(1, 0, TICK), to_global(1, 0, Send(2, "m"))}
    h = update_agent(1, LocalHistory("s1"), acts, {go(1), grecv(1, 2, "m")})
    assert h.layers[0] == {TICK, Send(2, "m"), Recv(2, "m")}


def _oracle_update(i, h, x_i, x_eps):
    mine = [o for o in x_eps if o.agent == i]
    seen = localize(mine)
    kinds = sorted(o.kind for o in mine if type(o).__name__ == "SystemEvent")
    if not seen and kinds not in (["go"], ["sleep"]):
        return h
    return LocalHistory(h.initial, (frozenset(seen | {a.action for a in x_i}),) + h.layers)


@given(st.integers(0, 2**31), st.integers(0, 3))
@settings(max_examples=300)
def test_update_agent_matches_oracle(seed, t):
    rng = random.Random(seed)
    state = random_state(rng, 2, t)
    x = coherent_subset(rng, 2, t)
    acts = action_tuple(rng, 2, t)
    for i in (1, 2):
        got = update_agent(i, state.local(i), acts[i - 1], x)
        assert got == _oracle_update(i, state.local(i), acts[i - 1], x)
        assert len(got) - len(state.local(i)) in (0, 1)


@given(st.integers(0, 2**31), st.integers(0, 3))
@settings(max_examples=200)
def test_update_global_advances_time_and_env_by_one(seed, t):
    rng = random.Random(seed)
    state = random_state(rng, 3, t)
    x = coherent_subset(rng, 3, t)
    acts = action_tuple(rng, 3, t)
    nxt = update_global(state, x, acts)
    assert nxt.time == state.time + 1
    assert nxt.env[1:] == state.env
    assert nxt.env[0] == x.union(*acts)


# coherence


def test_coherence_condition_examples():
    assert coherence_violations({go(1), go(2)}, 0) == []
    assert coherence_violations({go(1), sleep(1)}, 0) == [2]
    e = grecv(1, 2, "m")
    assert 3 in coherence_violations({e, ByzEvent(1, e)}, 0)
    other_copy = CorrectEvent(1, Recv(2, "m"), make_gmi(2, 1, "m", 0, 1))
    assert coherence_violations({e, ByzEvent(1, other_copy)}, 1) == [4, 5]
    late = ByzAction(1, to_global(1, 0, Send(2, "m")), None)
    assert coherence_violations({late}, 1) == [1]
    assert coherence_violations({late}, 0) == []


def _oracle_coherent(xs, t):
    sys_agents = [o.agent for o in xs if type(o).__name__ == "SystemEvent"]
    if len(sys_agents) != len(set(sys_agents)):
        return False
    for o in xs:
        if isinstance(o, ByzAction) and o.performed is not None and o.performed.gmi is not None:
            if o.performed.gmi.send_time != t:
                return False
    correct = {(o.agent, o.event) for o in xs if isinstance(o, CorrectEvent)}
    faked = {(o.event.agent, o.event.event) for o in xs if isinstance(o, ByzEvent)}
    return not correct & faked


@given(st.integers(0, 2**31), st.integers(0, 3))
@settings(max_examples=300)
def test_coherence_matches_oracle(seed, t):
    rng = random.Random(seed)
    xs = frozenset(o for o in candidate_events(2, t) if rng.random() < 0.2)
    assert (coherence_violations(xs, t) == []) == _oracle_coherent(xs, t)


# canonical order


@given(st.integers(0, 2**31))
@settings(max_examples=100)
def test_sorted_haps_is_a_total_order_independent_of_input_order(seed):
    rng = random.Random(seed)
    xs = list(candidate_events(3, 2))
    rng.shuffle(xs)
    assert sorted_haps(xs) == sorted_haps(reversed(xs))
    keys = [hap_key(o) for o in sorted_haps(xs)]
    assert len(set(keys)) == len(keys)


# accounting


def _run_from(layers, n=2):
    s = default_initial_state(n)
    states, rounds = [s], []
    for t, layer in enumerate(layers):
        acts = tuple(frozenset() for _ in range(n))
        s = update_global(s, layer, acts)
        states.append(s)
        rounds.append(RoundRecord(t, frozenset(layer), acts, frozenset(layer), acts))
    return Run(tuple(states), tuple(rounds))


def test_synced_rounds_counts_rounds_where_everyone_got_a_system_event():
    run = _run_from([{go(1), go(2)}, {go(1)}, {sleep(1), hibernate(2)}, set()])
    assert [synced_rounds(s) for s in run.states] == [0, 1, 1, 2, 2]


def test_byzantine_nodes_mark_agents_from_their_first_fault_on():
    run = _run_from([{go(1), go(2)}, {go(1), sleep(2)}, {go(1), go(2)}])
    assert byzantine_nodes(run, 3) == {(2, 2), (2, 3)}
    assert not faulty_by(run.states[1].env, 2)
    assert faulty_by(run.states[2].env, 2)


def test_global_state_hash_is_cached_and_consistent():
    a = default_initial_state(2)
    b = GlobalState((), (LocalHistory("s1"), LocalHistory("s2")))
    assert a == b and hash(a) == hash(b)
