import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzext.cli.dispatch import build_system
from byzext.cli.scenario import load_scenario
from byzext.core_model import TICK, Recv, Send
from byzext.epistemics import (
    Claim,
    FormulaSyntaxError,
    InterpretedSystem,
    brainvat_sweep,
    check_hope_nsr,
    check_lss_fault_detection,
    check_not_knows,
    parse_formula,
    show,
)
from byzext.epistemics.checks import OCCURRED, OTHER_CORRECT, OTHER_FAULTY, SELF_CORRECT, lockstep_isolation
from byzext.epistemics.formulas import (
    And,
    Const,
    Correct,
    FakeAt,
    Implies,
    Knows,
    Not,
    Nsr,
    Occurred,
    OccurredOk,
    Or,
    Prop,
    believes,
    faulty,
    hopes,
)
from byzext.epistemics.model import ModelError


@pytest.fixture(scope="module")
def sync_system():
    return build_system(load_scenario("sync-brainvat"))


@pytest.fixture(scope="module")
def model(sync_system):
    _, system = sync_system
    return InterpretedSystem(system.admissible_runs())


# parser

haps = st.sampled_from([TICK, Send(2, "m"), Send(1, "w", 1), Recv(1, "m")])
agents = st.integers(1, 3)
atoms = st.one_of(
    st.sampled_from([Prop("p"), Prop("q"), Const(True), Const(False)]),
    st.builds(Correct, agents, st.one_of(st.none(), st.integers(0, 4))),
    st.builds(OccurredOk, haps, st.one_of(st.none(), agents)),
    st.builds(lambda h, i, t: OccurredOk(h, i, t), haps, agents, st.integers(0, 4)),
    st.builds(Occurred, agents, haps),
    st.builds(FakeAt, agents, st.integers(0, 4), haps),
    st.builds(Nsr, st.integers(0, 5)),
)
formulas = st.recursive(
    atoms,
    lambda sub: st.one_of(
        st.builds(Not, sub),
        st.builds(And, sub, sub),
        st.builds(Knows, agents, sub),
    ),
    max_leaves=12,
)


@given(formulas)
@settings(max_examples=300)
def test_show_then_parse_is_identity(f):
    assert parse_formula(show(f)) == f


def test_derived_operators_and_precedence():
    p, q, r = Prop("p"), Prop("q"), Prop("r")
    assert parse_formula("p -> q -> r") == Implies(p, Implies(q, r))
    assert parse_formula("p | q & r") == Or(p, And(q, r))
    assert parse_formula("!p & q") == And(Not(p), q)
    assert parse_formula("B 1 p") == believes(1, p)
    assert parse_formula("H 2 faulty(1)") == hopes(2, faulty(1))
    assert parse_formula("K 1 K 2 p") == Knows(1, Knows(2, p))
    assert parse_formula("occurred_ok(2, 1, send(1,m,1))") == OccurredOk(Send(1, "m", 1), 2, 1)


@pytest.mark.parametrize("text", ["", "p &", "K p", "correct(x)", "occurred(tick)", "fake(1,tick)",
                                  "occurred_ok(1,2,3,tick)", "zap(1)", "p q", "(p"])
def test_syntax_errors(text):
    with pytest.raises(FormulaSyntaxError):
        parse_formula(text)


# semantics


def knows_oracle(model, i, inner):
    return {p for p, s in enumerate(model.points)
            if all(q in inner for q, u in enumerate(model.points) if u.local(i) == s.local(i))}


ATOMS = ["occurred_ok(tick)", "occurred_ok(send(2,m))", "correct(1)", "correct(2)", "nsr(1)",
         "occurred_ok(2, recv(1,m))", "fake(1,0,tick)", "occurred(2,tick)"]


@pytest.mark.parametrize("atom", ATOMS)
def test_knowledge_matches_brute_force(model, atom):
    f = parse_formula(atom)
    for i in (1, 2):
        assert model.sat(Knows(i, f)) == knows_oracle(model, i, model.sat(f))


@given(st.lists(st.sampled_from(ATOMS), min_size=1, max_size=3), st.sampled_from([1, 2]))
@settings(max_examples=60, deadline=None)
def test_s5_axioms_are_valid(model, atom_list, i):
    every = frozenset(range(len(model)))
    f = parse_formula(" & ".join(atom_list))
    k = Knows(i, f)
    assert model.sat(Implies(k, f)) == every                   # truth
    assert model.sat(Implies(k, Knows(i, k))) == every         # positive introspection
    assert model.sat(Implies(Not(k), Knows(i, Not(k)))) == every  # negative introspection


def test_valuation_and_vocabulary_errors(sync_system):
    _, system = sync_system
    m = InterpretedSystem(system.runs[:3], valuation={"late": lambda s: s.time >= 2}, alphabet=[TICK])
    assert m.sat(Prop("late"))
    with pytest.raises(ModelError):
        m.sat(Prop("other"))
    with pytest.raises(ModelError):
        m.sat(OccurredOk(Send(2, "m")))


def test_points_are_deduplicated_by_state(sync_system):
    _, system = sync_system
    m = InterpretedSystem(system.runs)
    assert m.point(0, 0) == m.point(1, 0)
    assert len(m) < sum(len(r.states) for r in system.runs)


def test_knowledge_is_relative_to_the_model(sync_system):
    """Without vat runs agent 1 seems to know it is correct; one witness refutes that."""
    ctx, system = sync_system
    m = InterpretedSystem(system.admissible_runs())
    claim = parse_formula("K 1 correct(1)")
    assert m.holds(0, 2, claim)
    report = check_not_knows(ctx, system.runs[0], 2, Claim(SELF_CORRECT), 1, system)
    assert report.confirmed and not report.knows


# brain in a vat


@pytest.mark.parametrize(
    "claim, t, reduction, witness_t",
    [
        (Claim(OCCURRED, hap=TICK), 2, "adjustment", 2),
        (Claim(OTHER_FAULTY, other=2), 0, "self", 0),
        (Claim(SELF_CORRECT), 0, "delay+adjustment", 1),
        (Claim(OTHER_CORRECT, other=2), 0, "delay+adjustment", 1),
        (Claim(OTHER_CORRECT, other=2), 3, "adjustment", 3),
    ],
)
def test_check_not_knows_examples(sync_system, claim, t, reduction, witness_t):
    ctx, system = sync_system
    rep = check_not_knows(ctx, system.runs[3], t, claim, 1, system)
    assert rep.confirmed
    assert rep.witness.reduction == reduction
    assert rep.witness.t == witness_t
    rec = rep.to_record()
    assert rec["passed"] and rec["formula"].startswith("!K 1")


def test_claim_validation():
    with pytest.raises(ValueError):
        Claim("nope")
    with pytest.raises(ValueError):
        Claim(OCCURRED)
    with pytest.raises(ValueError):
        Claim(OTHER_FAULTY)


def test_sweep_covers_every_point(sync_system):
    ctx, system = sync_system
    claims = [Claim(OCCURRED, hap=TICK), Claim(SELF_CORRECT), Claim(OTHER_CORRECT, other=2)]
    rep = brainvat_sweep(system, 1, claims, times=[0, 1])
    assert rep.passed
    assert rep.checked == len(system.runs) * 2 * len(claims)


def test_lockstep_isolation():
    _, system = build_system(load_scenario("lss-brainvat"))
    rep = lockstep_isolation(system, 1)
    assert rep.passed
    assert rep.risky_sources > 0 and rep.unprimed_flagged == rep.risky_sources


def test_hope_of_synced_round_count():
    _, system = build_system(load_scenario("sync-nsr", horizon=3))
    rep = check_hope_nsr(InterpretedSystem(system.admissible_runs()))
    assert rep.passed and rep.checked > 0


def test_lockstep_fault_detection():
    _, system = build_system(load_scenario("lss-fault-detect"))
    for obs, sus in ((1, 2), (2, 1)):
        rep = check_lss_fault_detection(system, obs, sus)
        assert rep.passed, rep.to_record()
