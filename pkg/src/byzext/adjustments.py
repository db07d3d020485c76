"""Interventions and adjustments: rewriting the first rounds of a run.

An adjustment prescribes, for each of its rounds and each agent, an
intervention that yields the agent's performed actions and events in the
modified run. After the adjustment's extent the run continues under the
context's transition template.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .core_model import (
    ByzAction,
    ByzEvent,
    CorrectEvent,
    byzantine_nodes,
    coherence_violations,
    fail,
    go,
    hibernate,
    performed_send,
    sleep,
    update_global,
)
from .runner import (
    VIOLATED,
    AgentContext,
    Run,
    RoundRecord,
    check_admissibility,
    delivery_obligations,
    find_transition,
    iter_runs,
)

FREEZE = "freeze"
FFREEZE = "ffreeze"
FAKE = "fake"
FAKE_PRIME = "fake_prime"
REPLAY = "replay"

SYNC = "sync"
LOCKSTEP = "lockstep"


class AdjustmentError(ValueError):
    pass


def fake_intervention(i: int, m: int, run: Run):
    """Turn everything agent i perceived in round m into byzantine events."""
    rec = _round(run, m)
    events = set(rec.beta_byz(i))
    events |= {ByzEvent(i, e) for e in rec.beta_correct_events(i)}
    events |= {ByzAction(i, None, a) for a in rec.beta_actions_of(i)}
    events.add(_wake_marker(i, rec))
    return frozenset(), frozenset(events)


def fake_prime_intervention(i: int, m: int, run: Run):
    """Like :func:`fake_intervention`, but faulty sends are never actually performed."""
    rec = _round(run, m)
    events = set()
    for o in rec.beta_byz(i):
        if isinstance(o, ByzEvent):
            events.add(o)
        else:
            # noop -> noop is fail(i): the recorded part alone survives
            events.add(ByzAction(i, None, o.recorded))
    events |= {ByzEvent(i, e) for e in rec.beta_correct_events(i)}
    events |= {ByzAction(i, None, a) for a in rec.beta_actions_of(i)}
    events.add(_wake_marker(i, rec))
    return frozenset(), frozenset(events)


def _round(run, m):
    if m >= len(run.rounds):
        raise AdjustmentError(f"run has no record of round {m}")
    return run.rounds[m]


def _wake_marker(i, rec):
    sys = rec.beta_sys(i)
    if sys in (frozenset({go(i)}), frozenset({sleep(i)})):
        return sleep(i)
    return hibernate(i)


@dataclass(frozen=True)
class Intervention:
    kind: str
    agent: int

    def evaluate(self, run: Run, m: int):
        i = self.agent
        if self.kind == FREEZE:
            return frozenset(), frozenset()
        if self.kind == FFREEZE:
            return frozenset(), frozenset({fail(i)})
        if self.kind == FAKE:
            return fake_intervention(i, m, run)
        if self.kind == FAKE_PRIME:
            return fake_prime_intervention(i, m, run)
        if self.kind == REPLAY:
            rec = _round(run, m)
            return rec.beta_actions_of(i), rec.beta_env_of(i)
        raise AdjustmentError(f"unknown intervention kind {self.kind!r}")

    def __str__(self):
        return f"{self.kind}({self.agent})"


@dataclass(frozen=True)
class Adjustment:
    """Joint interventions B_0, B_1, ..., B_extent, stored oldest first."""

    rounds: tuple

    @property
    def extent(self) -> int:
        return len(self.rounds) - 1

    def uses(self, agent: int, kind: str) -> bool:
        return any(b[agent - 1].kind == kind for b in self.rounds)


def uniform_adjustment(kinds, extent: int) -> Adjustment:
    """The same joint intervention every round; ``kinds[j-1]`` is agent j's."""
    joint = tuple(Intervention(k, j) for j, k in enumerate(kinds, start=1))
    return Adjustment(tuple(joint for _ in range(extent + 1)))


def replay_adjustment(n: int, extent: int) -> Adjustment:
    return uniform_adjustment([REPLAY] * n, extent)


def delay_adjustment(n: int) -> Adjustment:
    """One round in which nobody gets anything: a delayed start for every agent."""
    return uniform_adjustment([FREEZE] * n, 0)


@dataclass(frozen=True)
class BrainScenario:
    brain: int
    n: int
    extent: int
    others: tuple = ()  # ((agent, freeze|ffreeze|ffreeze-first), ...)
    variant: str = SYNC

    def other_kind(self, j: int) -> str:
        return dict(self.others).get(j, FREEZE)

    def adjustment(self) -> Adjustment:
        brain_kind = FAKE_PRIME if self.variant == LOCKSTEP else FAKE
        rounds = []
        for m in range(self.extent + 1):
            joint = []
            for j in range(1, self.n + 1):
                if j == self.brain:
                    joint.append(Intervention(brain_kind, j))
                    continue
                k = self.other_kind(j)
                if k == "ffreeze-first":
                    k = FFREEZE if m == 0 else FREEZE
                joint.append(Intervention(k, j))
            rounds.append(tuple(joint))
        return Adjustment(tuple(rounds))


def brain_adjustment(n, brain, extent, others=None, variant=SYNC) -> Adjustment:
    others = tuple(sorted((others or {}).items()))
    return BrainScenario(brain, n, extent, others, variant).adjustment()


def _prescribed_round(run: Run, adj: Adjustment, m: int, n: int):
    joint = adj.rounds[m]
    actions = []
    events = set()
    for j in range(1, n + 1):
        a, e = joint[j - 1].evaluate(run, m)
        actions.append(frozenset(a))
        overlap = events & set(e)
        if overlap:
            raise AdjustmentError(f"round {m}: interventions overlap on {sorted(map(str, overlap))}")
        events |= set(e)
    events = frozenset(events)
    bad = coherence_violations(events, m)
    if bad:
        raise AdjustmentError(f"round {m}: intervention output violates coherence condition(s) {bad}")
    return events, tuple(actions)


def adjusted_prefix(run: Run, adj: Adjustment, n: int):
    """States r'(0..extent+1) and their round records: prescribed outputs, then a state update per round."""
    if adj.extent >= run.horizon:
        raise AdjustmentError(f"extent {adj.extent} must be below the run horizon {run.horizon}")
    states = [run.states[0]]
    rounds = []
    for m in range(adj.extent + 1):
        events, actions = _prescribed_round(run, adj, m, n)
        states.append(update_global(states[-1], events, actions))
        # the attempted sets are not prescribed; record the performed ones
        rounds.append(RoundRecord(m, events, actions, events, actions))
    return tuple(states), tuple(rounds)


def apply_adjustment(run: Run, adj: Adjustment, ctx: AgentContext, horizon: Optional[int] = None,
                     limit: Optional[int] = None) -> list:
    """All runs obtained from ``run`` by ``adj``, continued per the template to ``horizon``."""
    horizon = run.horizon if horizon is None else horizon
    states, rounds = adjusted_prefix(run, adj, ctx.n)
    out = []
    for r in iter_runs(ctx, horizon, start=[(states, rounds, run.initial_index)]):
        out.append(Run(r.states, r.rounds, r.initial_index, origin="adjusted"))
        if limit is not None and len(out) >= limit:
            break
    return out


# ---------------------------------------------------------------------------
# verification


@dataclass
class PropertyResult:
    name: str
    passed: bool
    round: Optional[int] = None
    detail: str = ""

    def to_record(self):
        return {"property": self.name, "passed": self.passed, "round": self.round, "detail": self.detail}


@dataclass
class BrainReport:
    scenario: BrainScenario
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def failures(self):
        return [r for r in self.results if not r.passed]


def _first_failure(name, rounds_ok):
    for m, ok, detail in rounds_ok:
        if not ok:
            return PropertyResult(name, False, m, detail)
    return PropertyResult(name, True)


def verify_brain_properties(r: Run, r2: Run, scenario: BrainScenario, ctx: AgentContext,
                            adjustment: Optional[Adjustment] = None) -> BrainReport:
    """Check the indistinguishability and isolation properties of a brain-in-a-vat run."""
    adj = adjustment or scenario.adjustment()
    t = adj.extent + 1
    i = scenario.brain
    others = [j for j in range(1, ctx.n + 1) if j != i]
    report = BrainReport(scenario)
    res = report.results

    trans = []
    for m in range(r2.horizon):
        rec = r2.rounds[m]
        found = find_transition(ctx, r2.states[m], rec.beta_env, rec.beta_actions)
        trans.append((m, found is not None, "no attempted sets filter to the prescribed ones"))
    res.append(_first_failure("transitional", trans))

    res.append(_first_failure("brain-history-unchanged", [
        (m, r2.states[m].local(i) == r.states[m].local(i), f"agent {i} sees a different history")
        for m in range(t + 1)
    ]))
    res.append(_first_failure("others-stay-initial", [
        (m, r2.states[m].local(j) == r2.states[0].local(j), f"agent {j} left its initial state")
        for m in range(t + 1)
        for j in others
    ]))
    failed = byzantine_nodes(r2, t)
    res.append(_first_failure("brain-faulty-from-start", [
        (m, (i, m) in failed, f"agent {i} not yet faulty") for m in range(1, t + 1)
    ]))
    res.append(_first_failure("others-faulty-iff-ffreeze", [
        (t, ((j, t) in failed) == adj.uses(j, FFREEZE), f"agent {j}")
        for j in others
    ]))
    correct_now = []
    for m in range(t):
        rec = r2.rounds[m]
        hits = [o for o in rec.beta_env if isinstance(o, CorrectEvent)]
        hits += [a for acts in rec.beta_actions for a in acts]
        correct_now.append((m, not hits, f"correct haps {sorted(map(str, hits))}"))
    res.append(_first_failure("no-correct-occurrence", correct_now))

    if scenario.variant == LOCKSTEP:
        res.append(_first_failure("others-only-fail", [
            (m, r2.rounds[m].beta_env_of(j) <= {fail(j)}, f"agent {j}")
            for m in range(t) for j in others
        ]))
        res.append(_first_failure("brain-no-correct-events", [
            (m, not r2.rounds[m].beta_correct_events(i), f"agent {i}") for m in range(t)
        ]))
        res.append(_first_failure("no-actions", [
            (m, not any(r2.rounds[m].beta_actions), "actions performed") for m in range(t)
        ]))
        prefix = Run(r2.states[: t + 1], r2.rounds[:t])
        pending = delivery_obligations(prefix, ctx.admissibility.channels or None)
        res.append(PropertyResult("no-delivery-obligations", not pending,
                                  pending[0][0] if pending else None,
                                  f"{len(pending)} undelivered sends" if pending else ""))
        verdict = check_admissibility(r2, ctx.admissibility, ctx.bounds)
        res.append(PropertyResult("admissible", verdict != VIOLATED, None, verdict))
    return report


def obligations_created(adj: Adjustment, run: Run, n: int) -> list:
    """Performed sends (hence delivery obligations) introduced by the adjustment's outputs."""
    out = []
    for m in range(adj.extent + 1):
        events, actions = _prescribed_round(run, adj, m, n)
        for o in itertools.chain(events, *actions):
            g = performed_send(o)
            if g is not None:
                out.append((m, g))
    return out
