"""The round transition, bounded run enumeration and run-level checks."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Optional

from .core_model import (
    CorrectEvent,
    GlobalState,
    byz_events_of,
    correct_events_of,
    events_of,
    go,
    hap_record,
    is_synced_layer,
    performed_send,
    sorted_haps,
    system_events_of,
    to_global,
    update_global,
)
from .protocols import OMEGA, EnvProtocol, UpperBounds

HOLDS = "holds"
PENDING = "pending"
VIOLATED = "violated"

DEFAULT_BUDGET = 100_000


class BudgetExceeded(RuntimeError):
    """Enumeration would exceed the configured number of runs."""


@dataclass(frozen=True)
class Admissibility:
    """Eventual delivery on ``channels``; no channels means every run is admissible."""

    channels: frozenset = frozenset()

    @property
    def is_all(self):
        return not self.channels

    def intersect(self, other: "Admissibility") -> "Admissibility":
        return Admissibility(self.channels | other.channels)

    @property
    def name(self):
        if self.is_all:
            return "all"
        return "EDel(" + ",".join(f"{i}>{j}" for i, j in sorted(self.channels)) + ")"


ALL_RUNS = Admissibility()


def all_channels(n):
    return frozenset((i, j) for i in range(1, n + 1) for j in range(1, n + 1))


def edel(channels) -> Admissibility:
    return Admissibility(frozenset(channels))


@dataclass
class AgentContext:
    env: EnvProtocol
    joint: tuple
    template: object
    initial_states: tuple
    admissibility: Admissibility = ALL_RUNS
    bounds: Optional[UpperBounds] = None
    name: str = "context"

    def __post_init__(self):
        self.joint = tuple(self.joint)
        self.initial_states = tuple(self.initial_states)
        if not self.initial_states:
            raise ValueError("an agent-context needs at least one initial state")
        n = self.initial_states[0].n
        if len(self.joint) != n:
            raise ValueError(f"joint protocol has {len(self.joint)} members for {n} agents")

    @property
    def n(self):
        return len(self.joint)


@dataclass(frozen=True)
class RoundRecord:
    t: int
    alpha_env: frozenset
    alpha_actions: tuple
    beta_env: frozenset
    beta_actions: tuple

    def beta_env_of(self, i):
        return events_of(self.beta_env, i)

    def beta_sys(self, i):
        return system_events_of(self.beta_env, i)

    def beta_byz(self, i):
        return byz_events_of(self.beta_env, i)

    def beta_correct_events(self, i):
        return correct_events_of(self.beta_env, i)

    def beta_actions_of(self, i):
        return self.beta_actions[i - 1]

    def to_record(self):
        return {
            "t": self.t,
            "beta_env": [hap_record(o) for o in sorted_haps(self.beta_env)],
            "beta_actions": [[hap_record(o) for o in sorted_haps(a)] for a in self.beta_actions],
        }


@dataclass(frozen=True)
class Run:
    states: tuple
    rounds: tuple
    initial_index: int = 0
    origin: str = "enumerated"

    @property
    def horizon(self):
        return len(self.rounds)

    def state(self, t):
        return self.states[t]

    def to_record(self, verdict=None):
        rec = {
            "initial": self.initial_index,
            "origin": self.origin,
            "horizon": self.horizon,
            "rounds": [r.to_record() for r in self.rounds],
        }
        if verdict is not None:
            rec["admissibility"] = verdict
        return rec


@dataclass
class RunSystem:
    context: AgentContext
    horizon: int
    runs: list
    verdicts: list
    mode: str = "exhaustive"

    def admissible_runs(self):
        """Runs not yet refuted by the admissibility condition."""
        return [r for r, v in zip(self.runs, self.verdicts) if v != VIOLATED]

    def to_records(self):
        return [dict(run=k, **r.to_record(v)) for k, (r, v) in enumerate(zip(self.runs, self.verdicts))]


@dataclass(frozen=True)
class Adversary:
    """Exhaustive when ``seed`` is None, otherwise a reproducible random sample."""

    seed: Optional[int] = None
    samples: int = 64

    @property
    def exhaustive(self):
        return self.seed is None


EXHAUSTIVE = Adversary()


# ---------------------------------------------------------------------------
# transition


def label_actions(t, local_sets):
    return tuple(frozenset(to_global(i, t, a) for a in xs) for i, xs in enumerate(local_sets, start=1))


def filter_round(template, state, alpha_env, alpha_actions):
    beta_env = template.event_filter(state, alpha_env, alpha_actions)
    beta_actions = tuple(
        template.action_filter(i, alpha_actions, beta_env) for i in range(1, len(alpha_actions) + 1)
    )
    return beta_env, beta_actions


def step(state: GlobalState, ctx: AgentContext, x_eps, local_sets, validate=True):
    """One round: label, filter, update. Returns (next state, round record)."""
    t = state.time
    x_eps = frozenset(x_eps)
    local_sets = tuple(frozenset(xs) for xs in local_sets)
    if validate:
        if not ctx.env.admits(t, x_eps):
            raise ValueError(f"event set is not an option of {ctx.env.name} at t={t}")
        for i, xs in enumerate(local_sets, start=1):
            if xs not in ctx.joint[i - 1](state.local(i)):
                raise ValueError(f"action set for agent {i} is not prescribed by its protocol")
    alpha_actions = label_actions(t, local_sets)
    beta_env, beta_actions = filter_round(ctx.template, state, x_eps, alpha_actions)
    nxt = update_global(state, beta_env, beta_actions)
    return nxt, RoundRecord(t, x_eps, alpha_actions, beta_env, beta_actions)


def successors(state: GlobalState, ctx: AgentContext):
    """All distinct next states, in adversary order (environment first, then agents by id)."""
    seen = {}
    options = [ctx.joint[i - 1](state.local(i)) for i in range(1, ctx.n + 1)]
    for x_eps in ctx.env.choices(state.time):
        for combo in itertools.product(*options):
            nxt, rec = step(state, ctx, x_eps, combo, validate=False)
            if nxt not in seen:
                seen[nxt] = rec
    return list(seen.items())


# ---------------------------------------------------------------------------
# enumeration


def iter_runs(ctx: AgentContext, horizon: int, start=None):
    """Lazily yield every weakly consistent run to ``horizon`` in adversary order.

    ``start`` optionally continues from given ``(states, rounds, initial_index)``
    prefixes instead of the context's initial states.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    prefixes = start or [((s,), (), k) for k, s in enumerate(ctx.initial_states)]
    stack = list(reversed(prefixes))
    while stack:
        states, rounds, k = stack.pop()
        if len(states) - 1 >= horizon:
            yield Run(states, rounds, k)
            continue
        for s, rec in reversed(successors(states[-1], ctx)):
            stack.append((states + (s,), rounds + (rec,), k))


def enumerate_runs(ctx: AgentContext, horizon: int, adversary: Adversary = EXHAUSTIVE,
                   budget: int = DEFAULT_BUDGET, start=None) -> RunSystem:
    """Every weakly consistent run to ``horizon``, or a seeded sample of them."""
    runs = []
    if adversary.exhaustive:
        for run in iter_runs(ctx, horizon, start):
            runs.append(run)
            if len(runs) > budget:
                raise BudgetExceeded(f"more than {budget} runs at horizon {horizon}")
        mode = "exhaustive"
    else:
        prefixes = start or [((s,), (), k) for k, s in enumerate(ctx.initial_states)]
        rng = random.Random(adversary.seed)
        seen = set()
        attempts = 0
        while len(runs) < adversary.samples and attempts < adversary.samples * 8:
            attempts += 1
            states, rounds, k = prefixes[rng.randrange(len(prefixes))]
            while len(states) - 1 < horizon:
                nxt = successors(states[-1], ctx)
                s, rec = nxt[rng.randrange(len(nxt))]
                states, rounds = states + (s,), rounds + (rec,)
            if states[-1] in seen:
                continue
            seen.add(states[-1])
            runs.append(Run(states, rounds, k))
        mode = f"seeded({adversary.seed})"
    verdicts = [check_admissibility(r, ctx.admissibility, ctx.bounds) for r in runs]
    return RunSystem(ctx, horizon, runs, verdicts, mode)


# ---------------------------------------------------------------------------
# admissibility


def delivery_obligations(run: Run, channels=None):
    """(round, gmi) of every performed send on ``channels`` lacking a correct receive."""
    delivered = set()
    sent = []
    for rec in run.rounds:
        for o in rec.beta_env:
            if isinstance(o, CorrectEvent):
                delivered.add(o.gmi)
        for o in itertools.chain(rec.beta_env, *rec.beta_actions):
            g = performed_send(o)
            if g is not None and (channels is None or (g.sender, g.recipient) in channels):
                sent.append((rec.t, g))
    return [(t, g) for t, g in sent if g not in delivered]


def check_admissibility(run: Run, cond: Admissibility, bounds: Optional[UpperBounds] = None) -> str:
    if cond.is_all:
        return HOLDS
    missing = delivery_obligations(run, cond.channels)
    if not missing:
        return HOLDS
    last_round = run.horizon - 1
    for _, g in missing:
        delta = bounds.delta(g.sender, g.recipient, g.msg, g.send_time) if bounds else OMEGA
        if g.send_time + delta <= last_round:
            return VIOLATED
    return PENDING


def check_non_excluding(ctx: AgentContext, horizon: int, budget: int = DEFAULT_BUDGET) -> bool:
    """Bounded check: every prefix of length horizon-1 has an admissible extension."""
    system = enumerate_runs(ctx, horizon, EXHAUSTIVE, budget)
    if not system.runs or not system.admissible_runs():
        return False
    ok = {}
    cut = max(horizon - 1, 0)
    for run, verdict in zip(system.runs, system.verdicts):
        key = run.states[cut]
        ok[key] = ok.get(key, False) or verdict != VIOLATED
    return all(ok.values())


# ---------------------------------------------------------------------------
# transition witnesses (used for runs built by hand)


def find_transition(ctx: AgentContext, state: GlobalState, beta_env, beta_actions, limit=4096):
    """Search attempted sets whose filtering yields exactly the given performed sets."""
    t = state.time
    beta_env = frozenset(beta_env)
    beta_actions = tuple(frozenset(a) for a in beta_actions)
    candidates = [beta_env] + [x for x in ctx.env.choices(t) if x != beta_env]
    options = [ctx.joint[i - 1](state.local(i)) for i in range(1, ctx.n + 1)]
    tried = 0
    for x_eps in candidates:
        if not ctx.env.admits(t, x_eps):
            continue
        for combo in itertools.product(*options):
            tried += 1
            if tried > limit:
                return None
            alpha = label_actions(t, combo)
            b_env, b_acts = filter_round(ctx.template, state, x_eps, alpha)
            if b_env == beta_env and b_acts == beta_actions:
                return x_eps, alpha
    return None


def is_transitional(ctx: AgentContext, run: Run, upto=None) -> bool:
    upto = run.horizon if upto is None else upto
    for t in range(upto):
        rec = run.rounds[t]
        found = find_transition(ctx, run.states[t], rec.beta_env, rec.beta_actions)
        if found is None:
            return False
        if update_global(run.states[t], rec.beta_env, rec.beta_actions) != run.states[t + 1]:
            return False
    return True


# ---------------------------------------------------------------------------
# run invariant scans; each returns a list of (round, description) violations


def scan_causal_support(run: Run) -> list:
    bad = []
    sent = set()
    for rec in run.rounds:
        for o in itertools.chain(rec.beta_env, *rec.beta_actions):
            g = performed_send(o)
            if g is not None:
                sent.add(g)
        for o in rec.beta_env:
            if isinstance(o, CorrectEvent) and o.gmi not in sent:
                bad.append((rec.t, str(o)))
    return bad


def scan_go_action_law(run: Run) -> list:
    """Go(i) performed iff agent i performed some action, round by round."""
    bad = []
    for rec in run.rounds:
        for i, acts in enumerate(rec.beta_actions, start=1):
            if (go(i) in rec.beta_env) != bool(acts):
                bad.append((rec.t, f"agent {i}: go={go(i) in rec.beta_env} actions={len(acts)}"))
    return bad


def scan_acts_only_when_synced(run: Run) -> list:
    bad = []
    n = len(run.states[0].locals)
    for rec in run.rounds:
        if not is_synced_layer(rec.beta_env, n):
            for i, acts in enumerate(rec.beta_actions, start=1):
                if acts:
                    bad.append((rec.t, f"agent {i} acted in an unsynced round"))
    return bad


def scan_lss_delivery(run: Run) -> list:
    """Every correct send is a broadcast received by everyone in its own round."""
    bad = []
    n = len(run.states[0].locals)
    for rec in run.rounds:
        delivered = {o.gmi for o in rec.beta_env if isinstance(o, CorrectEvent)}
        groups = {}
        for i, acts in enumerate(rec.beta_actions, start=1):
            for a in acts:
                if a.gmi is None:
                    continue
                groups.setdefault((i, a.gmi.msg, a.gmi.copy), set()).add(a.gmi.recipient)
                if a.gmi not in delivered:
                    bad.append((rec.t, f"{a} not delivered in its round"))
        for (i, msg, copy), rec_set in groups.items():
            if len(rec_set) != n:
                bad.append((rec.t, f"agent {i} sent {msg}#{copy} to {sorted(rec_set)} only"))
    return bad


def reachable_local_histories(system: RunSystem) -> list:
    """(agent, history) pairs seen anywhere in the system, in first-seen order."""
    seen = {}
    for run in system.runs:
        for s in run.states:
            for i, h in enumerate(s.locals, start=1):
                seen.setdefault((i, h), None)
    return list(seen)
