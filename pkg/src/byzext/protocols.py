"""Agent and environment protocols, family validators and fault classification."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .core_model import (
    TICK,
    ByzAction,
    ByzEvent,
    CorrectAction,
    CorrectEvent,
    Internal,
    LocalHistory,
    Recv,
    Send,
    coherence_violations,
    events_of,
    fail,
    hibernate,
    is_fault_event,
    is_t_coherent,
    make_gmi,
    sleep,
    to_global,
)

OMEGA = math.inf

FALLIBLE = "fallible"
DELAYABLE = "delayable"
GULLIBLE = "gullible"


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """The finite vocabulary a scenario works over."""

    n: int
    messages: tuple = ("m",)
    copies: int = 1
    internals: tuple = ()

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two agents")
        if self.copies < 1:
            raise ValueError("copies must be positive")

    @property
    def agents(self):
        return range(1, self.n + 1)

    def local_actions(self, i=None) -> list:
        acts = [TICK]
        acts += [Send(j, m, k) for j in self.agents for m in self.messages for k in range(self.copies)]
        acts += [Internal(x) for x in self.internals]
        return acts

    def local_haps(self, i=None) -> list:
        return self.local_actions(i) + [Recv(j, m) for j in self.agents for m in self.messages]

    def same_round_recvs(self, t: int) -> list:
        """Correct receives of every message that could have been sent at t."""
        return [
            CorrectEvent(j, Recv(i, m), make_gmi(i, j, m, k, t))
            for i in self.agents
            for j in self.agents
            for m in self.messages
            for k in range(self.copies)
        ]

    def fault_events(self, i: int, t: int) -> list:
        """The bounded slice of FEvents_i usable at time t."""
        out = [sleep(i), hibernate(i)]
        for j in self.agents:
            for m in self.messages:
                for k in range(self.copies):
                    for s in range(t + 1):
                        out.append(ByzEvent(i, CorrectEvent(i, Recv(j, m), make_gmi(j, i, m, k, s))))
        acts = [None] + [to_global(i, t, a) for a in self.local_actions(i)]
        out += [ByzAction(i, p, q) for p in acts for q in acts]
        return out


# ---------------------------------------------------------------------------
# agent protocols


class AgentProtocol:
    """Maps a local history to the ordered, non-empty list of allowed action sets."""

    name = "protocol"

    def options(self, history: LocalHistory) -> tuple:
        raise NotImplementedError

    def __call__(self, history):
        opts = self.options(history)
        if not opts:
            raise ProtocolError(f"{self.name} prescribes no action set for {history}")
        return opts

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class ConstantProtocol(AgentProtocol):
    def __init__(self, options, name="constant"):
        self._options = tuple(frozenset(o) for o in options)
        self.name = name

    def options(self, history):
        return self._options


def silent_tick() -> ConstantProtocol:
    return ConstantProtocol([{TICK}], name="silent-tick")


def broadcast_every_round(n: int, messages=("m",)) -> ConstantProtocol:
    """Every round: tick and broadcast one of the messages to all agents (self included)."""
    opts = [{TICK} | {Send(j, m, 0) for j in range(1, n + 1)} for m in messages]
    return ConstantProtocol(opts, name="broadcast")


@dataclass
class Rule:
    when: dict
    options: tuple

    def matches(self, h: LocalHistory) -> bool:
        for key, val in self.when.items():
            if key == "length" and len(h) != val:
                return False
            if key == "min_length" and len(h) < val:
                return False
            if key == "ticks" and h.ticks() != val:
                return False
            if key == "received" and Recv(*val) not in h.haps():
                return False
            if key == "not_received" and Recv(*val) in h.haps():
                return False
            if key == "last_received" and (not h.layers or Recv(*val) not in h.layers[0]):
                return False
        return True


class RuleProtocol(AgentProtocol):
    """First matching rule wins; ``default`` covers every other history."""

    KEYS = ("length", "min_length", "ticks", "received", "not_received", "last_received")

    def __init__(self, rules: Sequence[Rule], default, name="rules"):
        for r in rules:
            unknown = set(r.when) - set(self.KEYS)
            if unknown:
                raise ProtocolError(f"unknown rule condition(s) {sorted(unknown)}")
        self.rules = list(rules)
        self.default = tuple(frozenset(o) for o in default)
        self.name = name

    def options(self, history):
        for r in self.rules:
            if r.matches(history):
                return r.options
        return self.default


# ---------------------------------------------------------------------------
# environment protocols


class EnvProtocol:
    """State-independent: the options at time t depend only on t.

    ``choices(t)`` is the ordered finite generator used for enumeration;
    ``admits(t, xs)`` answers membership for the protocol's full family, which
    may be larger than the generator (see :class:`ClosedEnvProtocol`).
    """

    name = "env"

    def choices(self, t: int) -> tuple:
        raise NotImplementedError

    def admits(self, t: int, xs) -> bool:
        return frozenset(xs) in set(self.choices(t))


def _checked(sets, t, name):
    out = []
    for xs in sets:
        xs = frozenset(xs)
        if any(isinstance(o, CorrectAction) for o in xs):
            raise ProtocolError(f"{name}: environment choice at t={t} contains an action")
        bad = coherence_violations(xs, t)
        if bad:
            raise ProtocolError(f"{name}: choice at t={t} violates coherence condition(s) {bad}")
        if xs not in out:
            out.append(xs)
    if not out:
        raise ProtocolError(f"{name}: no choice available at t={t}")
    return tuple(out)


class TableEnvProtocol(EnvProtocol):
    """Choices given by a function of t (or a fixed list); coherence enforced on access."""

    def __init__(self, choices, name="table"):
        self._fn = choices if callable(choices) else (lambda t, _c=tuple(choices): _c)
        self.name = name
        self._cache = {}

    def choices(self, t):
        if t not in self._cache:
            self._cache[t] = _checked(self._fn(t), t, self.name)
        return self._cache[t]


def constant_env(*sets, name="constant") -> TableEnvProtocol:
    return TableEnvProtocol(list(sets) or [frozenset()], name=name)


class ClosedEnvProtocol(EnvProtocol):
    """Closure of a base protocol under per-agent fault capabilities.

    Gullible agents may have their events replaced by any set of their fault
    events, delayable agents may lose all their events, fallible agents may
    additionally receive ``fail``. Enumeration still draws from the base
    generator; membership is answered for the whole closure.
    """

    def __init__(self, base: EnvProtocol, gullible=(), delayable=(), fallible=(), name=None):
        self.base = base
        self.gullible = frozenset(gullible)
        self.delayable = frozenset(delayable) | self.gullible
        self.fallible = frozenset(fallible)
        self.name = name or f"closure({base.name})"

    def choices(self, t):
        return self.base.choices(t)

    def _agent_ok(self, a, part_x, part_b):
        if part_x == part_b:
            return True
        if a in self.gullible and all(is_fault_event(o) for o in part_x):
            return True
        f = fail(a)
        if a in self.fallible and part_x == part_b | {f}:
            return True
        if a in self.delayable:
            if not part_x:
                return True
            if a in self.fallible and part_x == frozenset({f}):
                return True
        return False

    def admits(self, t, xs):
        xs = frozenset(xs)
        if any(isinstance(o, CorrectAction) for o in xs) or not is_t_coherent(xs, t):
            return False
        agents = {o.agent for o in xs}
        for b in self.base.choices(t):
            touched = agents | {o.agent for o in b}
            if all(self._agent_ok(a, events_of(xs, a), events_of(b, a)) for a in touched):
                return True
        return False


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class UpperBounds:
    """δ for every ordered channel; ``OMEGA`` means no bound."""

    default: float = OMEGA
    channels: tuple = ()  # ((i, j), bound) pairs

    def delta(self, i, j, msg=None, t=None):
        for ch, bound in self.channels:
            if ch == (i, j):
                return bound
        return self.default

    @classmethod
    def synchronous(cls, channels) -> "UpperBounds":
        return cls(OMEGA, tuple(((i, j), 0) for i, j in sorted(channels)))


def broadcast_problem(n: int) -> dict:
    everyone = frozenset(range(1, n + 1))
    return {i: frozenset({everyone}) for i in range(1, n + 1)}


def _probe_pairs(joint, probe):
    for item in probe:
        if isinstance(item, tuple):
            yield item
        else:
            for i in range(1, len(joint) + 1):
                yield i, item


def validate_synchronous(joint, probe) -> bool:
    probe = list(probe)
    if not probe:
        raise ValueError("probe set must be non-empty")
    return all(TICK in d for i, h in _probe_pairs(joint, probe) for d in joint[i - 1](h))


def validate_multicast(joint, problem: dict, probe) -> bool:
    probe = list(probe)
    for i, h in _probe_pairs(joint, probe):
        for d in joint[i - 1](h):
            groups = {}
            for a in d:
                if isinstance(a, Send):
                    groups.setdefault((a.msg, a.copy), set()).add(a.recipient)
            for rec in groups.values():
                if frozenset(rec) not in problem[i]:
                    return False
    return True


def validate_time_bounded(env: EnvProtocol, bounds: UpperBounds, horizon: int) -> bool:
    for t in range(horizon + 1):
        for xs in env.choices(t):
            for o in xs:
                if isinstance(o, CorrectEvent):
                    g = o.gmi
                    if g.send_time + bounds.delta(g.sender, g.recipient, g.msg, g.send_time) < t:
                        return False
    return True


def classify_agent(env: EnvProtocol, i: int, horizon: int, alphabet: Optional[Alphabet] = None,
                   max_fault_set: int = 2, fault_alphabet: Optional[Callable] = None) -> frozenset:
    """Which of fallible / delayable / gullible agent i is under ``env``.

    Gullibility is tested for every fault set Y of size at most
    ``max_fault_set`` drawn from the bounded fault alphabet.
    """
    if fault_alphabet is None:
        if alphabet is None:
            raise ValueError("classify_agent needs an alphabet or a fault_alphabet")
        fault_alphabet = alphabet.fault_events
    caps = {FALLIBLE, DELAYABLE, GULLIBLE}
    for t in range(horizon + 1):
        faults = list(fault_alphabet(i, t))
        for xs in env.choices(t):
            if FALLIBLE in caps and not env.admits(t, xs | {fail(i)}):
                caps.discard(FALLIBLE)
            rest = xs - events_of(xs, i)
            if DELAYABLE in caps and not env.admits(t, rest):
                caps.discard(DELAYABLE)
            if GULLIBLE in caps:
                for size in range(max_fault_set + 1):
                    for ys in itertools.combinations(faults, size):
                        zs = rest | frozenset(ys)
                        if is_t_coherent(zs, t) and not env.admits(t, zs):
                            caps.discard(GULLIBLE)
                            break
                    if GULLIBLE not in caps:
                        break
            if not caps:
                return frozenset()
    return frozenset(caps)
