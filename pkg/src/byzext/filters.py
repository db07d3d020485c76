"""Event and action filters, their composition, and law checkers.

An event filter maps ``(state, x_eps, x_actions)`` to a subset of ``x_eps``;
``x_actions`` is the tuple of labelled attempted action sets, agent 1 first.
An action filter maps ``(i, x_actions, x_eps)`` to a subset of ``x_actions[i-1]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

from .core_model import (
    GO,
    ByzAction,
    CorrectAction,
    CorrectEvent,
    SystemEvent,
    go,
    performed_send,
)


@dataclass(frozen=True)
class EventFilter:
    name: str
    fn: Callable

    def __call__(self, state, x_eps, x_actions):
        return frozenset(self.fn(state, frozenset(x_eps), tuple(x_actions)))

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ActionFilter:
    name: str
    fn: Callable

    def __call__(self, i, x_actions, x_eps):
        return frozenset(self.fn(i, tuple(x_actions), frozenset(x_eps)))

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TransitionTemplate:
    event_filter: EventFilter
    action_filter: ActionFilter

    @property
    def name(self):
        return f"{self.event_filter.name}/{self.action_filter.name}"


# ---------------------------------------------------------------------------
# built-ins

neutral_event = EventFilter("neutral", lambda h, x_eps, x_acts: x_eps)
neutral_action = ActionFilter("neutral", lambda i, x_acts, x_eps: x_acts[i - 1])


def _standard(i, x_acts, x_eps):
    return x_acts[i - 1] if go(i) in x_eps else frozenset()


standard_action = ActionFilter("standard_action", _standard)


def _sent_in_history(state) -> set:
    """GMIs of every send performed so far, correctly or by a fault."""
    sent = set()
    for layer in state.env:
        for o in layer:
            g = performed_send(o)
            if g is not None:
                sent.add(g)
    return sent


def _causal(state, x_eps, x_acts):
    history = None
    faked_now = {o.performed.gmi for o in x_eps if isinstance(o, ByzAction) and performed_send(o) is not None}
    out = set()
    for o in x_eps:
        if not isinstance(o, CorrectEvent):
            out.add(o)
            continue
        g = o.gmi
        if g in faked_now:
            out.add(o)
            continue
        sender = g.sender
        if 1 <= sender <= len(x_acts) and go(sender) in x_eps:
            if any(isinstance(a, CorrectAction) and a.gmi == g for a in x_acts[sender - 1]):
                out.add(o)
                continue
        if history is None:
            history = _sent_in_history(state)
        if g in history:
            out.add(o)
    return out


causal_event = EventFilter("causal", _causal)


def _sync(state, x_eps, x_acts):
    n = len(x_acts)
    with_system = {o.agent for o in x_eps if isinstance(o, SystemEvent)}
    if len(with_system & set(range(1, n + 1))) == n:
        return x_eps
    return {o for o in x_eps if not (isinstance(o, SystemEvent) and o.kind == GO)}


sync_event = EventFilter("sync", _sync)


BUILTIN_EVENT_FILTERS = {"neutral": neutral_event, "causal": causal_event, "sync": sync_event}
BUILTIN_ACTION_FILTERS = {"neutral": neutral_action, "standard_action": standard_action}


# ---------------------------------------------------------------------------
# composition


def compose_event(outer: EventFilter, inner: EventFilter) -> EventFilter:
    """outer after inner: the inner filter sees the attempted events first."""

    def fn(h, x_eps, x_acts):
        return outer(h, inner(h, x_eps, x_acts), x_acts)

    return EventFilter(f"compose({outer.name},{inner.name})", fn)


def compose_action(outer: ActionFilter, inner: ActionFilter) -> ActionFilter:
    def fn(i, x_acts, x_eps):
        once = inner(i, x_acts, x_eps)
        patched = tuple(once if k == i - 1 else xs for k, xs in enumerate(x_acts))
        return outer(i, patched, x_eps)

    return ActionFilter(f"compose({outer.name},{inner.name})", fn)


def compose_templates(outer: TransitionTemplate, inner: TransitionTemplate) -> TransitionTemplate:
    return TransitionTemplate(
        compose_event(outer.event_filter, inner.event_filter),
        compose_action(outer.action_filter, inner.action_filter),
    )


def _split_args(s: str) -> list:
    parts, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            parts.append(cur.strip())
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    if cur.strip():
        parts.append(cur.strip())
    return parts


def parse_filter(text: str, kind: str = "event"):
    """Resolve a filter name such as ``compose(causal,sync)``."""
    table = BUILTIN_EVENT_FILTERS if kind == "event" else BUILTIN_ACTION_FILTERS
    text = text.strip()
    if text in table:
        return table[text]
    if text.startswith("compose(") and text.endswith(")"):
        args = _split_args(text[len("compose("):-1])
        if len(args) < 2:
            raise ValueError(f"compose needs at least two filters: {text!r}")
        parsed = [parse_filter(a, kind) for a in args]
        combine = compose_event if kind == "event" else compose_action
        out = parsed[-1]
        for f in reversed(parsed[:-1]):
            out = combine(f, out)
        return out
    raise ValueError(f"unknown {kind} filter {text!r}; expected one of {sorted(table)} or compose(a,b)")


# ---------------------------------------------------------------------------
# law checkers
#
# A sample is a tuple (state, x_eps, x_actions). For action filters the agent
# index is taken from ``agents`` (all agents by default).


def check_basic_filter_property(f, samples) -> bool:
    for state, x_eps, x_acts in samples:
        if isinstance(f, EventFilter):
            if not f(state, x_eps, x_acts) <= frozenset(x_eps):
                return False
        else:
            for i in range(1, len(x_acts) + 1):
                if not f(i, x_acts, x_eps) <= frozenset(x_acts[i - 1]):
                    return False
    return True


def _sub_samples(x_eps, x_acts, limit=64):
    """Componentwise subsets of a sample, capped so large inputs stay cheap."""
    pools = [sorted(x_eps, key=str)] + [sorted(a, key=str) for a in x_acts]
    flat = [(k, o) for k, pool in enumerate(pools) for o in pool]
    count = 0
    for r in range(len(flat) + 1):
        for keep in itertools.combinations(flat, r):
            parts = [set() for _ in pools]
            for k, o in keep:
                parts[k].add(o)
            yield frozenset(parts[0]), tuple(frozenset(p) for p in parts[1:])
            count += 1
            if count >= limit:
                return


def check_monotone(f, samples) -> bool:
    """X ⊆ X' implies f(X) ⊆ f(X'), tested against subsets of every sample."""
    for state, x_eps, x_acts in samples:
        x_eps = frozenset(x_eps)
        x_acts = tuple(frozenset(a) for a in x_acts)
        for sub_eps, sub_acts in _sub_samples(x_eps, x_acts):
            if isinstance(f, EventFilter):
                if not f(state, sub_eps, sub_acts) <= f(state, x_eps, x_acts):
                    return False
            else:
                for i in range(1, len(x_acts) + 1):
                    if not f(i, sub_acts, sub_eps) <= f(i, x_acts, x_eps):
                        return False
    return True


def filters_agree(f, g, samples) -> bool:
    """Pointwise equality of two filters of the same kind on the samples."""
    for state, x_eps, x_acts in samples:
        if isinstance(f, EventFilter):
            if f(state, x_eps, x_acts) != g(state, x_eps, x_acts):
                return False
        else:
            for i in range(1, len(x_acts) + 1):
                if f(i, x_acts, x_eps) != g(i, x_acts, x_eps):
                    return False
    return True


def check_idempotent(f, samples) -> bool:
    if isinstance(f, EventFilter):
        return all(
            f(h, f(h, x, a), a) == f(h, x, a) for h, x, a in samples
        )
    for h, x, a in samples:
        for i in range(1, len(a) + 1):
            once = f(i, a, x)
            patched = tuple(once if k == i - 1 else xs for k, xs in enumerate(a))
            if f(i, patched, x) != once:
                return False
    return True
