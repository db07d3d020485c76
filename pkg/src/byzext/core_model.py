"""Haps, histories and the state-update machinery.

Haps come in two formats. Agents see the *local* format (``Send``, ``Tick``,
``Internal``, ``Recv``); the environment records the *global* format, which
adds timestamps, message identifiers (GMIs), system events and fault markers.

Histories are stored newest-first: ``layers[0]`` is the most recent round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

GO = "go"
SLEEP = "sleep"
HIBERNATE = "hibernate"
SYSTEM_KINDS = (GO, SLEEP, HIBERNATE)


# ---------------------------------------------------------------------------
# local format


@dataclass(frozen=True)
class Send:
    recipient: int
    msg: str
    copy: int = 0

    def __str__(self):
        if self.copy:
            return f"send({self.recipient},{self.msg},{self.copy})"
        return f"send({self.recipient},{self.msg})"


@dataclass(frozen=True)
class Tick:
    def __str__(self):
        return "tick"


@dataclass(frozen=True)
class Internal:
    label: str

    def __str__(self):
        return f"internal({self.label})"


@dataclass(frozen=True)
class Recv:
    sender: int
    msg: str

    def __str__(self):
        return f"recv({self.sender},{self.msg})"


TICK = Tick()

LocalAction = Union[Send, Tick, Internal]
LocalHap = Union[Send, Tick, Internal, Recv]


# ---------------------------------------------------------------------------
# global format


@dataclass(frozen=True, order=True)
class Gmi:
    """Global message identifier: one per (sender, recipient, msg, copy, send time)."""

    sender: int
    recipient: int
    msg: str
    copy: int
    send_time: int

    def __str__(self):
        return f"{self.sender}>{self.recipient}:{self.msg}#{self.copy}@{self.send_time}"


def make_gmi(sender, recipient, msg, copy, send_time) -> Gmi:
    return Gmi(sender, recipient, msg, copy, send_time)


@dataclass(frozen=True)
class CorrectAction:
    agent: int
    action: LocalAction
    time: int
    gmi: Optional[Gmi] = None

    def __post_init__(self):
        if isinstance(self.action, Send) != (self.gmi is not None):
            raise ValueError("a correct action carries a GMI iff it is a send")

    def __str__(self):
        return f"{self.agent}:{self.action}@{self.time}"


@dataclass(frozen=True)
class CorrectEvent:
    """Delivery of a message to ``agent``; ``event.sender`` is the origin."""

    agent: int
    event: Recv
    gmi: Gmi

    def __post_init__(self):
        g = self.gmi
        if (g.sender, g.recipient, g.msg) != (self.event.sender, self.agent, self.event.msg):
            raise ValueError(f"GMI {g} does not match receive of {self.event} by {self.agent}")

    def __str__(self):
        return f"{self.agent}:{self.event}[{self.gmi}]"


@dataclass(frozen=True)
class SystemEvent:
    agent: int
    kind: str

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ValueError(f"unknown system event kind {self.kind!r}")

    def __str__(self):
        return f"{self.kind}({self.agent})"


@dataclass(frozen=True)
class ByzEvent:
    """fake(i, E): agent i records E although nothing of the sort happened."""

    agent: int
    event: CorrectEvent

    def __post_init__(self):
        if self.event.agent != self.agent:
            raise ValueError("a faked event must belong to the faking agent")

    def __str__(self):
        return f"fake({self.agent}, {self.event})"


@dataclass(frozen=True)
class ByzAction:
    """fake(i, A -> A'): i performs A but records A'. ``None`` stands for noop."""

    agent: int
    performed: Optional[CorrectAction] = None
    recorded: Optional[CorrectAction] = None

    def __post_init__(self):
        for a in (self.performed, self.recorded):
            if a is not None and a.agent != self.agent:
                raise ValueError("byzantine actions must belong to the faulty agent")

    @property
    def is_fail(self):
        return self.performed is None and self.recorded is None

    def __str__(self):
        if self.is_fail:
            return f"fail({self.agent})"
        p = self.performed if self.performed is not None else "noop"
        q = self.recorded if self.recorded is not None else "noop"
        return f"fake({self.agent}, {p} -> {q})"


GlobalHap = Union[CorrectAction, CorrectEvent, SystemEvent, ByzEvent, ByzAction]
GlobalEvent = Union[CorrectEvent, SystemEvent, ByzEvent, ByzAction]


def go(i):
    return SystemEvent(i, GO)


def sleep(i):
    return SystemEvent(i, SLEEP)


def hibernate(i):
    return SystemEvent(i, HIBERNATE)


def fail(i):
    return ByzAction(i, None, None)


def grecv(recipient, sender, msg, gmi=None, copy=0, send_time=0) -> CorrectEvent:
    if gmi is None:
        gmi = make_gmi(sender, recipient, msg, copy, send_time)
    return CorrectEvent(recipient, Recv(sender, msg), gmi)


def delivery_of(send: CorrectAction) -> CorrectEvent:
    """The correct receive event matching a global send."""
    g = send.gmi
    return CorrectEvent(g.recipient, Recv(g.sender, g.msg), g)


# ---------------------------------------------------------------------------
# conversions


def to_global(i: int, t: int, a: LocalAction) -> CorrectAction:
    if isinstance(a, Send):
        return CorrectAction(i, a, t, make_gmi(i, a.recipient, a.msg, a.copy, t))
    return CorrectAction(i, a, t)


def to_local(o) -> LocalHap:
    if isinstance(o, CorrectAction):
        return o.action
    if isinstance(o, CorrectEvent):
        return o.event
    raise ValueError(f"{o} has no local form; use localize() for sets of haps")


def localize(xs: Iterable) -> frozenset:
    out = set()
    for o in xs:
        if isinstance(o, (CorrectAction, CorrectEvent)):
            out.add(to_local(o))
        elif isinstance(o, ByzEvent):
            out.add(o.event.event)
        elif isinstance(o, ByzAction):
            if o.recorded is not None:
                out.add(o.recorded.action)
    return frozenset(out)


# ---------------------------------------------------------------------------
# classification helpers


def owner(o) -> int:
    return o.agent


def is_event(o) -> bool:
    return not isinstance(o, CorrectAction)


def events_of(xs, i) -> frozenset:
    """GEvents_i restricted to ``xs``: correct, system and byzantine events of i."""
    return frozenset(o for o in xs if o.agent == i and not isinstance(o, CorrectAction))


def system_events_of(xs, i) -> frozenset:
    return frozenset(o for o in xs if isinstance(o, SystemEvent) and o.agent == i)


def byz_events_of(xs, i) -> frozenset:
    return frozenset(o for o in xs if isinstance(o, (ByzEvent, ByzAction)) and o.agent == i)


def correct_events_of(xs, i) -> frozenset:
    return frozenset(o for o in xs if isinstance(o, CorrectEvent) and o.agent == i)


def actions_of(xs, i) -> frozenset:
    return frozenset(o for o in xs if isinstance(o, CorrectAction) and o.agent == i)


def is_fault_event(o) -> bool:
    """Membership in FEvents: byzantine events plus Sleep and Hibernate."""
    if isinstance(o, (ByzEvent, ByzAction)):
        return True
    return isinstance(o, SystemEvent) and o.kind != GO


def fault_events_of(xs, i) -> frozenset:
    return frozenset(o for o in xs if o.agent == i and is_fault_event(o))


def performed_send(o) -> Optional[Gmi]:
    """GMI of a send actually put on the wire by ``o`` (correctly or faultily)."""
    if isinstance(o, CorrectAction) and o.gmi is not None:
        return o.gmi
    if isinstance(o, ByzAction) and o.performed is not None and o.performed.gmi is not None:
        return o.performed.gmi
    return None


# ---------------------------------------------------------------------------
# canonical ordering and records

_KIND_RANK = {"action": 0, "event": 1, "system": 2, "fake_event": 3, "fake_action": 4}


def _local_key(a) -> tuple:
    if a is None:
        return ("",)
    if isinstance(a, Send):
        return ("send", a.recipient, a.msg, a.copy)
    if isinstance(a, Recv):
        return ("recv", a.sender, a.msg)
    if isinstance(a, Internal):
        return ("internal", a.label)
    return ("tick",)


def _gmi_key(g) -> tuple:
    return () if g is None else (g.sender, g.recipient, g.msg, g.copy, g.send_time)


def _action_key(a) -> tuple:
    if a is None:
        return (-1,)
    return (a.time, _local_key(a.action), _gmi_key(a.gmi))


def hap_key(o) -> tuple:
    """Sort key (agent, hap kind, payload) used for every canonical listing."""
    if isinstance(o, (Send, Tick, Internal, Recv)):
        return (0, 0, _local_key(o))
    if isinstance(o, CorrectAction):
        return (o.agent, _KIND_RANK["action"], _action_key(o))
    if isinstance(o, CorrectEvent):
        return (o.agent, _KIND_RANK["event"], (_local_key(o.event), _gmi_key(o.gmi)))
    if isinstance(o, SystemEvent):
        return (o.agent, _KIND_RANK["system"], (SYSTEM_KINDS.index(o.kind),))
    if isinstance(o, ByzEvent):
        e = o.event
        return (o.agent, _KIND_RANK["fake_event"], (_local_key(e.event), _gmi_key(e.gmi)))
    if isinstance(o, ByzAction):
        return (o.agent, _KIND_RANK["fake_action"], (_action_key(o.performed), _action_key(o.recorded)))
    raise TypeError(f"not a hap: {o!r}")


def sorted_haps(xs) -> list:
    return sorted(xs, key=hap_key)


def _local_record(a):
    if a is None:
        return None
    if isinstance(a, Send):
        return {"kind": "send", "to": a.recipient, "msg": a.msg, "copy": a.copy}
    if isinstance(a, Recv):
        return {"kind": "recv", "from": a.sender, "msg": a.msg}
    if isinstance(a, Internal):
        return {"kind": "internal", "label": a.label}
    return {"kind": "tick"}


def _gmi_record(g):
    if g is None:
        return None
    return [g.sender, g.recipient, g.msg, g.copy, g.send_time]


def _action_record(a):
    if a is None:
        return None
    return {"action": _local_record(a.action), "time": a.time, "gmi": _gmi_record(a.gmi)}


def hap_record(o) -> dict:
    """JSON-ready record of a hap in either format."""
    if isinstance(o, (Send, Tick, Internal, Recv)):
        return _local_record(o)
    if isinstance(o, CorrectAction):
        return {"agent": o.agent, "hap": "action", **_action_record(o)}
    if isinstance(o, CorrectEvent):
        return {"agent": o.agent, "hap": "event", "event": _local_record(o.event), "gmi": _gmi_record(o.gmi)}
    if isinstance(o, SystemEvent):
        return {"agent": o.agent, "hap": "system", "kind": o.kind}
    if isinstance(o, ByzEvent):
        e = o.event
        return {"agent": o.agent, "hap": "fake_event", "event": _local_record(e.event), "gmi": _gmi_record(e.gmi)}
    if isinstance(o, ByzAction):
        return {
            "agent": o.agent,
            "hap": "fake_action",
            "performed": _action_record(o.performed),
            "recorded": _action_record(o.recorded),
        }
    raise TypeError(f"not a hap: {o!r}")


# ---------------------------------------------------------------------------
# histories and states


@dataclass(frozen=True)
class LocalHistory:
    initial: str
    layers: tuple = ()

    def __len__(self):
        return len(self.layers)

    def push(self, layer) -> "LocalHistory":
        return LocalHistory(self.initial, (frozenset(layer),) + self.layers)

    def haps(self) -> frozenset:
        return frozenset().union(*self.layers) if self.layers else frozenset()

    def ticks(self) -> int:
        return sum(1 for layer in self.layers if TICK in layer)

    def to_record(self):
        return {
            "initial": self.initial,
            "layers": [[_local_record(a) for a in sorted(layer, key=_local_key)] for layer in self.layers],
        }

    def __str__(self):
        body = " : ".join("{" + ", ".join(str(a) for a in sorted(layer, key=_local_key)) + "}" for layer in self.layers)
        return f"{body} : <{self.initial}>" if body else f"<{self.initial}>"


EnvHistory = tuple  # tuple of frozensets of GlobalHap, newest first


@dataclass(frozen=True)
class GlobalState:
    env: tuple
    locals: tuple
    _hash: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.env, self.locals)))

    def __hash__(self):
        return self._hash

    @property
    def time(self) -> int:
        return len(self.env)

    @property
    def n(self) -> int:
        return len(self.locals)

    def local(self, i: int) -> LocalHistory:
        return self.locals[i - 1]

    def env_haps(self) -> frozenset:
        return frozenset().union(*self.env) if self.env else frozenset()

    def to_record(self):
        return {
            "time": self.time,
            "env": [[hap_record(o) for o in sorted_haps(layer)] for layer in self.env],
            "locals": [h.to_record() for h in self.locals],
        }


def initial_state(tokens) -> GlobalState:
    """Time-0 state with one initial token per agent."""
    return GlobalState((), tuple(LocalHistory(str(s)) for s in tokens))


def default_initial_state(n: int) -> GlobalState:
    return initial_state(f"s{i}" for i in range(1, n + 1))


# ---------------------------------------------------------------------------
# update functions


def update_agent(i: int, h: LocalHistory, x_i, x_eps) -> LocalHistory:
    """Append the perceived layer for agent ``i``, or leave ``h`` alone if i stays asleep."""
    mine = events_of(x_eps, i)
    perceived = localize(mine)
    sys_kinds = {o.kind for o in mine if isinstance(o, SystemEvent)}
    woken = sys_kinds == {GO} or sys_kinds == {SLEEP}
    if not perceived and not woken:
        return h
    return h.push(perceived | localize(x_i))


def update_env(h_eps: tuple, x_eps, x_actions) -> tuple:
    layer = frozenset(x_eps).union(*x_actions) if x_actions else frozenset(x_eps)
    return (layer,) + tuple(h_eps)


def update_global(state: GlobalState, x_eps, x_actions) -> GlobalState:
    x_eps = frozenset(x_eps)
    locals_ = tuple(
        update_agent(i, h, x_actions[i - 1], x_eps) for i, h in enumerate(state.locals, start=1)
    )
    return GlobalState(update_env(state.env, x_eps, x_actions), locals_)


# ---------------------------------------------------------------------------
# coherence


def coherence_violations(xs, t: int) -> list:
    """Numbers (1-5) of the coherence conditions that ``xs`` breaks at time t."""
    bad = []
    xs = frozenset(xs)
    for o in xs:
        if isinstance(o, ByzAction) and o.performed is not None and o.performed.gmi is not None:
            if o.performed.gmi.send_time != t or o.performed.time != t:
                bad.append(1)
                break
    seen = set()
    for o in xs:
        if isinstance(o, SystemEvent):
            if o.agent in seen:
                bad.append(2)
                break
            seen.add(o.agent)
    correct = [o for o in xs if isinstance(o, CorrectEvent)]
    faked = [o for o in xs if isinstance(o, ByzEvent)]
    faked_exact = {o.event for o in faked}
    if any(e in faked_exact for e in correct):
        bad.append(3)
    correct_keys = {(e.agent, e.event) for e in correct}
    faked_keys = {(o.event.agent, o.event.event) for o in faked}
    if correct_keys & faked_keys:
        # one clause per direction; both are symptoms of the same clash
        bad.extend([4, 5])
    return bad


def is_t_coherent(xs, t: int) -> bool:
    return not coherence_violations(xs, t)


# ---------------------------------------------------------------------------
# run-level accounting


def is_synced_layer(layer, n: int) -> bool:
    agents = {o.agent for o in layer if isinstance(o, SystemEvent)}
    return len(agents) == n


def synced_rounds(state: GlobalState) -> int:
    """NSR: rounds in which every agent received some system event."""
    return sum(1 for layer in state.env if is_synced_layer(layer, state.n))


def faulty_by(env: tuple, i: int) -> bool:
    """True iff an FEvent of agent i occurs anywhere in the env history."""
    return any(o.agent == i and is_fault_event(o) for layer in env for o in layer)


def byzantine_nodes(run, t: int) -> frozenset:
    out = set()
    state = run.states[t]
    n = state.n
    # oldest-first scan; once faulty, faulty for every later prefix
    oldest_first = list(reversed(state.env))
    for i in range(1, n + 1):
        first = None
        for k, layer in enumerate(oldest_first):
            if any(o.agent == i and is_fault_event(o) for o in layer):
                first = k + 1
                break
        if first is not None:
            out.update((i, tp) for tp in range(first, t + 1))
    return frozenset(out)
