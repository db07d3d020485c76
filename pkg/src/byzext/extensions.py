"""Extensions: restrictions of protocols, filters and admissibility, and how they combine."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

import yaml

from .core_model import (
    TICK,
    CorrectEvent,
    GlobalState,
    Recv,
    default_initial_state,
    go,
    make_gmi,
    to_global,
    update_global,
)
from .filters import (
    TransitionTemplate,
    causal_event,
    compose_event,
    compose_templates,
    filters_agree,
    neutral_action,
    neutral_event,
    standard_action,
    sync_event,
)
from .protocols import (
    OMEGA,
    Alphabet,
    ConstantProtocol,
    TableEnvProtocol,
    UpperBounds,
    broadcast_every_round,
    broadcast_problem,
    validate_multicast,
    validate_synchronous,
    validate_time_bounded,
)
from .runner import (
    ALL_RUNS,
    EXHAUSTIVE,
    VIOLATED,
    Admissibility,
    AgentContext,
    all_channels,
    edel,
    enumerate_runs,
    reachable_local_histories,
)

# ---------------------------------------------------------------------------
# implementation classes

CHECKLIST_COLUMNS = (
    "admissibility",
    "initial_states",
    "joint_protocols",
    "env_protocols",
    "event_filter",
    "standard_action_filters",
    "arbitrary_action_filters",
    "downward_closed",
    "monotonic_filters",
)

_CLASS_TABLE = """
Adm              xx.......
JP               xxx......
JP-AFB           xxx..x...
EnvJP            xxxx.....
EnvJP-AFB        xxxx.x...
EvFJP            xxx.x....
EvFJP-AFB        xxx.xx...
EvFEnvJP         xxxxx....
EvFEnvJP-AFB     xxxxxx...
Others           xxxxx.x..
JP_DC            xxx....x.
EnvJP_DC         xxxx...x.
EvFJP_DC         xxx.x..x.
EvFEnvJP_DC      xxxxx..x.
Others_DC        xxxxx.xx.
EvFEnvJP_DCmono  xxxxx..xx
Others_DCmono    xxxxx.xxx
"""

CLASS_CHECKLIST = {
    name: frozenset(col for col, mark in zip(CHECKLIST_COLUMNS, marks) if mark == "x")
    for name, marks in (line.split() for line in _CLASS_TABLE.strip().splitlines())
}
IMPLEMENTATION_CLASSES = tuple(CLASS_CHECKLIST)

# composability matrix: rows are the left class, columns the top class
MATRIX_ORDER = (
    "Adm", "JP", "EnvJP", "EvFJP", "EvFEnvJP", "JP-AFB", "EnvJP-AFB", "EvFJP-AFB",
    "EvFEnvJP-AFB", "Others", "JP_DC", "EnvJP_DC", "EvFJP_DC", "EvFEnvJP_DC",
    "Others_DC", "EvFEnvJP_DCmono", "Others_DCmono",
)

_EVF_ROW = "cc.r.c.r..cccffcc"
_AFB_ROW = "c....cccc.ccccfcc"
_EVF_AFB_ROW = "c....c.r..cccffcc"
_OTHERS_ROW = "c.........cccffcc"
_FULL_ROW = "c" * 17

_MATRIX_ROWS = {
    "Adm": _FULL_ROW,
    "JP": _FULL_ROW,
    "EnvJP": _FULL_ROW,
    "EvFJP": _EVF_ROW,
    "EvFEnvJP": _EVF_ROW,
    "JP-AFB": _AFB_ROW,
    "EnvJP-AFB": _AFB_ROW,
    "EvFJP-AFB": _EVF_AFB_ROW,
    "EvFEnvJP-AFB": _EVF_AFB_ROW,
    "Others": _OTHERS_ROW,
    "JP_DC": _FULL_ROW,
    "EnvJP_DC": _FULL_ROW,
    "EvFJP_DC": _EVF_ROW,
    "EvFEnvJP_DC": _EVF_ROW,
    "Others_DC": _OTHERS_ROW,
    "EvFEnvJP_DCmono": _EVF_ROW,
    "Others_DCmono": _OTHERS_ROW,
}

BOTH, FORTH_ONLY, REVERSE_ONLY, NONE = "Both", "ForthOnly", "ReverseOnly", "None"
_LETTER = {"c": BOTH, "f": FORTH_ONLY, "r": REVERSE_ONLY, ".": NONE}
LETTER_OF = {v: (k if k != "." else "") for k, v in _LETTER.items()}


def composability(left: str, top: str) -> str:
    for c in (left, top):
        if c not in _MATRIX_ROWS:
            raise ValueError(f"unknown implementation class {c!r}")
    return _LETTER[_MATRIX_ROWS[left][MATRIX_ORDER.index(top)]]


def matrix_rows():
    """The full matrix as (row class, [cell letters in MATRIX_ORDER]) pairs."""
    return [(r, [LETTER_OF[composability(r, c)] for c in MATRIX_ORDER]) for r in MATRIX_ORDER]


# ---------------------------------------------------------------------------
# operational safety properties


@dataclass(frozen=True)
class SafetyProperty:
    """S(h) given as a membership test plus a finite generator of candidate tuples.

    A tuple is ``(x_eps, (x_1, ..., x_n))`` with global-format sets.
    """

    name: str
    admits: Callable
    universe: Callable

    def admitted(self, h):
        return [x for x in self.universe(h) if self.admits(h, x)]

    def nonempty(self, h) -> bool:
        return any(self.admits(h, x) for x in self.universe(h))


def tuple_universe(n: int, messages=("m",), max_events=2):
    """Small tuple space: go/recv events with current or previous send time, optional ticks."""

    def gen(h: GlobalState):
        t = h.time
        events = [go(i) for i in range(1, n + 1)]
        for s in sorted({t, max(t - 1, 0)}):
            for m in messages:
                events.append(CorrectEvent(2, Recv(1, m), make_gmi(1, 2, m, 0, s)))
        acts = [frozenset(), frozenset({to_global(1, t, TICK)})]
        out = []
        for size in range(max_events + 1):
            for ev in itertools.combinations(events, size):
                for a1 in acts:
                    out.append((frozenset(ev), (a1,) + tuple(frozenset() for _ in range(n - 1))))
        return out

    return gen


def _recv_ok(x_eps, t, bounds: UpperBounds):
    for o in x_eps:
        if isinstance(o, CorrectEvent):
            g = o.gmi
            if g.send_time + bounds.delta(g.sender, g.recipient, g.msg, g.send_time) < t:
                return False
    return True


def _history_ok(h: GlobalState, bounds):
    for k, layer in enumerate(reversed(h.env)):
        if not _recv_ok(layer, k, bounds):
            return False
    return True


def time_bounded_safety(bounds: UpperBounds, n: int, messages=("m",), name="TC") -> SafetyProperty:
    def admits(h, x):
        return _history_ok(h, bounds) and _recv_ok(x[0], h.time, bounds)

    return SafetyProperty(name, admits, tuple_universe(n, messages))


def full_safety(n: int, messages=("m",)) -> SafetyProperty:
    return SafetyProperty("full", lambda h, x: True, tuple_universe(n, messages))


def go_every_round_safety(agent: int, n: int, messages=("m",)) -> SafetyProperty:
    """Not downward closed: dropping Go(agent) from an admitted tuple leaves S."""

    def admits(h, x):
        return all(go(agent) in layer for layer in h.env) and go(agent) in x[0]

    return SafetyProperty(f"go-every-round({agent})", admits, tuple_universe(n, messages))


def _apply_tuple(h, x):
    return update_global(h, x[0], x[1])


def reachable_prefixes(safety: SafetyProperty, initial: list, depth: int):
    """(parent, tuple, child) for every prefix generated from the universe up to depth."""
    frontier = list(initial)
    edges = []
    for _ in range(depth):
        nxt = []
        for h in frontier:
            for x in safety.universe(h):
                child = _apply_tuple(h, x)
                edges.append((h, x, child))
                nxt.append(child)
        frontier = nxt
    return edges


def _componentwise_subsets(x, cap=256, rng=None):
    x_eps, x_acts = x
    pools = [sorted(x_eps, key=str)] + [sorted(a, key=str) for a in x_acts]
    flat = [(k, o) for k, p in enumerate(pools) for o in p]
    if 2 ** len(flat) <= cap:
        masks = range(2 ** len(flat))
    else:
        rng = rng or random.Random(0)
        masks = [rng.randrange(2 ** len(flat)) for _ in range(cap)]
    for mask in masks:
        parts = [set() for _ in pools]
        for b, (k, o) in enumerate(flat):
            if mask >> b & 1:
                parts[k].add(o)
        yield frozenset(parts[0]), tuple(frozenset(p) for p in parts[1:])


def safety_samples(safety: SafetyProperty, n: int, depth: int = 2, initial=None):
    initial = initial or [default_initial_state(n)]
    states = list(initial) + [c for _, _, c in reachable_prefixes(safety, initial, depth)]
    return [(h, x) for h in states for x in safety.admitted(h)]


def check_downward_closed(safety: SafetyProperty, samples) -> bool:
    for h, x in samples:
        if not safety.admits(h, x):
            continue
        for sub in _componentwise_subsets(x):
            if not safety.admits(h, sub):
                return False
    return True


def check_safety_attributes(safety: SafetyProperty, depth: int, n: int = 2, initial=None) -> bool:
    """Safe initial state exists; a prefix is safely extendable iff safely reachable."""
    initial = initial or [default_initial_state(n)]
    if not any(safety.nonempty(h) for h in initial):
        return False
    for parent, x, child in reachable_prefixes(safety, initial, depth):
        if safety.admits(parent, x) != safety.nonempty(child):
            return False
    return True


def once_empty_stays_empty(safety: SafetyProperty, states) -> bool:
    """Along a sequence of states r(0), r(1), ...: S empty once means empty after."""
    emptied = False
    for h in states:
        ne = safety.nonempty(h)
        if emptied and ne:
            return False
        emptied = emptied or not ne
    return True


# ---------------------------------------------------------------------------
# extensions


@dataclass(frozen=True)
class PairConstraint:
    """A restriction on (environment protocol, joint protocol) pairs."""

    name: str
    check: Callable  # (env, joint, probe, horizon) -> bool


@dataclass(frozen=True)
class Witness:
    name: str
    build: Callable  # n -> (env, joint)


@dataclass(frozen=True)
class Extension:
    name: str
    template: TransitionTemplate
    pairs: tuple = ()
    admissibility: Admissibility = ALL_RUNS
    impl_class: str = "Adm"
    bounds: Optional[UpperBounds] = None
    manipulates: frozenset = frozenset()
    safety: Optional[SafetyProperty] = None
    initial_ok: Callable = lambda states: len(states) > 0
    witnesses: tuple = ()
    parts: tuple = ()

    def pair_ok(self, env, joint, probe, horizon) -> bool:
        return all(c.check(env, joint, probe, horizon) for c in self.pairs)

    def failed_pairs(self, env, joint, probe, horizon) -> list:
        return [c.name for c in self.pairs if not c.check(env, joint, probe, horizon)]

    def context(self, env, joint, initial_states=None, n=None) -> AgentContext:
        n = n or len(joint)
        return AgentContext(
            env=env,
            joint=joint,
            template=self.template,
            initial_states=initial_states or (default_initial_state(n),),
            admissibility=self.admissibility,
            bounds=self.bounds,
            name=self.name,
        )


NEUTRAL_TEMPLATE = TransitionTemplate(neutral_event, neutral_action)

_PART_COLUMN = {
    "adm": "admissibility",
    "init": "initial_states",
    "jp": "joint_protocols",
    "env": "env_protocols",
    "evf": "event_filter",
    "afb": "standard_action_filters",
    "aaf": "arbitrary_action_filters",
}


def _sync_pairs():
    return PairConstraint("joint:synchronous", lambda env, joint, probe, h: validate_synchronous(joint, probe))


def _multicast_pairs(problem, label):
    return PairConstraint(f"joint:multicast({label})", lambda env, joint, probe, h: validate_multicast(joint, problem, probe))


def _time_bounded_pairs(bounds, label):
    return PairConstraint(f"env:time-bounded({label})", lambda env, joint, probe, h: validate_time_bounded(env, bounds, h))


def _merge_bounds(a: Optional[UpperBounds], b: Optional[UpperBounds], n: int):
    if a is None:
        return b
    if b is None:
        return a
    chans = tuple(
        ((i, j), min(a.delta(i, j), b.delta(i, j)))
        for i in range(1, n + 1)
        for j in range(1, n + 1)
    )
    return UpperBounds(min(a.default, b.default), chans)


def _silent_witness(n):
    return TableEnvProtocol([frozenset()], name="silent"), tuple(
        ConstantProtocol([{TICK}], name="silent-tick") for _ in range(n)
    )


def _idle_witness(n):
    return TableEnvProtocol([frozenset()], name="silent"), tuple(
        ConstantProtocol([frozenset()], name="idle") for _ in range(n)
    )


def _lockstep_witness(n, messages=("m",)):
    alphabet = Alphabet(n, tuple(messages))
    env = TableEnvProtocol(
        lambda t: [frozenset(go(i) for i in range(1, n + 1)) | frozenset(alphabet.same_round_recvs(t))],
        name="lockstep",
    )
    return env, tuple(broadcast_every_round(n, messages) for _ in range(n))


STANDARD_WITNESSES = (
    Witness("silent", _silent_witness),
    Witness("idle", _idle_witness),
    Witness("lockstep", _lockstep_witness),
)


def neutral_extension() -> Extension:
    return Extension("neutral", NEUTRAL_TEMPLATE, impl_class="Adm", parts=("neutral",))


def byzantine_extension() -> Extension:
    return Extension(
        "B",
        TransitionTemplate(causal_event, standard_action),
        impl_class="EvFJP-AFB",
        manipulates=frozenset({"evf", "afb"}),
        parts=("B",),
    )


def synchronous_extension() -> Extension:
    return Extension(
        "S",
        TransitionTemplate(sync_event, standard_action),
        pairs=(_sync_pairs(),),
        impl_class="EvFJP-AFB",
        manipulates=frozenset({"jp", "evf", "afb"}),
        parts=("S",),
    )


def _channels_label(channels, n):
    return "all" if channels == all_channels(n) else ";".join(f"{i}>{j}" for i, j in sorted(channels))


def reliable_extension(channels, n) -> Extension:
    channels = frozenset(channels)
    return Extension(
        f"RC({_channels_label(channels, n)})",
        NEUTRAL_TEMPLATE,
        admissibility=edel(channels),
        impl_class="Adm",
        manipulates=frozenset({"adm"}),
        parts=("RC",),
    )


def time_bounded_extension(bounds: UpperBounds, n, label="Δ", messages=("m",)) -> Extension:
    return Extension(
        f"TC({label})",
        NEUTRAL_TEMPLATE,
        pairs=(_time_bounded_pairs(bounds, label),),
        impl_class="EnvJP_DC",
        bounds=bounds,
        manipulates=frozenset({"env"}),
        safety=time_bounded_safety(bounds, n, messages, name=f"TC({label})"),
        parts=("TC",),
    )


def synchronous_comm_extension(channels, n, messages=("m",)) -> Extension:
    channels = frozenset(channels)
    label = _channels_label(channels, n)
    ext = time_bounded_extension(UpperBounds.synchronous(channels), n, label=f"SC:{label}", messages=messages)
    return Extension(
        f"SC({label})",
        ext.template,
        pairs=ext.pairs,
        impl_class="EnvJP_DC",
        bounds=ext.bounds,
        manipulates=ext.manipulates,
        safety=ext.safety,
        parts=("SC",),
    )


def multicast_extension(problem: dict, label="Ch") -> Extension:
    return Extension(
        f"MC({label})",
        TransitionTemplate(neutral_event, standard_action),
        pairs=(_multicast_pairs(problem, label),),
        impl_class="JP-AFB",
        manipulates=frozenset({"jp", "afb"}),
        parts=("MC",),
    )


def broadcast_extension(n) -> Extension:
    ext = multicast_extension(broadcast_problem(n), label="BCh")
    return Extension("BC", ext.template, pairs=ext.pairs, impl_class="JP-AFB",
                     manipulates=ext.manipulates, parts=("BC",))


def lockstep_extension(n, messages=("m",)) -> Extension:
    everything = all_channels(n)
    bounds = UpperBounds.synchronous(everything)
    return Extension(
        "LSS",
        TransitionTemplate(compose_event(causal_event, sync_event), standard_action),
        pairs=(
            _time_bounded_pairs(bounds, "SC:all"),
            _multicast_pairs(broadcast_problem(n), "BCh"),
            _sync_pairs(),
        ),
        admissibility=edel(everything),
        impl_class="EvFEnvJP-AFB",
        bounds=bounds,
        manipulates=frozenset({"adm", "env", "jp", "evf", "afb"}),
        safety=time_bounded_safety(bounds, n, messages, name="SC(all)"),
        parts=("LSS",),
    )


def compose(outer: Extension, inner: Extension, n: Optional[int] = None) -> Extension:
    """outer∘inner: every restriction of both, with inner's filters applied first."""
    n = n or 2
    safety = outer.safety or inner.safety
    if outer.safety and inner.safety:
        a, b = outer.safety, inner.safety
        safety = SafetyProperty(
            f"{a.name}&{b.name}",
            lambda h, x: a.admits(h, x) and b.admits(h, x),
            a.universe,
        )
    return Extension(
        f"compose({outer.name},{inner.name})",
        compose_templates(outer.template, inner.template),
        pairs=outer.pairs + inner.pairs,
        admissibility=outer.admissibility.intersect(inner.admissibility),
        impl_class=_joined_class(outer, inner),
        bounds=_merge_bounds(outer.bounds, inner.bounds, n),
        manipulates=outer.manipulates | inner.manipulates,
        safety=safety,
        initial_ok=lambda states: outer.initial_ok(states) and inner.initial_ok(states),
        witnesses=outer.witnesses + inner.witnesses,
        parts=outer.parts + inner.parts,
    )


def _joined_class(a: Extension, b: Extension) -> str:
    """Smallest implementation class allowing every part either constituent manipulates."""
    needed = {_PART_COLUMN[p] for p in a.manipulates | b.manipulates}
    for name in IMPLEMENTATION_CLASSES:
        if needed <= CLASS_CHECKLIST[name]:
            return name
    return "Others"


def compose_all(extensions, n=None) -> Extension:
    """e1∘e2∘...∘ek (the last one's filters act first)."""
    exts = list(extensions)
    if not exts:
        return neutral_extension()
    out = exts[-1]
    for e in reversed(exts[:-1]):
        out = compose(e, out, n)
    return out


def lint_class(ext: Extension) -> list:
    """Problems with the declared implementation class of an extension."""
    if ext.impl_class not in CLASS_CHECKLIST:
        return [f"unknown implementation class {ext.impl_class!r}"]
    allowed = CLASS_CHECKLIST[ext.impl_class]
    problems = []
    for part in sorted(ext.manipulates):
        col = _PART_COLUMN.get(part)
        if col is None:
            problems.append(f"unknown part {part!r}")
        elif col not in allowed:
            problems.append(f"{ext.name} manipulates {col} which {ext.impl_class} does not allow")
    if "downward_closed" in allowed and ext.safety is None:
        problems.append(f"{ext.impl_class} requires a declared downward-closed safety property")
    return problems


# ---------------------------------------------------------------------------
# compatibility


@dataclass
class CompatibilityReport:
    compatible: bool
    extension: Extension
    witness: Optional[str] = None
    runs: int = 0
    reasons: list = field(default_factory=list)


def compatible(extensions, n: int = 2, horizon: int = 2, budget: int = 10_000) -> CompatibilityReport:
    """Search for an agent-context of the composition with an admissible run to horizon."""
    composite = compose_all(extensions, n)
    reasons = []
    init = (default_initial_state(n),)
    if not composite.initial_ok(init):
        return CompatibilityReport(False, composite, reasons=["no common initial-state family"])
    candidates = list(composite.witnesses) + list(STANDARD_WITNESSES)
    for w in candidates:
        env, joint = w.build(n)
        ctx = composite.context(env, joint, init, n)
        system = enumerate_runs(ctx, horizon, EXHAUSTIVE, budget)
        probe = reachable_local_histories(system)
        failed = composite.failed_pairs(env, joint, probe, horizon)
        if failed:
            reasons.append(f"{w.name}: violates {', '.join(failed)}")
            continue
        good = [r for r, v in zip(system.runs, system.verdicts) if v != VIOLATED]
        if not good:
            reasons.append(f"{w.name}: no admissible run to horizon {horizon}")
            continue
        return CompatibilityReport(True, composite, w.name, len(good), reasons)
    return CompatibilityReport(False, composite, reasons=reasons)


# ---------------------------------------------------------------------------
# parsing


def _split_top(s: str) -> list:
    parts, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            parts.append(cur.strip())
            cur = ""
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        cur += ch
    if cur.strip():
        parts.append(cur.strip())
    return parts


def _parse_channels(arg: str, n: int) -> frozenset:
    if arg.strip() == "all":
        return all_channels(n)
    data = yaml.safe_load(arg)
    try:
        chans = frozenset((int(i), int(j)) for i, j in data)
    except (TypeError, ValueError):
        raise ValueError(f"channels must be 'all' or a list of [i, j] pairs, got {arg!r}")
    for i, j in chans:
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValueError(f"channel {i}>{j} names an unknown agent")
    return chans


def _bound(v):
    if isinstance(v, str) and v.lower() in ("omega", "ω", "inf"):
        return OMEGA
    v = int(v)
    if v < 0:
        raise ValueError("bounds must be non-negative")
    return v


def _parse_bounds(arg: str, n: int) -> UpperBounds:
    data = yaml.safe_load(arg)
    if not isinstance(data, dict):
        return UpperBounds(_bound(data))
    default = _bound(data.pop("default", "omega"))
    chans = []
    for key, v in data.items():
        i, j = (int(x) for x in str(key).split(">"))
        chans.append(((i, j), _bound(v)))
    return UpperBounds(default, tuple(sorted(chans)))


def _parse_groups(arg: str, n: int) -> dict:
    if arg.strip() in ("broadcast", "BCh"):
        return broadcast_problem(n)
    data = yaml.safe_load(arg)
    if not isinstance(data, dict):
        raise ValueError("multicast groups must be a mapping agent -> list of groups")
    out = {i: frozenset() for i in range(1, n + 1)}
    for k, groups in data.items():
        gs = frozenset(frozenset(int(x) for x in g) for g in groups)
        if any(not g for g in gs):
            raise ValueError("multicast groups must be non-empty")
        out[int(k)] = gs
    return out


def parse_extension(text: str, n: int, messages=("m",)) -> Extension:
    """Build an extension from ``B``, ``SC(all)``, ``compose(B,S,LSS)`` and friends."""
    text = text.strip()
    simple = {
        "B": byzantine_extension,
        "S": synchronous_extension,
        "neutral": neutral_extension,
        "BC": lambda: broadcast_extension(n),
        "LSS": lambda: lockstep_extension(n, messages),
    }
    if text in simple:
        return simple[text]()
    if "(" not in text or not text.endswith(")"):
        raise ValueError(f"unknown extension {text!r}")
    head, arg = text.split("(", 1)
    arg = arg[:-1]
    head = head.strip()
    if head == "compose":
        parts = [parse_extension(p, n, messages) for p in _split_top(arg)]
        if len(parts) < 2:
            raise ValueError("compose needs at least two extensions")
        return compose_all(parts, n)
    if head == "RC":
        return reliable_extension(_parse_channels(arg, n), n)
    if head == "SC":
        return synchronous_comm_extension(_parse_channels(arg, n), n, messages)
    if head == "TC":
        return time_bounded_extension(_parse_bounds(arg, n), n, label=arg.strip(), messages=messages)
    if head == "MC":
        return multicast_extension(_parse_groups(arg, n), label=arg.strip())
    raise ValueError(f"unknown extension {head!r}")


def builtin(name: str, n: int = 2, **params) -> Extension:
    """Built-in extensions by name; ``channels``/``bounds``/``groups`` as parameters."""
    if name == "RC":
        return reliable_extension(params.get("channels", all_channels(n)), n)
    if name == "SC":
        return synchronous_comm_extension(params.get("channels", all_channels(n)), n)
    if name == "TC":
        return time_bounded_extension(params["bounds"], n)
    if name == "MC":
        return multicast_extension(params["groups"])
    return parse_extension(name, n)


def templates_agree(a: Extension, b: Extension, samples) -> bool:
    return filters_agree(a.template.event_filter, b.template.event_filter, samples) and filters_agree(
        a.template.action_filter, b.template.action_filter, samples
    )
