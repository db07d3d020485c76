"""Scenario files: loading, validation with line-anchored diagnostics, context building."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import yaml

from ..core_model import (
    TICK,
    ByzAction,
    ByzEvent,
    CorrectEvent,
    Internal,
    Recv,
    Send,
    fail,
    go,
    hibernate,
    initial_state,
    make_gmi,
    sleep,
    to_global,
)
from ..extensions import parse_extension
from ..protocols import (
    Alphabet,
    ClosedEnvProtocol,
    ConstantProtocol,
    Rule,
    RuleProtocol,
    TableEnvProtocol,
    broadcast_every_round,
)
from ..runner import DEFAULT_BUDGET, Adversary, AgentContext

BUNDLED = ("sync-brainvat", "sync-nsr", "lss-nsr", "lss-brainvat", "lss-fault-detect", "compose-order-demo")


class ScenarioError(ValueError):
    """A scenario file that cannot be used; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = f"{source or '<scenario>'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)


_TOKEN_LIST = {"type": "array", "items": {"type": "string"}}
_SET_LIST = {"type": "array", "items": _TOKEN_LIST}
_AGENT_SET = {
    "oneOf": [
        {"type": "array", "items": {"type": "integer", "minimum": 1}},
        {"enum": ["all", "others", "none"]},
    ]
}

SCHEMA = {
    "type": "object",
    "required": ["schema", "name", "agents", "horizon", "extension", "protocols"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": 1},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "agents": {"type": "integer", "minimum": 2},
        "messages": {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z0-9_]+$"}, "minItems": 1},
        "internals": {"type": "array", "items": {"type": "string"}},
        "copies": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "extension": {"type": "string"},
        "initial": {"type": "array", "items": _TOKEN_LIST, "minItems": 1},
        "budget": {"type": "integer", "minimum": 1},
        "adversary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["exhaustive", "seeded"]},
                "seed": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 1},
            },
        },
        "protocols": {
            "type": "object",
            "required": ["env", "agent"],
            "additionalProperties": False,
            "properties": {
                "env": {
                    "type": "object",
                    "required": ["rules"],
                    "additionalProperties": False,
                    "properties": {
                        "rules": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "oneOf": [
                                    _TOKEN_LIST,
                                    {
                                        "type": "object",
                                        "additionalProperties": False,
                                        "properties": {
                                            "when": {"$ref": "#/$defs/env_when"},
                                            "events": _TOKEN_LIST,
                                            "per_agent": {"type": "array", "items": {"enum": ["go", "sleep", "hib", "none"]}, "minItems": 1},
                                            "with": _TOKEN_LIST,
                                        },
                                    },
                                ]
                            },
                        },
                        "closure": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {"gullible": _AGENT_SET, "delayable": _AGENT_SET, "fallible": _AGENT_SET},
                        },
                    },
                },
                "agent": {
                    "type": "object",
                    "propertyNames": {"pattern": "^([0-9]+|default)$"},
                    "additionalProperties": {"$ref": "#/$defs/agent_protocol"},
                },
            },
        },
        "checks": {"type": "array", "items": {"$ref": "#/$defs/check"}},
    },
    "$defs": {
        "env_when": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t": {"oneOf": [{"type": "integer"}, {"type": "array", "items": {"type": "integer"}}]},
                "min_t": {"type": "integer"},
                "max_t": {"type": "integer"},
            },
        },
        "agent_protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": ["silent-tick", "idle", "broadcast"]},
                "rules": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["options"],
                        "additionalProperties": False,
                        "properties": {
                            "when": {
                                "type": "object",
                                "additionalProperties": False,
                                "properties": {
                                    "length": {"type": "integer", "minimum": 0},
                                    "min_length": {"type": "integer", "minimum": 0},
                                    "ticks": {"type": "integer", "minimum": 0},
                                    "received": {"type": "string"},
                                    "not_received": {"type": "string"},
                                    "last_received": {"type": "string"},
                                },
                            },
                            "options": _SET_LIST,
                        },
                    },
                },
                "default": _SET_LIST,
            },
        },
        "check": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {
                    "enum": [
                        "brainvat", "lockstep-brainvat", "formula", "hope-nsr", "fault-detection",
                        "invariants", "admissibility", "safety", "filter-order", "pairs",
                    ]
                },
                "name": {"type": "string"},
            },
        },
    },
}


# ---------------------------------------------------------------------------
# loading


def _locate(node, path):
    """Best line for a jsonschema error path inside a composed YAML node tree."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def resolve_path(name_or_path: str) -> tuple:
    """(text, source label) for a file path or a bundled scenario name."""
    p = Path(name_or_path)
    if p.exists():
        return p.read_text(encoding="utf-8"), str(p)
    if name_or_path in BUNDLED:
        ref = resources.files("byzext").joinpath("scenarios", f"{name_or_path}.yaml")
        return ref.read_text(encoding="utf-8"), f"{name_or_path}.yaml"
    raise ScenarioError(f"no scenario file or bundled scenario named {name_or_path!r}")


def parse_text(text: str, source: str = "<scenario>") -> dict:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"not valid YAML: {getattr(exc, 'problem', exc)}",
                            mark.line + 1 if mark else None, source) from None
    if not isinstance(data, dict):
        raise ScenarioError("top level must be a mapping", 1, source)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        dotted = ".".join(map(str, path)) or "<root>"
        raise ScenarioError(f"{dotted}: {err.message}", _locate(node, path), source)
    data["_lines"] = node
    return data


# ---------------------------------------------------------------------------
# tokens

_INT = r"\s*(\d+)\s*"
_NAME = r"\s*([A-Za-z0-9_]+)\s*"


def _agents(spec, n, exclude=()):
    if spec == "all" or spec == "*":
        return list(range(1, n + 1))
    if spec == "none":
        return []
    if spec == "others":
        return [i for i in range(1, n + 1) if i not in exclude]
    return [int(i) for i in spec]


def _check_agent(i, n, tok):
    if not 1 <= i <= n:
        raise ValueError(f"{tok!r} names agent {i}, but the scenario has {n} agents")
    return i


def parse_local_action(tok: str, n: int, messages) -> list:
    """Agent-side action token to local actions (``bcast`` expands to n sends)."""
    tok = tok.strip()
    if tok == "tick":
        return [TICK]
    m = re.fullmatch(rf"send\({_INT},{_NAME}(?:,{_INT})?\)", tok)
    if m:
        j = _check_agent(int(m.group(1)), n, tok)
        msg = m.group(2)
        if msg not in messages:
            raise ValueError(f"{tok!r} uses undeclared message {msg!r}")
        return [Send(j, msg, int(m.group(3) or 0))]
    m = re.fullmatch(rf"bcast\({_NAME}\)", tok)
    if m:
        if m.group(1) not in messages:
            raise ValueError(f"{tok!r} uses undeclared message {m.group(1)!r}")
        return [Send(j, m.group(1), 0) for j in range(1, n + 1)]
    m = re.fullmatch(rf"internal\({_NAME}\)", tok)
    if m:
        return [Internal(m.group(1))]
    raise ValueError(f"unknown action token {tok!r}")


def _global_action(i, t, tok, n, messages):
    if tok.strip() == "noop":
        return None
    acts = parse_local_action(tok, n, messages)
    if len(acts) != 1:
        raise ValueError(f"{tok!r} must name a single action")
    return to_global(i, t, acts[0])


def _recv(body, t, n, messages, tok):
    m = re.fullmatch(rf"{_INT}<-{_INT},{_NAME}(?:,{_INT}(?:,{_INT})?)?", body)
    if not m:
        raise ValueError(f"bad receive in {tok!r}; expected recv(j<-i,m[,copy[,send_time]])")
    j = _check_agent(int(m.group(1)), n, tok)
    i = _check_agent(int(m.group(2)), n, tok)
    msg = m.group(3)
    if msg not in messages:
        raise ValueError(f"{tok!r} uses undeclared message {msg!r}")
    copy = int(m.group(4) or 0)
    sent = int(m.group(5)) if m.group(5) is not None else t
    return CorrectEvent(j, Recv(i, msg), make_gmi(i, j, msg, copy, sent))


def parse_env_token(tok: str, t: int, alphabet: Alphabet) -> list:
    """Environment token at time t to global haps."""
    n, messages = alphabet.n, alphabet.messages
    tok = tok.strip()
    m = re.fullmatch(r"(go|sleep|hib|hibernate|fail)\(\s*(\*|\d+)\s*\)", tok)
    if m:
        make = {"go": go, "sleep": sleep, "hib": hibernate, "hibernate": hibernate, "fail": fail}[m.group(1)]
        who = range(1, n + 1) if m.group(2) == "*" else [_check_agent(int(m.group(2)), n, tok)]
        return [make(i) for i in who]
    if tok == "recv(*)":
        return list(alphabet.same_round_recvs(t))
    m = re.fullmatch(r"recv\((.*)\)", tok)
    if m:
        return [_recv(m.group(1), t, n, messages, tok)]
    m = re.fullmatch(rf"fake\({_INT},\s*recv\((.*)\)\s*\)", tok)
    if m:
        i = _check_agent(int(m.group(1)), n, tok)
        e = _recv(m.group(2), t, n, messages, tok)
        if e.agent != i:
            raise ValueError(f"{tok!r}: a faked receive must be addressed to agent {i}")
        return [ByzEvent(i, e)]
    m = re.fullmatch(rf"fake\({_INT},(.*)->(.*)\)", tok)
    if m:
        i = _check_agent(int(m.group(1)), n, tok)
        performed = _global_action(i, t, m.group(2), n, messages)
        recorded = _global_action(i, t, m.group(3), n, messages)
        return [ByzAction(i, performed, recorded)]
    raise ValueError(f"unknown environment token {tok!r}")


# ---------------------------------------------------------------------------
# scenario


@dataclass
class Scenario:
    name: str
    n: int
    horizon: int
    extension: str
    data: dict
    source: str = "<scenario>"
    messages: tuple = ("m",)
    internals: tuple = ()
    copies: int = 1
    adversary: Adversary = field(default_factory=Adversary)
    budget: int = DEFAULT_BUDGET
    checks: list = field(default_factory=list)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.n, self.messages, self.copies, self.internals)

    def error(self, message, path=()):
        raise ScenarioError(message, _locate(self.data["_lines"], list(path)), self.source)

    # -- protocol construction

    def env_protocol(self):
        env = self.data["protocols"]["env"]
        rules = env["rules"]
        alphabet = self.alphabet
        for k, rule in enumerate(rules):  # surface token errors eagerly, with a line
            try:
                self._rule_sets(rule, 0, alphabet)
            except ValueError as exc:
                self.error(str(exc), ("protocols", "env", "rules", k))

        def choices(t):
            out = []
            for rule in rules:
                out += self._rule_sets(rule, t, alphabet)
            return out

        base = TableEnvProtocol(choices, name=f"{self.name}:env")
        closure = env.get("closure")
        if not closure:
            return base
        gullible = _agents(closure.get("gullible", "none"), self.n)
        delayable = _agents(closure.get("delayable", "none"), self.n, exclude=gullible)
        fallible = _agents(closure.get("fallible", "none"), self.n, exclude=gullible)
        return ClosedEnvProtocol(base, gullible, delayable, fallible, name=f"{self.name}:env")

    def _rule_sets(self, rule, t, alphabet):
        if isinstance(rule, list):
            rule = {"events": rule}
        when = rule.get("when", {})
        if "t" in when:
            ts = when["t"] if isinstance(when["t"], list) else [when["t"]]
            if t not in ts:
                return []
        if "min_t" in when and t < when["min_t"]:
            return []
        if "max_t" in when and t > when["max_t"]:
            return []
        extra = [h for tok in rule.get("with", []) for h in parse_env_token(tok, t, alphabet)]
        if "per_agent" in rule:
            kinds = {"go": go, "sleep": sleep, "hib": hibernate, "none": None}
            per = [[kinds[k](i) if kinds[k] else None for k in rule["per_agent"]] for i in range(1, self.n + 1)]
            return [frozenset(h for h in combo if h is not None) | frozenset(extra)
                    for combo in itertools.product(*per)]
        events = [h for tok in rule.get("events", []) for h in parse_env_token(tok, t, alphabet)]
        return [frozenset(events) | frozenset(extra)]

    def _action_sets(self, sets, path):
        out = []
        for k, toks in enumerate(sets):
            try:
                out.append(frozenset(a for tok in toks for a in parse_local_action(tok, self.n, self.messages)))
            except ValueError as exc:
                self.error(str(exc), path + (k,))
        return out

    def _history_key(self, text, path):
        m = re.fullmatch(rf"recv\({_INT},{_NAME}\)", text.strip())
        if not m:
            self.error(f"expected recv(i,m) in a rule condition, found {text!r}", path)
        return int(m.group(1)), m.group(2)

    def agent_protocol(self, i):
        agents = self.data["protocols"]["agent"]
        spec = agents.get(str(i), agents.get(i))
        key = str(i)
        if spec is None:
            spec, key = agents.get("default"), "default"
        if spec is None:
            self.error(f"no protocol for agent {i} and no default", ("protocols", "agent"))
        path = ("protocols", "agent", key)
        builtin = spec.get("builtin")
        if builtin == "silent-tick":
            return ConstantProtocol([{TICK}], name="silent-tick")
        if builtin == "idle":
            return ConstantProtocol([frozenset()], name="idle")
        if builtin == "broadcast":
            return broadcast_every_round(self.n, self.messages)
        rules = []
        for k, r in enumerate(spec.get("rules", [])):
            when = dict(r.get("when", {}))
            for cond in ("received", "not_received", "last_received"):
                if cond in when:
                    when[cond] = self._history_key(when[cond], path + ("rules", k, "when", cond))
            rules.append(Rule(when, tuple(self._action_sets(r["options"], path + ("rules", k, "options")))))
        default = self._action_sets(spec.get("default", [[]]), path + ("default",))
        if not default:
            self.error("the default option list may not be empty", path + ("default",))
        return RuleProtocol(rules, default, name=f"agent{i}")

    def initial_states(self):
        raw = self.data.get("initial")
        if not raw:
            return (initial_state(f"s{i}" for i in range(1, self.n + 1)),)
        out = []
        for k, tokens in enumerate(raw):
            if len(tokens) != self.n:
                self.error(f"initial state lists {len(tokens)} tokens for {self.n} agents", ("initial", k))
            out.append(initial_state(tokens))
        return tuple(out)

    def build_extension(self):
        try:
            return parse_extension(self.extension, self.n, self.messages)
        except ValueError as exc:
            self.error(str(exc), ("extension",))

    def build_context(self) -> AgentContext:
        ext = self.build_extension()
        env = self.env_protocol()
        joint = tuple(self.agent_protocol(i) for i in range(1, self.n + 1))
        ctx = ext.context(env, joint, self.initial_states(), self.n)
        ctx.name = self.name
        return ctx


def load_scenario(name_or_path: str, agents: Optional[int] = None, horizon: Optional[int] = None,
                  seed: Optional[int] = None, exhaustive: bool = False, budget: Optional[int] = None) -> Scenario:
    """Load, validate and apply command-line overrides."""
    text, source = resolve_path(name_or_path)
    return scenario_from_text(text, source, agents, horizon, seed, exhaustive, budget)


def scenario_from_text(text, source="<scenario>", agents=None, horizon=None, seed=None, exhaustive=False,
                       budget=None) -> Scenario:
    data = parse_text(text, source)
    adv = data.get("adversary", {})
    if exhaustive:
        adversary = Adversary()
    elif seed is not None:
        adversary = Adversary(seed, adv.get("samples", 64))
    elif adv.get("mode") == "seeded" or "seed" in adv:
        adversary = Adversary(adv.get("seed", 0), adv.get("samples", 64))
    else:
        adversary = Adversary()
    sc = Scenario(
        name=data["name"],
        n=agents or data["agents"],
        horizon=horizon or data["horizon"],
        extension=data["extension"],
        data=data,
        source=source,
        messages=tuple(data.get("messages", ["m"])),
        internals=tuple(data.get("internals", [])),
        copies=data.get("copies", 1),
        adversary=adversary,
        budget=budget or data.get("budget", DEFAULT_BUDGET),
        checks=list(data.get("checks", [])),
    )
    if sc.n < 2:
        raise ScenarioError("need at least two agents", source=source)
    for key in data["protocols"]["agent"]:
        if str(key) != "default" and int(key) > sc.n:
            sc.error(f"protocol given for agent {key}, but the scenario has {sc.n} agents", ("protocols", "agent"))
    return sc
