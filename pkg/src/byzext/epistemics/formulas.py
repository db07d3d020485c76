"""Epistemic formulas over runs, and a parser for their surface syntax.

Surface syntax::

    K 1 (occurred_ok(tick))      B 2 (faulty(1))      H 1 (nsr(2))
    ! correct(2) & nsr(1) -> K 1 (true)

Atoms: ``correct(i)``, ``correct(i, t)``, ``faulty(i)``, ``nsr(l)``,
``occurred_ok(o)``, ``occurred_ok(i, o)``, ``occurred_ok(i, t, o)``,
``occurred(i, o)``, ``fake(i, t, o)``, ``true``, ``false`` and bare names
for user atoms. Local haps ``o`` are ``tick``, ``send(j,m)``, ``send(j,m,k)``,
``recv(j,m)`` and ``internal(x)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..core_model import TICK, Internal, Recv, Send


@dataclass(frozen=True)
class Prop:
    name: str


@dataclass(frozen=True)
class Correct:
    agent: int
    t: Optional[int] = None


@dataclass(frozen=True)
class FakeAt:
    agent: int
    t: int
    hap: object


@dataclass(frozen=True)
class OccurredOk:
    hap: object
    agent: Optional[int] = None
    t: Optional[int] = None


@dataclass(frozen=True)
class Occurred:
    agent: int
    hap: object


@dataclass(frozen=True)
class Nsr:
    count: int


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    sub: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Knows:
    agent: int
    sub: object


TRUE = Const(True)
FALSE = Const(False)


def Or(a, b):
    return Not(And(Not(a), Not(b)))


def Implies(a, b):
    return Not(And(a, Not(b)))


def faulty(i):
    return Not(Correct(i))


def believes(i, f):
    return Knows(i, Implies(Correct(i), f))


def hopes(i, f):
    return Implies(Correct(i), believes(i, f))


def show(f) -> str:
    """Render a formula back into surface syntax (derived operators stay expanded)."""
    if isinstance(f, Prop):
        return f.name
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Correct):
        return f"correct({f.agent})" if f.t is None else f"correct({f.agent},{f.t})"
    if isinstance(f, FakeAt):
        return f"fake({f.agent},{f.t},{f.hap})"
    if isinstance(f, OccurredOk):
        args = [str(a) for a in (f.agent, f.t) if a is not None] + [str(f.hap)]
        return f"occurred_ok({','.join(args)})"
    if isinstance(f, Occurred):
        return f"occurred({f.agent},{f.hap})"
    if isinstance(f, Nsr):
        return f"nsr({f.count})"
    if isinstance(f, Not):
        if isinstance(f.sub, Correct) and f.sub.t is None:
            return f"faulty({f.sub.agent})"
        return f"!{_wrap(f.sub)}"
    if isinstance(f, And):
        return f"{_wrap(f.left)} & {_wrap(f.right)}"
    if isinstance(f, Knows):
        return f"K {f.agent} ({show(f.sub)})"
    raise TypeError(f"not a formula: {f!r}")


def _wrap(f):
    s = show(f)
    return f"({s})" if isinstance(f, And) else s


def atoms_haps(f):
    """Every local hap mentioned by the formula's atoms."""
    if isinstance(f, (FakeAt, OccurredOk, Occurred)):
        yield f.hap
    elif isinstance(f, Not):
        yield from atoms_haps(f.sub)
    elif isinstance(f, And):
        yield from atoms_haps(f.left)
        yield from atoms_haps(f.right)
    elif isinstance(f, Knows):
        yield from atoms_haps(f.sub)


def agents_of(f):
    if isinstance(f, (Correct, FakeAt, Occurred, Knows)):
        yield f.agent
    if isinstance(f, OccurredOk) and f.agent is not None:
        yield f.agent
    for attr in ("sub", "left", "right"):
        if hasattr(f, attr):
            yield from agents_of(getattr(f, attr))


# ---------------------------------------------------------------------------
# parser


class FormulaSyntaxError(ValueError):
    pass


_TOKEN = re.compile(r"\s*(->|[()!&|,]|\d+|[A-Za-z_][A-Za-z0-9_]*)")


def _tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.pos = 0
        self.text = text

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None:
            raise FormulaSyntaxError(f"unexpected end of formula {self.text!r}")
        if expected is not None and tok != expected:
            raise FormulaSyntaxError(f"expected {expected!r} but found {tok!r} in {self.text!r}")
        self.pos += 1
        return tok

    def integer(self):
        tok = self.take()
        if not tok.isdigit():
            raise FormulaSyntaxError(f"expected a number, found {tok!r}")
        return int(tok)

    def name(self):
        tok = self.take()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*|\d+", tok):
            raise FormulaSyntaxError(f"expected a name, found {tok!r}")
        return tok

    def formula(self):
        left = self.disjunction()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.formula())
        return left

    def disjunction(self):
        f = self.conjunction()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self):
        f = self.unary()
        while self.peek() == "&":
            self.take()
            f = And(f, self.unary())
        return f

    def unary(self):
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "(":
            self.take()
            f = self.formula()
            self.take(")")
            return f
        if tok in ("K", "B", "H"):
            self.take()
            i = self.integer()
            sub = self.unary()
            return {"K": Knows, "B": believes, "H": hopes}[tok](i, sub)
        return self.atom()

    def hap(self):
        head = self.take()
        if head == "tick":
            return TICK
        self.take("(")
        if head == "send":
            j = self.integer()
            self.take(",")
            m = self.name()
            k = 0
            if self.peek() == ",":
                self.take()
                k = self.integer()
            out = Send(j, m, k)
        elif head == "recv":
            j = self.integer()
            self.take(",")
            out = Recv(j, self.name())
        elif head == "internal":
            out = Internal(self.name())
        else:
            raise FormulaSyntaxError(f"unknown local hap {head!r}")
        self.take(")")
        return out

    def args_then_hap(self):
        """Leading integer arguments followed by a hap."""
        nums = []
        while self.peek() is not None and self.peek().isdigit():
            nums.append(self.integer())
            self.take(",")
        return nums, self.hap()

    def atom(self):
        head = self.take()
        if head in ("true", "false"):
            return Const(head == "true")
        if self.peek() != "(":
            return Prop(head)
        self.take("(")
        if head == "correct":
            i = self.integer()
            t = None
            if self.peek() == ",":
                self.take()
                t = self.integer()
            f = Correct(i, t)
        elif head == "faulty":
            f = faulty(self.integer())
        elif head == "nsr":
            f = Nsr(self.integer())
        elif head == "occurred_ok":
            nums, o = self.args_then_hap()
            if len(nums) > 2:
                raise FormulaSyntaxError("occurred_ok takes at most agent and time before the hap")
            f = OccurredOk(o, *nums)
        elif head == "occurred":
            nums, o = self.args_then_hap()
            if len(nums) != 1:
                raise FormulaSyntaxError("occurred takes an agent and a hap")
            f = Occurred(nums[0], o)
        elif head == "fake":
            nums, o = self.args_then_hap()
            if len(nums) != 2:
                raise FormulaSyntaxError("fake takes an agent, a time and a hap")
            f = FakeAt(nums[0], nums[1], o)
        else:
            raise FormulaSyntaxError(f"unknown atom {head!r}")
        self.take(")")
        return f


def parse_formula(text: str):
    p = _Parser(text)
    f = p.formula()
    if p.peek() is not None:
        raise FormulaSyntaxError(f"trailing input {p.toks[p.pos:]} in {text!r}")
    return f
