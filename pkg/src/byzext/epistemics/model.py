"""A finite interpreted system and formula evaluation over it.

Points are global states. Every atom is a function of the environment's
record of the run so far, so two runs sharing a prefix share the point; the
model therefore stores each distinct global state once.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

from ..core_model import (
    ByzAction,
    ByzEvent,
    CorrectAction,
    CorrectEvent,
    GlobalState,
    faulty_by,
    localize,
    synced_rounds,
)
from .formulas import And, Const, Correct, FakeAt, Knows, Not, Nsr, Occurred, OccurredOk, Prop, atoms_haps


class ModelError(ValueError):
    pass


def _layer(state: GlobalState, m: int):
    """β of round m-1 (the m-th layer, counted from 1)."""
    return state.env[state.time - m]


def correct_haps_of(layer, i) -> frozenset:
    return localize(o for o in layer if o.agent == i and isinstance(o, (CorrectEvent, CorrectAction)))


def faked_haps_of(layer, i) -> frozenset:
    return localize(o for o in layer if o.agent == i and isinstance(o, (ByzEvent, ByzAction)))


def correct_at(state: GlobalState, i: int, t: Optional[int] = None) -> bool:
    if t is None:
        return not faulty_by(state.env, i)
    if t > state.time:
        return False
    return not faulty_by(state.env[state.time - t:], i)


def occurred_ok_at(state: GlobalState, o, i=None, t=None) -> bool:
    agents = range(1, state.n + 1) if i is None else (i,)
    times = range(1, state.time + 1) if t is None else ((t,) if 1 <= t <= state.time else ())
    return any(o in correct_haps_of(_layer(state, m), a) for m in times for a in agents)


def fake_at(state: GlobalState, i: int, t: int, o) -> bool:
    return 1 <= t <= state.time and o in faked_haps_of(_layer(state, t), i)


class InterpretedSystem:
    """Points of a set of runs, with agent-indistinguishability and a valuation.

    ``valuation`` maps user atom names to predicates on global states.
    ``alphabet``, when given, is the set of local haps atoms may mention.
    """

    def __init__(self, runs: Iterable = (), valuation: Optional[dict] = None, alphabet=None):
        self.points: list = []
        self.index: dict = {}
        self.runs: list = []
        self.run_points: list = []
        self.valuation = dict(valuation or {})
        self.alphabet = frozenset(alphabet) if alphabet is not None else None
        self._classes: dict = {}
        self._cache: dict = {}
        for r in runs:
            self.add_run(r)

    @property
    def n(self) -> int:
        return self.points[0].n if self.points else 0

    def __len__(self):
        return len(self.points)

    def _point(self, state: GlobalState) -> int:
        pid = self.index.get(state)
        if pid is None:
            pid = len(self.points)
            self.index[state] = pid
            self.points.append(state)
        return pid

    def add_run(self, run) -> int:
        """Add a run's points; returns the run's index. Clears cached truth sets."""
        self.runs.append(run)
        self.run_points.append([self._point(s) for s in run.states])
        self._classes.clear()
        self._cache.clear()
        return len(self.runs) - 1

    def point(self, run_index: int, t: int) -> int:
        return self.run_points[run_index][t]

    def point_of(self, state: GlobalState) -> int:
        return self.index[state]

    def classes(self, i: int) -> dict:
        if i not in self._classes:
            groups = {}
            for pid, s in enumerate(self.points):
                groups.setdefault(s.local(i), []).append(pid)
            self._classes[i] = groups
        return self._classes[i]

    def indistinguishable(self, i: int, p: int, q: int) -> bool:
        return self.points[p].local(i) == self.points[q].local(i)

    # -- evaluation

    def _check_vocabulary(self, f):
        if self.alphabet is None:
            return
        for o in atoms_haps(f):
            if o not in self.alphabet:
                raise ModelError(f"atom mentions {o}, which is outside the alphabet")

    def sat(self, f) -> frozenset:
        """Ids of the points where ``f`` holds."""
        hit = self._cache.get(f)
        if hit is not None:
            return hit
        out = self._sat(f)
        self._cache[f] = out
        return out

    def _where(self, pred: Callable) -> frozenset:
        return frozenset(p for p, s in enumerate(self.points) if pred(s))

    def _sat(self, f) -> frozenset:
        if isinstance(f, Const):
            return frozenset(range(len(self.points))) if f.value else frozenset()
        if isinstance(f, Prop):
            if f.name not in self.valuation:
                raise ModelError(f"no valuation for atom {f.name!r}")
            return self._where(self.valuation[f.name])
        if isinstance(f, Correct):
            return self._where(lambda s: correct_at(s, f.agent, f.t))
        if isinstance(f, OccurredOk):
            self._check_vocabulary(f)
            return self._where(lambda s: occurred_ok_at(s, f.hap, f.agent, f.t))
        if isinstance(f, FakeAt):
            self._check_vocabulary(f)
            return self._where(lambda s: fake_at(s, f.agent, f.t, f.hap))
        if isinstance(f, Occurred):
            self._check_vocabulary(f)
            return self._where(lambda s: any(
                f.hap in correct_haps_of(layer, f.agent) | faked_haps_of(layer, f.agent) for layer in s.env
            ))
        if isinstance(f, Nsr):
            return self._where(lambda s: synced_rounds(s) == f.count)
        if isinstance(f, Not):
            return frozenset(range(len(self.points))) - self.sat(f.sub)
        if isinstance(f, And):
            return self.sat(f.left) & self.sat(f.right)
        if isinstance(f, Knows):
            inner = self.sat(f.sub)
            out = set()
            for group in self.classes(f.agent).values():
                if all(p in inner for p in group):
                    out.update(group)
            return frozenset(out)
        raise ModelError(f"not a formula: {f!r}")

    def holds_at(self, pid: int, f) -> bool:
        return pid in self.sat(f)

    def holds(self, run_index: int, t: int, f) -> bool:
        return self.point(run_index, t) in self.sat(f)

    def counterexample_to_knowledge(self, i: int, pid: int, f) -> Optional[int]:
        """A point agent i cannot tell from ``pid`` where ``f`` fails, if any."""
        inner = self.sat(f)
        for q in self.classes(i)[self.points[pid].local(i)]:
            if q not in inner:
                return q
        return None
