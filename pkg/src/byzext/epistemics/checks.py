"""Knowledge checks built from brain-in-a-vat witnesses and finite models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..adjustments import (
    FAKE,
    FAKE_PRIME,
    LOCKSTEP,
    SYNC,
    Adjustment,
    Intervention,
    AdjustmentError,
    BrainReport,
    BrainScenario,
    apply_adjustment,
    delay_adjustment,
    obligations_created,
    verify_brain_properties,
)
from ..core_model import Recv, SystemEvent, faulty_by, synced_rounds
from ..protocols import DELAYABLE, FALLIBLE, GULLIBLE, Alphabet, classify_agent
from ..runner import VIOLATED, AgentContext, Run, RunSystem, check_admissibility
from .formulas import Correct, Knows, Nsr, OccurredOk, faulty, hopes, show
from .model import InterpretedSystem

OCCURRED = "occurred"
SELF_CORRECT = "self-correct"
OTHER_FAULTY = "other-faulty"
OTHER_CORRECT = "other-correct"
CLAIM_KINDS = (OCCURRED, SELF_CORRECT, OTHER_FAULTY, OTHER_CORRECT)


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Claim:
    """What the brain might claim to know: ``kind`` plus its hap or other agent."""

    kind: str
    hap: object = None
    other: Optional[int] = None

    def __post_init__(self):
        if self.kind not in CLAIM_KINDS:
            raise ValueError(f"unknown claim {self.kind!r}; expected one of {CLAIM_KINDS}")
        if self.kind == OCCURRED and self.hap is None:
            raise ValueError("an occurrence claim needs a hap")
        if self.kind in (OTHER_FAULTY, OTHER_CORRECT) and self.other is None:
            raise ValueError(f"{self.kind} needs the other agent")

    def formula(self, brain: int):
        if self.kind == OCCURRED:
            return OccurredOk(self.hap)
        if self.kind == SELF_CORRECT:
            return Correct(brain)
        if self.kind == OTHER_FAULTY:
            return faulty(self.other)
        return Correct(self.other)

    def others(self) -> dict:
        """Interventions for the non-brain agents in the witness construction."""
        if self.kind == OTHER_CORRECT:
            return {self.other: "ffreeze-first"}
        return {}

    def trivial_at_start(self) -> bool:
        """At time 0 nothing has occurred and nobody is faulty: the point refutes itself."""
        return self.kind in (OCCURRED, OTHER_FAULTY)

    def __str__(self):
        if self.kind == OCCURRED:
            return f"{self.kind}({self.hap})"
        if self.other is not None:
            return f"{self.kind}({self.other})"
        return self.kind


def standard_claims(n: int, brain: int, alphabet: Alphabet) -> list:
    out = [Claim(OCCURRED, hap=o) for o in alphabet.local_haps()]
    out.append(Claim(SELF_CORRECT))
    for j in range(1, n + 1):
        if j != brain:
            out += [Claim(OTHER_FAULTY, other=j), Claim(OTHER_CORRECT, other=j)]
    return out


def required_capabilities(ctx: AgentContext, brain: int, claims) -> dict:
    need = {brain: {GULLIBLE}}
    for j in range(1, ctx.n + 1):
        if j != brain:
            need.setdefault(j, set()).add(DELAYABLE)
    for c in claims:
        if c.kind == OTHER_CORRECT:
            need[c.other].add(FALLIBLE)
    return need


def check_preconditions(ctx: AgentContext, brain: int, claims, horizon: int, alphabet: Alphabet,
                        max_fault_set: int = 1) -> dict:
    """Classify every agent and raise if the witness construction is not licensed."""
    caps = {i: classify_agent(ctx.env, i, horizon, alphabet, max_fault_set=max_fault_set)
            for i in range(1, ctx.n + 1)}
    for i, need in required_capabilities(ctx, brain, claims).items():
        missing = need - caps[i]
        if missing:
            raise PreconditionError(f"agent {i} is not {', '.join(sorted(missing))} under {ctx.env.name}")
    return caps


@dataclass
class Witness:
    """A point the brain cannot tell apart from the source point, where the claim fails."""

    run: Run
    t: int
    reduction: str  # "self", "adjustment" or "delay+adjustment"
    report: Optional[BrainReport] = None
    verdict: str = ""

    @property
    def sound(self) -> bool:
        ok = self.report is None or self.report.passed
        return ok and self.verdict != VIOLATED


def build_witness(ctx: AgentContext, run: Run, t: int, brain: int, claim: Claim,
                  variant: str = SYNC, verify: bool = True) -> Witness:
    """Construct the indistinguishable run that refutes K_brain(claim) at (run, t)."""
    n = ctx.n
    if t == 0 and claim.trivial_at_start():
        return Witness(run, 0, "self", None, check_admissibility(run, ctx.admissibility, ctx.bounds))
    if t == 0:
        delayed = apply_adjustment(run, delay_adjustment(n), ctx, limit=1)
        if not delayed:
            raise AdjustmentError("the delayed run has no continuation")
        source, extent, reduction = delayed[0], 0, "delay+adjustment"
    else:
        source, extent, reduction = run, t - 1, "adjustment"
    scenario = BrainScenario(brain, n, extent, tuple(sorted(claim.others().items())), variant)
    built = apply_adjustment(source, scenario.adjustment(), ctx, limit=1)
    if not built:
        raise AdjustmentError("the adjusted run has no continuation")
    r2 = built[0]
    report = verify_brain_properties(source, r2, scenario, ctx) if verify else None
    verdict = check_admissibility(r2, ctx.admissibility, ctx.bounds)
    return Witness(r2, extent + 1, reduction, report, verdict)


@dataclass
class WitnessReport:
    claim: Claim
    brain: int
    t: int
    formula: str
    witness: Witness
    knows: bool
    refutes: bool  # the witness point alone is indistinguishable and falsifies the claim
    model_points: int

    @property
    def confirmed(self) -> bool:
        return not self.knows and self.refutes and self.witness.sound

    def to_record(self):
        w = self.witness
        return {
            "claim": str(self.claim),
            "brain": self.brain,
            "t": self.t,
            "formula": f"!K {self.brain} ({self.formula})",
            "reduction": w.reduction,
            "witness_t": w.t,
            "witness_admissibility": w.verdict,
            "properties": [r.to_record() for r in w.report.results] if w.report else [],
            "knows": self.knows,
            "refutes": self.refutes,
            "model_points": self.model_points,
            "passed": self.confirmed,
        }


def check_not_knows(ctx: AgentContext, run: Run, t: int, claim: Claim, brain: int,
                    system: Optional[RunSystem] = None, variant: str = SYNC) -> WitnessReport:
    """Build the witness for (run, t), add it to a finite model and evaluate ¬K there."""
    w = build_witness(ctx, run, t, brain, claim, variant)
    runs = list(system.admissible_runs()) if system is not None else []
    model = InterpretedSystem(runs)
    src = model.point(model.add_run(run), t)
    wk = model.add_run(w.run)
    wp = model.point(wk, w.t)
    phi = claim.formula(brain)
    knows = model.holds_at(src, Knows(brain, phi))
    refutes = model.indistinguishable(brain, src, wp) and not model.holds_at(wp, phi)
    return WitnessReport(claim, brain, t, show(phi), w, knows, refutes, len(model))


@dataclass
class SweepReport:
    brain: int
    checked: int = 0
    confirmed: int = 0
    witnesses: int = 0
    unsound: list = field(default_factory=list)  # (claim, run index, t, failed property names)
    known: list = field(default_factory=list)  # (claim, run index, t): ¬K did not hold
    per_claim: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.unsound and not self.known

    def to_record(self):
        return {
            "brain": self.brain,
            "checked": self.checked,
            "confirmed": self.confirmed,
            "witnesses": self.witnesses,
            "unsound": [list(map(str, u)) for u in self.unsound[:20]],
            "known": [list(map(str, k)) for k in self.known[:20]],
            "per_claim": self.per_claim,
            "passed": self.passed,
        }


def brainvat_sweep(system: RunSystem, brain: int, claims, times=None, variant: str = SYNC) -> SweepReport:
    """¬K_brain(claim) at every (run, t) of the system, with witnesses shared by prefix."""
    ctx = system.context
    runs = system.admissible_runs()
    times = range(system.horizon + 1) if times is None else times
    model = InterpretedSystem(runs)
    report = SweepReport(brain)
    built = {}
    sources = []  # (claim, run index, t, witness key)
    for claim in claims:
        for k, run in enumerate(runs):
            for t in times:
                if t == 0 and claim.trivial_at_start():
                    key = None
                else:
                    key = (run.states[t], t == 0, tuple(sorted(claim.others().items())))
                    if key not in built:
                        w = build_witness(ctx, run, t, brain, claim, variant)
                        built[key] = (w, model.add_run(w.run))
                sources.append((claim, k, t, key))
    report.witnesses = len(built)
    for claim, k, t, key in sources:
        phi = claim.formula(brain)
        src = model.point(k, t)
        report.checked += 1
        stats = report.per_claim.setdefault(str(claim), {"checked": 0, "confirmed": 0})
        stats["checked"] += 1
        if key is None:
            w, wp = None, src
        else:
            w, wk = built[key]
            wp = model.point(wk, w.t)
        if w is not None and not w.sound:
            failed = [r.name for r in w.report.failures()] if w.report else []
            if w.verdict == VIOLATED:
                failed.append("admissible")
            report.unsound.append((claim, k, t, failed))
            continue
        refutes = model.indistinguishable(brain, src, wp) and not model.holds_at(wp, phi)
        if model.holds_at(src, Knows(brain, phi)) or not refutes:
            report.known.append((claim, k, t))
            continue
        report.confirmed += 1
        stats["confirmed"] += 1
    return report


# ---------------------------------------------------------------------------
# lock-step isolation


def unprimed(adj: Adjustment) -> Adjustment:
    """The same adjustment with FakePrime replaced by plain Fake."""
    return Adjustment(tuple(
        tuple(Intervention(FAKE, b.agent) if b.kind == FAKE_PRIME else b for b in joint)
        for joint in adj.rounds
    ))


@dataclass
class IsolationReport:
    brain: int
    sources: int = 0
    primed_failures: list = field(default_factory=list)  # (run, t, failed properties)
    risky_sources: int = 0  # sources whose unprimed adjustment puts sends on the wire
    unprimed_flagged: int = 0
    unprimed_missed: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            self.sources > 0
            and not self.primed_failures
            and self.risky_sources > 0
            and self.unprimed_flagged == self.risky_sources
        )

    def to_record(self):
        return {
            "brain": self.brain,
            "sources": self.sources,
            "primed_failures": [list(map(str, f)) for f in self.primed_failures[:20]],
            "risky_sources": self.risky_sources,
            "unprimed_flagged": self.unprimed_flagged,
            "unprimed_missed": [list(map(str, f)) for f in self.unprimed_missed[:20]],
            "passed": self.passed,
        }


def lockstep_isolation(system: RunSystem, brain: int, times=None) -> IsolationReport:
    """FakePrime isolates the brain with no delivery obligations; plain Fake does not.

    For every admissible run and every t >= 1 the brain-in-a-vat adjustment of
    extent t-1 is built twice. The primed one must pass every lock-step
    property. The unprimed one must be flagged whenever it performs a send.
    """
    ctx = system.context
    report = IsolationReport(brain)
    times = range(1, system.horizon + 1) if times is None else [t for t in times if t >= 1]
    done = set()
    for k, run in enumerate(system.admissible_runs()):
        for t in times:
            if run.states[t] in done:
                continue
            done.add(run.states[t])
            report.sources += 1
            scenario = BrainScenario(brain, ctx.n, t - 1, (), LOCKSTEP)
            primed = scenario.adjustment()
            r2 = apply_adjustment(run, primed, ctx, limit=1)[0]
            rep = verify_brain_properties(run, r2, scenario, ctx)
            if not rep.passed:
                report.primed_failures.append((k, t, [r.name for r in rep.failures()]))
            plain = unprimed(primed)
            if not obligations_created(plain, run, ctx.n):
                continue
            report.risky_sources += 1
            r3 = apply_adjustment(run, plain, ctx, limit=1)[0]
            rep3 = verify_brain_properties(run, r3, scenario, ctx, adjustment=plain)
            flagged = {r.name for r in rep3.failures()} >= {"no-delivery-obligations"}
            if flagged:
                report.unprimed_flagged += 1
            else:
                report.unprimed_missed.append((k, t))
    return report


# ---------------------------------------------------------------------------
# hope and synchronized rounds


@dataclass
class NsrReport:
    points: int
    agents: tuple
    checked: int = 0
    missing_hope: list = field(default_factory=list)  # (point, agent, level)
    wrong_level: list = field(default_factory=list)  # (point, agent, level) hoped though false

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.missing_hope and not self.wrong_level

    def to_record(self):
        return {
            "points": self.points,
            "checked": self.checked,
            "missing_hope": [list(x) for x in self.missing_hope[:20]],
            "wrong_level": [list(x) for x in self.wrong_level[:20]],
            "passed": self.passed,
        }


def check_hope_nsr(model: InterpretedSystem, agents=None) -> NsrReport:
    """At every point each agent hopes the true synced-round count and no other one."""
    n = model.n
    agents = tuple(agents or range(1, n + 1))
    levels = sorted({synced_rounds(s) for s in model.points})
    report = NsrReport(len(model), agents)
    for k in agents:
        correct = model.sat(Correct(k))
        for level in levels:
            hoped = model.sat(hopes(k, Nsr(level)))
            for pid, s in enumerate(model.points):
                report.checked += 1
                actual = synced_rounds(s)
                if actual == level and pid not in hoped:
                    report.missing_hope.append((pid, k, level))
                elif actual != level and pid in correct and pid in hoped:
                    report.wrong_level.append((pid, k, level))
    return report


# ---------------------------------------------------------------------------
# fault detection under lockstep synchrony


@dataclass
class DetectionCase:
    run: int
    t: int
    silenced: bool
    hopes_faulty: bool
    observer_correct: bool
    own_delivered: bool
    heard_suspect: bool

    def to_record(self):
        return dict(self.__dict__)


@dataclass
class DetectionReport:
    observer: int
    suspect: int
    cases: list = field(default_factory=list)

    @property
    def silenced(self):
        return [c for c in self.cases if c.silenced]

    @property
    def siblings(self):
        return [c for c in self.cases if not c.silenced]

    @property
    def passed(self) -> bool:
        return (
            bool(self.silenced)
            and bool(self.siblings)
            and all(c.hopes_faulty for c in self.silenced)
            and not any(c.hopes_faulty for c in self.siblings)
        )

    def to_record(self):
        return {
            "observer": self.observer,
            "suspect": self.suspect,
            "silenced_points": len(self.silenced),
            "sibling_points": len(self.siblings),
            "cases": [c.to_record() for c in self.cases[:20]],
            "passed": self.passed,
        }


def _silenced_in(layer, j) -> bool:
    return any(isinstance(o, SystemEvent) and o.agent == j and o.kind != "go" for o in layer)


def check_lss_fault_detection(system: RunSystem, observer: int, suspect: int, t: int = 1) -> DetectionReport:
    """H(observer, faulty(suspect)) at (r, t) after the suspect was silenced in round t-1.

    The comparison points are those where round t-1 went by with nobody
    silenced and nobody faulty so far; there the hope must fail.
    """
    model = InterpretedSystem(system.admissible_runs())
    phi = hopes(observer, faulty(suspect))
    sat = model.sat(phi)
    report = DetectionReport(observer, suspect)
    seen = set()
    for k, run in enumerate(model.runs):
        pid = model.point(k, t)
        if pid in seen:
            continue
        seen.add(pid)
        state = model.points[pid]
        last = state.env[0]
        silenced = _silenced_in(last, suspect) and not faulty_by(state.env[1:], suspect)
        fault_free = not any(faulty_by(state.env, j) for j in range(1, state.n + 1))
        if not silenced and not fault_free:
            continue
        layer = state.local(observer).layers[0] if state.local(observer).layers else frozenset()
        report.cases.append(DetectionCase(
            run=k,
            t=t,
            silenced=silenced,
            hopes_faulty=pid in sat,
            observer_correct=not faulty_by(state.env, observer),
            own_delivered=any(isinstance(a, Recv) and a.sender == observer for a in layer),
            heard_suspect=any(isinstance(a, Recv) and a.sender == suspect for a in layer),
        ))
    return report
