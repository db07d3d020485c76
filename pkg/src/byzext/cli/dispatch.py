"""Named scenario checks and their evaluation into report entries."""

from __future__ import annotations

from collections import Counter

from ..core_model import hap_record, sorted_haps
from ..epistemics import (
    Claim,
    InterpretedSystem,
    PreconditionError,
    brainvat_sweep,
    check_hope_nsr,
    check_lss_fault_detection,
    check_not_knows,
    check_preconditions,
    parse_formula,
    show,
)
from ..epistemics.checks import CLAIM_KINDS, OCCURRED, OTHER_CORRECT, OTHER_FAULTY, lockstep_isolation
from ..extensions import (
    check_downward_closed,
    check_safety_attributes,
    full_safety,
    once_empty_stays_empty,
    parse_extension,
    safety_samples,
)
from ..filters import causal_event, compose_event, sync_event
from ..runner import (
    HOLDS,
    PENDING,
    VIOLATED,
    check_non_excluding,
    enumerate_runs,
    label_actions,
    reachable_local_histories,
    scan_acts_only_when_synced,
    scan_causal_support,
    scan_go_action_law,
    scan_lss_delivery,
)
from .report import FAIL, PASS, CheckResult
from .report import PENDING as PENDING_VERDICT
from .scenario import Scenario, parse_env_token, parse_local_action


def build_system(sc: Scenario):
    ctx = sc.build_context()
    return ctx, enumerate_runs(ctx, sc.horizon, sc.adversary, sc.budget)


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


def _result(sc, system, spec, kind, tag, ok, summary, details, verdict=None):
    return CheckResult(
        name=spec.get("name", kind),
        kind=kind,
        tag=tag,
        verdict=verdict or _verdict(ok),
        horizon=system.horizon if system is not None else sc.horizon,
        scope=system.mode if system is not None else "static",
        summary=summary,
        details=details,
    )


def parse_hap(text: str):
    return parse_formula(f"occurred_ok({text})").hap


def make_claims(sc: Scenario, brain: int, kinds=None, hap=None, other=None) -> list:
    kinds = list(CLAIM_KINDS) if kinds in (None, "all") else list(kinds)
    others = [other] if other is not None else [j for j in range(1, sc.n + 1) if j != brain]
    out = []
    for k in kinds:
        if k == OCCURRED:
            haps = [parse_hap(hap)] if hap is not None else sc.alphabet.local_haps()
            out += [Claim(OCCURRED, hap=o) for o in haps]
        elif k in (OTHER_FAULTY, OTHER_CORRECT):
            out += [Claim(k, other=j) for j in others]
        else:
            out.append(Claim(k))
    return out


def run_brainvat(sc, ctx, system, spec):
    brain = spec.get("brain", 1)
    claims = make_claims(sc, brain, spec.get("claims"), spec.get("hap"), spec.get("other"))
    times = spec.get("times")
    if times is not None and any(not 0 <= t <= system.horizon for t in times):
        raise ValueError(f"times must lie in 0..{system.horizon}")
    tag = "brain-in-a-vat/not-knows"
    try:
        caps = check_preconditions(ctx, brain, claims, system.horizon, sc.alphabet)
    except PreconditionError as exc:
        return _result(sc, system, spec, "brainvat", tag, False, f"precondition unmet: {exc}", {})
    runs = system.admissible_runs()
    if "run" in spec:
        k = spec["run"]
        if not 0 <= k < len(runs):
            raise ValueError(f"run index {k} outside 0..{len(runs) - 1}")
        sub = type(system)(ctx, system.horizon, [runs[k]], [HOLDS], system.mode)
    else:
        sub = system
    rep = brainvat_sweep(sub, brain, claims, times)
    details = {
        "capabilities": {str(i): sorted(c) for i, c in caps.items()},
        "claims": [str(c) for c in claims],
        **rep.to_record(),
    }
    example_t = (times or [min(2, system.horizon)])[-1]
    example = check_not_knows(ctx, sub.admissible_runs()[0], example_t, claims[0], brain, sub)
    details["example"] = example.to_record()
    details["example"]["witness_run"] = example.witness.run.to_record()
    summary = f"{rep.confirmed}/{rep.checked} points confirm !K via {rep.witnesses} witness runs"
    return _result(sc, system, spec, "brainvat", tag, rep.passed and example.confirmed, summary, details)


def run_lockstep_brainvat(sc, ctx, system, spec):
    rep = lockstep_isolation(system, spec.get("brain", 1), spec.get("times"))
    summary = (f"isolating adjustment clean on {rep.sources - len(rep.primed_failures)}/{rep.sources} prefixes; "
               f"plain fake flagged on {rep.unprimed_flagged}/{rep.risky_sources} prefixes with sends")
    return _result(sc, system, spec, "lockstep-brainvat", "brain-in-a-vat/lockstep-isolation", rep.passed,
                   summary, rep.to_record())


def run_formula(sc, ctx, system, spec):
    f = parse_formula(spec["formula"])
    model = InterpretedSystem(system.admissible_runs(), alphabet=sc.alphabet.local_haps())
    sat = model.sat(f)
    expect = spec.get("expect", "valid")
    if "at" in spec:
        pid = model.point(spec["at"]["run"], spec["at"]["t"])
        value = pid in sat
        ok = value == (expect in ("valid", "true", True))
        summary = f"{show(f)} is {str(value).lower()} at run {spec['at']['run']}, t={spec['at']['t']}"
    else:
        total = len(model)
        ok = {"valid": len(sat) == total, "satisfiable": bool(sat), "unsatisfiable": not sat}[expect]
        summary = f"{show(f)} holds at {len(sat)}/{total} points (expected {expect})"
    return _result(sc, system, spec, "formula", "epistemic-formula", ok, summary,
                   {"formula": show(f), "points": len(model), "satisfied": len(sat)})


def run_hope_nsr(sc, ctx, system, spec):
    model = InterpretedSystem(system.admissible_runs())
    rep = check_hope_nsr(model, spec.get("agents"))
    summary = f"{rep.checked} (point, agent, level) cases, {len(rep.missing_hope) + len(rep.wrong_level)} counterexamples"
    return _result(sc, system, spec, "hope-nsr", "hope/synced-round-count", rep.passed, summary, rep.to_record())


def run_fault_detection(sc, ctx, system, spec):
    rep = check_lss_fault_detection(system, spec.get("observer", 1), spec.get("suspect", 2), spec.get("t", 1))
    summary = (f"hope of fault true at {sum(c.hopes_faulty for c in rep.silenced)}/{len(rep.silenced)} silenced points, "
               f"false at {sum(not c.hopes_faulty for c in rep.siblings)}/{len(rep.siblings)} fault-free points")
    return _result(sc, system, spec, "fault-detection", "lockstep/fault-detection", rep.passed, summary,
                   rep.to_record())


SCANS = {
    "causal-support": scan_causal_support,
    "go-action": scan_go_action_law,
    "synced-acts": scan_acts_only_when_synced,
    "lss-delivery": scan_lss_delivery,
}


def run_invariants(sc, ctx, system, spec):
    names = spec.get("scans", list(SCANS))
    bad = {}
    for name in names:
        if name not in SCANS:
            raise ValueError(f"unknown scan {name!r}; known: {sorted(SCANS)}")
        for k, run in enumerate(system.runs):
            hits = SCANS[name](run)
            if hits:
                bad.setdefault(name, []).append({"run": k, "round": hits[0][0], "what": hits[0][1]})
    summary = f"{len(system.runs)} runs x {len(names)} scans, {sum(len(v) for v in bad.values())} violating runs"
    return _result(sc, system, spec, "invariants", "run-invariants", not bad, summary,
                   {"scans": names, "violations": {k: v[:10] for k, v in bad.items()}})


def run_admissibility(sc, ctx, system, spec):
    counts = Counter(system.verdicts)
    non_excluding = check_non_excluding(ctx, system.horizon, sc.budget)
    details = {"holds": counts[HOLDS], "pending": counts[PENDING], "violated": counts[VIOLATED],
               "non_excluding": non_excluding, "condition": ctx.admissibility.name}
    summary = (f"{counts[HOLDS]} holds, {counts[PENDING]} pending, {counts[VIOLATED]} violated; "
               f"non-excluding={str(non_excluding).lower()}")
    verdict = None
    if non_excluding and counts[PENDING]:
        verdict = PENDING_VERDICT
    return _result(sc, system, spec, "admissibility", "admissibility/non-excluding", non_excluding, summary,
                   details, verdict)


def run_safety(sc, ctx, system, spec):
    text = spec.get("property", sc.extension)
    ext = parse_extension(text, sc.n, sc.messages)
    safety = ext.safety or full_safety(sc.n, sc.messages)
    depth = spec.get("depth", 3)
    attrs = check_safety_attributes(safety, depth, sc.n, list(ctx.initial_states))
    dc = check_downward_closed(safety, safety_samples(safety, sc.n, min(depth, 2), list(ctx.initial_states)))
    stays = all(once_empty_stays_empty(safety, run.states) for run in system.runs)
    want_dc = spec.get("downward_closed", True)
    ok = attrs and stays and dc == want_dc
    summary = (f"{safety.name}: attributes={str(attrs).lower()} to depth {depth}, "
               f"downward-closed={str(dc).lower()}, once-empty-stays-empty={str(stays).lower()}")
    return _result(sc, system, spec, "safety", "safety/attributes", ok, summary,
                   {"property": safety.name, "attributes": attrs, "downward_closed": dc, "stays_empty": stays})


def run_filter_order(sc, ctx, system, spec):
    state = ctx.initial_states[spec.get("state", 0)]
    t = state.time
    x_eps = frozenset(h for tok in spec["events"] for h in parse_env_token(tok, t, sc.alphabet))
    local = []
    acts = {str(k): v for k, v in spec.get("actions", {}).items()}
    for i in range(1, sc.n + 1):
        local.append([a for tok in acts.get(str(i), []) for a in parse_local_action(tok, sc.n, sc.messages)])
    x_acts = label_actions(t, local)
    sync_first = compose_event(causal_event, sync_event)(state, x_eps, x_acts)
    causal_first = compose_event(sync_event, causal_event)(state, x_eps, x_acts)

    def rec(xs):
        return [hap_record(o) for o in sorted_haps(xs)]

    details = {"input": rec(x_eps), "sync_then_causal": rec(sync_first), "causal_then_sync": rec(causal_first)}
    summary = (f"sync then causal keeps {len(sync_first)} haps, causal then sync keeps {len(causal_first)}; "
               f"order-sensitive={str(sync_first != causal_first).lower()}")
    return _result(sc, system, spec, "filter-order", "filters/composition-order", sync_first != causal_first,
                   summary, details)


def run_pairs(sc, ctx, system, spec):
    ext = sc.build_extension()
    probe = reachable_local_histories(system)
    failed = ext.failed_pairs(ctx.env, ctx.joint, probe, system.horizon)
    summary = "all pair constraints hold" if not failed else f"violated: {', '.join(failed)}"
    return _result(sc, system, spec, "pairs", "extension/pair-constraints", not failed, summary,
                   {"extension": ext.name, "failed": failed, "probe": len(probe)})


CHECKS = {
    "brainvat": run_brainvat,
    "lockstep-brainvat": run_lockstep_brainvat,
    "formula": run_formula,
    "hope-nsr": run_hope_nsr,
    "fault-detection": run_fault_detection,
    "invariants": run_invariants,
    "admissibility": run_admissibility,
    "safety": run_safety,
    "filter-order": run_filter_order,
    "pairs": run_pairs,
}


def run_check(sc, ctx, system, spec) -> CheckResult:
    return CHECKS[spec["kind"]](sc, ctx, system, spec)
