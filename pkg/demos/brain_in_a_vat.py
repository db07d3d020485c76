"""Why agent 1 can never be sure of anything it saw.

Takes one enumerated run, picks the point after two rounds, and builds the
counterfactual run in which every one of agent 1's perceptions was faked
while agent 2 slept. Agent 1's history is identical in both, so anything
false in the vat run is something agent 1 does not know.
"""

from byzext.cli.dispatch import build_system
from byzext.cli.scenario import load_scenario
from byzext.core_model import TICK
from byzext.epistemics import Claim, check_not_knows
from byzext.epistemics.checks import OCCURRED, OTHER_CORRECT, SELF_CORRECT

sc = load_scenario("sync-brainvat")
ctx, system = build_system(sc)
run = system.runs[7]

print(f"{len(system.runs)} runs of {sc.extension}, horizon {system.horizon}")
print("source run, agent 1 at t=2:", run.states[2].local(1))

for claim, t in [(Claim(OCCURRED, hap=TICK), 2), (Claim(SELF_CORRECT), 2), (Claim(OTHER_CORRECT, other=2), 0)]:
    rep = check_not_knows(ctx, run, t, claim, brain=1, system=system)
    w = rep.witness
    print(f"\n{claim} at t={t}: not known = {rep.confirmed}")
    print(f"  witness via {w.reduction}, compared at t={w.t}")
    print("  agent 1 in the witness:", w.run.states[w.t].local(1))
    print("  agent 2 in the witness:", w.run.states[w.t].local(2))
    failed = [r.name for r in w.report.results if not r.passed] if w.report else []
    print("  construction properties failing:", failed or "none")
