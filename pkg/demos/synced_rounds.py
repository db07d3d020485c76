"""Agents cannot see system events, yet each correct agent hopes the exact
number of synced rounds.

Enumerates every run of two silent agents for three rounds where each round
each agent gets go, sleep, hibernate or nothing, and prints a few points
with the count and what agent 1 hopes about it. A faulty agent hopes
anything, since hope is conditional on its own correctness.
"""

from byzext.cli.dispatch import build_system
from byzext.cli.scenario import load_scenario
from byzext.core_model import synced_rounds
from byzext.epistemics import InterpretedSystem, check_hope_nsr
from byzext.epistemics.formulas import Correct, Nsr, hopes

sc = load_scenario("sync-nsr", horizon=3)
_, system = build_system(sc)
model = InterpretedSystem(system.admissible_runs())
print(f"{len(system.runs)} runs, {len(model)} distinct points")

for pid in (5, 50, 500):
    state = model.points[pid]
    hoped = [k for k in range(state.time + 1) if model.holds_at(pid, hopes(1, Nsr(k)))]
    ok = model.holds_at(pid, Correct(1))
    print(f"  point {pid}: t={state.time}, synced rounds={synced_rounds(state)}, agent 1 correct={ok}, "
          f"hopes nsr in {hoped}, history {state.local(1)}")

rep = check_hope_nsr(model)
print("counterexamples:", len(rep.missing_hope) + len(rep.wrong_level), "of", rep.checked, "cases")
