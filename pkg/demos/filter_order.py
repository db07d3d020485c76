"""The order in which filters are composed matters.

Agent 1 sends to agent 2 in a round where agent 2 gets no system event.
Applying synchrony first strips agent 1's go, so its send never happens and
causality then removes the delivery. Applying causality first keeps the
delivery, and synchrony then strips the go: a message arrives that was
never sent.
"""

from byzext.core_model import TICK, Send, default_initial_state, go, grecv
from byzext.filters import causal_event, compose_event, sync_event
from byzext.runner import label_actions

state = default_initial_state(2)
events = frozenset({go(1), grecv(2, 1, "m")})
actions = label_actions(0, [{TICK, Send(2, "m")}, set()])

sync_first = compose_event(causal_event, sync_event)
causal_first = compose_event(sync_event, causal_event)
print("attempted:       ", sorted(map(str, events)))
print("sync then causal:", sorted(map(str, sync_first(state, events, actions))))
print("causal then sync:", sorted(map(str, causal_first(state, events, actions))))
