"""Shared generators: t-coherent event sets, labelled action tuples and prior states."""

from __future__ import annotations

import random

from hypothesis import strategies as st

from byzext.core_model import (
    TICK,
    ByzAction,
    ByzEvent,
    CorrectEvent,
    Internal,
    Recv,
    Send,
    default_initial_state,
    fail,
    go,
    hibernate,
    is_t_coherent,
    make_gmi,
    sleep,
    to_global,
    update_global,
)

MESSAGES = ("m", "w")


def local_actions(n):
    acts = [TICK, Internal("x")]
    acts += [Send(j, m, 0) for j in range(1, n + 1) for m in MESSAGES]
    return acts


def candidate_events(n, t):
    """Every event the samplers may draw at time t (not necessarily jointly coherent)."""
    out = []
    for i in range(1, n + 1):
        out += [go(i), sleep(i), hibernate(i), fail(i)]
        for j in range(1, n + 1):
            for m in MESSAGES:
                for s in range(max(0, t - 1), t + 1):
                    e = CorrectEvent(i, Recv(j, m), make_gmi(j, i, m, 0, s))
                    out += [e, ByzEvent(i, e)]
        out.append(ByzAction(i, to_global(i, t, Send(1 + i % n, "m", 0)), None))
        out.append(ByzAction(i, None, to_global(i, t, TICK)))
    return out


def coherent_subset(rng: random.Random, n: int, t: int, density=0.25):
    while True:
        xs = frozenset(o for o in candidate_events(n, t) if rng.random() < density)
        if is_t_coherent(xs, t):
            return xs


def action_tuple(rng: random.Random, n: int, t: int, density=0.4):
    return tuple(
        frozenset(to_global(i, t, a) for a in local_actions(n) if rng.random() < density)
        for i in range(1, n + 1)
    )


def random_state(rng: random.Random, n: int, t: int):
    state = default_initial_state(n)
    for s in range(t):
        state = update_global(state, coherent_subset(rng, n, s), action_tuple(rng, n, s))
    return state


def filter_sample(rng: random.Random, n=None, t=None):
    """(state, x_eps, x_actions) with x_eps t-coherent for the state's time."""
    n = n or rng.choice((2, 3))
    t = rng.randrange(4) if t is None else t
    state = random_state(rng, n, t)
    return state, coherent_subset(rng, n, t), action_tuple(rng, n, t)


def filter_samples(count: int, seed: int = 0):
    rng = random.Random(seed)
    return [filter_sample(rng) for _ in range(count)]


@st.composite
def filter_inputs(draw):
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    return filter_sample(random.Random(seed))
