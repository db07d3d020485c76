import pytest

from byzext.core_model import default_initial_state, update_global
from byzext.extensions import (
    BOTH,
    CLASS_CHECKLIST,
    FORTH_ONLY,
    LETTER_OF,
    MATRIX_ORDER,
    NONE,
    REVERSE_ONLY,
    builtin,
    check_downward_closed,
    check_safety_attributes,
    compatible,
    compose,
    compose_all,
    composability,
    full_safety,
    go_every_round_safety,
    lint_class,
    matrix_rows,
    once_empty_stays_empty,
    parse_extension,
    safety_samples,
    templates_agree,
    time_bounded_safety,
)
from byzext.protocols import UpperBounds
from byzext.runner import all_channels

from helpers import filter_samples

# Frozen composability table: row = left class, column = top class, in MATRIX_ORDER.
# c = both directions, f = forth only, r = reverse only, . = none.
GOLDEN = {
    "Adm": "ccccccccccccccccc",
    "JP": "ccccccccccccccccc",
    "EnvJP": "ccccccccccccccccc",
    "EvFJP": "cc.r.c.r..cccffcc",
    "EvFEnvJP": "cc.r.c.r..cccffcc",
    "JP-AFB": "c....cccc.ccccfcc",
    "EnvJP-AFB": "c....cccc.ccccfcc",
    "EvFJP-AFB": "c....c.r..cccffcc",
    "EvFEnvJP-AFB": "c....c.r..cccffcc",
    "Others": "c.........cccffcc",
    "JP_DC": "ccccccccccccccccc",
    "EnvJP_DC": "ccccccccccccccccc",
    "EvFJP_DC": "cc.r.c.r..cccffcc",
    "EvFEnvJP_DC": "cc.r.c.r..cccffcc",
    "Others_DC": "c.........cccffcc",
    "EvFEnvJP_DCmono": "cc.r.c.r..cccffcc",
    "Others_DCmono": "c.........cccffcc",
}


def test_matrix_matches_golden_table():
    assert list(GOLDEN) == list(MATRIX_ORDER)
    for row, cells in matrix_rows():
        assert "".join(c or "." for c in cells) == GOLDEN[row], row


def test_matrix_lookups():
    assert composability("EvFJP", "EvFJP") == REVERSE_ONLY
    assert composability("EvFJP", "EvFEnvJP_DC") == FORTH_ONLY
    assert composability("Others", "JP") == NONE
    assert composability("Adm", "Others") == BOTH
    assert LETTER_OF[NONE] == ""
    with pytest.raises(ValueError):
        composability("Adm", "Nope")


def test_class_checklist():
    assert len(CLASS_CHECKLIST) == 17
    assert CLASS_CHECKLIST["Adm"] == {"admissibility", "initial_states"}
    assert "standard_action_filters" in CLASS_CHECKLIST["EvFEnvJP-AFB"]
    assert "arbitrary_action_filters" in CLASS_CHECKLIST["Others"]
    assert "monotonic_filters" in CLASS_CHECKLIST["Others_DCmono"]
    for name, cols in CLASS_CHECKLIST.items():
        assert {"admissibility", "initial_states"} <= cols, name


@pytest.mark.parametrize(
    "text, cls",
    [("B", "EvFJP-AFB"), ("S", "EvFJP-AFB"), ("LSS", "EvFEnvJP-AFB"), ("RC(all)", "Adm"),
     ("SC(all)", "EnvJP_DC"), ("BC", "JP-AFB"), ("neutral", "Adm")],
)
def test_builtin_classes_and_lint(text, cls):
    ext = parse_extension(text, 2)
    assert ext.impl_class == cls
    assert lint_class(ext) == []


def test_parse_errors():
    for bad in ("X", "compose(B)", "RC([[1,3]])", "TC({default: -1})", "Q(1)"):
        with pytest.raises(ValueError):
            parse_extension(bad, 2)


def test_parse_parameterised():
    assert parse_extension("RC([[1,2]])", 2).admissibility.channels == {(1, 2)}
    tc = parse_extension("TC({default: 1, 1>2: 0})", 2)
    assert tc.bounds.delta(1, 2) == 0 and tc.bounds.delta(2, 1) == 1
    mc = parse_extension("MC({1: [[1,2]]})", 2)
    assert mc.impl_class == "JP-AFB"
    assert builtin("SC", 2).name == "SC(all)"


def test_compose_applies_inner_filters_first():
    bs = compose(parse_extension("B", 2), parse_extension("S", 2))
    assert bs.template.event_filter.name == "compose(causal,sync)"
    assert bs.impl_class == "EvFJP-AFB"
    lss = parse_extension("LSS", 2)
    samples = filter_samples(150, seed=9)
    assert templates_agree(bs, lss, samples)


def test_compose_unions_restrictions():
    ext = compose_all([parse_extension(t, 2) for t in ("RC(all)", "SC(all)", "BC")], 2)
    assert ext.admissibility.channels == all_channels(2)
    assert ext.bounds.delta(1, 2) == 0
    assert {c.name for c in ext.pairs} >= {"joint:multicast(BCh)"}
    assert ext.impl_class == "EnvJP-AFB"
    assert compose_all([], 2).name == "neutral"


def test_compatibility_search():
    res = compatible([parse_extension("B", 2), parse_extension("S", 2)])
    assert res.compatible and res.runs > 0
    res = compatible([parse_extension("LSS", 2)])
    assert res.compatible and res.witness == "silent"


def test_lint_flags_undeclared_parts():
    ext = parse_extension("SC(all)", 2)
    from dataclasses import replace
    assert lint_class(replace(ext, impl_class="Adm"))
    assert lint_class(replace(ext, safety=None))
    assert lint_class(replace(ext, impl_class="Bogus")) == ["unknown implementation class 'Bogus'"]


# safety properties


def test_time_bounded_safety_is_downward_closed_and_well_formed():
    s = time_bounded_safety(UpperBounds.synchronous(all_channels(2)), 2)
    assert check_safety_attributes(s, 3, 2)
    assert check_downward_closed(s, safety_samples(s, 2, 2))
    full = full_safety(2)
    assert check_downward_closed(full, safety_samples(full, 2, 2))


def test_go_every_round_is_not_downward_closed():
    s = go_every_round_safety(1, 2)
    assert check_safety_attributes(s, 2, 2)
    assert not check_downward_closed(s, safety_samples(s, 2, 1))


def test_once_empty_stays_empty():
    s = time_bounded_safety(UpperBounds.synchronous(all_channels(2)), 2)
    h0 = default_initial_state(2)
    late = [x for x in s.universe(h0) if x[0] and not s.admits(h0, x)]
    assert not late  # nothing can be late at time 0
    h1 = update_global(h0, frozenset(), (frozenset(), frozenset()))
    stale = [x for x in s.universe(h1) if not s.admits(h1, x)]
    assert stale  # a message sent at 0 and received at 1 breaks the bound
    bad = update_global(h1, stale[0][0], stale[0][1])
    assert not s.nonempty(bad)
    assert once_empty_stays_empty(s, [h0, h1])
    assert once_empty_stays_empty(s, [h0, h1, bad, update_global(bad, frozenset(), (frozenset(), frozenset()))])
