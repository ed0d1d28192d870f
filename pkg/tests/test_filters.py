import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsd.core import Envelope, Runtime, Sink, build_topology
from fsd.filters import (DROPPED, PASS, AggregationFilterConfig, DecisionKind, EmptyTierList,
                         FilterDecision, PredicateFailure, TopXFilter, TopXState,
                         aggregation_filter_step, compose_tiers, stateless_filter)


def envs(scores):
    return [Envelope(f"e{i:04d}", s, i) for i, s in enumerate(scores)]


def by_payload(x):
    return AggregationFilterConfig(x, lambda e: e.payload)


def brute_top(seen, x):
    return sorted(seen, key=lambda e: (-e.payload, e.element_id))[:x]


# -- stateless

def test_predicate_pass_and_drop():
    radius_ok = lambda e: e.payload["radius"] > 0  # noqa: E731
    assert stateless_filter(radius_ok, Envelope("q", {"radius": 500}, 0)) is PASS
    assert stateless_filter(radius_ok, Envelope("q", {"radius": 0}, 0)) is DROPPED


def test_predicate_failure_wrapped():
    with pytest.raises(PredicateFailure):
        stateless_filter(lambda e: e.payload["missing"], Envelope("q", {}, 0))


@given(st.lists(st.integers(-5, 5), max_size=40), st.randoms())
def test_predicate_order_independent(values, rnd):
    batch = envs(values)
    pred = lambda e: e.payload % 2 == 0  # noqa: E731
    before = sorted(stateless_filter(pred, e).kind.value for e in batch)
    rnd.shuffle(batch)
    assert sorted(stateless_filter(pred, e).kind.value for e in batch) == before


def test_decision_shape_rules():
    with pytest.raises(ValueError):
        FilterDecision(DecisionKind.PASS, score=1.0)
    with pytest.raises(ValueError):
        FilterDecision(DecisionKind.SOFT)
    with pytest.raises(ValueError):
        FilterDecision(DecisionKind.SOFT, score=1.0, margin_of_error=-1.0)
    with pytest.raises(ValueError):
        AggregationFilterConfig(0, lambda e: 0)


# -- top-X

def test_topx_example():
    state, cfg = TopXState(), by_payload(2)
    for e in envs([5, 3, 9, 1]):
        d = aggregation_filter_step(state, e, cfg)
    assert list(d.candidate_scores) == [9, 5]
    assert d.ids == ["e0002", "e0000"]


def test_topx_single():
    d = aggregation_filter_step(TopXState(), Envelope("a", 7, 0), by_payload(1))
    assert list(d.candidate_scores) == [7] and d.score == 7


def test_topx_ties_keep_lowest_ids():
    state, cfg = TopXState(), by_payload(3)
    batch = envs([4] * 10)
    random.Random(1).shuffle(batch)
    for e in batch:
        d = aggregation_filter_step(state, e, cfg)
    assert d.ids == ["e0000", "e0001", "e0002"]


@given(st.lists(st.integers(-20, 20), max_size=120), st.integers(1, 8))
def test_topx_matches_brute_force_every_step(scores, x):
    state, cfg, seen = TopXState(), by_payload(x), []
    for e in envs(scores):
        seen.append(e)
        d = aggregation_filter_step(state, e, cfg)
        assert d.ids == [s.element_id for s in brute_top(seen, x)]
        assert len(d.candidate_set) <= x


def test_topx_resubmission_replaces_score():
    state, cfg = TopXState(), by_payload(2)
    for e in [Envelope("a", 1, 0), Envelope("b", 2, 0), Envelope("a", 5, 1)]:
        d = aggregation_filter_step(state, e, cfg)
    assert d.ids == ["a", "b"] and list(d.candidate_scores) == [5, 2]


# -- tiers

def test_two_tier_example():
    tiers = compose_tiers([by_payload(4), by_payload(2)])
    for e in envs([8, 1, 6, 3, 9, 2]):
        d = tiers.step(e)
    assert list(d.candidate_scores) == [9, 8]


def test_one_tier_identity():
    tiers, state = compose_tiers([by_payload(3)]), TopXState()
    for e in envs([3, 1, 4, 1, 5, 9, 2, 6]):
        assert tiers.step(e).ids == aggregation_filter_step(state, e, by_payload(3)).ids


@given(st.lists(st.integers(0, 50), max_size=80))
def test_bottleneck_bound(scores):
    tiers = compose_tiers([by_payload(1), by_payload(5)])
    for e in envs(scores):
        assert len(tiers.step(e).candidate_set) <= 1


@given(st.lists(st.integers(0, 30), min_size=1, max_size=80),
       st.lists(st.integers(1, 6), min_size=1, max_size=4))
def test_non_increasing_tiers_equal_single_tier(scores, widths):
    widths = sorted(widths, reverse=True)
    tiers = compose_tiers([by_payload(w) for w in widths])
    state = TopXState()
    for e in envs(scores):
        assert tiers.step(e).ids == aggregation_filter_step(state, e, by_payload(widths[-1])).ids


def test_empty_tier_list():
    with pytest.raises(EmptyTierList):
        compose_tiers([])


def test_tier_with_different_score():
    # second tier re-ranks the first tier's survivors by negated score
    tiers = compose_tiers([by_payload(3), AggregationFilterConfig(1, lambda e: -e.payload, 1)])
    for e in envs([10, 20, 30, 5]):
        d = tiers.step(e)
    assert d.ids == ["e0000"]  # survivors 30, 20, 10; lowest is 10


# -- stage

def test_topx_stage_drops_outsiders():
    sink = Sink("out")
    rt = Runtime(build_topology({"stages": [TopXFilter("top", by_payload(2)), sink],
                                 "edges": [("top", "out")]}))
    for e in envs([5, 3, 9, 1]):
        rt.submit(e)
    rep = rt.run_until_idle()
    # 5 and 3 enter while the set is filling, 9 displaces 3, 1 never enters
    assert [e.element_id for e in sink.received] == ["e0000", "e0001", "e0002"]
    assert rep.dropped == 1 and rep.conserved
    assert sink.received[-1].decision.ids == ["e0002", "e0000"]


def test_score_failure_dead_letters():
    stage = TopXFilter("top", AggregationFilterConfig(2, lambda e: e.payload["x"]))
    rt = Runtime(build_topology({"stages": [stage, Sink("out")], "edges": [("top", "out")]}))
    rt.submit(Envelope("a", {}, 0))
    assert rt.run_until_idle().dead_lettered == 1
