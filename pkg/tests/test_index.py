import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsd.geomatch import (EARTH_RADIUS_M, CandidateIndex, CandidateLocation, Question, QuestionIndex,
                          QuestionMatch, haversine_m, index_upsert, match_candidate, match_question,
                          scan_match_candidate, scan_match_question)
from fsd.geomatch.index import Match

# 1100 m due east of (0, 0), in degrees of longitude
LON_1100M = math.degrees(1100.0 / EARTH_RADIUS_M)


def cand(cid, lat, lon, t=0):
    return CandidateLocation(cid, lat, lon, t)


def question(qid="q1", lat=0.0, lon=0.0, r=1000.0):
    return Question(qid, lat, lon, r, 0, 900_000)


def test_upsert_semantics():
    idx = CandidateIndex()
    assert index_upsert(idx, cand("c1", 0, 0, 5)).previous is None and len(idx) == 1
    prev = index_upsert(idx, cand("c1", 0, 1, 6)).previous
    assert prev.lon_deg == 0 and len(idx) == 1
    res = index_upsert(idx, cand("c1", 0, 2, 3))
    assert res.stale and idx.locations["c1"].lon_deg == 1


def test_empty_index():
    m = match_question(CandidateIndex(), question(), 200.0)
    assert m.ids() == ([], [])


def test_inside_and_near_edge():
    idx = CandidateIndex()
    index_upsert(idx, cand("c1", 0.0, 0.005))
    index_upsert(idx, cand("c2", 0.0, LON_1100M))
    index_upsert(idx, cand("far", 0.0, 0.05))
    m = match_question(idx, question(), 200.0)
    assert m.ids() == (["c1"], ["c2"])
    assert m.inside[0].distance_m == pytest.approx(555.975, abs=1e-3)
    assert m.near_edge[0].distance_m == pytest.approx(1100.0, abs=1e-6)
    assert m == scan_match_question(idx.locations, question(), 200.0)


def test_inside_sorted_by_distance_then_id():
    idx = CandidateIndex()
    for cid, lon in [("b", 0.002), ("a", 0.002), ("c", 0.001)]:
        index_upsert(idx, cand(cid, 0.0, lon))
    assert match_question(idx, question(), 0.0).ids()[0] == ["c", "a", "b"]


def test_remove_candidate():
    idx = CandidateIndex()
    index_upsert(idx, cand("c1", 0.0, 0.001))
    assert idx.remove("c1") is not None and idx.remove("c1") is None
    assert match_question(idx, question(), 0.0).ids() == ([], [])


def test_match_candidate():
    qi = QuestionIndex()
    assert match_candidate(qi, cand("c", 0, 0)) == []
    qi.add(question("big", r=2000.0))
    qi.add(question("small", lat=0.0, lon=0.001, r=500.0))
    qi.add(question("elsewhere", lat=5.0, r=500.0))
    hits = match_candidate(qi, cand("c", 0.0, 0.002))
    # ratios: big 222/2000 = 0.11, small 111/500 = 0.22
    assert [h.question_id for h in hits] == ["big", "small"]
    assert hits == scan_match_candidate(qi.questions, cand("c", 0.0, 0.002))
    qi.remove("small")
    assert [h.question_id for h in match_candidate(qi, cand("c", 0.0, 0.002))] == ["big"]


def test_radius_boundary_included():
    c = cand("c", 0.0, 0.00731)
    r = haversine_m((0.0, 0.0), (c.lat_deg, c.lon_deg))
    qi = QuestionIndex()
    qi.add(question(r=r))
    assert [h.question_id for h in match_candidate(qi, c)] == ["q1"]
    idx = CandidateIndex()
    index_upsert(idx, c)
    assert match_question(idx, question(r=r), 0.0).ids() == (["c"], [])


def test_antimeridian_question():
    qi, idx = QuestionIndex(), CandidateIndex()
    q = question(lat=10.0, lon=179.999, r=1000.0)
    qi.add(q)
    c = cand("c", 10.0, -179.9995)
    index_upsert(idx, c)
    assert match_question(idx, q, 0.0).ids() == (["c"], [])
    assert [h.question_id for h in match_candidate(qi, c)] == ["q1"]


def test_question_match_equality_and_repr():
    a = QuestionMatch.from_matches([Match("c", 1.0)], [])
    assert a == QuestionMatch(["c"], [1.0], [], [])
    assert "c" in repr(a)


regions = st.sampled_from([(0.0, 0.0), (60.0, 20.0), (-33.0, 151.0), (0.0, 179.99), (88.0, 0.0),
                           (-89.5, -120.0)])


@settings(max_examples=60)
@given(regions, st.integers(0, 2**31), st.integers(5, 200), st.floats(50.0, 20_000.0))
def test_tree_equals_scan(center, seed, n, radius):
    import random
    rng = random.Random(seed)
    clat, clon = center
    idx, qi = CandidateIndex(max_entries=5), QuestionIndex(max_entries=5)
    for i in range(n):
        lat = max(-90.0, min(90.0, clat + rng.uniform(-0.3, 0.3)))
        lon = (clon + rng.uniform(-0.3, 0.3) + 180.0) % 360.0 - 180.0
        index_upsert(idx, cand(f"c{i}", lat, lon, rng.randint(0, 5)))
    for j in range(10):
        q = Question(f"q{j}", max(-90.0, min(90.0, clat + rng.uniform(-0.2, 0.2))),
                     (clon + rng.uniform(-0.2, 0.2) + 180.0) % 360.0 - 180.0,
                     radius * rng.uniform(0.1, 1.0), 0, 1000)
        qi.add(q)
        band = rng.choice([0.0, 0.1 * q.radius_m, 500.0])
        assert match_question(idx, q, band) == scan_match_question(idx.locations, q, band)
    for c in list(idx.locations.values())[:20]:
        assert match_candidate(qi, c) == scan_match_candidate(qi.questions, c)
