import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fsd.geomatch import RTree, haversine_m


def brute_search(boxes, qboxes):
    hits = set()
    for slot, b in boxes.items():
        for q in qboxes:
            if b[0] <= q[2] and q[0] <= b[2] and b[1] <= q[3] and q[1] <= b[3]:
                hits.add(slot)
    return hits


def rand_box(rng, span=1.0):
    x, y = rng.uniform(-10, 10), rng.uniform(-10, 10)
    w, h = rng.uniform(0, span), rng.uniform(0, span)
    return (x, y, x + w, y + h)


def test_rejects_bad_fanout():
    with pytest.raises(ValueError):
        RTree(max_entries=3)
    with pytest.raises(ValueError):
        RTree(max_entries=8, min_entries=5)


def test_empty_tree():
    t = RTree()
    assert len(t) == 0 and t.search([(-180, -90, 180, 90)]).size == 0
    t.check()


@pytest.mark.parametrize("fanout", [4, 8, 16])
def test_churn_matches_brute_force(fanout):
    rng = np.random.default_rng(fanout)
    t = RTree(max_entries=fanout, node_capacity=4, entry_capacity=4)
    live = {}
    for step in range(1500):
        r = rng.random()
        if r < 0.5 or not live:
            b = rand_box(rng)
            live[t.add(b)] = b
        elif r < 0.75:
            slot = int(rng.choice(list(live)))
            t.remove(slot)
            del live[slot]
        else:
            slot = int(rng.choice(list(live)))
            live[slot] = rand_box(rng)
            t.move(slot, live[slot])
        if step % 100 == 0:
            t.check()
            q = [rand_box(rng, 6.0)]
            assert set(t.search(q).tolist()) == brute_search(live, q)
    t.check()
    assert len(t) == len(live)
    for slot in list(live):
        t.remove(slot)
    t.check()
    assert len(t) == 0 and t.height == 1


def test_remove_unknown_slot():
    t = RTree()
    s = t.add((0, 0, 1, 1))
    t.remove(s)
    with pytest.raises(KeyError):
        t.remove(s)


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=120),
       st.floats(-1, 1), st.floats(-1, 1), st.floats(1, 200_000))
def test_query_within_exact(points, qlat, qlon, limit):
    t = RTree(max_entries=6)
    for lat, lon in points:
        t.add((lon, lat, lon, lat))
    world = [(-180.0, -90.0, 180.0, 90.0)]
    slots, d = t.query_within(world, qlat, qlon, limit)
    want = {i for i, (lat, lon) in enumerate(points) if haversine_m((qlat, qlon), (lat, lon)) <= limit}
    assert set(slots.tolist()) == want
    for s, di in zip(slots.tolist(), d.tolist()):
        assert di == pytest.approx(haversine_m((qlat, qlon), points[s]), rel=1e-12, abs=1e-9)


def test_two_query_boxes_union():
    t = RTree()
    a = t.add((179.5, 0, 179.5, 0))
    b = t.add((-179.5, 0, -179.5, 0))
    t.add((0, 0, 0, 0))
    got = set(t.search([(179.0, -1, 180.0, 1), (-180.0, -1, -179.0, 1)]).tolist())
    assert got == {a, b}
