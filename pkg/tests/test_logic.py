import itertools

from hypothesis import given
from hypothesis import strategies as st

from fsd.geomatch import ActionEvent, ActionKind, Question, RateLimiter, business_decide
from fsd.geomatch.index import QuestionMatch
from fsd.geomatch.logic import claim_send, was_sent
from fsd.harness.oracle import audit_rate_limit, decision_table
from fsd.splitters import StateStore

Q = Question("q", 0.0, 0.0, 1000.0, 0, 900_000)


def qm(inside=(), near=()):
    return QuestionMatch(list(inside), [100.0 * (i + 1) for i in range(len(inside))],
                         list(near), [1000.0 + i for i in range(len(near))])


def ev(kind, cid=None, t=0):
    return ActionEvent(ActionKind[kind], "q", cid, t)


def test_send_nearest():
    out = business_decide(qm(["c1", "c2"]), StateStore(), RateLimiter(), Q, 0)
    assert out == [ev("Send", "c1")]


def test_all_sent_no_near():
    dedup = StateStore()
    claim_send(dedup, "q", "c1", 0)
    assert business_decide(qm(["c1"]), dedup, RateLimiter(), Q, 5) == [ev("Dehydrate", t=5)]


def test_empty_bucket_means_no_request():
    lim = RateLimiter(capacity=1)
    assert lim.try_acquire("c3", 0)
    assert business_decide(qm(near=["c3"]), StateStore(), lim, Q, 10) == [ev("Dehydrate", t=10)]


def test_retire_when_too_old():
    assert business_decide(qm(["c1"]), StateStore(), RateLimiter(), Q, 900_001) == [
        ev("Retire", t=900_001)]
    # exactly max_age is still alive
    assert business_decide(qm(["c1"]), StateStore(), RateLimiter(), Q, 900_000)[0].kind is ActionKind.Send


def test_requests_capped_at_k():
    out = business_decide(qm(near=["a", "b", "c", "d"]), StateStore(), RateLimiter(), Q, 0, 2)
    assert out == [ev("RequestLocationUpdate", "a"), ev("RequestLocationUpdate", "b"), ev("Dehydrate")]


def test_send_is_claimed_once():
    dedup = StateStore()
    first = business_decide(qm(["c1", "c2"]), dedup, RateLimiter(), Q, 0)
    second = business_decide(qm(["c1", "c2"]), dedup, RateLimiter(), Q, 1)
    third = business_decide(qm(["c1", "c2"]), dedup, RateLimiter(), Q, 2)
    assert [e.candidate_id for e in first + second] == ["c1", "c2"]
    assert third == [ev("Dehydrate", t=2)]
    assert was_sent(dedup, "q", "c1") and not claim_send(dedup, "q", "c1", 3)


def test_decision_table_enumeration():
    """Every combination of age, sent flags and token levels, against the table."""
    ids_in, ids_near = ["i0", "i1", "i2"], ["n0", "n1", "n2", "n3"]
    for expired, n_in, n_near, k in itertools.product([False, True], range(4), range(5), [1, 3]):
        for sent in itertools.product([False, True], repeat=n_in):
            for tokens in itertools.product([0, 1], repeat=n_near):
                dedup, lim = StateStore(), RateLimiter(capacity=1)
                for cid, s in zip(ids_in, sent):
                    if s:
                        claim_send(dedup, "q", cid, 0)
                for cid, tk in zip(ids_near, tokens):
                    if not tk:
                        lim.try_acquire(cid, 0)
                now = 900_001 if expired else 10
                got = business_decide(qm(ids_in[:n_in], ids_near[:n_near]), dedup, lim, Q, now, k)
                want = decision_table(Q, list(zip(ids_in, sent)), list(zip(ids_near, tokens)), now, k)
                assert got == want, (expired, sent, tokens, k)


# -- rate limiter

def test_bucket_basics():
    lim = RateLimiter(capacity=3, refill_interval_ms=60_000)
    assert [lim.try_acquire("c", t) for t in (0, 10, 20, 30)] == [True, True, True, False]
    assert lim.available("c", 59_999) == 0
    assert lim.available("c", 60_000) == 1
    assert lim.try_acquire("c", 60_000) and not lim.try_acquire("c", 60_005)
    assert lim.available("other", 0) == 3


def window_model(times, capacity, window):
    """Reference: accept iff fewer than ``capacity`` accepted in (t - window, t]."""
    accepted, out = [], []
    for t in times:
        ok = sum(1 for a in accepted if t - a < window) < capacity
        if ok:
            accepted.append(t)
        out.append(ok)
    return out


@given(st.lists(st.integers(0, 1000), max_size=60), st.integers(1, 5), st.integers(1, 300))
def test_bucket_equals_sliding_window(gaps, capacity, window):
    times = list(itertools.accumulate(gaps))
    lim = RateLimiter(capacity=capacity, refill_interval_ms=window)
    got = [lim.try_acquire("c", t) for t in times]
    assert got == window_model(times, capacity, window)
    st_ = lim.state("c", times[-1] if times else 0)
    assert 0 <= st_.tokens <= capacity
    events = [ActionEvent(ActionKind.RequestLocationUpdate, "q", "c", t) for t, ok in zip(times, got) if ok]
    assert audit_rate_limit(events, capacity, window) is None


def test_audit_catches_overrun():
    events = [ActionEvent(ActionKind.RequestLocationUpdate, "q", "c", t) for t in (0, 1, 2, 3)]
    assert audit_rate_limit(events, 3, 60_000) is not None
    assert audit_rate_limit(events, 4, 60_000) is None
    spaced = [ActionEvent(ActionKind.RequestLocationUpdate, "q", "c", t) for t in (0, 1, 2, 60_000)]
    assert audit_rate_limit(spaced, 3, 60_000) is None
