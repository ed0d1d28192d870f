"""Random insert / advance / poll / cancel sequences against a reference model.

The model is a plain dict of element -> (wake, envelope, policy) that is
scanned in full on every poll, so it shares nothing with the heap-and-bucket
store under test.
"""
import random

from fsd.core import Envelope
from fsd.dehydrator import DehydrationPolicy, TimeIndexedStore, cancel, dehydrate, next_interval, poll


def loop_interval(n, policy):
    """Backoff by repeated multiplication, capped at every step."""
    interval = float(policy.base_interval_ms)
    for _ in range(n):
        interval = min(interval * policy.backoff_factor, policy.max_interval_ms)
    return int(min(interval, policy.max_interval_ms))


def random_policy(rng):
    base = rng.randint(1, 500)
    return DehydrationPolicy(
        max_age_ms=rng.randint(0, 20_000),
        base_interval_ms=base,
        backoff_factor=rng.choice([1.0, 1.5, 2.0, 3.0]),
        max_interval_ms=base * rng.randint(1, 40),
        max_retries=rng.choice([None, 0, 1, 3, 8]),
    )


def run_sequence(rng: random.Random, n_ops: int = 60):
    policy = random_policy(rng)
    store = TimeIndexedStore(policy)
    now = 0
    model = {}            # element -> (wake, env)
    intervals = {}        # element -> sleeps observed so far
    live = set()          # elements that have not been retired or cancelled
    next_id = 0
    for _ in range(n_ops):
        op = rng.random()
        if op < 0.35 or not live:
            eid = f"e{next_id}"
            next_id += 1
            env = Envelope(eid, None, now, first_seen_ms=now - rng.randint(0, policy.max_age_ms + 50))
            ticket = dehydrate(store, env, now)
            if now - env.first_seen_ms > policy.max_age_ms:
                assert ticket is None, "too-old element must be retired, not stored"
                continue
            assert ticket is not None and ticket.wake_at_ms == now + loop_interval(0, policy)
            model[eid] = (ticket.wake_at_ms, env)
            intervals[eid] = [ticket.wake_at_ms - now]
            live.add(eid)
        elif op < 0.65:
            now += rng.choice([0, 1, rng.randint(0, policy.max_interval_ms * 2)])
        elif op < 0.9:
            res = poll(store, now)
            due = sorted((w, e) for e, (w, _) in model.items() if w <= now)
            got = [(model[e.element_id][0], e.element_id) for e in res.rehydrated + res.retired]
            assert sorted(got) == due, "poll must return exactly the due tickets"
            for env in res.rehydrated:
                assert model[env.element_id][0] <= now, "never early"
            for env in res.retired:
                eid = env.element_id
                retries = env.retry_count + 1
                assert (now - env.first_seen_ms > policy.max_age_ms
                        or (policy.max_retries is not None and retries > policy.max_retries))
                del model[eid]
                live.discard(eid)
            for env in res.rehydrated:
                eid = env.element_id
                assert not policy.should_retire(env, now), "retirement must be total"
                assert env.retry_count == intervals[eid].__len__()
                del model[eid]
                ticket = dehydrate(store, env, now)
                if ticket is None:
                    live.discard(eid)
                    continue
                sleep = ticket.wake_at_ms - now
                assert sleep == loop_interval(env.retry_count, policy) == next_interval(env.retry_count, policy)
                assert sleep >= intervals[eid][-1], "backoff is monotone"
                intervals[eid].append(sleep)
                model[eid] = (ticket.wake_at_ms, env)
        else:
            eid = rng.choice(sorted(live)) if rng.random() < 0.8 else "absent"
            got = cancel(store, eid)
            if eid in model:
                assert got is not None and got.element_id == eid
                del model[eid]
                live.discard(eid)
            else:
                assert got is None
        assert store.consistent()
        assert {t.element_id for t in store.tickets()} == set(model)
    # drain: every remaining ticket eventually comes due and nothing is lost
    horizon = now + policy.max_interval_ms * (len(model) + 2) + policy.max_age_ms + 1
    for eid, (wake, _) in model.items():
        assert wake <= horizon
    res = poll(store, horizon)
    assert len(res.rehydrated) + len(res.retired) == len(model)
    assert len(store) == 0 and store.consistent()
