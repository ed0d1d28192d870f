"""Per-candidate token buckets kept in a shared state store.

Each consumed token comes back exactly ``refill_interval_ms`` after it was
spent.  That makes the bucket a strict sliding-window limit: no half-open
window of ``refill_interval_ms`` ever contains more than ``capacity``
acquisitions, which a bulk-refill bucket cannot promise at window edges.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..splitters import StateStore


@dataclass(frozen=True)
class RateLimiterState:
    capacity: int
    refill_interval_ms: int
    tokens: int
    last_refill_ms: int
    spent_at: tuple[int, ...] = ()

    def refilled(self, now_ms: int) -> RateLimiterState:
        live = tuple(t for t in self.spent_at if now_ms - t < self.refill_interval_ms)
        if len(live) == len(self.spent_at):
            return self
        last = max(t + self.refill_interval_ms for t in self.spent_at if t not in live)
        return RateLimiterState(self.capacity, self.refill_interval_ms,
                                self.capacity - len(live), last, live)


class RateLimiter:
    def __init__(self, store: StateStore | None = None, capacity: int = 3,
                 refill_interval_ms: int = 60_000):
        if capacity < 1 or refill_interval_ms < 1:
            raise ValueError("capacity and refill_interval_ms must be positive")
        self.store = store if store is not None else StateStore("ratelimit")
        self.capacity = capacity
        self.refill_interval_ms = refill_interval_ms

    def _fresh(self, now_ms: int) -> RateLimiterState:
        return RateLimiterState(self.capacity, self.refill_interval_ms, self.capacity, now_ms)

    def state(self, candidate_id: str, now_ms: int) -> RateLimiterState:
        st = self.store.get(("bucket", candidate_id))
        return self._fresh(now_ms) if st is None else st.refilled(now_ms)

    def available(self, candidate_id: str, now_ms: int) -> int:
        return self.state(candidate_id, now_ms).tokens

    def try_acquire(self, candidate_id: str, now_ms: int) -> bool:
        key = ("bucket", candidate_id)
        got = False

        def take(st):
            nonlocal got
            st = self._fresh(now_ms) if st is None else st.refilled(now_ms)
            got = st.tokens > 0
            if not got:
                return st
            return RateLimiterState(st.capacity, st.refill_interval_ms, st.tokens - 1,
                                    st.last_refill_ms, st.spent_at + (now_ms,))

        self.store.update(key, take)
        return got
