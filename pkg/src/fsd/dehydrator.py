"""Time-indexed holding store that re-introduces elements when they are due.

A dehydrated element sleeps for an interval that grows geometrically with
its retry count (capped), and is retired instead of re-introduced once it is
older than the policy's horizon or has been retried too often.  Individual
elements may carry an override policy that replaces the default wholesale.
"""
from __future__ import annotations

import heapq
import itertools
import math
import threading
from dataclasses import dataclass
from typing import Callable

from .core import RETIRED, STORED, Envelope, Stage, StageKind


@dataclass(frozen=True)
class DehydrationPolicy:
    max_age_ms: int = 15 * 60 * 1000
    base_interval_ms: int = 1000
    backoff_factor: float = 2.0
    max_interval_ms: int = 60_000
    max_retries: int | None = None

    def __post_init__(self):
        if self.base_interval_ms < 1:
            raise ValueError("base_interval_ms must be >= 1")
        if self.max_interval_ms < self.base_interval_ms:
            raise ValueError("max_interval_ms must be >= base_interval_ms")
        if self.backoff_factor < 1.0:
            raise ValueError("backoff_factor must be >= 1.0")
        if self.max_age_ms < 0:
            raise ValueError("max_age_ms must be non-negative")
        if self.max_retries is not None and self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    def should_retire(self, env: Envelope, now_ms: int, retry_count: int | None = None) -> bool:
        retries = env.retry_count if retry_count is None else retry_count
        if now_ms - env.first_seen_ms > self.max_age_ms:
            return True
        return self.max_retries is not None and retries > self.max_retries


def next_interval(retry_count: int, policy: DehydrationPolicy) -> int:
    """Sleep before the next re-introduction: ``min(base * factor**n, cap)``, floored."""
    if retry_count < 0:
        raise ValueError("retry_count must be non-negative")
    try:
        raw = policy.base_interval_ms * policy.backoff_factor ** retry_count
    except OverflowError:
        return int(policy.max_interval_ms)
    return int(math.floor(min(raw, policy.max_interval_ms)))


@dataclass(frozen=True)
class Ticket:
    ticket_id: int
    element_id: str
    wake_at_ms: int
    inserted_ms: int
    envelope: Envelope
    policy_override: DehydrationPolicy | None = None


class DuplicateTicket(KeyError):
    pass


class TimeIndexedStore:
    """Tickets indexed by wake time and by element id.

    ``index`` maps a wake time to the tickets due then; a heap of distinct
    wake times gives O(log n) insert and range-pop.  Cancelled tickets are
    removed from both maps immediately, so the two views always agree.
    """

    def __init__(self, policy: DehydrationPolicy | None = None):
        self.policy = policy or DehydrationPolicy()
        self.index: dict[int, dict[str, Ticket]] = {}
        self.by_element: dict[str, Ticket] = {}
        self._wakes: list[int] = []
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.by_element)

    def __contains__(self, element_id):
        return element_id in self.by_element

    def effective_policy(self, override: DehydrationPolicy | None) -> DehydrationPolicy:
        return override if override is not None else self.policy

    def insert(self, env: Envelope, wake_at_ms: int, now_ms: int,
               override: DehydrationPolicy | None = None) -> Ticket:
        with self._lock:
            if env.element_id in self.by_element:
                raise DuplicateTicket(env.element_id)
            ticket = Ticket(next(self._ids), env.element_id, wake_at_ms, now_ms, env, override)
            bucket = self.index.get(wake_at_ms)
            if bucket is None:
                bucket = self.index[wake_at_ms] = {}
                heapq.heappush(self._wakes, wake_at_ms)
            bucket[env.element_id] = ticket
            self.by_element[env.element_id] = ticket
            return ticket

    def remove(self, element_id: str) -> Ticket | None:
        with self._lock:
            ticket = self.by_element.pop(element_id, None)
            if ticket is not None:
                bucket = self.index[ticket.wake_at_ms]
                del bucket[element_id]
                if not bucket:
                    del self.index[ticket.wake_at_ms]
            return ticket

    def pop_due(self, now_ms: int) -> list[Ticket]:
        """Remove and return every ticket with ``wake_at_ms <= now_ms``."""
        out = []
        with self._lock:
            wakes = self._wakes
            while wakes and wakes[0] <= now_ms:
                w = heapq.heappop(wakes)
                bucket = self.index.pop(w, None)
                if not bucket:
                    continue  # emptied by cancellation
                for eid in sorted(bucket):
                    ticket = bucket[eid]
                    del self.by_element[eid]
                    out.append(ticket)
        return out

    def next_wake(self) -> int | None:
        wakes = self._wakes
        while wakes and wakes[0] not in self.index:
            heapq.heappop(wakes)
        return wakes[0] if wakes else None

    def tickets(self) -> list[Ticket]:
        return list(self.by_element.values())

    def consistent(self) -> bool:
        indexed = {t.ticket_id for bucket in self.index.values() for t in bucket.values()}
        return indexed == {t.ticket_id for t in self.by_element.values()} and all(
            w in self._wakes for w in self.index)


def dehydrate(store: TimeIndexedStore, env: Envelope, now_ms: int,
              policy: DehydrationPolicy | None = None,
              override: DehydrationPolicy | None = None) -> Ticket | None:
    """Park ``env`` until its next retry time.

    Returns ``None`` without storing anything when the element already meets
    the retirement condition; the caller sends it down the retire route.
    """
    effective = override if override is not None else (policy or store.policy)
    if env.element_id in store:
        raise DuplicateTicket(env.element_id)
    if effective.should_retire(env, now_ms):
        return None
    wake = now_ms + next_interval(env.retry_count, effective)
    return store.insert(env, wake, now_ms, override)


@dataclass
class PollResult:
    rehydrated: list[Envelope]
    retired: list[Envelope]


def poll(store: TimeIndexedStore, now_ms: int) -> PollResult:
    """Collect due tickets in ``(wake_at_ms, element_id)`` order.

    Each due element either comes back with ``retry_count + 1`` and origin
    Rehydrated, or, if it has become too old or exhausted its retries, is
    returned in ``retired`` untouched.
    """
    rehydrated, retired = [], []
    for ticket in store.pop_due(now_ms):
        env = ticket.envelope
        policy = store.effective_policy(ticket.policy_override)
        if policy.should_retire(env, now_ms, env.retry_count + 1):
            retired.append(env)
        else:
            rehydrated.append(env.rehydrated())
    return PollResult(rehydrated, retired)


def cancel(store: TimeIndexedStore, element_id: str) -> Ticket | None:
    return store.remove(element_id)


def expedite(store: TimeIndexedStore, element_id: str, now_ms: int) -> Ticket | None:
    """Make a parked element due at ``now_ms`` (no-op if it is due sooner)."""
    with store._lock:
        ticket = store.by_element.get(element_id)
    if ticket is None or ticket.wake_at_ms <= now_ms:
        return ticket
    store.remove(element_id)
    return store.insert(ticket.envelope, max(now_ms, ticket.inserted_ms), ticket.inserted_ms,
                        ticket.policy_override)


class DehydratorStage(Stage):
    """Pipeline stage wrapping a :class:`TimeIndexedStore`.

    ``override_fn`` maps an envelope to a per-element policy (or ``None``).
    Due elements leave on the ``rehydrate`` route; retired ones on ``retire``.
    """

    kind = StageKind.DEHYDRATOR

    def __init__(self, name: str, policy: DehydrationPolicy | None = None,
                 override_fn: Callable[[Envelope], DehydrationPolicy | None] | None = None,
                 store: TimeIndexedStore | None = None):
        super().__init__(name)
        self.store = store or TimeIndexedStore(policy)
        self.override_fn = override_fn
        self.cancelled_count = 0
        self.cancelled: list[Envelope] = []

    def handle(self, env, now_ms):
        override = self.override_fn(env) if self.override_fn else None
        ticket = dehydrate(self.store, env, now_ms, override=override)
        return STORED if ticket is not None else RETIRED

    def poll_due(self, now_ms: int):
        res = poll(self.store, now_ms)
        return res.rehydrated, res.retired

    def next_wake(self):
        return self.store.next_wake()

    def pending(self) -> int:
        return len(self.store)

    def cancel(self, element_id: str) -> Ticket | None:
        ticket = cancel(self.store, element_id)
        if ticket is not None:
            self.cancelled_count += 1
            self.cancelled.append(ticket.envelope)
        return ticket

    def expedite(self, element_id: str, now_ms: int) -> Ticket | None:
        return expedite(self.store, element_id, now_ms)
