"""Splitter stages and the shared state store they coordinate through."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable

from .core import Envelope, Outcome, OutcomeKind, Stage, StageKind


class VersionConflict(RuntimeError):
    def __init__(self, key, expected, actual):
        super().__init__(f"version conflict on {key!r}: expected {expected}, found {actual}")
        self.key = key
        self.expected = expected
        self.actual = actual


class LogicFailure(RuntimeError):
    pass


class NoRouteProduced(RuntimeError):
    pass


_ABSENT = object()


class StateStore:
    """In-process key/value store with per-key version counters.

    Absent keys have version 0; every write bumps the key's version by one.
    ``compare_and_put`` gives callers optimistic concurrency.
    """

    def __init__(self, namespace: str = "default"):
        self.namespace = namespace
        self._data: dict[Hashable, tuple[Any, int]] = {}
        self._lock = threading.Lock()

    def get(self, key, default=None):
        item = self._data.get(key)
        return default if item is None else item[0]

    def get_versioned(self, key) -> tuple[Any, int]:
        item = self._data.get(key)
        return (None, 0) if item is None else item

    def version(self, key) -> int:
        item = self._data.get(key)
        return 0 if item is None else item[1]

    def put(self, key, value) -> int:
        with self._lock:
            version = self.version(key) + 1
            self._data[key] = (value, version)
            return version

    def compare_and_put(self, key, expected_version: int, value) -> int:
        with self._lock:
            actual = self.version(key)
            if actual != expected_version:
                raise VersionConflict(key, expected_version, actual)
            self._data[key] = (value, actual + 1)
            return actual + 1

    def update(self, key, fn: Callable[[Any], Any], retries: int = 100) -> Any:
        """Read-modify-write through ``compare_and_put`` with retry."""
        for _ in range(retries):
            value, version = self.get_versioned(key)
            new = fn(value)
            try:
                self.compare_and_put(key, version, new)
                return new
            except VersionConflict:
                continue
        raise VersionConflict(key, None, self.version(key))

    def __contains__(self, key):
        return key in self._data

    def __len__(self):
        return len(self._data)

    def keys(self):
        return list(self._data)


def store_get(store: StateStore, key):
    return store.get(key)


def store_put(store: StateStore, key, value) -> int:
    return store.put(key, value)


def store_compare_and_put(store: StateStore, key, expected_version: int, value) -> int:
    return store.compare_and_put(key, expected_version, value)


class Transaction:
    """Buffered view over a store used by one splitter invocation.

    Reads see the invocation's own writes.  Nothing reaches the store until
    :meth:`commit`, which checks every touched key is still at the version
    first observed.
    """

    def __init__(self, store: StateStore):
        self.store = store
        self._seen: dict[Hashable, int] = {}
        self._writes: dict[Hashable, Any] = {}

    def get(self, key, default=None):
        if key in self._writes:
            value = self._writes[key]
            return default if value is _ABSENT else value
        value, version = self.store.get_versioned(key)
        self._seen.setdefault(key, version)
        return default if version == 0 else value

    def put(self, key, value):
        if key not in self._seen:
            self._seen[key] = self.store.version(key)
        self._writes[key] = value

    def commit(self):
        store = self.store
        with store._lock:
            for key, version in self._seen.items():
                if key in self._writes and store.version(key) != version:
                    raise VersionConflict(key, version, store.version(key))
            for key, value in self._writes.items():
                store._data[key] = (value, store.version(key) + 1)


class CachedView:
    """Local read cache over a shared store with bounded staleness.

    Reads younger than ``max_staleness_ms`` are served locally; writes go
    straight through.  ``max_staleness_ms=0`` reads through every time.
    """

    def __init__(self, store: StateStore, clock, max_staleness_ms: int = 0):
        self.store = store
        self.clock = clock
        self.max_staleness_ms = max_staleness_ms
        self._cache: dict[Hashable, tuple[Any, int]] = {}

    def get(self, key, default=None):
        now = self.clock.now_ms
        hit = self._cache.get(key)
        if hit is not None and self.max_staleness_ms > 0 and now - hit[1] < self.max_staleness_ms:
            return hit[0]
        value = self.store.get(key, default)
        self._cache[key] = (value, now)
        return value

    def put(self, key, value) -> int:
        self._cache[key] = (value, self.clock.now_ms)
        return self.store.put(key, value)


@dataclass(frozen=True)
class RouteDecision:
    targets: tuple[tuple[str, Envelope], ...]

    @property
    def keys(self) -> list[str]:
        return [k for k, _ in self.targets]


def _normalise(result, env: Envelope) -> RouteDecision:
    if result is None:
        raise NoRouteProduced(f"no route for {env.element_id}")
    if isinstance(result, str):
        result = [(result, env)]
    elif isinstance(result, tuple) and len(result) == 2 and isinstance(result[0], str):
        result = [result]
    targets = []
    for i, item in enumerate(result):
        if isinstance(item, str):
            key, out = item, env
        else:
            key, out = item
        if not isinstance(out, Envelope):
            # a bare payload is a derivative of the input
            out = env.derive(f"{env.element_id}#{i}", out)
        targets.append((key, out))
    if not targets:
        raise NoRouteProduced(f"no route for {env.element_id}")
    return RouteDecision(tuple(targets))


def stateless_split(logic: Callable[[Envelope], Any], env: Envelope) -> RouteDecision:
    """Route ``env`` by ``logic(env)``.

    ``logic`` may return a route key, a ``(key, envelope_or_payload)`` pair,
    or a list of either.  Bare payloads become derived envelopes with a
    fresh id and a parent link.
    """
    try:
        result = logic(env)
    except Exception as err:
        raise LogicFailure(f"split logic failed on {env.element_id}") from err
    return _normalise(result, env)


def memory_split(store: StateStore, logic: Callable[[Envelope, Transaction], Any],
                 env: Envelope, retries: int = 16) -> RouteDecision:
    """Route ``env`` with ``logic(env, txn)`` that may read and write ``store``.

    Writes commit before the decision is returned.  A failing invocation
    leaves the store untouched; a version conflict reruns the logic.
    """
    for _ in range(retries):
        txn = Transaction(store)
        try:
            result = logic(env, txn)
        except Exception as err:
            raise LogicFailure(f"split logic failed on {env.element_id}") from err
        decision = _normalise(result, env)
        try:
            txn.commit()
        except VersionConflict:
            continue
        return decision
    raise VersionConflict(env.element_id, None, None)


class SplitterStage(Stage):
    kind = StageKind.SPLITTER

    def __init__(self, name: str, logic: Callable[[Envelope], Any]):
        super().__init__(name)
        self.logic = logic

    def decide(self, env: Envelope) -> RouteDecision:
        return stateless_split(self.logic, env)

    def handle(self, env, now_ms):
        try:
            decision = self.decide(env)
        except Exception as err:
            return Outcome(OutcomeKind.DEAD, error=err)
        return Outcome(OutcomeKind.FORWARD, decision.targets)


class MemorySplitterStage(SplitterStage):
    def __init__(self, name: str, store: StateStore, logic: Callable[[Envelope, Transaction], Any]):
        super().__init__(name, logic)
        self.store = store

    def decide(self, env):
        return memory_split(self.store, self.logic, env)


def route_counts(decisions: Iterable[RouteDecision]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for d in decisions:
        for key in d.keys:
            counts[key] = counts.get(key, 0) + 1
    return counts
