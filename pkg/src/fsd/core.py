"""Envelope model, stage abstraction, topology wiring and the execution runtime.

A pipeline is a set of named stages of three kinds (filter, splitter,
dehydrator) plus sinks.  Edges carry route keys; edges that re-enter the
pipeline from a dehydrator are feedback edges and are the only place a cycle
may close.  The runtime drains stages in topological order and polls
dehydrators against a pluggable clock, which makes simulated runs fully
deterministic.
"""
from __future__ import annotations

import enum
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence


class Origin(enum.Enum):
    EXTERNAL = "External"
    REHYDRATED = "Rehydrated"


@dataclass(frozen=True, slots=True)
class Envelope:
    """The unit flowing through a pipeline.

    ``retry_count`` is zero exactly for external admissions; every pass
    through a dehydrator feedback edge increments it.  ``element_id`` is
    chosen by the submitter and survives rehydration unchanged.
    """

    element_id: str
    payload: Any
    event_time_ms: int
    first_seen_ms: int = 0
    retry_count: int = 0
    origin: Origin = Origin.EXTERNAL
    parent_id: str | None = None
    decision: Any = None

    def __post_init__(self):
        if self.retry_count < 0:
            raise ValueError("retry_count must be non-negative")
        if (self.retry_count == 0) != (self.origin is Origin.EXTERNAL):
            raise ValueError("retry_count == 0 iff origin is External")

    def rehydrated(self) -> Envelope:
        return replace(self, retry_count=self.retry_count + 1,
                       origin=Origin.REHYDRATED, decision=None)

    def derive(self, element_id: str, payload: Any) -> Envelope:
        """A new element produced from this one, keeping a lineage link."""
        return Envelope(element_id, payload, self.event_time_ms,
                        first_seen_ms=self.first_seen_ms,
                        parent_id=self.element_id)


# ---------------------------------------------------------------- clock

class ClockMode(enum.Enum):
    SIMULATED = "Simulated"
    WALLCLOCK = "WallClock"


class WallClockAdvance(RuntimeError):
    """Explicit advance requested on a wall clock."""


class Clock:
    """Millisecond clock, either simulated (explicit advance) or wall time."""

    def __init__(self, mode: ClockMode = ClockMode.SIMULATED, start_ms: int = 0):
        self.mode = mode
        self._now = int(start_ms)
        self._origin_ns = time.monotonic_ns()

    @classmethod
    def wall(cls) -> Clock:
        return cls(ClockMode.WALLCLOCK)

    @property
    def now_ms(self) -> int:
        if self.mode is ClockMode.WALLCLOCK:
            # clamp keeps the reading monotone even if callers race
            self._now = max(self._now, (time.monotonic_ns() - self._origin_ns) // 1_000_000)
        return self._now

    def advance(self, delta_ms: int) -> int:
        if self.mode is ClockMode.WALLCLOCK:
            raise WallClockAdvance("cannot advance a wall clock")
        if delta_ms < 0:
            raise ValueError(f"negative advance: {delta_ms}")
        self._now += int(delta_ms)
        return self._now

    def advance_to(self, target_ms: int) -> int:
        return self.advance(max(0, int(target_ms) - self._now))


# ---------------------------------------------------------------- stages

class StageKind(enum.Enum):
    FILTER = "filter"
    SPLITTER = "splitter"
    DEHYDRATOR = "dehydrator"
    SINK = "sink"


class OutcomeKind(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"
    DEAD = "dead"
    STORED = "stored"
    RETIRED = "retired"
    EMITTED = "emitted"


@dataclass(slots=True)
class Outcome:
    kind: OutcomeKind
    routes: Sequence[tuple[str | None, Envelope]] = ()
    error: BaseException | None = None

    @classmethod
    def forward(cls, env: Envelope, route: str | None = None) -> Outcome:
        return cls(OutcomeKind.FORWARD, ((route, env),))


DROP = Outcome(OutcomeKind.DROP)
STORED = Outcome(OutcomeKind.STORED)
RETIRED = Outcome(OutcomeKind.RETIRED)
EMITTED = Outcome(OutcomeKind.EMITTED)


class Stage:
    """Base class for pipeline stages.

    Subclasses set ``kind`` and implement :meth:`handle`, which receives one
    envelope and the current clock reading and returns an :class:`Outcome`.
    """

    kind: StageKind

    def __init__(self, name: str):
        self.name = name

    def handle(self, env: Envelope, now_ms: int) -> Outcome:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r}>"


class Sink(Stage):
    """Terminal stage.  ``category`` is ``"emitted"`` or ``"retired"``."""

    kind = StageKind.SINK

    def __init__(self, name: str, category: str = "emitted", on_receive=None, keep: bool = True):
        super().__init__(name)
        if category not in ("emitted", "retired"):
            raise ValueError(f"unknown sink category {category!r}")
        self.category = category
        self.on_receive = on_receive
        self.keep = keep
        self.received: list[Envelope] = []

    def handle(self, env, now_ms):
        if self.on_receive is not None:
            self.on_receive(env, now_ms)
        if self.keep:
            self.received.append(env)
        return RETIRED if self.category == "retired" else EMITTED


# ---------------------------------------------------------------- topology

class TopologyError(ValueError):
    pass


class DuplicateStageName(TopologyError):
    pass


class DanglingEdge(TopologyError):
    pass


class IllegalCycle(TopologyError):
    pass


class DuplicateRoute(TopologyError):
    pass


class UnknownRoute(LookupError):
    """A stage emitted a route key with no matching outgoing edge."""


class ShuttingDown(RuntimeError):
    pass


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    route: str | None = None
    feedback: bool = False


@dataclass
class Topology:
    stages: dict[str, Stage]
    edges: list[Edge]
    entry: str | None
    order: list[str] = field(default_factory=list)

    @property
    def feedback_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.feedback]

    def outgoing(self, name: str) -> list[Edge]:
        return [e for e in self.edges if e.src == name]


def _as_edge(raw, stages: Mapping[str, Stage]) -> Edge:
    if isinstance(raw, Edge):
        edge = raw
    elif isinstance(raw, Mapping):
        edge = Edge(raw["src"], raw["dst"], raw.get("route"), bool(raw.get("feedback", False)))
    else:
        src, dst, *rest = raw
        edge = Edge(src, dst, rest[0] if rest else None, bool(rest[1]) if len(rest) > 1 else False)
    for end in (edge.src, edge.dst):
        if end not in stages:
            raise DanglingEdge(f"edge {edge.src}->{edge.dst} names unknown stage {end!r}")
    src_kind = stages[edge.src].kind
    if not edge.feedback and src_kind is StageKind.DEHYDRATOR and edge.route == "rehydrate":
        edge = replace(edge, feedback=True)
    if edge.feedback and src_kind is not StageKind.DEHYDRATOR:
        raise IllegalCycle(f"feedback edge {edge.src}->{edge.dst} must leave a dehydrator")
    return edge


def build_topology(description: Mapping[str, Any]) -> Topology:
    """Validate a topology description.

    ``description`` holds ``stages`` (a sequence of :class:`Stage`),
    ``edges`` (``Edge`` objects, mappings or ``(src, dst[, route[, feedback]])``
    tuples) and optionally ``entry`` (defaults to the first stage).  Edges out
    of a dehydrator on the ``"rehydrate"`` route are flagged as feedback.
    """
    stages: dict[str, Stage] = {}
    for stage in description.get("stages", ()):
        if stage.name in stages:
            raise DuplicateStageName(stage.name)
        stages[stage.name] = stage
    edges = [_as_edge(raw, stages) for raw in description.get("edges", ())]

    seen = set()
    for e in edges:
        key = (e.src, e.route)
        if key in seen:
            raise DuplicateRoute(f"stage {e.src!r} has two edges for route {e.route!r}")
        seen.add(key)

    # Kahn's algorithm over non-feedback edges, ties in declaration order
    names = list(stages)
    indeg = {n: 0 for n in names}
    for e in edges:
        if not e.feedback:
            indeg[e.dst] += 1
    order = []
    ready = [n for n in names if indeg[n] == 0]
    while ready:
        n = ready.pop(0)
        order.append(n)
        for e in edges:
            if e.src == n and not e.feedback:
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    ready.append(e.dst)
        ready.sort(key=names.index)
    if len(order) != len(names):
        stuck = sorted(set(names) - set(order))
        raise IllegalCycle(f"cycle without a dehydrator through {stuck}")

    entry = description.get("entry", names[0] if names else None)
    if entry is None and not stages:
        return Topology(stages, edges, None, order)  # empty: accepts no input
    if entry not in stages:
        raise DanglingEdge(f"entry stage {entry!r} does not exist")
    return Topology(stages, edges, entry, order)


# ---------------------------------------------------------------- runtime

@dataclass
class ExecutionReport:
    processed: dict[str, int]
    submitted: int = 0
    spawned: int = 0
    emitted: int = 0
    dropped: int = 0
    dead_lettered: int = 0
    retired: int = 0
    dehydrated: int = 0
    cancelled: int = 0
    in_flight: int = 0

    @property
    def conserved(self) -> bool:
        """Every admitted envelope sits in exactly one terminal bucket."""
        return (self.submitted + self.spawned
                == self.emitted + self.dropped + self.dead_lettered + self.retired
                + self.dehydrated + self.cancelled + self.in_flight)

    def as_dict(self) -> dict[str, Any]:
        return {
            "processed": dict(self.processed), "submitted": self.submitted,
            "spawned": self.spawned, "emitted": self.emitted, "dropped": self.dropped,
            "dead_lettered": self.dead_lettered, "retired": self.retired,
            "dehydrated": self.dehydrated, "cancelled": self.cancelled,
            "in_flight": self.in_flight, "conserved": self.conserved,
        }


@dataclass(frozen=True)
class DeadLetter:
    stage: str
    envelope: Envelope
    error: BaseException


class Runtime:
    """Single-process executor for a :class:`Topology`.

    In simulated mode everything runs on the caller's thread and time moves
    only through :meth:`advance` / :meth:`run_until`.  In wall-clock mode the
    entry queue is bounded by ``queue_capacity``; a full queue is drained
    inline before the next admission.
    """

    def __init__(self, topology: Topology, clock: Clock | None = None,
                 queue_capacity: int | None = None):
        self.topology = topology
        self.clock = clock or Clock()
        self.queue_capacity = queue_capacity
        self.queues: dict[str, deque] = {n: deque() for n in topology.stages}
        self.processed = {n: 0 for n in topology.stages}
        self.dead_letters: list[DeadLetter] = []
        self._routes: dict[tuple[str, str | None], str] = {}
        self._single: dict[str, str | None] = {}
        for name in topology.stages:
            out = topology.outgoing(name)
            for e in out:
                self._routes[(e.src, e.route)] = e.dst
            fwd = [e for e in out if not e.feedback]
            self._single[name] = fwd[0].dst if len(fwd) == 1 else None
        self._has_out = {n: bool(topology.outgoing(n)) for n in topology.stages}
        self._dehydrators = [s for n, s in topology.stages.items()
                             if s.kind is StageKind.DEHYDRATOR]
        self._counts = dict(submitted=0, spawned=0, emitted=0, dropped=0,
                            dead_lettered=0, retired=0)
        self.sink_counts: dict[str, int] = {}
        self._draining = False
        self._lock = threading.RLock()

    # -- admission

    def submit(self, env: Envelope) -> Envelope:
        """Admit an external envelope at the entry stage."""
        with self._lock:
            if self._draining:
                raise ShuttingDown("runtime is draining")
            if self.topology.entry is None:
                raise TopologyError("empty topology accepts no input")
            entry_q = self.queues[self.topology.entry]
            if (self.queue_capacity is not None and self.clock.mode is ClockMode.WALLCLOCK
                    and len(entry_q) >= self.queue_capacity):
                self.run_until_idle()
            env = replace(env, first_seen_ms=self.clock.now_ms, retry_count=0,
                          origin=Origin.EXTERNAL)
            entry_q.append(env)
            self._counts["submitted"] += 1
            return env

    def drain(self) -> ExecutionReport:
        """Refuse further submissions and process everything in flight."""
        with self._lock:
            self._draining = True
            return self.run_until_idle()

    # -- execution

    def _emit(self, name: str, env: Envelope, retired: bool = False):
        self._counts["retired" if retired else "emitted"] += 1
        self.sink_counts[name] = self.sink_counts.get(name, 0) + 1

    def _dead(self, name: str, env: Envelope, err: BaseException):
        self._counts["dead_lettered"] += 1
        self.dead_letters.append(DeadLetter(name, env, err))

    def _route(self, name: str, route: str | None, env: Envelope):
        dst = self._routes.get((name, route))
        if dst is None and route is None:
            dst = self._single[name]
        if dst is not None:
            self.queues[dst].append(env)
        elif not self._has_out[name] and route is None:
            self._emit(name, env)
        elif route == "retire":
            self._emit(name, env, retired=True)
        elif route == "rehydrate" and not self._has_out[name]:
            self._emit(name, env)
        else:
            self._dead(name, env, UnknownRoute(f"{name!r} has no edge for route {route!r}"))

    def _apply(self, stage: Stage, env: Envelope, out: Outcome):
        kind = out.kind
        if kind is OutcomeKind.FORWARD:
            if len(out.routes) > 1:
                self._counts["spawned"] += len(out.routes) - 1
            for route, derived in out.routes:
                self._route(stage.name, route, derived)
        elif kind is OutcomeKind.DROP:
            self._counts["dropped"] += 1
        elif kind is OutcomeKind.EMITTED:
            self._emit(stage.name, env)
        elif kind is OutcomeKind.RETIRED:
            if stage.kind is StageKind.SINK:
                self._emit(stage.name, env, retired=True)
            else:
                self._route(stage.name, "retire", env)
        elif kind is OutcomeKind.DEAD:
            self._dead(stage.name, env, out.error)
        # STORED: the dehydrator owns it now

    def _poll_dehydrators(self, now: int):
        for d in self._dehydrators:
            rehydrated, retired = d.poll_due(now)
            for env in retired:
                self._route(d.name, "retire", env)
            for env in rehydrated:
                self._route(d.name, "rehydrate", env)

    def run_until_idle(self) -> ExecutionReport:
        """Process until queues are empty and nothing is due at the current time."""
        with self._lock:
            stages = self.topology.stages
            while True:
                now = self.clock.now_ms
                self._poll_dehydrators(now)
                if not any(self.queues.values()):
                    break
                for name in self.topology.order:
                    q = self.queues[name]
                    stage = stages[name]
                    while q:
                        env = q.popleft()
                        self.processed[name] += 1
                        try:
                            out = stage.handle(env, now)
                        except Exception as err:  # application code failed
                            out = Outcome(OutcomeKind.DEAD, error=err)
                        self._apply(stage, env, out)
            return self.report()

    def next_wake(self) -> int | None:
        wakes = [w for w in (d.next_wake() for d in self._dehydrators) if w is not None]
        return min(wakes) if wakes else None

    def advance(self, delta_ms: int) -> int:
        """Move simulated time forward without processing anything."""
        return self.clock.advance(delta_ms)

    def run_until(self, target_ms: int) -> ExecutionReport:
        """Advance to ``target_ms`` stopping at every dehydrator wake on the way."""
        with self._lock:
            self.run_until_idle()
            while True:
                wake = self.next_wake()
                if wake is None or wake > target_ms:
                    break
                self.clock.advance_to(max(wake, self.clock.now_ms))
                self.run_until_idle()
            self.clock.advance_to(max(target_ms, self.clock.now_ms))
            return self.run_until_idle()

    def report(self) -> ExecutionReport:
        return ExecutionReport(
            processed=dict(self.processed),
            dehydrated=sum(d.pending() for d in self._dehydrators),
            cancelled=sum(d.cancelled_count for d in self._dehydrators),
            in_flight=sum(len(q) for q in self.queues.values()),
            **self._counts,
        )


def run(topology: Topology, envelopes: Iterable[Envelope], clock: Clock | None = None) -> ExecutionReport:
    """Submit a batch to a fresh runtime and process it."""
    rt = Runtime(topology, clock)
    for env in envelopes:
        rt.submit(env)
    return rt.run_until_idle()
