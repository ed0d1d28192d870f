"""The geo-matching reference pipeline.

    matcher (cached filter) -> logic (memory splitter) -> dehydrator
       ^                                 |                  |  |
       +------------ rehydrate ----------+------------------+  |
                                         v                     v
                                      located               retired

Questions pass the matcher, which attaches their inside / near-edge
candidates, and the logic stage decides: send, ask for location updates,
park, or retire.  Parked questions come back through the feedback edge.
Candidate reports update the index; if a report lands inside a parked,
still-searching question the question is woken immediately.

A sent question is parked too, waiting for the answer.  An answer cancels
its ticket; without one it is retried and may go to the next-nearest
candidate, never to the same one twice.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

from ..core import (Clock, Envelope, Outcome, Runtime, Sink, Stage, StageKind,
                    build_topology)
from ..dehydrator import DehydrationPolicy, DehydratorStage
from ..filters import DROPPED, DecisionKind, FilterDecision, FilterStage
from ..splitters import StateStore
from .geo import DEFAULT_INFLATION
from .index import CandidateIndex, QuestionIndex, QuestionMatch
from .logic import business_decide, was_sent
from .model import ActionEvent, ActionKind, CandidateLocation, Question
from .ratelimit import RateLimiter

SEARCHING = "searching"
AWAITING = "awaiting"
ANSWERED = "answered"
RETIRED = "retired"


@dataclass(frozen=True)
class GeoConfig:
    base_interval_ms: int = 1000
    backoff_factor: float = 2.0
    max_interval_ms: int = 60_000
    max_age_ms: int = 15 * 60 * 1000
    max_retries: int | None = None
    edge_band_fraction: float = 0.1
    edge_band_m: float | None = None
    bucket_capacity: int = 3
    refill_interval_ms: int = 60_000
    max_update_requests: int = 3
    rtree_inflation: float = DEFAULT_INFLATION
    rtree_max_entries: int = 16

    def policy(self, max_age_ms: int | None = None) -> DehydrationPolicy:
        return DehydrationPolicy(
            max_age_ms=self.max_age_ms if max_age_ms is None else max_age_ms,
            base_interval_ms=self.base_interval_ms, backoff_factor=self.backoff_factor,
            max_interval_ms=self.max_interval_ms, max_retries=self.max_retries)

    def edge_band(self, q: Question) -> float:
        if self.edge_band_m is not None:
            return self.edge_band_m
        return self.edge_band_fraction * q.radius_m

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class MatcherStage(FilterStage):
    """Cached filter: keeps both indexes and intersects each arrival with the other side."""

    def __init__(self, name: str, pipeline: GeoMatchPipeline):
        super().__init__(name)
        self.p = pipeline

    def decide(self, env):
        p = self.p
        item = env.payload
        if isinstance(item, Question):
            p.questions.add(item)
            match = p.candidates.match(item, p.config.edge_band(item))
            if p.observer is not None:
                p.observer.question_matched(p, item, match)
            return FilterDecision(DecisionKind.SOFT, score=float(len(match.inside_ids)), detail=match)
        if isinstance(item, CandidateLocation):
            if p.candidates.upsert(item).stale:
                return DROPPED
            hits = p.questions.match(item)
            if p.observer is not None:
                p.observer.candidate_matched(p, item, hits)
            return FilterDecision(DecisionKind.SOFT, score=float(len(hits)), detail=hits)
        raise TypeError(f"matcher cannot handle {type(item).__name__}")


class LogicStage(Stage):
    """Memory splitter: dedup, rate limits and question state live in shared stores."""

    kind = StageKind.SPLITTER

    def __init__(self, name: str, pipeline: GeoMatchPipeline):
        super().__init__(name)
        self.p = pipeline

    def handle(self, env, now_ms):
        p = self.p
        item = env.payload
        if isinstance(item, Question):
            match: QuestionMatch = env.decision.detail
            snapshot = p.observer.before_decide(p, item, match, now_ms) if p.observer else None
            events = business_decide(match, p.dedup, p.limiter, item, now_ms,
                                     p.config.max_update_requests)
            if p.observer is not None:
                p.observer.decided(p, item, match, snapshot, now_ms, events)
            if events[0].kind is ActionKind.Retire:
                # the retired sink records the Retire event
                return Outcome.forward(env, "retire")
            for ev in events:
                p.record(ev, env)
            sent = events[0].kind is ActionKind.Send
            p.states.put(item.question_id, AWAITING if sent else SEARCHING)
            return Outcome.forward(env, "dehydrate")
        if isinstance(item, CandidateLocation):
            cid = item.candidate_id
            for hit in env.decision.detail:
                qid = hit.question_id
                if p.states.get(qid) == SEARCHING and not was_sent(p.dedup, qid, cid):
                    p.dehydrator.expedite(qid, now_ms)
            return Outcome.forward(env, "located")
        raise TypeError(f"logic cannot handle {type(item).__name__}")


class GeoMatchPipeline:
    """Wires the stages into a topology and drives it through a :class:`Runtime`."""

    def __init__(self, config: GeoConfig | None = None, clock: Clock | None = None,
                 observer=None, keep_latencies: bool = True, queue_capacity: int | None = None):
        self.config = config = config or GeoConfig()
        self.clock = clock or Clock()
        self.observer = observer
        self.candidates = CandidateIndex(config.rtree_inflation, config.rtree_max_entries)
        self.questions = QuestionIndex(config.rtree_inflation, config.rtree_max_entries)
        self.dedup = StateStore("dedup")
        self.states = StateStore("questions")
        self.limiter = RateLimiter(StateStore("ratelimit"), config.bucket_capacity,
                                   config.refill_interval_ms)
        self.events: list[ActionEvent] = []
        self.latencies: list[int] = []
        self.keep_latencies = keep_latencies
        self._reports = 0

        self.matcher = MatcherStage("matcher", self)
        self.logic = LogicStage("logic", self)
        self.dehydrator = DehydratorStage("dehydrator", config.policy(), self._override)
        self.retired = Sink("retired", category="retired", on_receive=self._on_retired, keep=False)
        self.located = Sink("located", keep=False)
        self.topology = build_topology({
            "stages": [self.matcher, self.logic, self.dehydrator, self.retired, self.located],
            "edges": [
                ("matcher", "logic"),
                ("logic", "dehydrator", "dehydrate"),
                ("logic", "retired", "retire"),
                ("logic", "located", "located"),
                ("dehydrator", "matcher", "rehydrate", True),
                ("dehydrator", "retired", "retire"),
            ],
            "entry": "matcher",
        })
        self.runtime = Runtime(self.topology, self.clock, queue_capacity)

    def _override(self, env: Envelope) -> DehydrationPolicy | None:
        q = env.payload
        if not isinstance(q, Question):
            return None
        # the question's own lifetime, measured from its creation time
        return self.config.policy(max(0, q.max_age_ms - (env.first_seen_ms - q.created_ms)))

    def record(self, ev: ActionEvent, env: Envelope | None = None):
        self.events.append(ev)
        if env is not None and self.keep_latencies:
            self.latencies.append(ev.at_ms - env.event_time_ms)

    def _on_retired(self, env: Envelope, now_ms: int):
        q = env.payload
        self.states.put(q.question_id, RETIRED)
        self.questions.remove(q.question_id)
        self.record(ActionEvent(ActionKind.Retire, q.question_id, None, now_ms), env)

    # -- inputs

    def submit_question(self, q: Question) -> Envelope:
        if q.question_id in self.states:
            raise ValueError(f"duplicate question id {q.question_id!r}")
        self.states.put(q.question_id, SEARCHING)
        return self.runtime.submit(Envelope(q.question_id, q, q.created_ms))

    def submit_candidate(self, c: CandidateLocation) -> Envelope:
        self._reports += 1
        return self.runtime.submit(Envelope(f"{c.candidate_id}@{self._reports}", c, c.reported_ms))

    def answer(self, question_id: str, candidate_id: str) -> bool:
        """A candidate answered: stop retrying the question.  False if not applicable."""
        if self.states.get(question_id) not in (SEARCHING, AWAITING):
            return False
        if not was_sent(self.dedup, question_id, candidate_id):
            return False
        if self.dehydrator.cancel(question_id) is None:
            return False
        self.states.put(question_id, ANSWERED)
        self.questions.remove(question_id)
        return True

    # -- time

    def run_until_idle(self):
        return self.runtime.run_until_idle()

    def run_until(self, target_ms: int):
        return self.runtime.run_until(target_ms)

    def report(self):
        return self.runtime.report()
