"""Deterministic scenario replay on a simulated clock."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core import Clock, ExecutionReport
from ..geomatch.model import ActionEvent, ActionKind, format_log
from ..geomatch.pipeline import GeoConfig, GeoMatchPipeline
from .scenario import Advance, Answer, CandidateReport, QuestionArrival, ScenarioEvent, parse_scenario


def latency_histogram(latencies) -> dict[str, int]:
    """Counts per power-of-two millisecond bucket, labelled by upper bound."""
    hist: dict[str, int] = {}
    for v in latencies:
        bound = 0 if v <= 0 else 1 << int(v - 1).bit_length()
        label = f"<={bound}"
        hist[label] = hist.get(label, 0) + 1
    return dict(sorted(hist.items(), key=lambda kv: int(kv[0][2:])))


def percentile(values, q: float) -> float:
    if len(values) == 0:
        return 0.0
    return float(np.percentile(np.asarray(values, dtype=np.float64), q))


@dataclass
class RunReport:
    counts: ExecutionReport
    events: list[ActionEvent]
    latency_hist: dict[str, int] = field(default_factory=dict)
    latency_p50_ms: float = 0.0
    latency_p99_ms: float = 0.0
    throughput: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    pipeline: GeoMatchPipeline | None = field(default=None, repr=False, compare=False)

    @property
    def log(self) -> str:
        return format_log(self.events)

    def kind_counts(self) -> dict[str, int]:
        out = {k.name: 0 for k in ActionKind}
        for e in self.events:
            out[e.kind.name] += 1
        return out

    def metrics(self) -> list[tuple[str, float, str]]:
        rows = [(f"events.{k}", v, "count") for k, v in self.kind_counts().items()]
        c = self.counts
        rows += [
            ("envelopes.submitted", c.submitted, "count"),
            ("envelopes.emitted", c.emitted, "count"),
            ("envelopes.dropped", c.dropped, "count"),
            ("envelopes.dead_lettered", c.dead_lettered, "count"),
            ("envelopes.retired", c.retired, "count"),
            ("envelopes.dehydrated", c.dehydrated, "count"),
            ("envelopes.cancelled", c.cancelled, "count"),
            ("conservation.ok", int(c.conserved), "bool"),
            ("latency.p50", self.latency_p50_ms, "ms"),
            ("latency.p99", self.latency_p99_ms, "ms"),
        ]
        rows += [(f"latency.hist.le_{k[2:]}ms", v, "count") for k, v in self.latency_hist.items()]
        rows += [(f"stage.{k}.processed", v, "count") for k, v in c.processed.items()]
        if self.throughput is not None:
            rows.append(("throughput", self.throughput, "events/s"))
        for k, (v, unit) in self.extra.items():
            rows.append((k, v, unit))
        return rows


def drive(pipeline: GeoMatchPipeline, events: list[ScenarioEvent], on_event=None, stop=None):
    """Feed scenario events into ``pipeline`` in time order.

    ``stop`` is polled before each event; a true result ends the run early.
    """
    cursor = pipeline.clock.now_ms
    for ev in events:
        if stop is not None and stop():
            return
        if isinstance(ev, Advance):
            cursor += ev.delta_ms
            pipeline.run_until(cursor)
            continue
        t = ev.t_ms
        if t > cursor:
            cursor = t
        pipeline.run_until(cursor)
        if on_event is not None:
            on_event(ev)
        if isinstance(ev, QuestionArrival):
            pipeline.submit_question(ev.question)
        elif isinstance(ev, CandidateReport):
            pipeline.submit_candidate(ev.location)
        elif isinstance(ev, Answer):
            pipeline.answer(ev.question_id, ev.candidate_id)
        pipeline.run_until_idle()
    pipeline.run_until_idle()


def build_report(pipeline: GeoMatchPipeline, throughput: float | None = None) -> RunReport:
    lat = pipeline.latencies
    events = sorted(pipeline.events, key=ActionEvent.sort_key)
    return RunReport(pipeline.report(), events, latency_histogram(lat),
                     percentile(lat, 50), percentile(lat, 99), throughput, pipeline=pipeline)


def replay(scenario: str | list[ScenarioEvent], config: GeoConfig | None = None,
           observer=None) -> RunReport:
    """Replay a scenario (text or parsed events) on a fresh simulated pipeline."""
    events = parse_scenario(scenario) if isinstance(scenario, str) else scenario
    pipeline = GeoMatchPipeline(config, Clock(), observer=observer)
    drive(pipeline, events)
    return build_report(pipeline)
