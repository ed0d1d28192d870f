"""Wall-clock benchmark of the geo pipeline.

Two measurements share one seeded workload:

* the full pipeline on a wall clock: a candidate census is loaded, then
  question arrivals and candidate moves are streamed (re-stamped with the
  current time) for the requested number of seconds, each admitted and
  processed to idle before the next;
* the bare match-and-decide path (index query plus business decision) in a
  tight loop against the same candidate index.

Everything runs on the calling thread.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import replace

from ..core import Clock
from ..geomatch._kernels import NUMBA_ENABLED
from ..geomatch.logic import business_decide
from ..geomatch.model import Question
from ..geomatch.pipeline import GeoConfig, GeoMatchPipeline
from ..geomatch.ratelimit import RateLimiter
from ..splitters import StateStore
from .replay import RunReport, build_report, percentile
from .scenario import CandidateReport, GeneratorConfig, QuestionArrival, generate_scenario


def _stream(events):
    """Endless question/move stream; question ids get a per-lap suffix."""
    live = [e for e in events if isinstance(e, (QuestionArrival, CandidateReport))]
    for lap in itertools.count():
        for e in live:
            if isinstance(e, QuestionArrival):
                q = e.question
                yield replace(q, question_id=f"{q.question_id}.{lap}") if lap else q
            else:
                yield e.location


def match_and_decide_rate(pipeline: GeoMatchPipeline, questions: list[Question],
                          seconds: float) -> tuple[float, int]:
    """Operations per second of index match + business decision."""
    cfg = pipeline.config
    limiter = RateLimiter(StateStore("bench-ratelimit"), cfg.bucket_capacity, cfg.refill_interval_ms)
    dedup = StateStore("bench-dedup")
    index = pipeline.candidates
    ops = 0
    deadline = time.perf_counter() + seconds
    start = time.perf_counter()
    for q in itertools.cycle(questions):
        match = index.match(q, cfg.edge_band(q))
        business_decide(match, dedup, limiter, q, q.created_ms, cfg.max_update_requests)
        ops += 1
        if ops % 64 == 0 and time.perf_counter() >= deadline:
            break
    elapsed = time.perf_counter() - start
    return ops / elapsed, ops


def bench(gen: GeneratorConfig | None = None, config: GeoConfig | None = None,
          seconds: float = 60.0, seed: int = 0, rate: float | None = None,
          queue_capacity: int = 1024) -> RunReport:
    """Run the benchmark; ``rate`` caps admitted events per second (None: flat out)."""
    gen = gen or GeneratorConfig()
    events = generate_scenario(seed, gen)
    clock = Clock.wall()
    pipeline = GeoMatchPipeline(config, clock, queue_capacity=queue_capacity)

    census = [e.location for e in events
              if isinstance(e, CandidateReport) and e.location.reported_ms == 0]
    t0 = time.perf_counter()
    for c in census:
        pipeline.submit_candidate(replace(c, reported_ms=clock.now_ms))
    pipeline.run_until_idle()
    load_s = time.perf_counter() - t0

    stream_s = seconds * 0.8
    service_us = []
    admitted = 0
    start = time.perf_counter()
    deadline = start + stream_s
    for item in _stream(events):
        now = time.perf_counter()
        if now >= deadline:
            break
        if rate is not None:
            due = start + admitted / rate
            if due > now:
                time.sleep(due - now)
        t = time.perf_counter()
        stamp = clock.now_ms
        if isinstance(item, Question):
            pipeline.submit_question(replace(item, created_ms=stamp))
        else:
            pipeline.submit_candidate(replace(item, reported_ms=stamp))
        pipeline.run_until_idle()
        service_us.append((time.perf_counter() - t) * 1e6)
        admitted += 1
    elapsed = time.perf_counter() - start

    questions = [e.question for e in events if isinstance(e, QuestionArrival)]
    md_rate, md_ops = match_and_decide_rate(pipeline, questions, seconds - stream_s)

    report = build_report(pipeline, throughput=admitted / elapsed if elapsed > 0 else 0.0)
    report.extra.update({
        "bench.candidates": (len(pipeline.candidates), "count"),
        "bench.events_admitted": (admitted, "count"),
        "bench.census_load": (load_s, "s"),
        "bench.service_p50": (percentile(service_us, 50), "us"),
        "bench.service_p99": (percentile(service_us, 99), "us"),
        "bench.match_and_decide": (md_rate, "ops/s"),
        "bench.match_and_decide_ops": (md_ops, "count"),
        "bench.backend": (int(NUMBA_ENABLED), "numba"),
    })
    return report
