"""Run the pipeline next to a brute-force twin and report the first disagreement.

The twin keeps its own latest-wins copy of every candidate position and
answers each question match with a full haversine scan.  Candidate-side
matches are checked against a scan over the live questions.  Each business
decision is recomputed from a decision table fed with the inputs observed
just before the pipeline decided (sent flags, free tokens).  After the run
the action log is audited for duplicate sends and rate-limit overruns.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..core import Clock
from ..geomatch.index import QuestionMatch, ScanMatcher, scan_match_candidate
from ..geomatch.logic import was_sent
from ..geomatch.model import ActionEvent, ActionKind
from ..geomatch.pipeline import GeoConfig, GeoMatchPipeline
from .replay import RunReport, build_report, drive
from .scenario import (REGIONS, CandidateReport, GeneratorConfig, ScenarioEvent, generate_scenario,
                       parse_scenario, region_config)


@dataclass
class OracleResult:
    ok: bool
    divergence: str | None = None
    checks: int = 0
    report: RunReport | None = field(default=None, repr=False)

    def summary(self) -> str:
        if self.ok:
            return f"PASS ({self.checks} checks)"
        return f"FAIL after {self.checks} checks: {self.divergence}"


def decision_table(q, inside_sent: list[tuple[str, bool]], near_tokens: list[tuple[str, int]],
                   now_ms: int, max_requests: int) -> list[ActionEvent]:
    """Reference decision from pre-decision inputs, spelled out branch by branch."""
    qid = q.question_id
    expired = now_ms - q.created_ms > q.max_age_ms
    unsent = [cid for cid, sent in inside_sent if not sent]
    askable = [cid for cid, tokens in near_tokens if tokens > 0][:max_requests]
    if expired:
        return [ActionEvent(ActionKind.Retire, qid, None, now_ms)]
    if unsent:
        return [ActionEvent(ActionKind.Send, qid, unsent[0], now_ms)]
    out = [ActionEvent(ActionKind.RequestLocationUpdate, qid, cid, now_ms) for cid in askable]
    out.append(ActionEvent(ActionKind.Dehydrate, qid, None, now_ms))
    return out


class OracleObserver:
    # Hooks run inside pipeline stages, where exceptions become dead letters,
    # so a divergence is recorded here and the driver stops on the next event.

    def __init__(self):
        self.shadow = ScanMatcher()
        self.latest: dict[str, int] = {}
        self.checks = 0
        self.divergence: str | None = None

    def _fail(self, msg: str):
        if self.divergence is None:
            self.divergence = msg

    def on_event(self, ev: ScenarioEvent):
        if isinstance(ev, CandidateReport):
            c = ev.location
            prev = self.latest.get(c.candidate_id)
            if prev is None or c.reported_ms >= prev:
                self.latest[c.candidate_id] = c.reported_ms
                self.shadow.update(c)

    # -- pipeline hooks

    def question_matched(self, p: GeoMatchPipeline, q, match: QuestionMatch):
        self.checks += 1
        want = self.shadow.match(q, p.config.edge_band(q))
        got, ref = match.ids(), want.ids()
        if got != ref:
            parts = []
            for label, g, w in (("inside", got[0], ref[0]), ("near_edge", got[1], ref[1])):
                missing, extra = sorted(set(w) - set(g)), sorted(set(g) - set(w))
                if missing or extra:
                    parts.append(f"{label} missing={missing[:5]} extra={extra[:5]}")
                elif g != w:
                    parts.append(f"{label} order differs")
            self._fail(f"t={p.clock.now_ms} question {q.question_id}: " + "; ".join(parts))

    def candidate_matched(self, p: GeoMatchPipeline, c, hits):
        self.checks += 1
        want = scan_match_candidate(p.questions.questions, c)
        got_ids = [h.question_id for h in hits]
        want_ids = [h.question_id for h in want]
        if got_ids != want_ids:
            self._fail(f"t={p.clock.now_ms} candidate {c.candidate_id}: tree {got_ids}, scan {want_ids}")

    def before_decide(self, p: GeoMatchPipeline, q, match: QuestionMatch, now_ms: int):
        qid = q.question_id
        inside = []
        for cid in match.inside_ids:
            sent = was_sent(p.dedup, qid, cid)
            inside.append((cid, sent))
            if not sent:
                break  # nothing past the first unsent candidate can matter
        near = [(cid, p.limiter.available(cid, now_ms)) for cid in match.near_ids]
        return inside, near

    def decided(self, p: GeoMatchPipeline, q, match, snapshot, now_ms: int, events):
        self.checks += 1
        want = decision_table(q, snapshot[0], snapshot[1], now_ms, p.config.max_update_requests)
        if list(events) != want:
            self._fail(f"t={now_ms} question {q.question_id}: decided "
                       f"{[e.format() for e in events]}, table says {[e.format() for e in want]}")


def audit_no_duplicate_send(events) -> str | None:
    seen = set()
    for e in events:
        if e.kind is ActionKind.Send:
            pair = (e.question_id, e.candidate_id)
            if pair in seen:
                return f"duplicate Send {pair} at {e.at_ms}"
            seen.add(pair)
    return None


def audit_rate_limit(events, capacity: int, window_ms: int) -> str | None:
    """Every half-open window ``[t, t + window_ms)`` holds at most ``capacity``
    requests per candidate.  Checking windows that start at a request suffices."""
    per: dict[str, list[int]] = {}
    for e in events:
        if e.kind is ActionKind.RequestLocationUpdate:
            per.setdefault(e.candidate_id, []).append(e.at_ms)
    for cid, times in per.items():
        times.sort()
        j = 0
        for i, t in enumerate(times):
            while times[j] < t - window_ms + 1:
                j += 1
            if i - j + 1 > capacity:
                return f"candidate {cid}: {i - j + 1} requests within {window_ms} ms ending at {t}"
    return None


def campaign_config(seed: int, full_size: bool = False) -> GeneratorConfig:
    """Generator settings for one seed of a randomized campaign.

    Sizes are drawn log-uniformly up to 10,000 candidates and 1,000
    questions so that a 100-seed campaign stays cheap; ``full_size`` pins
    both at the maximum.  Regions rotate so every geometry case is hit.
    """
    rng = random.Random(f"campaign-{seed}")
    names = sorted(REGIONS)
    region = names[seed % len(names)]
    if full_size:
        nc, nq = 10_000, 1_000
    else:
        nc = int(round(10 ** rng.uniform(2, 4)))
        nq = int(round(10 ** rng.uniform(1, 3)))
    return region_config(region, n_candidates=nc, n_questions=nq)


def oracle_check(scenario: str | list[ScenarioEvent] | int, config: GeoConfig | None = None,
                 gen: GeneratorConfig | None = None) -> OracleResult:
    """Replay ``scenario`` (text, events, or a generator seed) under the oracle."""
    config = config or GeoConfig()
    if isinstance(scenario, int):
        events = generate_scenario(scenario, gen or campaign_config(scenario))
    elif isinstance(scenario, str):
        events = parse_scenario(scenario)
    else:
        events = scenario
    obs = OracleObserver()
    pipeline = GeoMatchPipeline(config, Clock(), observer=obs)
    drive(pipeline, events, on_event=obs.on_event, stop=lambda: obs.divergence is not None)
    if obs.divergence is not None:
        return OracleResult(False, obs.divergence, obs.checks)
    report = build_report(pipeline)
    for problem in (audit_no_duplicate_send(report.events),
                    audit_rate_limit(report.events, config.bucket_capacity, config.refill_interval_ms),
                    None if report.counts.conserved else f"conservation broken: {report.counts.as_dict()}",
                    None if not report.counts.dead_lettered else
                    f"{report.counts.dead_lettered} envelopes dead-lettered"):
        if problem is not None:
            return OracleResult(False, problem, obs.checks, report)
    return OracleResult(True, None, obs.checks, report)
