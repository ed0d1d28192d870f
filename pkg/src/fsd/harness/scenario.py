"""Line-oriented scenario files and a seeded random scenario generator.

Grammar, one event per line, fields separated by spaces::

    Q <question_id> <lat> <lon> <radius_m> <t_ms> <max_age_ms>
    C <candidate_id> <lat> <lon> <t_ms>
    A <question_id> <candidate_id> <t_ms>
    T <delta_ms>

``#`` starts a comment.  Event times never go backwards; ``T`` moves the
scenario cursor forward by ``delta_ms``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Union

from ..geomatch.model import CandidateLocation, Question


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class QuestionArrival:
    question: Question

    @property
    def t_ms(self):
        return self.question.created_ms


@dataclass(frozen=True)
class CandidateReport:
    location: CandidateLocation

    @property
    def t_ms(self):
        return self.location.reported_ms


@dataclass(frozen=True)
class Answer:
    question_id: str
    candidate_id: str
    t_ms: int


@dataclass(frozen=True)
class Advance:
    delta_ms: int


ScenarioEvent = Union[QuestionArrival, CandidateReport, Answer, Advance]

_ARITY = {"Q": 7, "C": 5, "A": 4, "T": 2}


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(lineno, f"{what} must be an integer, got {tok!r}") from None


def _float(tok: str, lineno: int, what: str) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise ParseError(lineno, f"{what} must be a number, got {tok!r}") from None
    if not math.isfinite(value):
        raise ParseError(lineno, f"{what} must be finite")
    return value


def parse_scenario(text: str) -> list[ScenarioEvent]:
    events: list[ScenarioEvent] = []
    cursor = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        tag = fields[0]
        if tag not in _ARITY:
            raise ParseError(lineno, f"unknown event type {tag!r}")
        if len(fields) != _ARITY[tag]:
            raise ParseError(lineno, f"{tag} takes {_ARITY[tag] - 1} fields, got {len(fields) - 1}")
        if tag == "T":
            delta = _int(fields[1], lineno, "delta_ms")
            if delta < 0:
                raise ParseError(lineno, f"negative advance {delta}")
            cursor += delta
            events.append(Advance(delta))
            continue
        t = _int(fields[-1] if tag != "Q" else fields[5], lineno, "t_ms")
        if t < cursor:
            raise ParseError(lineno, f"time goes backwards ({t} < {cursor})")
        cursor = t
        try:
            if tag == "Q":
                q = Question(fields[1], _float(fields[2], lineno, "lat"), _float(fields[3], lineno, "lon"),
                             _float(fields[4], lineno, "radius_m"), t,
                             _int(fields[6], lineno, "max_age_ms"))
                events.append(QuestionArrival(q))
            elif tag == "C":
                c = CandidateLocation(fields[1], _float(fields[2], lineno, "lat"),
                                      _float(fields[3], lineno, "lon"), t)
                events.append(CandidateReport(c))
            else:
                events.append(Answer(fields[1], fields[2], t))
        except ParseError:
            raise
        except ValueError as err:
            raise ParseError(lineno, str(err)) from None
    return events


def _num(x: float) -> str:
    return repr(float(x))


def format_event(ev: ScenarioEvent) -> str:
    if isinstance(ev, QuestionArrival):
        q = ev.question
        return (f"Q {q.question_id} {_num(q.lat_deg)} {_num(q.lon_deg)} {_num(q.radius_m)} "
                f"{q.created_ms} {q.max_age_ms}")
    if isinstance(ev, CandidateReport):
        c = ev.location
        return f"C {c.candidate_id} {_num(c.lat_deg)} {_num(c.lon_deg)} {c.reported_ms}"
    if isinstance(ev, Answer):
        return f"A {ev.question_id} {ev.candidate_id} {ev.t_ms}"
    return f"T {ev.delta_ms}"


def format_scenario(events) -> str:
    return "".join(format_event(e) + "\n" for e in events)


# ---------------------------------------------------------------- generator

@dataclass(frozen=True)
class GeneratorConfig:
    n_candidates: int = 10_000
    n_questions: int = 1_000
    lat_min: float = 32.0
    lat_max: float = 32.2
    lon_min: float = 34.7
    lon_max: float = 34.9
    radius_min_m: float = 100.0
    radius_max_m: float = 2000.0
    question_max_age_ms: int = 15 * 60 * 1000
    duration_ms: int = 10 * 60 * 1000
    move_fraction: float = 0.2
    answer_fraction: float = 0.05


REGIONS = {
    # name: (lat_min, lat_max, lon_min, lon_max); lon_min > lon_max wraps the antimeridian
    "city": (32.0, 32.2, 34.7, 34.9),
    "country": (29.5, 33.3, 34.2, 35.9),
    "antimeridian": (-18.0, -16.0, 179.0, -179.0),
    "arctic": (83.0, 89.9, -180.0, 179.999),
    "equator": (-0.5, 0.5, -0.5, 0.5),
}


def _lon(rng: random.Random, lo: float, hi: float) -> float:
    if lo <= hi:
        return rng.uniform(lo, hi)
    x = rng.uniform(lo, hi + 360.0)
    return x - 360.0 if x >= 180.0 else x


def _clip_lon(x: float) -> float:
    return ((x + 180.0) % 360.0) - 180.0


def generate_scenario(seed: int, gen: GeneratorConfig | None = None) -> list[ScenarioEvent]:
    """Seeded random scenario: an initial candidate census, then interleaved
    question arrivals, candidate moves and answers, then enough idle time for
    every question to reach its lifetime."""
    gen = gen or GeneratorConfig()
    rng = random.Random(seed)
    cands = [f"c{i}" for i in range(gen.n_candidates)]

    def point():
        return rng.uniform(gen.lat_min, gen.lat_max), _lon(rng, gen.lon_min, gen.lon_max)

    timed: list[tuple[int, int, ScenarioEvent]] = []
    seq = 0
    pos = {}
    for cid in cands:
        lat, lon = pos[cid] = point()
        timed.append((0, seq, CandidateReport(CandidateLocation(cid, lat, lon, 0))))
        seq += 1
    qids = []
    for i in range(gen.n_questions):
        t = rng.randrange(0, max(1, gen.duration_ms))
        lat, lon = point()
        r = rng.uniform(gen.radius_min_m, gen.radius_max_m)
        qid = f"q{i}"
        qids.append((qid, t))
        timed.append((t, seq, QuestionArrival(Question(qid, lat, lon, r, t, gen.question_max_age_ms))))
        seq += 1
    moves = sorted(rng.randrange(1, max(2, gen.duration_ms))
                   for _ in range(int(gen.move_fraction * gen.n_candidates)))
    for t in moves:
        cid = rng.choice(cands)
        if rng.random() < 0.5:
            lat, lon = point()
        else:
            # nudge up to ~2 km so candidates drift across question edges
            lat, lon = pos[cid]
            lat = max(-90.0, min(90.0, lat + rng.uniform(-0.02, 0.02)))
            lon = _clip_lon(lon + rng.uniform(-0.02, 0.02))
        pos[cid] = (lat, lon)
        timed.append((t, seq, CandidateReport(CandidateLocation(cid, lat, lon, t))))
        seq += 1
    for _ in range(int(gen.answer_fraction * gen.n_questions)):
        if not qids:
            break
        qid, t0 = rng.choice(qids)
        t = t0 + rng.randrange(0, 120_000)
        timed.append((t, seq, Answer(qid, rng.choice(cands), t)))
        seq += 1
    timed.sort(key=lambda x: (x[0], x[1]))
    events: list[ScenarioEvent] = [ev for _, _, ev in timed]
    events.append(Advance(gen.question_max_age_ms + 2 * 60_000))
    return events


def region_config(name: str, **overrides) -> GeneratorConfig:
    lat_min, lat_max, lon_min, lon_max = REGIONS[name]
    return GeneratorConfig(lat_min=lat_min, lat_max=lat_max, lon_min=lon_min, lon_max=lon_max,
                           **overrides)
