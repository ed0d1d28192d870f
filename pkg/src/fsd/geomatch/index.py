"""R-tree backed candidate and question indexes, plus full-scan twins.

The R-tree only prunes.  Every hit is confirmed with the haversine distance,
and query boxes are inflated conservatively, so tree results equal what a
full scan with the same distance function returns.
"""
from __future__ import annotations

from typing import Mapping, NamedTuple

import numpy as np

from . import _kernels as K
from .geo import DEFAULT_INFLATION, query_boxes
from .model import CandidateLocation, Question
from .rtree import RTree


class Match(NamedTuple):
    candidate_id: str
    distance_m: float


class QuestionMatch:
    """Candidates inside a question's circle and in its edge band.

    Both sides are ordered by ``(distance, candidate_id)``.  Ids and
    distances are kept as parallel lists; :class:`Match` tuples are only
    built when asked for.
    """

    __slots__ = ("inside_ids", "inside_d", "near_ids", "near_d")

    def __init__(self, inside_ids, inside_d, near_ids, near_d):
        self.inside_ids = inside_ids
        self.inside_d = inside_d
        self.near_ids = near_ids
        self.near_d = near_d

    @classmethod
    def from_matches(cls, inside, near_edge) -> QuestionMatch:
        return cls([m.candidate_id for m in inside], [m.distance_m for m in inside],
                   [m.candidate_id for m in near_edge], [m.distance_m for m in near_edge])

    @property
    def inside(self) -> list[Match]:
        return list(map(Match, self.inside_ids, self.inside_d))

    @property
    def near_edge(self) -> list[Match]:
        return list(map(Match, self.near_ids, self.near_d))

    def ids(self):
        return (list(self.inside_ids), list(self.near_ids))

    def __eq__(self, other):
        if not isinstance(other, QuestionMatch):
            return NotImplemented
        return (self.inside_ids == other.inside_ids and self.inside_d == other.inside_d
                and self.near_ids == other.near_ids and self.near_d == other.near_d)

    def __repr__(self):
        return f"QuestionMatch(inside={self.inside!r}, near_edge={self.near_edge!r})"


class QuestionHit(NamedTuple):
    question_id: str
    ratio: float


class UpsertResult(NamedTuple):
    previous: CandidateLocation | None
    stale: bool = False


def _split_matches(pairs, radius_m: float) -> QuestionMatch:
    pairs.sort()
    inside = [Match(cid, d) for d, cid in pairs if d <= radius_m]
    near = [Match(cid, d) for d, cid in pairs if d > radius_m]
    return QuestionMatch.from_matches(inside, near)


def _split_arrays(ids: np.ndarray, d: np.ndarray, radius_m: float) -> QuestionMatch:
    order = np.argsort(d, kind="stable")
    d = d[order]
    ids = ids[order]
    if d.shape[0] > 1 and (d[1:] == d[:-1]).any():
        # exact distance ties are rare; let the tuple sort break them by id
        return _split_matches(list(zip(d.tolist(), ids.tolist())), radius_m)
    cut = int(np.searchsorted(d, radius_m, side="right"))
    return QuestionMatch(ids[:cut].tolist(), d[:cut].tolist(), ids[cut:].tolist(), d[cut:].tolist())


class CandidateIndex:
    """Latest known location per candidate, one R-tree point each."""

    def __init__(self, inflation: float = DEFAULT_INFLATION, max_entries: int = 16):
        self.inflation = inflation
        self.tree = RTree(max_entries=max_entries, node_capacity=256, entry_capacity=1024)
        self.locations: dict[str, CandidateLocation] = {}
        self._slot: dict[str, int] = {}
        self._owner = np.empty(0, dtype=object)

    def __len__(self):
        return len(self.locations)

    def __contains__(self, candidate_id):
        return candidate_id in self.locations

    def upsert(self, c: CandidateLocation) -> UpsertResult:
        prev = self.locations.get(c.candidate_id)
        if prev is not None and c.reported_ms < prev.reported_ms:
            return UpsertResult(prev, stale=True)
        box = (c.lon_deg, c.lat_deg, c.lon_deg, c.lat_deg)
        if prev is None:
            slot = self.tree.add(box)
            self._slot[c.candidate_id] = slot
            if slot >= self._owner.shape[0]:
                grown = np.empty(self.tree.ent_box.shape[0], dtype=object)
                grown[:self._owner.shape[0]] = self._owner
                self._owner = grown
            self._owner[slot] = c.candidate_id
        else:
            self.tree.move(self._slot[c.candidate_id], box)
        self.locations[c.candidate_id] = c
        return UpsertResult(prev)

    def remove(self, candidate_id: str) -> CandidateLocation | None:
        loc = self.locations.pop(candidate_id, None)
        if loc is not None:
            slot = self._slot.pop(candidate_id)
            self._owner[slot] = None
            self.tree.remove(slot)
        return loc

    def match(self, q: Question, edge_band_m: float) -> QuestionMatch:
        if edge_band_m < 0:
            raise ValueError("edge_band_m must be non-negative")
        limit = q.radius_m + edge_band_m
        boxes = query_boxes(q.lat_deg, q.lon_deg, limit, self.inflation)
        slots, dists = self.tree.query_within(boxes, q.lat_deg, q.lon_deg, limit)
        return _split_arrays(self._owner[slots], dists, q.radius_m)


class QuestionIndex:
    """Live questions as inflated circle boxes (two boxes across the antimeridian)."""

    def __init__(self, inflation: float = DEFAULT_INFLATION, max_entries: int = 16):
        self.inflation = inflation
        self.tree = RTree(max_entries=max_entries, node_capacity=64, entry_capacity=256)
        self.questions: dict[str, Question] = {}
        self._slots: dict[str, list[int]] = {}
        self._owner: dict[int, str] = {}
        self._resize()

    def _resize(self):
        cap = self.tree.ent_box.shape[0]
        old = getattr(self, "slot_lat", np.zeros(0))
        n = old.shape[0]
        if n >= cap:
            return
        lat, lon, rad = np.zeros(cap), np.zeros(cap), np.ones(cap)
        if n:
            lat[:n], lon[:n], rad[:n] = self.slot_lat, self.slot_lon, self.slot_rad
        self.slot_lat, self.slot_lon, self.slot_rad = lat, lon, rad

    def __len__(self):
        return len(self.questions)

    def __contains__(self, question_id):
        return question_id in self.questions

    def add(self, q: Question) -> bool:
        if q.question_id in self.questions:
            return False
        slots = []
        for box in query_boxes(q.lat_deg, q.lon_deg, q.radius_m, self.inflation):
            slot = self.tree.add(box)
            self._resize()
            self.slot_lat[slot] = q.lat_deg
            self.slot_lon[slot] = q.lon_deg
            self.slot_rad[slot] = q.radius_m
            self._owner[slot] = q.question_id
            slots.append(slot)
        self._slots[q.question_id] = slots
        self.questions[q.question_id] = q
        return True

    def remove(self, question_id: str) -> Question | None:
        q = self.questions.pop(question_id, None)
        if q is not None:
            for slot in self._slots.pop(question_id):
                del self._owner[slot]
                self.tree.remove(slot)
        return q

    def match(self, c: CandidateLocation) -> list[QuestionHit]:
        slots, ratios = self.tree.query_containing(
            c.lat_deg, c.lon_deg, self.slot_lat, self.slot_lon, self.slot_rad)
        best: dict[str, float] = {}
        owner = self._owner
        for s, r in zip(slots.tolist(), ratios.tolist()):
            qid = owner[s]
            if qid not in best or r < best[qid]:
                best[qid] = r
        return sorted((QuestionHit(q, r) for q, r in best.items()), key=lambda h: (h.ratio, h.question_id))


def index_upsert(index: CandidateIndex, c: CandidateLocation) -> UpsertResult:
    return index.upsert(c)


def match_question(index: CandidateIndex, q: Question, edge_band_m: float) -> QuestionMatch:
    return index.match(q, edge_band_m)


def match_candidate(question_index: QuestionIndex, c: CandidateLocation) -> list[QuestionHit]:
    return question_index.match(c)


# ---------------------------------------------------------------- full scans

class ScanMatcher:
    """Brute-force matcher over plain id -> location mappings.

    Uses the same distance kernel as the tree path so the comparison is
    exact; it just never prunes.
    """

    def __init__(self, locations: Mapping[str, CandidateLocation] | None = None):
        locations = locations or {}
        self.ids = sorted(locations)
        self._pos = {cid: i for i, cid in enumerate(self.ids)}
        self.lats = np.array([locations[i].lat_deg for i in self.ids], np.float64)
        self.lons = np.array([locations[i].lon_deg for i in self.ids], np.float64)
        self._n = len(self.ids)
        self._out = np.empty(self._n, np.int64)
        self._out_d = np.empty(self._n, np.float64)

    def __len__(self):
        return self._n

    def update(self, c: CandidateLocation):
        """Overwrite (or append) one candidate's position."""
        i = self._pos.get(c.candidate_id)
        if i is None:
            i = self._pos[c.candidate_id] = self._n
            self.ids.append(c.candidate_id)
            self._n += 1
            if self._n > self.lats.shape[0]:
                cap = max(16, 2 * self._n)
                for name in ("lats", "lons", "_out_d"):
                    grown = np.zeros(cap, np.float64)
                    old = getattr(self, name)
                    grown[:old.shape[0]] = old
                    setattr(self, name, grown)
                self._out = np.empty(cap, np.int64)
        self.lats[i] = c.lat_deg
        self.lons[i] = c.lon_deg

    def match(self, q: Question, edge_band_m: float) -> QuestionMatch:
        limit = q.radius_m + edge_band_m
        n = self._n
        k = K.scan_within(q.lat_deg, q.lon_deg, self.lats[:n], self.lons[:n], limit,
                          self._out, self._out_d)
        ids = self.ids
        pairs = [(d, ids[i]) for i, d in zip(self._out[:k].tolist(), self._out_d[:k].tolist())]
        return _split_matches(pairs, q.radius_m)


def scan_match_question(locations: Mapping[str, CandidateLocation], q: Question,
                        edge_band_m: float) -> QuestionMatch:
    return ScanMatcher(locations).match(q, edge_band_m)


def scan_match_candidate(questions: Mapping[str, Question], c: CandidateLocation) -> list[QuestionHit]:
    qs = list(questions.values())
    if not qs:
        return []
    lats = np.array([q.lat_deg for q in qs], np.float64)
    lons = np.array([q.lon_deg for q in qs], np.float64)
    d = K.distances(c.lat_deg, c.lon_deg, lats, lons, np.empty(len(qs)))
    hits = [QuestionHit(q.question_id, float(di) / q.radius_m)
            for q, di in zip(qs, d.tolist()) if di <= q.radius_m]
    return sorted(hits, key=lambda h: (h.ratio, h.question_id))
