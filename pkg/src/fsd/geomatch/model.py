from __future__ import annotations

import enum
from dataclasses import dataclass

from .geo import check_coords


@dataclass(frozen=True, slots=True)
class Question:
    question_id: str
    lat_deg: float
    lon_deg: float
    radius_m: float
    created_ms: int
    max_age_ms: int

    def __post_init__(self):
        check_coords(self.lat_deg, self.lon_deg)
        if not self.radius_m > 0:
            raise ValueError(f"radius must be positive, got {self.radius_m}")
        if self.max_age_ms < 0:
            raise ValueError("max_age_ms must be non-negative")


@dataclass(frozen=True, slots=True)
class CandidateLocation:
    candidate_id: str
    lat_deg: float
    lon_deg: float
    reported_ms: int

    def __post_init__(self):
        check_coords(self.lat_deg, self.lon_deg)


class ActionKind(enum.IntEnum):
    # declaration order is the log sort order
    Send = 0
    RequestLocationUpdate = 1
    Dehydrate = 2
    Retire = 3


@dataclass(frozen=True, slots=True)
class ActionEvent:
    kind: ActionKind
    question_id: str
    candidate_id: str | None
    at_ms: int

    def sort_key(self):
        return (self.at_ms, int(self.kind), self.question_id, self.candidate_id or "")

    def format(self) -> str:
        return f"{self.kind.name} {self.question_id} {self.candidate_id or '-'} {self.at_ms}"

    @classmethod
    def parse(cls, line: str) -> ActionEvent:
        kind, qid, cid, at = line.split()
        return cls(ActionKind[kind], qid, None if cid == "-" else cid, int(at))


def format_log(events) -> str:
    return "".join(e.format() + "\n" for e in sorted(events, key=ActionEvent.sort_key))
