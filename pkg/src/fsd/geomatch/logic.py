"""Business decision for a matched question."""
from __future__ import annotations

from ..splitters import StateStore, VersionConflict
from .index import QuestionMatch
from .model import ActionEvent, ActionKind, Question
from .ratelimit import RateLimiter


def sent_key(question_id: str, candidate_id: str):
    return ("sent", question_id, candidate_id)


def was_sent(dedup: StateStore, question_id: str, candidate_id: str) -> bool:
    return sent_key(question_id, candidate_id) in dedup


def claim_send(dedup: StateStore, question_id: str, candidate_id: str, now_ms: int) -> bool:
    """Atomically record a (question, candidate) send; False if it already happened."""
    try:
        dedup.compare_and_put(sent_key(question_id, candidate_id), 0, now_ms)
    except VersionConflict:
        return False
    return True


def business_decide(matches: QuestionMatch, dedup: StateStore, limiter: RateLimiter,
                    q: Question, now_ms: int, max_requests: int = 3) -> list[ActionEvent]:
    """Decide what to do with ``q`` given its current matches.

    Too old: retire.  Otherwise send to the nearest inside candidate that
    has not had it yet.  Failing that, ask up to ``max_requests`` near-edge
    candidates (those with a free token) for a fresh location and park the
    question; with nobody near the edge, just park it.
    """
    qid = q.question_id
    if now_ms - q.created_ms > q.max_age_ms:
        return [ActionEvent(ActionKind.Retire, qid, None, now_ms)]
    for cid in matches.inside_ids:
        # the membership test is only a shortcut; the claim is what dedups
        if not was_sent(dedup, qid, cid) and claim_send(dedup, qid, cid, now_ms):
            return [ActionEvent(ActionKind.Send, qid, cid, now_ms)]
    events = []
    for cid in matches.near_ids:
        if len(events) >= max_requests:
            break
        if limiter.try_acquire(cid, now_ms):
            events.append(ActionEvent(ActionKind.RequestLocationUpdate, qid, cid, now_ms))
    events.append(ActionEvent(ActionKind.Dehydrate, qid, None, now_ms))
    return events
