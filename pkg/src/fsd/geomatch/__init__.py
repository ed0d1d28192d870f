"""Real-time geo matching of questions against moving candidates."""
from ._kernels import BACKEND, NUMBA_ENABLED
from .geo import EARTH_RADIUS_M, haversine_m, query_boxes
from .index import (CandidateIndex, Match, QuestionHit, QuestionIndex, QuestionMatch,
                    ScanMatcher, UpsertResult, index_upsert, match_candidate, match_question,
                    scan_match_candidate, scan_match_question)
from .logic import business_decide
from .model import ActionEvent, ActionKind, CandidateLocation, Question, format_log
from .pipeline import GeoConfig, GeoMatchPipeline
from .ratelimit import RateLimiter, RateLimiterState
from .rtree import RTree

__all__ = [
    "BACKEND", "NUMBA_ENABLED", "EARTH_RADIUS_M", "haversine_m", "query_boxes",
    "CandidateIndex", "QuestionIndex", "Match", "QuestionHit", "QuestionMatch", "ScanMatcher",
    "UpsertResult", "index_upsert", "match_candidate", "match_question",
    "scan_match_candidate", "scan_match_question", "business_decide",
    "ActionEvent", "ActionKind", "CandidateLocation", "Question", "format_log",
    "GeoConfig", "GeoMatchPipeline", "RateLimiter", "RateLimiterState", "RTree",
]
