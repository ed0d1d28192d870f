"""Filter stages: stateless predicates and bounded top-X aggregation.

Filters reduce the flow.  They decide, they never rewrite payloads: a
passing envelope continues with the decision attached in its ``decision``
slot.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

from .core import DROP, Envelope, Outcome, OutcomeKind, Stage, StageKind


class DecisionKind(enum.Enum):
    PASS = "Pass"
    DROP = "Drop"
    SOFT = "Soft"


@dataclass(frozen=True)
class FilterDecision:
    kind: DecisionKind
    score: float | None = None
    margin_of_error: float | None = None
    candidate_set: tuple[Envelope, ...] = ()
    candidate_scores: tuple[float, ...] = ()
    detail: Any = None

    def __post_init__(self):
        if self.kind is not DecisionKind.SOFT:
            if self.score is not None or self.margin_of_error is not None or self.candidate_set:
                raise ValueError("Pass/Drop decisions carry no score")
        elif self.score is None and not self.candidate_set and self.detail is None:
            raise ValueError("a Soft decision needs a score or a candidate set")
        if self.margin_of_error is not None and self.margin_of_error < 0:
            raise ValueError("margin_of_error must be non-negative")

    @property
    def ids(self) -> list[str]:
        return [e.element_id for e in self.candidate_set]


PASS = FilterDecision(DecisionKind.PASS)
DROPPED = FilterDecision(DecisionKind.DROP)


class PredicateFailure(RuntimeError):
    pass


class EmptyTierList(ValueError):
    pass


def stateless_filter(predicate: Callable[[Envelope], bool], env: Envelope) -> FilterDecision:
    try:
        ok = predicate(env)
    except Exception as err:
        raise PredicateFailure(f"predicate failed on {env.element_id}") from err
    return PASS if ok else DROPPED


@dataclass(frozen=True)
class AggregationFilterConfig:
    x: int
    score_fn: Callable[[Envelope], float]
    tier_index: int = 0

    def __post_init__(self):
        if self.x < 1:
            raise ValueError("x must be >= 1")


def _rank(score: float, element_id: str):
    # best first: descending score, then ascending id
    return (-score, element_id)


@dataclass
class TopXState:
    """Bounded top-X state: at most ``x`` ranked entries plus a seen counter."""

    keys: list = field(default_factory=list)
    envs: dict[str, tuple[float, Envelope]] = field(default_factory=dict)
    seen: int = 0

    def offer(self, score: float, env: Envelope, x: int) -> bool:
        eid = env.element_id
        if eid in self.envs:
            self.remove(eid)
        key = _rank(score, eid)
        if len(self.keys) >= x and key >= self.keys[-1]:
            return False
        bisect.insort(self.keys, key)
        self.envs[eid] = (score, env)
        if len(self.keys) > x:
            _, evicted = self.keys.pop()
            del self.envs[evicted]
        return True

    def remove(self, element_id: str):
        score, _ = self.envs.pop(element_id)
        self.keys.remove(_rank(score, element_id))

    def decision(self, score: float | None = None) -> FilterDecision:
        envs = tuple(self.envs[eid][1] for _, eid in self.keys)
        scores = tuple(-s for s, _ in self.keys)
        return FilterDecision(DecisionKind.SOFT, score=score, candidate_set=envs,
                              candidate_scores=scores)


def _score(cfg: AggregationFilterConfig, env: Envelope) -> float:
    try:
        return float(cfg.score_fn(env))
    except Exception as err:
        raise PredicateFailure(f"score_fn failed on {env.element_id}") from err


def aggregation_filter_step(state: TopXState, env: Envelope,
                            cfg: AggregationFilterConfig) -> FilterDecision:
    """Fold ``env`` into ``state`` and return the current top-X as a Soft decision."""
    score = _score(cfg, env)
    state.seen += 1
    state.offer(score, env, cfg.x)
    return state.decision(score)


class TieredFilter:
    """Chain of aggregation tiers.

    Tier ``i+1`` sees tier ``i``'s candidate set as its input stream: it
    keeps a private mirror of that set (scored with its own ``score_fn``)
    and publishes the top ``x`` of it.  Elements that fall out of a tier
    leave every tier below it; nothing is shared between tiers.
    """

    def __init__(self, tiers: Sequence[AggregationFilterConfig]):
        if not tiers:
            raise EmptyTierList("at least one tier is required")
        self.tiers = list(tiers)
        self.head = TopXState()
        # mirrors[i] holds the upstream set for tier i+1, keyed by element_id
        self.mirrors: list[dict[str, tuple[float, Envelope]]] = [{} for _ in tiers[1:]]
        self.last: FilterDecision | None = None

    def step(self, env: Envelope) -> FilterDecision:
        first = self.tiers[0]
        decision = aggregation_filter_step(self.head, env, first)
        for i, cfg in enumerate(self.tiers[1:]):
            mirror = self.mirrors[i]
            upstream = {e.element_id: e for e in decision.candidate_set}
            for eid in [k for k in mirror if k not in upstream]:
                del mirror[eid]
            for eid, e in upstream.items():
                if eid not in mirror:
                    mirror[eid] = (_score(cfg, e), e)
            ranked = sorted(mirror.items(), key=lambda kv: _rank(kv[1][0], kv[0]))[:cfg.x]
            decision = FilterDecision(
                DecisionKind.SOFT, score=decision.score,
                candidate_set=tuple(e for _, (_, e) in ranked),
                candidate_scores=tuple(s for _, (s, _) in ranked))
        self.last = decision
        return decision


def compose_tiers(tiers: Sequence[AggregationFilterConfig]) -> TieredFilter:
    return TieredFilter(tiers)


# ---------------------------------------------------------------- stages

class FilterStage(Stage):
    """Generic filter stage; subclasses implement :meth:`decide`."""

    kind = StageKind.FILTER

    def decide(self, env: Envelope) -> FilterDecision:
        raise NotImplementedError

    def handle(self, env, now_ms):
        try:
            decision = self.decide(env)
        except Exception as err:
            return Outcome(OutcomeKind.DEAD, error=err)
        if decision.kind is DecisionKind.DROP:
            return DROP
        if decision.kind is DecisionKind.SOFT:
            env = replace(env, decision=decision)
        return Outcome.forward(env)


class PredicateFilter(FilterStage):
    def __init__(self, name: str, predicate: Callable[[Envelope], bool]):
        super().__init__(name)
        self.predicate = predicate

    def decide(self, env):
        return stateless_filter(self.predicate, env)


class TopXFilter(FilterStage):
    """Aggregation filter stage.

    With ``drop_outside`` set (the default), envelopes that do not make the
    current top-X are dropped instead of forwarded.
    """

    def __init__(self, name: str, tiers: Sequence[AggregationFilterConfig] | AggregationFilterConfig,
                 drop_outside: bool = True):
        super().__init__(name)
        if isinstance(tiers, AggregationFilterConfig):
            tiers = [tiers]
        self.tiered = TieredFilter(tiers)
        self.drop_outside = drop_outside

    def decide(self, env):
        decision = self.tiered.step(env)
        if self.drop_outside and env.element_id not in decision.ids:
            return DROPPED
        return decision
