"""Straight decision pipelines and their evaluation over record populations.

A pipeline is an ordered list of stages. Stage ``t`` (1-based) computes a
decision from the record and the decisions of stages ``k_t .. t-1``; its rule
function maps that decision to 0/1, and a 0 terminates the run with ``FAIL``.
The last stage has no rule and its decision is the pipeline's final decision.
"""
from __future__ import annotations

import enum
import hashlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

from .errors import DomainViolation, EmptyPopulation, InvalidSpecification

Decider = Callable[["Record", tuple], Any]
Rule = Callable[[Any], int]

BINARY = frozenset({0, 1})


@dataclass(frozen=True)
class GroupSet:
    """Ordered protected-attribute values with one designated majority."""

    labels: tuple
    majority: Hashable

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise InvalidSpecification("GroupSet needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidSpecification(f"duplicate group labels in {self.labels!r}")
        if self.majority not in self.labels:
            raise InvalidSpecification(
                f"majority {self.majority!r} is not one of {self.labels!r}")

    @property
    def others(self) -> tuple:
        return tuple(g for g in self.labels if g != self.majority)

    def __contains__(self, label) -> bool:
        return label in self.labels


@dataclass(frozen=True)
class Record:
    id: Hashable
    group: Hashable
    truths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "truths", tuple(int(t) for t in self.truths))
        if any(t not in (0, 1) for t in self.truths):
            raise DomainViolation(f"record {self.id!r}: truths must be 0/1, got {self.truths}")

    def truth(self, stage: int) -> int:
        return self.truths[stage - 1]


@dataclass(frozen=True)
class StageSpec:
    """One stage: ``decide(record, visible_prior_decisions)`` plus its rule.

    ``lookback`` is k_t: the stage sees decisions of stages k_t..t-1, so
    ``lookback == t`` means it sees none. ``domain`` (optional) is the set of
    admissible decision values.
    """

    decide: Decider
    rule: Rule | None = None
    lookback: int = 1
    domain: frozenset | None = None


@dataclass(frozen=True)
class PipelineSpec:
    stages: tuple

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise InvalidSpecification("a pipeline needs at least one stage")
        last = len(self.stages)
        for t, stage in enumerate(self.stages, start=1):
            if not 1 <= stage.lookback <= t:
                raise InvalidSpecification(
                    f"stage {t}: lookback {stage.lookback} outside [1, {t}]")
            if t < last and stage.rule is None:
                raise InvalidSpecification(f"stage {t} needs a rule function")
            if t == last and stage.rule is not None:
                raise InvalidSpecification("the final stage takes no rule function")

    def __len__(self) -> int:
        return len(self.stages)

    def truncate(self, t: int) -> "PipelineSpec":
        """First ``t`` stages, with stage ``t`` promoted to final (rule dropped)."""
        if not 1 <= t <= len(self.stages):
            raise InvalidSpecification(f"cannot truncate a {len(self)}-stage pipeline to {t}")
        head = list(self.stages[:t])
        last = head[-1]
        head[-1] = StageSpec(last.decide, None, last.lookback, last.domain)
        return PipelineSpec(tuple(head))


class Status(enum.Enum):
    PASSED = "PASSED"
    FAIL = "FAIL"


@dataclass(frozen=True)
class Outcome:
    status: Status
    stage_decisions: tuple
    final_decision: Any = None
    failed_at: int | None = None

    @property
    def passed(self) -> bool:
        return self.status is Status.PASSED


def _filter_rule(decision) -> int:
    return 1 if decision == 1 else 0


def run_pipeline(spec: PipelineSpec, record: Record) -> Outcome:
    T = len(spec.stages)
    if len(record.truths) < T:
        raise DomainViolation(
            f"record {record.id!r} has {len(record.truths)} truths, pipeline has {T} stages")
    decisions: list = []
    for t, stage in enumerate(spec.stages, start=1):
        visible = tuple(decisions[stage.lookback - 1:t - 1])
        d = stage.decide(record, visible)
        if stage.domain is not None and d not in stage.domain:
            raise DomainViolation(
                f"stage {t} decided {d!r} for record {record.id!r}, outside {set(stage.domain)}")
        decisions.append(d)
        if t < T:
            verdict = stage.rule(d)
            if verdict not in (0, 1):
                raise DomainViolation(f"stage {t} rule returned {verdict!r}, expected 0 or 1")
            if verdict == 0:
                return Outcome(Status.FAIL, tuple(decisions), failed_at=t)
    return Outcome(Status.PASSED, tuple(decisions), final_decision=decisions[-1])


def make_filtering(deciders: Sequence[Decider], lookback: int = 1) -> PipelineSpec:
    """Binary pipeline where only positive decisions move on.

    Every stage uses the same ``lookback`` (clamped to the stage index).
    """
    deciders = list(deciders)
    if not deciders:
        raise InvalidSpecification("make_filtering needs at least one decider")
    T = len(deciders)
    stages = [
        StageSpec(decide=f, rule=_filter_rule if t < T else None,
                  lookback=min(lookback, t), domain=BINARY)
        for t, f in enumerate(deciders, start=1)
    ]
    return PipelineSpec(tuple(stages))


def is_filtering(spec: PipelineSpec) -> bool:
    return all(s.domain is not None and set(s.domain) <= BINARY for s in spec.stages) and all(
        s.rule(0) == 0 and s.rule(1) == 1 for s in spec.stages[:-1])


# Seeded randomness for decision functions. Each draw depends only on
# (seed, stream, record id), so evaluation order and threading cannot change
# results.

def record_uniform(seed: int, stream: Hashable, record_id: Hashable) -> float:
    """Uniform [0, 1) value derived from ``(seed, stream, record_id)``."""
    key = f"{seed}\x1f{stream!r}\x1f{record_id!r}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def bernoulli_decider(rate, seed: int, stream: Hashable) -> Decider:
    """Decider returning 1 with probability ``rate``.

    ``rate`` is a constant or a callable ``(record, prior) -> probability``.
    """
    rate_of = rate if callable(rate) else (lambda record, prior: rate)

    def decide(record: Record, prior: tuple) -> int:
        p = rate_of(record, prior)
        return int(record_uniform(seed, stream, record.id) < p)

    return decide


@dataclass
class OutcomeTable:
    """Per-record outcomes of one pipeline over one population."""

    records: tuple
    outcomes: tuple
    n_stages: int
    reached: Counter = field(default_factory=Counter)
    passed: Counter = field(default_factory=Counter)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def groups(self) -> tuple:
        return tuple(dict.fromkeys(r.group for r in self.records))

    def reached_count(self, stage: int, group=None) -> int:
        return self._count(self.reached, stage, group)

    def pass_count(self, stage: int, group=None) -> int:
        """Records whose stage-``stage`` decision let them through.

        For intermediate stages this is the rule verdict; for the final stage
        it counts PASSED records with final decision 1.
        """
        return self._count(self.passed, stage, group)

    def _count(self, counter: Counter, stage: int, group) -> int:
        if group is not None:
            return counter[group, stage]
        return sum(v for (g, t), v in counter.items() if t == stage)

    def rows(self):
        return zip(self.records, self.outcomes)


def tally(T: int, records: Sequence[Record], outcomes: Sequence[Outcome]):
    """Per-(group, stage) reached and passed counters."""
    reached, passed = Counter(), Counter()
    for rec, out in zip(records, outcomes):
        for t in range(1, len(out.stage_decisions) + 1):
            reached[rec.group, t] += 1
            if t < T:
                if out.failed_at != t:
                    passed[rec.group, t] += 1
            elif out.final_decision == 1:
                passed[rec.group, t] += 1
    return reached, passed


def evaluate_population(spec: PipelineSpec, records: Iterable[Record],
                        workers: int | None = None) -> OutcomeTable:
    records = tuple(records)
    if not records:
        raise EmptyPopulation("cannot evaluate a pipeline on an empty population")
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = tuple(pool.map(lambda r: run_pipeline(spec, r), records))
    else:
        outcomes = tuple(run_pipeline(spec, r) for r in records)
    reached, passed = tally(len(spec.stages), records, outcomes)
    return OutcomeTable(records, outcomes, len(spec.stages), reached, passed)
