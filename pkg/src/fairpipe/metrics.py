"""Equal-opportunity quantities over exact joint distributions.

An :class:`OutcomeDistribution` is a probability table over cells
``(a, x, y, xhat, yhat)``: group label, stage-1 and stage-2 truths, and the
stage-1 and stage-2 decisions of a two-stage filtering pipeline. Masses may be
``Fraction`` (all arithmetic then stays exact) or float.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Mapping, NamedTuple

from .errors import (
    FormatError,
    InfeasibleEpsilon,
    InfeasibleSlack,
    UndefinedConditional,
    UndefinedRatio,
)
from .pipeline import GroupSet, OutcomeTable

NORMALIZATION_TOL = 1e-12
FLOAT_TOL = 1e-9

PREDICTORS = ("xhat", "yhat")
STAGE2_GIVEN = {"xhat": 1}
TARGETS = ("x", "y")


class Cell(NamedTuple):
    a: object
    x: int
    y: int
    xhat: int
    yhat: int


Predicate = Callable[[Cell], bool]


def _is_exact(value) -> bool:
    return isinstance(value, Rational)


class OutcomeDistribution:
    """Immutable joint distribution over ``groups x {0,1}^4``.

    Cells not listed carry zero mass.
    """

    __slots__ = ("groups", "_mass", "exact")

    def __init__(self, groups: GroupSet, mass: Mapping):
        cells = {}
        for key, m in mass.items():
            cell = Cell(*key)
            if cell.a not in groups:
                raise FormatError(f"cell {tuple(cell)} uses unknown group {cell.a!r}")
            if any(b not in (0, 1) for b in cell[1:]):
                raise FormatError(f"cell {tuple(cell)} has a non-binary coordinate")
            if m < 0:
                raise FormatError(f"cell {tuple(cell)} has negative mass {m}")
            if m:
                cells[cell] = cells.get(cell, 0) + m
        total = sum(cells.values())
        if abs(total - 1) > NORMALIZATION_TOL:
            raise FormatError(f"masses sum to {float(total)!r}, expected 1")
        self.groups = groups
        self._mass = cells
        self.exact = all(_is_exact(m) for m in cells.values())

    @classmethod
    def from_weights(cls, groups: GroupSet, weights: Mapping) -> "OutcomeDistribution":
        """Normalize nonnegative weights; integer weights give exact masses."""
        total = sum(weights.values())
        if total <= 0:
            raise FormatError("weights must have positive total")
        if all(_is_exact(w) for w in weights.values()):
            return cls(groups, {k: Fraction(w) / total for k, w in weights.items()})
        return cls(groups, {k: w / total for k, w in weights.items()})

    @classmethod
    def uniform(cls, groups: GroupSet) -> "OutcomeDistribution":
        cells = list(itertools.product(groups.labels, (0, 1), (0, 1), (0, 1), (0, 1)))
        return cls.from_weights(groups, dict.fromkeys(cells, 1))

    def items(self):
        return self._mass.items()

    def mass(self, cell) -> object:
        return self._mass.get(Cell(*cell), 0)

    def prob(self, event) -> object:
        pred = as_predicate(event)
        return sum((m for c, m in self._mass.items() if pred(c)), Fraction(0) if self.exact else 0.0)

    def with_majority(self, majority) -> "OutcomeDistribution":
        return OutcomeDistribution(GroupSet(self.groups.labels, majority), self._mass)

    def scaled(self, c) -> "OutcomeDistribution":
        """Multiply every mass by ``c`` and renormalize."""
        return OutcomeDistribution.from_weights(
            self.groups, {cell: m * c for cell, m in self._mass.items()})

    def __eq__(self, other):
        if not isinstance(other, OutcomeDistribution):
            return NotImplemented
        return self.groups == other.groups and self._mass == other._mass

    def __repr__(self):
        return f"OutcomeDistribution(groups={self.groups!r}, cells={len(self._mass)})"


def as_predicate(event) -> Predicate:
    """Accept a predicate or a mapping of cell-field -> required value."""
    if callable(event):
        return event
    conditions = tuple(event.items())
    for name, _ in conditions:
        if name not in Cell._fields:
            raise KeyError(f"unknown cell field {name!r}")
    idx = tuple((Cell._fields.index(name), value) for name, value in conditions)
    return lambda cell: all(cell[i] == v for i, v in idx)


def conditional_rate(dist: OutcomeDistribution, event, given):
    """``Pr{event | given}``; raises :class:`UndefinedConditional` on zero mass."""
    ev, cond = as_predicate(event), as_predicate(given)
    num = den = Fraction(0) if dist.exact else 0.0
    for cell, m in dist.items():
        if cond(cell):
            den += m
            if ev(cell):
                num += m
    if den == 0:
        raise UndefinedConditional(f"conditioning event {_describe(given)} has zero mass")
    return num / den


def _describe(event) -> str:
    if callable(event):
        return getattr(event, "__name__", "<predicate>")
    return "{" + ", ".join(f"{k}={v!r}" for k, v in event.items()) + "}"


def true_positive_rate(dist, predictor: str, target: str, group, extra: Mapping | None = None):
    if predictor not in PREDICTORS:
        raise ValueError(f"predictor must be one of {PREDICTORS}, got {predictor!r}")
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    given = {target: 1, "a": group, **(extra or {})}
    return conditional_rate(dist, {predictor: 1}, given)


def _ratio_slack(rate_group, rate_majority, what: str):
    if rate_majority == 0:
        raise InfeasibleSlack(f"majority rate for {what} is zero")
    return rate_group / rate_majority - 1


def epsilon_slack(dist: OutcomeDistribution, predictor: str, target: str, group,
                  extra: Mapping | None = None):
    """Largest eps for which ``predictor`` is (1+eps)-equal-opportunity for ``group``.

    ``extra`` adds conditions to both true-positive rates (e.g. ``{"xhat": 1}``).
    """
    maj = true_positive_rate(dist, predictor, target, dist.groups.majority, extra)
    grp = true_positive_rate(dist, predictor, target, group, extra)
    return _ratio_slack(grp, maj, f"{predictor} given {target}=1")


def meets(slack, eps, exact: bool) -> bool:
    """``slack >= eps``, exactly for rationals, else with a 1e-9 tolerance."""
    if exact and _is_exact(slack):
        return slack >= _as_fraction(eps)
    return float(slack) >= float(eps) - FLOAT_TOL


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class SlackReport:
    per_group_slack: dict
    satisfied_at: dict | None = None
    verdict: dict | None = None
    label: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict is None or all(self.verdict.values())


def _eps_for(eps, group):
    if isinstance(eps, Mapping):
        return eps[group]
    return eps


def check_eps_eo(dist: OutcomeDistribution, predictor: str, target: str, eps,
                 extra: Mapping | None = None) -> SlackReport:
    """Test (1+eps_t)-equal opportunity for every non-majority group.

    ``eps`` is a single value or a mapping ``group -> eps_t``.
    """
    maj_rate = true_positive_rate(dist, predictor, target, dist.groups.majority, extra)
    slacks, tested, verdict = {}, {}, {}
    for g in dist.groups.others:
        e = _eps_for(eps, g)
        boosted = (1 + (_as_fraction(e) if dist.exact else e)) * maj_rate
        if not 0 <= boosted <= 1:
            raise InfeasibleEpsilon(g, e, maj_rate)
        slacks[g] = epsilon_slack(dist, predictor, target, g, extra)
        tested[g] = e
        verdict[g] = meets(slacks[g], e, dist.exact)
    return SlackReport(slacks, tested, verdict, label=f"{predictor}|{target}")


def stage2_conditional_slack(dist: OutcomeDistribution, group):
    """Slack of the stage-2 decision among hire-qualified, interviewed members."""
    return epsilon_slack(dist, "yhat", "y", group, STAGE2_GIVEN)


def stage1_cross_slack(dist: OutcomeDistribution, group):
    """Slack of the stage-1 decision measured against the final-stage truth."""
    return epsilon_slack(dist, "xhat", "y", group)


def stage1_naive_slack(dist: OutcomeDistribution, group):
    """Slack of the stage-1 decision against its own truth."""
    return epsilon_slack(dist, "xhat", "x", group)


def pipeline_slack(dist: OutcomeDistribution, group):
    return epsilon_slack(dist, "yhat", "y", group)


def decoupling_ratio(dist: OutcomeDistribution, group):
    """``Pr{xhat=1 | x=1, a} / Pr{xhat=1 | y=1, a}``; 1 when the truths agree."""
    num = conditional_rate(dist, {"xhat": 1}, {"x": 1, "a": group})
    den = conditional_rate(dist, {"xhat": 1}, {"y": 1, "a": group})
    if den == 0:
        raise UndefinedRatio(f"Pr{{xhat=1 | y=1, a={group!r}}} is zero")
    return num / den


def empirical_distribution(table: OutcomeTable, groups: GroupSet | None = None,
                           majority=None) -> OutcomeDistribution:
    """Exact empirical distribution of a one- or two-stage binary outcome table.

    Two stages map to ``(x, y, xhat, yhat) = (truth_1, truth_2, d_1, d_2)`` with
    ``yhat = 0`` for records that failed at stage 1. A single stage is the
    degenerate pipeline ``y = x``, ``yhat = xhat``.
    """
    if table.n_stages not in (1, 2):
        raise FormatError(f"expected a one- or two-stage table, got {table.n_stages} stages")
    if groups is None:
        counts = {}
        for rec in table.records:
            counts[rec.group] = counts.get(rec.group, 0) + 1
        if majority is None:
            majority = max(counts, key=counts.get)
        groups = GroupSet(tuple(counts), majority)
    weights: dict = {}
    for rec, out in table.rows():
        d = out.stage_decisions
        if any(v not in (0, 1) for v in d):
            raise FormatError(f"record {rec.id!r} has non-binary decisions {d}")
        if table.n_stages == 1:
            x = y = rec.truths[0]
            xhat = yhat = d[0]
        else:
            x, y = rec.truths[0], rec.truths[1]
            xhat = d[0]
            yhat = out.final_decision if out.passed else 0
        key = (rec.group, x, y, xhat, yhat)
        weights[key] = weights.get(key, 0) + 1
    return OutcomeDistribution.from_weights(groups, weights)
