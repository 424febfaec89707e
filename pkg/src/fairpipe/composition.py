"""Composition of stage-wise (1+eps)-equal opportunity in two-stage pipelines.

Under the three assumptions

1. ``(1+eps) Pr{xhat=1 | y=1, maj} <= Pr{xhat=1 | y=1, grp}``
2. ``(1+delta) Pr{yhat=1 | xhat=1, y=1, maj} <= Pr{yhat=1 | xhat=1, y=1, grp}``
3. ``yhat=1`` implies ``xhat=1``

the final decision is ``(1+eps)(1+delta)``-equal opportunity. This module
checks that bound on concrete distributions and searches for distributions
where per-stage fairness measured against each stage's *own* truth does not
carry through to the pipeline.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import FairPipeError, InvalidSpecification
from .metrics import (
    NORMALIZATION_TOL,
    OutcomeDistribution,
    decoupling_ratio,
    meets,
    pipeline_slack,
    stage1_cross_slack,
    stage1_naive_slack,
    stage2_conditional_slack,
)
from .pipeline import GroupSet

TWO_GROUPS = GroupSet((0, 1), 0)


def compose_slack(eps, delta):
    if eps <= -1 or delta <= -1:
        raise InvalidSpecification(f"slacks must exceed -1, got eps={eps}, delta={delta}")
    return (1 + eps) * (1 + delta) - 1


@dataclass(frozen=True)
class CompositionReport:
    group: object
    eps: object
    delta: object
    alpha: object
    bound: object
    assumptions_hold: tuple
    verdict: bool | None
    offending_mass: object = 0
    naive_eps: object = None

    @property
    def gap(self):
        """``alpha - bound``; no tightness claim attaches to this number."""
        return self.alpha - self.bound

    @property
    def nonnegative_regime(self) -> bool:
        return self.eps >= 0 and self.delta >= 0


def _single_other(dist: OutcomeDistribution):
    others = dist.groups.others
    if len(others) != 1:
        raise InvalidSpecification(
            f"pass group= explicitly; {len(others)} non-majority groups present")
    return others[0]


def verify_composition(dist: OutcomeDistribution, group=None, eps=None, delta=None
                       ) -> CompositionReport:
    """Measure eps, delta and alpha for ``group`` and test ``alpha >= bound``.

    With ``eps``/``delta`` omitted the measured slacks are used, so
    assumptions 1 and 2 hold by construction and only assumption 3 can fail.
    Passing them tests the bound at those (possibly smaller) values.
    """
    if group is None:
        group = _single_other(dist)
    offending = dist.prob(lambda c: c.yhat == 1 and c.xhat == 0)
    a3 = offending == 0 if dist.exact else offending <= NORMALIZATION_TOL

    eps_measured = stage1_cross_slack(dist, group)
    delta_measured = stage2_conditional_slack(dist, group)
    alpha = pipeline_slack(dist, group)
    eps = eps_measured if eps is None else eps
    delta = delta_measured if delta is None else delta
    a1 = meets(eps_measured, eps, dist.exact)
    a2 = meets(delta_measured, delta, dist.exact)
    bound = compose_slack(eps, delta)
    verdict = meets(alpha, bound, dist.exact) if (a1 and a2 and a3) else None
    try:
        naive = stage1_naive_slack(dist, group)
    except FairPipeError:
        naive = None
    return CompositionReport(group, eps, delta, alpha, bound, (a1, a2, a3), verdict,
                             offending, naive)


CELLS = list(itertools.product((0, 1), repeat=4))


def random_filtering_distribution(rng: np.random.Generator, groups: GroupSet = TWO_GROUPS,
                                  exact: bool = True, max_weight: int = 9
                                  ) -> OutcomeDistribution:
    """Random distribution over the 32 cells respecting ``yhat=1 => xhat=1``.

    Exact mode draws integer weights uniformly from ``0..max_weight``; float
    mode draws a flat Dirichlet. Mass sitting on ``(xhat=0, yhat=1)`` is then
    moved to ``(xhat=0, yhat=0)``.
    """
    n = len(groups.labels) * len(CELLS)
    if exact:
        draws = [int(v) for v in rng.integers(0, max_weight + 1, size=n)]
    else:
        draws = list(rng.dirichlet(np.ones(n)))
    weights = {}
    keys = [(g, *bits) for g in groups.labels for bits in CELLS]
    for key, w in zip(keys, draws):
        g, x, y, xhat, yhat = key
        if xhat == 0 and yhat == 1:
            key = (g, x, y, 0, 0)
        weights[key] = weights.get(key, 0) + w
    if sum(weights.values()) == 0:
        weights[keys[0]] = 1
    return OutcomeDistribution.from_weights(groups, weights)


@dataclass(frozen=True)
class Counterexample:
    """A distribution plus the slacks that certify it."""

    trial: int
    dist: OutcomeDistribution
    naive_eps: object
    delta: object
    alpha: object
    decoupling: dict


def decoupled_example() -> OutcomeDistribution:
    """Hand-built instance: minority applicants who are hire-qualified but not
    interview-qualified.

    Stage 1 interviews half of every interview-qualified applicant in both
    groups and nobody else; stage 2 hires exactly the hire-qualified
    interviewees. The majority has ``x == y``; a quarter of the minority has
    ``x=0, y=1``.
    """
    F = Fraction
    group_mass = {0: F(9, 10), 1: F(1, 10)}
    truths = {
        0: {(1, 1): F(1, 2), (0, 0): F(1, 2)},
        1: {(1, 1): F(1, 4), (0, 1): F(1, 4), (0, 0): F(1, 2)},
    }
    mass = {}
    for g, table in truths.items():
        for (x, y), p in table.items():
            base = group_mass[g] * p
            if x == 1:
                mass[g, x, y, 1, y] = base / 2
                mass[g, x, y, 0, 0] = base / 2
            else:
                mass[g, x, y, 0, 0] = base
    return OutcomeDistribution(TWO_GROUPS, mass)


def _draw_instance(seed: int, trial: int, tie_truths: bool):
    """Parameters of one search trial, or None when degenerate.

    Returns per-group mass P(a), truth table P(x, y | a), stage-1 pass
    probabilities q(x, y, a) and stage-2 pass probabilities s(x, y, a) with the
    naive stage-1 rates and the stage-2 conditional rates equalized.
    """
    rng = np.random.default_rng([seed, trial])
    F = Fraction
    pa = {g: F(int(rng.integers(1, 10))) for g in (0, 1)}
    tot = sum(pa.values())
    pa = {g: v / tot for g, v in pa.items()}

    pxy, q, s = {}, {}, {}
    for g in (0, 1):
        raw = {xy: int(rng.integers(0, 10)) for xy in itertools.product((0, 1), repeat=2)}
        if tie_truths:
            raw[0, 1] = raw[1, 0] = 0
        tot = sum(raw.values())
        if tot == 0:
            return None
        pxy[g] = {xy: F(v, tot) for xy, v in raw.items()}
        for xy in pxy[g]:
            q[(*xy, g)] = F(int(rng.integers(0, 11)), 10)
            s[(*xy, g)] = F(int(rng.integers(0, 11)), 10)

    def naive_rate(g):
        px1 = pxy[g][1, 0] + pxy[g][1, 1]
        if px1 == 0:
            return None
        return sum(pxy[g][1, y] * q[1, y, g] for y in (0, 1)) / px1

    def stage2_rate(g):
        den = sum(pxy[g][x, 1] * q[x, 1, g] for x in (0, 1))
        if den == 0:
            return None
        return sum(pxy[g][x, 1] * q[x, 1, g] * s[x, 1, g] for x in (0, 1)) / den

    r = {g: naive_rate(g) for g in (0, 1)}
    if None in r.values() or max(r.values()) == 0:
        return None
    hi, lo = (0, 1) if r[0] >= r[1] else (1, 0)
    for y in (0, 1):
        q[1, y, hi] *= r[lo] / r[hi]

    r2 = {g: stage2_rate(g) for g in (0, 1)}
    if None in r2.values() or max(r2.values()) == 0:
        return None
    hi, lo = (0, 1) if r2[0] >= r2[1] else (1, 0)
    for x in (0, 1):
        s[x, 1, hi] *= r2[lo] / r2[hi]
    return pa, pxy, q, s


def _instance_distribution(pa, pxy, q, s) -> OutcomeDistribution:
    mass = {}
    for g in (0, 1):
        for (x, y), p in pxy[g].items():
            base = pa[g] * p
            qq, ss = q[x, y, g], s[x, y, g]
            mass[g, x, y, 0, 0] = base * (1 - qq)
            mass[g, x, y, 1, 1] = base * qq * ss
            mass[g, x, y, 1, 0] = base * qq * (1 - ss)
    return OutcomeDistribution(TWO_GROUPS, mass)


def _cross_slack_estimate(pxy, q) -> Fraction | None:
    rates = {}
    for g in (0, 1):
        py1 = pxy[g][0, 1] + pxy[g][1, 1]
        if py1 == 0:
            return None
        rates[g] = sum(pxy[g][x, 1] * q[x, 1, g] for x in (0, 1)) / py1
    if rates[0] == 0:
        return None
    return rates[1] / rates[0] - 1


def _try_trial(seed: int, trial: int, tie_truths: bool, alpha_below) -> Counterexample | None:
    inst = _draw_instance(seed, trial, tie_truths)
    if inst is None:
        return None
    pa, pxy, q, s = inst
    # Under filtering and equalized stage-2 rates, alpha equals the cross
    # slack; use it only to skip building distributions that cannot qualify.
    estimate = _cross_slack_estimate(pxy, q)
    if estimate is None or estimate >= alpha_below:
        return None
    dist = _instance_distribution(pa, pxy, q, s)
    try:
        naive = stage1_naive_slack(dist, 1)
        delta = stage2_conditional_slack(dist, 1)
        alpha = pipeline_slack(dist, 1)
    except FairPipeError:
        return None
    if abs(naive) > NORMALIZATION_TOL or abs(delta) > NORMALIZATION_TOL or not alpha < alpha_below:
        return None
    ratios = {}
    for g in (0, 1):
        try:
            ratios[g] = decoupling_ratio(dist, g)
        except FairPipeError:
            ratios[g] = None
    return Counterexample(trial, dist, naive, delta, alpha, ratios)


def search_counterexample(seed: int, trials: int, *, tie_truths: bool = False,
                          alpha_below=-1e-9, workers: int | None = None
                          ) -> Counterexample | None:
    """Random search for naive-fair, stage-2-fair, pipeline-unfair distributions.

    Each trial ``i`` draws from ``default_rng([seed, i])``, so the result (the
    lowest qualifying trial index) does not depend on ``workers``.
    ``tie_truths`` forces ``x == y``, under which no counterexample exists.
    """
    if trials < 1:
        raise InvalidSpecification("trials must be >= 1")
    if not workers or workers <= 1:
        for i in range(trials):
            found = _try_trial(seed, i, tie_truths, alpha_below)
            if found is not None:
                return found
        return None
    block = 64 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, trials, block):
            idx = range(start, min(start + block, trials))
            results = pool.map(lambda i: _try_trial(seed, i, tie_truths, alpha_below), idx)
            for found in results:
                if found is not None:
                    return found
    return None
