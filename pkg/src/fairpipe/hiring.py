"""Two-stage hiring toy model: analytic expectations and Monte Carlo.

A majority and a minority applicant pool go through an interview stage with
a fixed interview quota and a hiring stage with a fixed hire quota. The
minority's interview rate is ``(1+eps)`` times the majority's and its hire
rate among interviewees is ``(1+delta)`` times the majority's, with both
equalities holding exactly.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.stats import binom, nchypergeom_fisher

from .errors import InfeasibleScenario, InvalidSpecification
from .metrics import OutcomeDistribution, _as_fraction
from .pipeline import (
    GroupSet,
    OutcomeTable,
    Record,
    evaluate_population,
    make_filtering,
)

MAJ, MIN = "majority", "minority"
GROUPS = (MAJ, MIN)
HIRING_GROUPS = GroupSet(GROUPS, MAJ)

# trials per independently seeded chunk; fixed so thread count never
# changes which numbers a trial sees
CHUNK = 8192


class SamplingModel(enum.Enum):
    BERNOULLI = "bernoulli"
    FIXED_QUOTA = "quota"


def _exact(value):
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return _as_fraction(value)


@dataclass(frozen=True)
class HiringScenario:
    n_majority: int = 90
    n_minority: int = 10
    n_interview: int = 20
    n_hire: int = 2
    eps: Fraction = Fraction(0)
    delta: Fraction = Fraction(0)
    qualification_rate: Fraction = Fraction(1)
    model: SamplingModel = SamplingModel.BERNOULLI

    def __post_init__(self):
        for name in ("eps", "delta", "qualification_rate"):
            object.__setattr__(self, name, _exact(getattr(self, name)))
        if isinstance(self.model, str):
            object.__setattr__(self, "model", SamplingModel(self.model))
        for name in ("n_majority", "n_minority", "n_interview", "n_hire"):
            if getattr(self, name) < 0:
                raise InvalidSpecification(f"{name} must be nonnegative")
        if self.n_interview > self.n_majority + self.n_minority:
            raise InvalidSpecification("n_interview exceeds the applicant pool")
        if self.n_hire > self.n_interview:
            raise InvalidSpecification("n_hire exceeds n_interview")
        if self.eps <= -1 or self.delta <= -1:
            raise InvalidSpecification("eps and delta must exceed -1")
        if not 0 < self.qualification_rate <= 1:
            raise InvalidSpecification("qualification_rate must lie in (0, 1]")

    @property
    def pools(self) -> dict:
        """Expected qualified applicants per group."""
        q = self.qualification_rate
        return {MAJ: self.n_majority * q, MIN: self.n_minority * q}


# cases 3 and 4 use -2/3; a three-digit "-.666" is that value truncated.
CASES = {
    1: (Fraction(2), Fraction(0)),
    2: (Fraction(0), Fraction(2)),
    3: (Fraction(2), Fraction(-2, 3)),
    4: (Fraction(-2, 3), Fraction(2)),
}

ROUNDED_ROWS = {
    1: (15, 5, 1.5, 0.5),
    2: (18, 2, 1.5, 0.5),
    3: (15, 5, 1.8, 0.2),
    4: (19.28, 0.71, 1.8, 0.2),
}


def case_scenario(case: int, **overrides) -> HiringScenario:
    eps, delta = CASES[case]
    return HiringScenario(eps=eps, delta=delta, **overrides)


@dataclass(frozen=True)
class Rates:
    interview: dict
    hire: dict

    def marginal_hire(self, group: str) -> Fraction:
        """Probability a qualified applicant of ``group`` ends up hired."""
        return self.interview[group] * self.hire[group]


def _split(total, pools: dict, boost, what: str) -> dict:
    """Rates with minority = (1+boost) * majority and sum(pool * rate) == total."""
    weight = pools[MAJ] + (1 + boost) * pools[MIN]
    if weight == 0:
        if total == 0:
            return {MAJ: Fraction(0), MIN: Fraction(0)}
        raise InfeasibleScenario(f"no {what} candidates to fill a quota of {total}")
    base = Fraction(total) / weight
    return {MAJ: base, MIN: (1 + boost) * base}


def _unconstrained(scenario: HiringScenario):
    pools = scenario.pools
    interview = _split(scenario.n_interview, pools, scenario.eps, "qualified")
    interviewed = {g: pools[g] * interview[g] for g in GROUPS}
    hire = _split(scenario.n_hire, interviewed, scenario.delta, "interviewed")
    return interview, interviewed, hire


def solve_rates(scenario: HiringScenario) -> Rates:
    """Per-group interview and hire rates; raises if any lands outside [0, 1]."""
    interview, interviewed, hire = _unconstrained(scenario)
    pools = scenario.pools
    for g in GROUPS:
        if pools[g] > 0 and interview[g] > 1:
            raise InfeasibleScenario(
                f"{g} interview rate {float(interview[g]):.6g} > 1 "
                f"(eps={scenario.eps}, n_interview={scenario.n_interview})")
        if interviewed[g] > 0 and hire[g] > 1:
            raise InfeasibleScenario(
                f"{g} hire rate {float(hire[g]):.6g} > 1: expected {g} interviewees "
                f"{float(interviewed[g]):.6g} cannot supply its share of n_hire={scenario.n_hire}")
    return Rates(interview, hire)


@dataclass(frozen=True)
class ExpectedOutcome:
    interviewed: dict
    hired: dict

    def as_row(self) -> tuple:
        return (self.interviewed[MAJ], self.interviewed[MIN], self.hired[MAJ], self.hired[MIN])


def expected_counts(scenario: HiringScenario) -> ExpectedOutcome:
    rates = solve_rates(scenario)
    pools = scenario.pools
    interviewed = {g: pools[g] * rates.interview[g] for g in GROUPS}
    hired = {g: interviewed[g] * rates.hire[g] for g in GROUPS}
    return ExpectedOutcome(interviewed, hired)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    expected_minority_interviewed: Fraction
    max_minority_hires: Fraction
    requested_minority_hires: Fraction
    binding: str | None = None


def feasibility_check(scenario: HiringScenario, requested_minority_hires=None
                      ) -> FeasibilityReport:
    """Can the stage-2 target be met given who stage 1 lets through?

    At most every interviewed minority member can be hired, so the expected
    minority interview count caps minority hires. ``requested_minority_hires``
    defaults to the count implied by ``delta``.
    """
    pools = scenario.pools
    try:
        interview, interviewed, hire = _unconstrained(scenario)
    except InfeasibleScenario as exc:
        zero = Fraction(0)
        return FeasibilityReport(False, zero, zero, _exact(requested_minority_hires or 0),
                                 exc.constraint)
    binding = None
    for g in GROUPS:
        if pools[g] > 0 and interview[g] > 1:
            binding = f"{g} interview rate {float(interview[g]):.6g} > 1"
    max_min = min(interviewed[MIN], pools[MIN])
    requested = (interviewed[MIN] * hire[MIN] if requested_minority_hires is None
                 else _exact(requested_minority_hires))
    if binding is None and requested > max_min:
        binding = (f"requested minority hires {float(requested):.6g} exceed expected "
                   f"minority interviewees {float(max_min):.6g}")
    if binding is None and interviewed[MAJ] > 0 and hire[MAJ] > 1:
        binding = f"majority hire rate {float(hire[MAJ]):.6g} > 1"
    return FeasibilityReport(binding is None, interviewed[MIN], max_min, requested, binding)


def chart_rows(cases: dict | None = None) -> list:
    """``(case, group, stage, expected_count)`` chart rows, one per case, group and stage."""
    cases = CASES if cases is None else cases
    rows = []
    for case in cases:
        scenario = cases[case] if isinstance(cases[case], HiringScenario) else case_scenario(case)
        out = expected_counts(scenario)
        for stage, counts in (("interviewed", out.interviewed), ("hired", out.hired)):
            for g in GROUPS:
                rows.append((case, g, stage, counts[g]))
    return rows


def case_distribution(scenario: HiringScenario) -> OutcomeDistribution:
    """Exact joint distribution of one random applicant under ``scenario``.

    Qualified applicants have ``x = y = 1``; unqualified ones are never
    selected.
    """
    rates = solve_rates(scenario)
    total = scenario.n_majority + scenario.n_minority
    q = scenario.qualification_rate
    mass = {}
    for g, n in ((MAJ, scenario.n_majority), (MIN, scenario.n_minority)):
        share = Fraction(n, total)
        p, h = rates.interview[g], rates.hire[g]
        for key, m in (
            ((g, 1, 1, 1, 1), share * q * p * h),
            ((g, 1, 1, 1, 0), share * q * p * (1 - h)),
            ((g, 1, 1, 0, 0), share * q * (1 - p)),
            ((g, 0, 0, 0, 0), share * (1 - q)),
        ):
            mass[key] = mass.get(key, 0) + m
    return OutcomeDistribution(HIRING_GROUPS, mass)


def _integral(value, what: str) -> int:
    if Fraction(value).denominator != 1:
        raise InvalidSpecification(f"{what} = {value} is not an integer; choose another scale")
    return int(value)


def synthetic_outcomes(scenario: HiringScenario, scale: int = 1) -> OutcomeTable:
    """Population realizing the expected counts exactly, run through a
    two-stage filtering pipeline.

    All counts are multiplied by ``scale``, which must make them integral.
    Within each group the first applicants (by index) are qualified, then
    interviewed, then hired.
    """
    out = expected_counts(scenario)
    records, interview_cut, hire_cut = [], {}, {}
    for g, n in ((MAJ, scenario.n_majority), (MIN, scenario.n_minority)):
        size = n * scale
        qualified = _integral(size * scenario.qualification_rate, f"{g} qualified")
        interview_cut[g] = _integral(out.interviewed[g] * scale, f"{g} interviewed")
        hire_cut[g] = _integral(out.hired[g] * scale, f"{g} hired")
        for i in range(size):
            bit = int(i < qualified)
            records.append(Record(id=f"{g[:3]}-{i:05d}", group=g, truths=(bit, bit)))

    def rank(record):
        return int(record.id.rsplit("-", 1)[1])

    pipeline = make_filtering([
        lambda r, prior: int(r.truths[0] == 1 and rank(r) < interview_cut[r.group]),
        lambda r, prior: int(rank(r) < hire_cut[r.group]),
    ])
    return evaluate_population(pipeline, records)


# Monte Carlo


@dataclass(frozen=True)
class CountStats:
    mean: float
    var: float
    se_mean: float
    se_var: float


@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    seed: int
    model: SamplingModel
    stats: dict  # (stage, group) -> CountStats
    samples: dict = field(repr=False, default_factory=dict)

    def __getitem__(self, key) -> CountStats:
        return self.stats[key]


def _stats(x: np.ndarray) -> CountStats:
    n = x.size
    x = x.astype(float)
    mean = float(x.mean())
    if n < 2:
        return CountStats(mean, 0.0, 0.0, 0.0)
    var = float(x.var(ddof=1))
    m4 = float(((x - mean) ** 4).mean())
    var_of_var = (m4 - var**2 * (n - 3) / (n - 1)) / n
    return CountStats(mean, var, math.sqrt(var / n), math.sqrt(max(var_of_var, 0.0)))


@lru_cache(maxsize=4096)
def _split_pmf(n_maj: int, n_min: int, total: int, log_odds: float):
    """Minority count pmf when ``total`` are taken from the two pools.

    This is Fisher's noncentral hypergeometric law, i.e. independent group
    Bernoulli selection conditioned on the total, with minority-vs-majority
    odds ratio ``exp(log_odds)``. Infinite ``log_odds`` give point masses.
    """
    total = min(total, n_maj + n_min)
    lo, hi = max(0, total - n_maj), min(total, n_min)
    support = np.arange(lo, hi + 1)
    if lo == hi or math.isinf(log_odds):
        pmf = np.zeros(support.size)
        pmf[0 if log_odds < 0 or lo == hi else -1] = 1.0
        return support, pmf
    pmf = nchypergeom_fisher.pmf(support, n_maj + n_min, n_min, total, math.exp(log_odds))
    return support, pmf / pmf.sum()


def _pool_mean(pools, total, log_odds):
    """Expected minority count over a finite distribution of pools."""
    return sum(w * float(np.dot(*_split_pmf(a, b, total, log_odds)))
               for (a, b), w in pools.items())


def _calibrate(pools: dict, total: int, target: float) -> float:
    """Log odds ratio making the expected minority count equal ``target``.

    Targets outside the reachable range are clipped to the nearest extreme.
    """
    low, high = _pool_mean(pools, total, -math.inf), _pool_mean(pools, total, math.inf)
    if target <= low + 1e-12:
        return -math.inf
    if target >= high - 1e-12:
        return math.inf
    lo, hi = -1.0, 1.0
    while _pool_mean(pools, total, lo) > target:
        lo *= 2
    while _pool_mean(pools, total, hi) < target:
        hi *= 2
    return brentq(lambda x: _pool_mean(pools, total, x) - target, lo, hi, xtol=1e-13)


def _selected_pools(pools: dict, total: int, log_odds: float) -> dict:
    """Distribution of (majority, minority) selected counts."""
    out = {}
    for (a, b), w in pools.items():
        support, pmf = _split_pmf(a, b, total, log_odds)
        taken = min(total, a + b)
        for k, p in zip(support.tolist(), pmf.tolist()):
            if p > 0:
                out[taken - k, k] = out.get((taken - k, k), 0.0) + w * p
    return out


def _quota_odds(scenario: HiringScenario) -> tuple:
    """Calibrated log odds for the interview and hire stages."""
    q = float(scenario.qualification_rate)
    maj = binom.pmf(np.arange(scenario.n_majority + 1), scenario.n_majority, q)
    mnr = binom.pmf(np.arange(scenario.n_minority + 1), scenario.n_minority, q)
    pools = {(a, b): float(maj[a] * mnr[b])
             for a in range(maj.size) for b in range(mnr.size) if maj[a] * mnr[b] > 0}
    out = expected_counts(scenario)
    interview = _calibrate(pools, scenario.n_interview, float(out.interviewed[MIN]))
    stage2 = _selected_pools(pools, scenario.n_interview, interview)
    hire = _calibrate(stage2, scenario.n_hire, float(out.hired[MIN]))
    return interview, hire


def _quota_draw(rng, n_maj, n_min, total, log_odds):
    """Vectorized draw of (majority, minority) counts with exact totals."""
    out_min = np.empty(n_maj.shape, dtype=np.int64)
    keys = np.stack([n_maj, n_min], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for j, (a, b) in enumerate(uniq):
        idx = np.flatnonzero(inverse == j)
        support, pmf = _split_pmf(int(a), int(b), total, log_odds)
        out_min[idx] = rng.choice(support, size=idx.size, p=pmf)
    taken = np.minimum(total, n_maj + n_min)
    return taken - out_min, out_min


def _simulate_chunk(scenario: HiringScenario, rates: Rates, odds, seed_seq, n: int):
    rng = np.random.default_rng(seed_seq)
    q = float(scenario.qualification_rate)
    sizes = {MAJ: scenario.n_majority, MIN: scenario.n_minority}
    qualified = {g: (np.full(n, sizes[g]) if q == 1 else rng.binomial(sizes[g], q, size=n))
                 for g in GROUPS}
    if scenario.model is SamplingModel.BERNOULLI:
        p = {g: float(rates.interview[g]) for g in GROUPS}
        h = {g: float(rates.hire[g]) for g in GROUPS}
        inter = {g: rng.binomial(qualified[g], p[g]) for g in GROUPS}
        hired = {g: rng.binomial(inter[g], h[g]) for g in GROUPS}
    else:
        im, in_ = _quota_draw(rng, qualified[MAJ], qualified[MIN], scenario.n_interview, odds[0])
        inter = {MAJ: im, MIN: in_}
        hm, hn = _quota_draw(rng, im, in_, scenario.n_hire, odds[1])
        hired = {MAJ: hm, MIN: hn}
    return inter, hired


def monte_carlo(scenario: HiringScenario, trials: int, seed: int = 0,
                workers: int | None = None) -> MonteCarloResult:
    """Sample per-group interviewed and hired counts over ``trials`` hiring rounds.

    BERNOULLI selects each applicant independently at its group's rate.
    FIXED_QUOTA takes exactly ``n_interview`` and then ``n_hire`` per round,
    splitting each quota between groups by a noncentral hypergeometric draw
    whose odds ratio is tuned so expected counts match ``expected_counts``.
    """
    if trials < 1:
        raise InvalidSpecification("trials must be >= 1")
    rates = solve_rates(scenario)
    odds = _quota_odds(scenario) if scenario.model is SamplingModel.FIXED_QUOTA else None
    sizes = [CHUNK] * (trials // CHUNK) + ([trials % CHUNK] if trials % CHUNK else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(children, sizes))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _simulate_chunk(scenario, rates, odds, *job), jobs))
    else:
        parts = [_simulate_chunk(scenario, rates, odds, *job) for job in jobs]
    samples = {}
    for stage, pos in (("interviewed", 0), ("hired", 1)):
        for g in GROUPS:
            samples[stage, g] = np.concatenate([part[pos][g] for part in parts])
    stats = {key: _stats(x) for key, x in samples.items()}
    return MonteCarloResult(trials, seed, scenario.model, stats, samples)


def variance_z(a: CountStats, b: CountStats) -> float:
    """Distance between two sample variances in combined standard errors."""
    se = math.hypot(a.se_var, b.se_var)
    diff = abs(a.var - b.var)
    if se == 0:
        return 0.0 if diff == 0 else math.inf
    return diff / se


def mean_z(stats: CountStats, expected) -> float:
    diff = abs(stats.mean - float(expected))
    if stats.se_mean == 0:
        return 0.0 if diff == 0 else math.inf
    return diff / stats.se_mean
