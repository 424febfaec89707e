import itertools
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairpipe.errors import (
    InfeasibleEpsilon,
    InfeasibleSlack,
    UndefinedConditional,
    UndefinedRatio,
)
from fairpipe.metrics import (
    OutcomeDistribution,
    check_eps_eo,
    conditional_rate,
    decoupling_ratio,
    empirical_distribution,
    epsilon_slack,
    stage1_cross_slack,
    stage1_naive_slack,
    stage2_conditional_slack,
)
from fairpipe.pipeline import (
    GroupSet,
    Record,
    bernoulli_decider,
    evaluate_population,
    make_filtering,
    record_uniform,
)

G2 = GroupSet((0, 1), 0)


def product_dist(groups, group_mass, truths, q, s):
    """Distribution of a filtering pipeline from its conditional factors.

    ``truths[g][(x, y)]``, ``q[g][(x, y)] = Pr{xhat=1 | x, y, g}``,
    ``s[g][(x, y)] = Pr{yhat=1 | xhat=1, x, y, g}``.
    """
    mass = {}
    for g in groups.labels:
        for (x, y), p in truths[g].items():
            base = group_mass[g] * p
            mass[g, x, y, 1, 1] = base * q[g][x, y] * s[g][x, y]
            mass[g, x, y, 1, 0] = base * q[g][x, y] * (1 - s[g][x, y])
            mass[g, x, y, 0, 0] = base * (1 - q[g][x, y])
    return OutcomeDistribution(groups, mass)


def tpr_dist(rates, groups=G2):
    """x = y = 1 for everyone; Pr{xhat = 1 | g} = rates[g]; yhat = xhat."""
    n = len(groups.labels)
    truths = {g: {(1, 1): F(1)} for g in groups.labels}
    q = {g: {(1, 1): F(rates[g])} for g in groups.labels}
    s = {g: {(1, 1): F(1)} for g in groups.labels}
    return product_dist(groups, {g: F(1, n) for g in groups.labels}, truths, q, s)


# conditional_rate

def test_uniform_symmetry():
    dist = OutcomeDistribution.uniform(G2)
    assert conditional_rate(dist, {"yhat": 1}, {"y": 1}) == F(1, 2)


def test_point_mass():
    dist = OutcomeDistribution(G2, {(1, 1, 1, 1, 1): F(1)})
    assert conditional_rate(dist, {"yhat": 1}, {"y": 1}) == 1


def test_hand_arithmetic_rate():
    dist = OutcomeDistribution(G2, {
        (0, 1, 1, 1, 1): F("0.06"),
        (0, 1, 1, 1, 0): F("0.18"),
        (1, 0, 0, 0, 0): F("0.76"),
    })
    assert conditional_rate(dist, {"yhat": 1}, {"y": 1, "a": 0}) == F(6, 24) == F(1, 4)


def test_predicate_events():
    dist = OutcomeDistribution.uniform(G2)
    assert conditional_rate(dist, lambda c: c.x == c.y, lambda c: c.a == 1) == F(1, 2)


def test_zero_mass_condition():
    dist = OutcomeDistribution(G2, {(0, 1, 1, 1, 1): F(1)})
    with pytest.raises(UndefinedConditional):
        conditional_rate(dist, {"yhat": 1}, {"a": 1})


def test_distribution_validation():
    with pytest.raises(ValueError):
        OutcomeDistribution(G2, {(0, 1, 1, 1, 1): F(1, 2)})
    with pytest.raises(ValueError):
        OutcomeDistribution(G2, {(2, 1, 1, 1, 1): F(1)})
    with pytest.raises(ValueError):
        OutcomeDistribution(G2, {(0, 1, 1, 1, 1): F(3, 2), (0, 0, 0, 0, 0): F(-1, 2)})


# epsilon_slack

@pytest.mark.parametrize("maj, grp, expected", [
    (F(1, 4), F(3, 4), 2),
    (F(1, 3), F(1, 3), 0),
    (F(3, 10), F(1, 10), F(-2, 3)),
])
def test_epsilon_slack(maj, grp, expected):
    dist = tpr_dist({0: maj, 1: grp})
    assert epsilon_slack(dist, "xhat", "x", 1) == expected
    assert epsilon_slack(dist, "yhat", "y", 1) == expected


def test_zero_majority_rate():
    with pytest.raises(InfeasibleSlack):
        epsilon_slack(tpr_dist({0: 0, 1: F(1, 2)}), "xhat", "x", 1)


def test_float_masses():
    dist = OutcomeDistribution(G2, {(0, 1, 1, 1, 1): 0.25, (0, 1, 1, 0, 0): 0.25,
                                    (1, 1, 1, 1, 1): 0.375, (1, 1, 1, 0, 0): 0.125})
    assert not dist.exact
    assert epsilon_slack(dist, "xhat", "y", 1) == pytest.approx(0.5)


# check_eps_eo

def test_case1_passes_at_two(case_dists):
    report = check_eps_eo(case_dists[1], "xhat", "x", 2)
    assert report.per_group_slack == {"minority": 2}
    assert report.verdict == {"minority": True} and report.passed
    assert not check_eps_eo(case_dists[1], "xhat", "x", F(201, 100)).passed


def test_equal_rates_pass_at_zero():
    assert check_eps_eo(tpr_dist({0: F(2, 5), 1: F(2, 5)}), "xhat", "x", 0).passed


def test_side_condition():
    dist = tpr_dist({0: F(6, 10), 1: F(9, 10)})
    with pytest.raises(InfeasibleEpsilon) as info:
        check_eps_eo(dist, "xhat", "x", 0.9)
    assert info.value.group == 1


def test_negative_eps_allowed():
    dist = tpr_dist({0: F(3, 10), 1: F(1, 10)})
    assert check_eps_eo(dist, "xhat", "x", F(-2, 3)).passed
    assert not check_eps_eo(dist, "xhat", "x", F(-1, 2)).passed


def test_multi_class():
    groups = GroupSet(("a", "b", "m"), "m")
    dist = tpr_dist({"a": F(1, 2), "b": F(1, 5), "m": F(1, 4)}, groups)
    report = check_eps_eo(dist, "xhat", "x", {"a": 1, "b": F(-1, 5)})
    assert report.per_group_slack == {"a": 1, "b": F(-1, 5)}
    assert report.passed
    report = check_eps_eo(dist, "xhat", "x", {"a": 1, "b": 0})
    assert report.verdict == {"a": True, "b": False}


# stage-wise slacks on the four hiring cases

@pytest.mark.parametrize("case, stage1, stage2", [
    (1, 2, 0), (2, 0, 2), (3, 2, F(-2, 3)), (4, F(-2, 3), 2),
])
def test_case_stage_slacks(case_dists, case, stage1, stage2):
    dist = case_dists[case]
    assert stage1_cross_slack(dist, "minority") == stage1
    assert stage2_conditional_slack(dist, "minority") == stage2


def test_stage2_perfect_hiring():
    truths = {g: {(1, 1): F(1, 3), (0, 1): F(1, 6), (1, 0): F(1, 6), (0, 0): F(1, 3)} for g in (0, 1)}
    q = {0: dict.fromkeys(truths[0], F(1, 2)), 1: dict.fromkeys(truths[1], F(1, 5))}
    s = {g: {xy: F(xy[1]) for xy in truths[g]} for g in (0, 1)}  # yhat = xhat * y
    dist = product_dist(G2, {0: F(1, 2), 1: F(1, 2)}, truths, q, s)
    assert stage2_conditional_slack(dist, 1) == 0


def test_stage1_cross_independent():
    truths = {0: {(1, 1): F(1, 2), (0, 0): F(1, 2)}, 1: {(0, 1): F(1, 3), (1, 0): F(2, 3)}}
    q = {g: dict.fromkeys(truths[g], F(2, 7)) for g in (0, 1)}
    s = {g: dict.fromkeys(truths[g], F(1)) for g in (0, 1)}
    dist = product_dist(G2, {0: F(3, 4), 1: F(1, 4)}, truths, q, s)
    assert stage1_cross_slack(dist, 1) == 0


def test_stage2_undefined_for_empty_interview_pool():
    truths = {g: {(1, 1): F(1)} for g in (0, 1)}
    q = {0: {(1, 1): F(1, 2)}, 1: {(1, 1): F(0)}}
    s = {g: {(1, 1): F(1)} for g in (0, 1)}
    dist = product_dist(G2, {0: F(9, 10), 1: F(1, 10)}, truths, q, s)
    with pytest.raises(UndefinedConditional):
        stage2_conditional_slack(dist, 1)


# decoupling_ratio

def test_decoupling_is_one_when_truths_agree(case_dists):
    for dist in case_dists.values():
        for g in ("majority", "minority"):
            assert decoupling_ratio(dist, g) == 1


def test_decoupling_brute_force_independent_truths():
    px, py = F(2, 5), F(3, 4)
    qx = {1: F(7, 10), 0: F(1, 10)}  # xhat depends on x only
    truths = {g: {(x, y): (px if x else 1 - px) * (py if y else 1 - py)
                  for x, y in itertools.product((0, 1), repeat=2)} for g in (0, 1)}
    q = {g: {(x, y): qx[x] for x, y in truths[g]} for g in (0, 1)}
    s = {g: dict.fromkeys(truths[g], F(1, 2)) for g in (0, 1)}
    dist = product_dist(G2, {0: F(1, 2), 1: F(1, 2)}, truths, q, s)

    # oracle: explicit sums over all 32 cells of the factored model
    num_x = den_x = num_y = den_y = F(0)
    for x, y, xh, yh in itertools.product((0, 1), repeat=4):
        p = truths[1][x, y] * (qx[x] if xh else 1 - qx[x])
        p *= F(1, 2) if xh else F(1 - yh)  # rejected applicants are never hired
        if x == 1:
            den_x += p
            num_x += p * xh
        if y == 1:
            den_y += p
            num_y += p * xh
    oracle = (num_x / den_x) / (num_y / den_y)
    assert decoupling_ratio(dist, 1) == oracle
    assert oracle == F(7, 10) / (px * F(7, 10) + (1 - px) * F(1, 10))


def test_decoupling_ratio_two():
    truths = {0: {(1, 1): F(1)}, 1: {(1, 1): F(1, 4), (0, 1): F(1, 4), (0, 0): F(1, 2)}}
    q = {0: {(1, 1): F(1, 2)}, 1: {(1, 1): F(4, 5), (0, 1): F(0), (0, 0): F(0)}}
    s = {g: dict.fromkeys(truths[g], F(1)) for g in (0, 1)}
    dist = product_dist(G2, {0: F(1, 2), 1: F(1, 2)}, truths, q, s)
    assert conditional_rate(dist, {"xhat": 1}, {"x": 1, "a": 1}) == F(4, 5)
    assert conditional_rate(dist, {"xhat": 1}, {"y": 1, "a": 1}) == F(2, 5)
    assert decoupling_ratio(dist, 1) == 2


def test_decoupling_zero_denominator():
    truths = {g: {(1, 1): F(1)} for g in (0, 1)}
    q = {0: {(1, 1): F(1)}, 1: {(1, 1): F(0)}}
    s = {g: {(1, 1): F(1)} for g in (0, 1)}
    dist = product_dist(G2, {0: F(1, 2), 1: F(1, 2)}, truths, q, s)
    with pytest.raises(UndefinedRatio):
        decoupling_ratio(dist, 1)


# properties

@st.composite
def rational_dists(draw, tie_truths=False):
    weights = {}
    for g, x, y, xh, yh in itertools.product((0, 1), repeat=5):
        if tie_truths and x != y:
            continue
        weights[g, x, y, xh, yh] = draw(st.integers(0, 6))
    # keep every conditioning event used below non-null
    for g in (0, 1):
        weights[g, 1, 1, 1, 1] += 1
        weights[g, 1, 1, 0, 0] += 1
    return OutcomeDistribution.from_weights(G2, weights)


@settings(max_examples=150, deadline=None)
@given(rational_dists(), st.fractions(-1, 3, max_denominator=20))
def test_slack_check_consistency(dist, eps):
    slack = epsilon_slack(dist, "yhat", "y", 1)
    maj = conditional_rate(dist, {"yhat": 1}, {"y": 1, "a": 0})
    if not 0 <= (1 + eps) * maj <= 1:
        with pytest.raises(InfeasibleEpsilon):
            check_eps_eo(dist, "yhat", "y", eps)
    else:
        assert check_eps_eo(dist, "yhat", "y", eps).passed == (eps <= slack)


@settings(max_examples=100, deadline=None)
@given(rational_dists(), st.fractions(F(1, 100), 100))
def test_renormalization_invariance(dist, c):
    scaled = dist.scaled(c)
    assert scaled == dist
    for fn in (stage1_cross_slack, stage1_naive_slack, stage2_conditional_slack, decoupling_ratio):
        assert fn(scaled, 1) == fn(dist, 1)


@settings(max_examples=100, deadline=None)
@given(rational_dists(tie_truths=True))
def test_decoupling_identity_when_x_equals_y(dist):
    assert decoupling_ratio(dist, 0) == 1
    assert decoupling_ratio(dist, 1) == 1


def test_empirical_convergence_million():
    """Slacks from a 10^6-record pipeline run sit within 3 SE of the exact ones."""
    truths = {0: {(1, 1): F(1, 2), (0, 1): F(1, 10), (1, 0): F(1, 10), (0, 0): F(3, 10)},
              1: {(1, 1): F(3, 10), (0, 1): F(3, 10), (1, 0): F(1, 10), (0, 0): F(3, 10)}}
    q = {0: {(1, 1): F(3, 5), (0, 1): F(1, 5), (1, 0): F(1, 2), (0, 0): F(1, 10)},
         1: {(1, 1): F(7, 10), (0, 1): F(3, 10), (1, 0): F(2, 5), (0, 0): F(1, 5)}}
    s = {0: {(1, 1): F(1, 2), (0, 1): F(2, 5), (1, 0): F(1, 10), (0, 0): F(0)},
         1: {(1, 1): F(3, 5), (0, 1): F(1, 2), (1, 0): F(1, 5), (0, 0): F(1, 10)}}
    group_mass = {0: F(7, 10), 1: F(3, 10)}
    exact = product_dist(G2, group_mass, truths, q, s)

    n, seed = 10**6, 20240611
    records = []
    cum = {g: list(itertools.accumulate(truths[g].values())) for g in (0, 1)}
    keys = {g: list(truths[g]) for g in (0, 1)}
    for i in range(n):
        g = 0 if record_uniform(seed, "group", i) < 0.7 else 1
        u = record_uniform(seed, "truth", i)
        x, y = keys[g][next(j for j, c in enumerate(cum[g]) if u < c)]
        records.append(Record(i, g, (x, y)))
    spec = make_filtering([
        bernoulli_decider(lambda r, p: q[r.group][r.truths], seed, "stage1"),
        bernoulli_decider(lambda r, p: s[r.group][r.truths], seed, "stage2"),
    ])
    empirical = empirical_distribution(evaluate_population(spec, records), G2)

    def slack_and_se(rate_fn):
        """Slack plus a delta-method standard error from per-group binomial rates."""
        (p0, n0), (p1, n1) = rate_fn(0), rate_fn(1)
        ratio = p1 / p0
        se = ratio * math.sqrt((1 - p1) / (p1 * n1) + (1 - p0) / (p0 * n0))
        return ratio - 1, se

    def rate(given, event):
        def fn(g):
            cond = {**given, "a": g}
            p = float(conditional_rate(empirical, event, cond))
            count = float(empirical.prob(cond)) * n
            return p, count
        return fn

    checks = {
        stage1_naive_slack: rate({"x": 1}, {"xhat": 1}),
        stage1_cross_slack: rate({"y": 1}, {"xhat": 1}),
        stage2_conditional_slack: rate({"y": 1, "xhat": 1}, {"yhat": 1}),
    }
    for fn, rate_fn in checks.items():
        est, se = slack_and_se(rate_fn)
        assert abs(est - float(fn(exact, 1))) < 3 * se, fn.__name__
