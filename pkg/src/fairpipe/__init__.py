"""Fairness of multi-stage decision pipelines under (1+eps)-equal opportunity."""
from .composition import (
    CompositionReport,
    compose_slack,
    search_counterexample,
    verify_composition,
)
from .errors import FairPipeError
from .feedback import (
    FeedbackSystem,
    PowerRule,
    Stability,
    classify_fixed_point,
    exponent_stability_scan,
    iterate,
    payout_share,
    rule_by_name,
    step,
)
from .hiring import (
    HiringScenario,
    SamplingModel,
    expected_counts,
    feasibility_check,
    monte_carlo,
    solve_rates,
)
from .metrics import (
    OutcomeDistribution,
    SlackReport,
    check_eps_eo,
    conditional_rate,
    decoupling_ratio,
    epsilon_slack,
    stage1_cross_slack,
    stage2_conditional_slack,
)
from .pipeline import (
    GroupSet,
    Outcome,
    OutcomeTable,
    PipelineSpec,
    Record,
    StageSpec,
    Status,
    evaluate_population,
    make_filtering,
    run_pipeline,
)

__version__ = "0.1.0"
