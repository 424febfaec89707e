"""``fairpipe`` command line: audit, simulate, compose, feedback.

Exit codes are shared by every subcommand: 0 success, 1 usage or input
error, 2 a failed fairness verdict, an infeasible scenario or a diverging
trajectory.
"""
from __future__ import annotations

import argparse
import contextlib
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import composition, feedback, hiring, metrics
from .errors import (
    Divergence,
    FairPipeError,
    FormatError,
    InfeasibleEpsilon,
    InfeasibleScenario,
    UndefinedConditional,
)
from .formats import (
    fmt,
    parse_label,
    read_distribution,
    read_outcomes,
    schema_line,
    section,
    sniff_header,
    write_distribution,
    write_rows,
)

EXIT_OK, EXIT_INPUT, EXIT_VERDICT = 0, 1, 2


class UsageError(Exception):
    pass


def _number(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _eps_arg(text: str):
    """``2`` or ``minority=2,other=1/2``."""
    if "=" not in text:
        return _number(text)
    values = {}
    for part in text.split(","):
        label, _, value = part.partition("=")
        values[parse_label(label)] = _number(value)
    return values


def _read_input(path) -> str:
    if path is None or path == "-":
        return sys.stdin.read()
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"no such file: {path}")
    return p.read_text()


@contextlib.contextmanager
def _output(path):
    """Buffer output and write it in one go, so failures leave no partial file."""
    buf = io.StringIO()
    yield buf
    if path is None or path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _err(message: str) -> None:
    print(f"fairpipe: {message}", file=sys.stderr)


# audit

def cmd_audit(args) -> int:
    text = _read_input(args.input)
    if not text.strip():
        raise FormatError("empty input")
    header = sniff_header(text)
    n_stages = 2
    if "mass" in header:
        dist = read_distribution(io.StringIO(text), majority=args.majority)
    elif "status" in header:
        table = read_outcomes(io.StringIO(text))
        n_stages = table.n_stages
        if n_stages > 2:
            raise FormatError(f"audit handles one- or two-stage outcomes, got {n_stages} stages")
        majority = None if args.majority is None else _label(args.majority)
        dist = metrics.empirical_distribution(table, majority=majority)
    else:
        raise FormatError("input is neither an outcome table nor a distribution table")

    checks = [("1", "xhat|x", "xhat", "x", args.eps), ("1", "xhat|y", "xhat", "y", None)]
    if n_stages == 2:
        checks += [("2", "yhat|xhat,y", None, None, args.delta),
                   ("pipeline", "yhat|y", "yhat", "y", None)]
    rows, all_pass = [], True
    for stage, metric, predictor, target, eps in checks:
        extra = None
        if predictor is None:
            predictor, target, extra = "yhat", "y", metrics.STAGE2_GIVEN
        if eps is None:
            slacks = {g: metrics.epsilon_slack(dist, predictor, target, g, extra)
                      for g in dist.groups.others}
            report = metrics.SlackReport(slacks)
        else:
            report = metrics.check_eps_eo(dist, predictor, target, eps, extra)
        all_pass &= report.passed
        for g, slack in report.per_group_slack.items():
            tested = None if report.satisfied_at is None else report.satisfied_at[g]
            verdict = None if report.verdict is None else ("pass" if report.verdict[g] else "fail")
            rows.append((stage, metric, g, slack, tested, verdict))
    with _output(args.output) as out:
        out.write(schema_line("audit"))
        out.write(f"# majority: {dist.groups.majority}\n")
        write_rows(out, ("stage", "metric", "group", "slack", "tested_eps", "verdict"), rows)
    return EXIT_OK if all_pass else EXIT_VERDICT


def _label(text):
    return parse_label(str(text))


# simulate

CONFIG_KEYS = ("n_majority", "n_minority", "n_interview", "n_hire", "eps", "delta",
               "qualification_rate", "model", "trials", "seed", "case")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(_read_input(path))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(config, dict):
        raise FormatError("scenario config must be a JSON object")
    unknown = sorted(set(config) - set(CONFIG_KEYS))
    if unknown:
        raise FormatError(f"unknown config key(s): {', '.join(unknown)}")
    return config


def _scenario_from(config: dict, args) -> tuple[hiring.HiringScenario, object]:
    case = args.case if args.case is not None else config.get("case")
    kwargs = {}
    if case is not None and str(case).isdigit() and int(case) in hiring.CASES:
        kwargs["eps"], kwargs["delta"] = hiring.CASES[int(case)]
    for key in ("n_majority", "n_minority", "n_interview", "n_hire"):
        if key in config:
            if not isinstance(config[key], int):
                raise FormatError(f"{key} must be an integer")
            kwargs[key] = config[key]
    for key in ("eps", "delta", "qualification_rate"):
        if key in config:
            try:
                kwargs[key] = Fraction(str(config[key]))
            except (ValueError, ZeroDivisionError):
                raise FormatError(f"{key} is not a number: {config[key]!r}") from None
    if args.eps is not None:
        kwargs["eps"] = args.eps
    if args.delta is not None:
        kwargs["delta"] = args.delta
    model = args.model or config.get("model", "bernoulli")
    try:
        kwargs["model"] = hiring.SamplingModel(model)
    except ValueError:
        raise FormatError(f"model must be bernoulli or quota, got {model!r}") from None
    return hiring.HiringScenario(**kwargs), (case if case is not None else "custom")


def cmd_simulate(args) -> int:
    config = _load_config(args.input)
    scenario, case = _scenario_from(config, args)
    trials = args.trials if args.trials is not None else int(config.get("trials", 0))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    if trials < 0:
        raise UsageError("--trials must be nonnegative")

    feas = hiring.feasibility_check(scenario)
    expected = hiring.expected_counts(scenario)
    mc = hiring.monte_carlo(scenario, trials, seed, workers=args.threads) if trials else None

    keys = [("interviewed", hiring.MAJ), ("interviewed", hiring.MIN),
            ("hired", hiring.MAJ), ("hired", hiring.MIN)]
    header = ["case", "eps", "delta", "maj_interviewed", "min_interviewed", "maj_hired", "min_hired"]
    row = [case, scenario.eps, scenario.delta, *expected.as_row()]
    if mc is not None:
        header += ["model", "trials", "seed", "var_maj_interviewed", "var_min_interviewed",
                   "var_maj_hired", "var_min_hired"]
        row += [scenario.model.value, trials, seed, *(mc[k].var for k in keys)]

    with _output(args.output) as out:
        out.write(schema_line("simulate"))
        section(out, "table")
        write_rows(out, header, [row])
        if mc is not None:
            section(out, "monte_carlo")
            counts = {("interviewed", g): expected.interviewed[g] for g in hiring.GROUPS}
            counts.update({("hired", g): expected.hired[g] for g in hiring.GROUPS})
            write_rows(out, ("stage", "group", "expected", "mean", "se_mean", "var", "se_var",
                             "z_mean"),
                       [(s, g, counts[s, g], mc[s, g].mean, mc[s, g].se_mean, mc[s, g].var,
                         mc[s, g].se_var, hiring.mean_z(mc[s, g], counts[s, g])) for s, g in keys])
        section(out, "feasibility")
        write_rows(out, ("feasible", "expected_minority_interviewed", "max_minority_hires",
                         "requested_minority_hires", "binding"),
                   [(feas.feasible, feas.expected_minority_interviewed, feas.max_minority_hires,
                     feas.requested_minority_hires, feas.binding)])
        section(out, "chart")
        write_rows(out, ("case", "group", "stage", "expected_count"),
                   hiring.chart_rows({case: scenario}))
    return EXIT_OK


# compose

def cmd_compose(args) -> int:
    if args.input is None and args.search is None:
        raise UsageError("compose needs --input, --search N, or both")
    status = EXIT_OK
    buf = io.StringIO()
    buf.write(schema_line("compose"))
    if args.input is not None:
        dist = read_distribution(io.StringIO(_read_input(args.input)), majority=args.majority)
        group = None if args.group is None else _label(args.group)
        report = composition.verify_composition(dist, group, args.eps, args.delta)
        a1, a2, a3 = report.assumptions_hold
        section(buf, "report")
        write_rows(buf, ("eps", "delta", "alpha", "bound", "a1", "a2", "a3", "verdict"),
                   [(report.eps, report.delta, report.alpha, report.bound, a1, a2, a3,
                     "n/a" if report.verdict is None else ("pass" if report.verdict else "fail"))])
        section(buf, "diagnostics")
        counterexample = (report.naive_eps == 0 and report.alpha < 0
                          and metrics.stage2_conditional_slack(dist, report.group) == 0)
        write_rows(buf, ("group", "naive_eps", "gap", "offending_mass", "decoupling_ratio",
                         "counterexample"),
                   [(report.group, report.naive_eps, report.gap, report.offending_mass,
                     _maybe(metrics.decoupling_ratio, dist, report.group), counterexample)])
        if not a3:
            section(buf, "offending_cells")
            write_rows(buf, ("group", "x", "y", "xhat", "yhat", "mass"),
                       [(*c, m) for c, m in dist.items() if c.yhat == 1 and c.xhat == 0])
            _err(f"assumption 3 (yhat=1 => xhat=1) violated; offending mass {fmt(report.offending_mass)}")
        if report.verdict is not True:
            status = EXIT_VERDICT
    if args.search is not None:
        alpha_below = float(args.alpha_below) if args.alpha_below is not None else -1e-9
        found = composition.search_counterexample(
            args.seed, args.search, tie_truths=args.tie_truths, alpha_below=alpha_below,
            workers=args.threads)
        section(buf, "search")
        if found is None:
            write_rows(buf, ("found", "trials", "seed"), [(False, args.search, args.seed)])
        else:
            write_rows(buf, ("found", "trial", "seed", "naive_eps", "delta", "alpha",
                             "decoupling_majority", "decoupling_minority"),
                       [(True, found.trial, args.seed, found.naive_eps, found.delta, found.alpha,
                         found.decoupling[0], found.decoupling[1])])
            section(buf, "counterexample")
            write_distribution(found.dist, buf)
    with _output(args.output) as out:
        out.write(buf.getvalue())
    return status


def _maybe(fn, *a):
    try:
        return fn(*a)
    except FairPipeError:
        return None


# feedback

def _scan_arg(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--scan expects lo:hi:n")
    lo, hi = _number(parts[0]), _number(parts[1])
    try:
        n = int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError("--scan grid size must be an integer") from None
    return lo, hi, n


def cmd_feedback(args) -> int:
    rule = feedback.rule_by_name(args.rule)
    system = feedback.FeedbackSystem(rule, float(args.lam), float(args.r0))
    buf = io.StringIO()
    buf.write(schema_line("feedback"))
    try:
        traj = feedback.iterate(system, args.steps, args.tol)
    except Divergence as exc:
        _err(str(exc))
        return EXIT_VERDICT
    section(buf, "trajectory")
    write_rows(buf, ("t", "r"), enumerate(traj.shares))
    section(buf, "fixed_point")
    d = feedback.map_derivative(system, 0.5)
    cls = feedback.classify_fixed_point(system, 0.5)
    cycle = "" if traj.cycle is None else " ".join(fmt(v) for v in traj.cycle)
    write_rows(buf, ("rule", "lambda", "r_star", "derivative", "class", "converged", "limit", "cycle"),
               [(rule.name, float(args.lam), 0.5, d, cls.value, traj.converged, traj.limit, cycle)])
    if args.scan is not None:
        lo, hi, n = args.scan
        scan = feedback.exponent_stability_scan(float(args.lam), beta_range=(lo, hi), grid=n)
        section(buf, "scan")
        write_rows(buf, ("beta", "lambda", "derivative", "class"),
                   [(r.beta, r.lam, r.derivative, r.stability.value) for r in scan.rows])
    with _output(args.output) as out:
        out.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairpipe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--input", help="input file ('-' for stdin)")
        p.add_argument("--output", help="output file (default stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--threads", type=int, default=None,
                           help="worker threads; never changes output")

    p = sub.add_parser("audit", help="equal-opportunity slacks of an outcome or distribution table")
    common(p, seed=False)
    p.add_argument("--eps", type=_eps_arg, help="stage-1 eps to test (value or group=value,...)")
    p.add_argument("--delta", type=_eps_arg, help="stage-2 delta to test")
    p.add_argument("--majority", help="majority group label (default: largest group)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate", help="hiring toy model: expectations and Monte Carlo")
    common(p)
    p.add_argument("--case", type=int, choices=sorted(hiring.CASES))
    p.add_argument("--eps", type=_number)
    p.add_argument("--delta", type=_number)
    p.add_argument("--trials", type=int)
    p.add_argument("--model", choices=[m.value for m in hiring.SamplingModel])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compose", help="check the multiplicative bound; search counterexamples")
    common(p)
    p.add_argument("--search", type=int, metavar="N")
    p.add_argument("--tie-truths", action="store_true", help="search only distributions with x == y")
    p.add_argument("--alpha-below", type=_number, help="pipeline slack threshold for the search")
    p.add_argument("--eps", type=_number, help="tested stage-1 slack (default: measured)")
    p.add_argument("--delta", type=_number, help="tested stage-2 slack (default: measured)")
    p.add_argument("--group", help="protected group (default: the only non-majority group)")
    p.add_argument("--majority")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("feedback", help="participation feedback under an incentive rule")
    p.add_argument("--output")
    p.add_argument("--rule", default="sqrt", help="sqrt, inverse, linear or pow:<beta>")
    p.add_argument("--lambda", dest="lam", type=_number, default=Fraction(1))
    p.add_argument("--r0", type=_number, default=Fraction(1, 10))
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--scan", type=_scan_arg, metavar="LO:HI:N")
    p.set_defaults(func=cmd_feedback)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if getattr(args, "seed", 0) is None and args.command == "compose":
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (InfeasibleScenario, InfeasibleEpsilon) as exc:
        _err(str(exc))
        return EXIT_VERDICT
    except UndefinedConditional as exc:
        _err(f"undefined conditional probability: {exc}")
        return EXIT_INPUT
    except FairPipeError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
