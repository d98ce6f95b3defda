"""Command-line front end: plan generation, dilution budgeting, batch
simulation, table export, and file-driven session execution.

Exit codes: 0 success, 1 domain/protocol error, 2 usage error.  Warnings go
to stderr, data to stdout.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .dilution import POOLING_FRACTION_LIMIT, dilution_report
from .errors import PoolscreenError
from .planners import (GroupOutcome, build_cost_table, expected_tests,
                       gbs_worst_case_bound, mst_worst_case_bound,
                       optimal_stage_count)
from .session import Session, SessionConfig, portion_requirement
from .simulator import (FIGURE_KEYS, OutcomeOracle, PlannerSpec, TruthModel,
                        exhaustive_sweep, figure_tables, simulate)
from .testmodel import DEFAULT_KIT, ReplicationPolicy, TestKitProfile


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except PoolscreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolscreen",
        description="Adaptive pooled-testing plans, dilution budgets, and simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="generate a test plan / session config")
    p.add_argument("--alg", required=True, choices=("gbs", "mst", "nt"))
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--stages", type=int)
    p.add_argument("--replicates", type=int, default=2)
    p.add_argument("--mode", default="negatives-only",
                   choices=("none", "negatives-only", "all"))
    p.add_argument("--budget", type=int, default=0,
                   help="portion budget per sample (default: derived)")
    p.add_argument("--verify", action="store_true",
                   help="confirm by-allowance negatives with one pooled test (gbs)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("dilution", help="max pool size and portion budget")
    p.add_argument("--viral-load", required=True, type=float)
    p.add_argument("--v95", required=True, type=float)
    p.add_argument("--v50", type=float)
    p.add_argument("--gamma-star", type=float, default=0.05)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--tests", default="log-rule",
                   help="tests per sample (number), or 'log-rule' (default)")
    p.set_defaults(func=cmd_dilution)

    p = sub.add_parser("simulate", help="seeded Monte Carlo or exhaustive sweep")
    p.add_argument("--alg", choices=("gbs", "mst", "nt", "conventional"))
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--stages", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--truth-d", type=int, help="true infected count (default: d)")
    p.add_argument("--truth-alpha", type=float, help="true prior (default: alpha)")
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--v50", type=float, default=DEFAULT_KIT.v50)
    p.add_argument("--v95", type=float, default=DEFAULT_KIT.v95)
    p.add_argument("--vp", type=float, default=1e6, help="viral load per infected swab")
    p.add_argument("--portions", type=int, default=1, help="portions each swab is split into")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--mode", default="none", choices=("none", "negatives-only", "all"))
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--figure", choices=FIGURE_KEYS,
                   help="emit a named figure table instead of running trials")
    p.add_argument("--csv", help="write CSV table here")
    p.add_argument("--json", dest="json_out", help="write report JSON here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("session", help="operator-in-the-loop session on a file")
    p.add_argument("action", choices=("start", "next", "report", "status"))
    p.add_argument("--file", required=True, help="session file path")
    p.add_argument("--plan", help="plan file (for start)")
    p.add_argument("--outcomes", help='outcome spec like "3:+,4:-"')
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("nt-table", help="build and store an expected-cost table")
    p.add_argument("--alpha", required=True, type=float)
    p.add_argument("--n-max", required=True, type=int)
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_nt_table)
    return parser


def _planner_flags(args, parser) -> None:
    if args.alg in ("gbs", "mst"):
        if args.d is None:
            parser.error(f"--alg {args.alg} requires --d")
        if args.alpha is not None:
            parser.error(f"--alg {args.alg} takes --d, not --alpha")
    if args.alg == "nt":
        if args.alpha is None:
            parser.error("--alg nt requires --alpha")
        if args.d is not None:
            parser.error("--alg nt takes --alpha, not --d")


def cmd_plan(args, parser) -> int:
    _planner_flags(args, parser)
    mode = args.mode
    replicates = args.replicates if mode != "none" else 1
    config = SessionConfig(
        algorithm=args.alg, n=args.n, d=args.d, alpha=args.alpha,
        stages=args.stages, verify=args.verify, profile=DEFAULT_KIT,
        replication=ReplicationPolicy(replicates, mode),
        portion_budget_per_sample=args.budget)
    if args.d is not None and args.n and args.d / args.n >= POOLING_FRACTION_LIMIT:
        print(f"warning: d/n = {args.d / args.n:.3f} is at or above "
              f"{POOLING_FRACTION_LIMIT:.6f}; pooling will not reduce tests, "
              "individual testing is recommended", file=sys.stderr)
    session = Session.create(config)
    plan = {"config": config.to_doc(), "planner": session.planner.to_doc()}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(plan, fh, indent=1)
        fh.write("\n")
    req = portion_requirement(config)
    print(f"plan written to {args.out}")
    print(f"per-sample portion requirement: {req if req is not None else 'unbounded (runtime enforced)'}")
    if args.alg == "gbs":
        print(f"worst case tests <= {math.ceil(gbs_worst_case_bound(args.n, args.d))}")
    elif args.alg == "mst":
        stages = args.stages or optimal_stage_count(args.n, args.d)
        bound = min(math.ceil(mst_worst_case_bound(args.n, args.d)), args.n)
        print(f"stages: {stages}; worst case tests <= {bound} (never above {args.n})")
    else:
        print(f"expected tests: {expected_tests(args.alpha, args.n):.4f}")
    return 0


def cmd_dilution(args, parser) -> int:
    tests = None
    if args.tests != "log-rule":
        try:
            tests = float(args.tests)
        except ValueError:
            parser.error(f"--tests must be a number or 'log-rule', got {args.tests!r}")
    report = dilution_report(
        vl=args.viral_load, v95=args.v95, v50=args.v50,
        gamma_star=args.gamma_star, replicates=args.replicates,
        tests_per_sample=tests)
    print(json.dumps(report, indent=1))
    if "note" in report:
        print(f"warning: {report['note']}", file=sys.stderr)
    return 0


def cmd_simulate(args, parser) -> int:
    if args.figure:
        table = figure_tables(args.figure)
        csv_text = table.to_csv()
        if args.csv:
            with open(args.csv, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text)
            print(f"wrote {args.csv} ({len(table.rows)} rows)")
        else:
            sys.stdout.write(csv_text)
        return 0
    if not args.alg or not args.n:
        parser.error("simulate requires --alg and --n (or --figure KEY)")
    _conv = args.alg == "conventional"
    if not _conv:
        _planner_flags(args, parser)
    spec = PlannerSpec(algorithm=args.alg, n=args.n, d=args.d,
                       alpha=args.alpha, stages=args.stages)
    policy = ReplicationPolicy(args.replicates if args.mode != "none" else 1, args.mode)

    if args.exhaustive:
        report, certificate = exhaustive_sweep(spec, policy)
        doc = report.to_doc()
        doc["certificate"] = certificate
    else:
        if args.trials is None or args.trials < 1:
            parser.error("--trials must be a positive integer")
        if args.seed is None:
            parser.error("--seed is required for Monte Carlo runs")
        if args.truth_alpha is not None:
            truth = TruthModel("bernoulli", alpha=args.truth_alpha, vp=args.vp)
        elif args.truth_d is not None:
            truth = TruthModel("fixed-d", d=args.truth_d, vp=args.vp)
        elif args.alpha is not None:
            truth = TruthModel("bernoulli", alpha=args.alpha, vp=args.vp)
        elif args.d is not None:
            truth = TruthModel("fixed-d", d=args.d, vp=args.vp)
        else:
            parser.error("no truth model: give --d/--alpha or --truth-d/--truth-alpha")
        if args.noisy:
            profile = TestKitProfile(v50=args.v50, v95=args.v95, beta=args.beta)
            oracle = OutcomeOracle("noisy", profile=profile,
                                   portions_per_sample=args.portions)
        else:
            oracle = OutcomeOracle("ideal")
        report = simulate(spec, truth, oracle, policy,
                          trials=args.trials, seed=args.seed)
        doc = report.to_doc()

    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    if args.csv:
        lines = ["tests,count"]
        hist = doc["tests"]["histogram"]
        for k in sorted(hist, key=int):
            lines.append(f"{k},{hist[k]}")
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    sens = doc["sensitivity"]
    fpr = doc["false_positive_rate"]
    print(f"mean={doc['tests']['mean']:.9g} max={doc['tests']['max']} "
          f"sensitivity={'n/a' if sens is None else f'{sens:.9g}'} "
          f"fpr={'n/a' if fpr is None else f'{fpr:.9g}'} "
          f"portions/sample={doc['mean_portions_per_sample']:.9g}")
    return 0


def _parse_outcomes(spec_text: str, parser) -> list[GroupOutcome]:
    outcomes = []
    for token in spec_text.split(","):
        token = token.strip()
        parts = token.split(":")
        if len(parts) != 2 or parts[1] not in ("+", "-") or not parts[0].isdigit():
            parser.error(f"malformed outcome token {token!r} (want QID:+ or QID:-)")
        outcomes.append(GroupOutcome(int(parts[0]), parts[1] == "+"))
    return outcomes


def _print_pending(session: Session) -> None:
    flags = session.pending_flags()
    for q in session.pending():
        names = ", ".join(session.config.label_of(s) for s in q.members)
        extra = " [budget-limited]" if flags.get(q.query_id) else ""
        rep = f" (replicate {q.replicate_index})" if q.replicate_index > 1 else ""
        print(f"  query {q.query_id}{rep}: pool {{{names}}}{extra}")


def _print_status(session: Session) -> None:
    d = session.diagnoses()
    print(f"session {session.session_id}: {session.status}"
          + (f" ({session.abort_reason})" if session.abort_reason else ""))
    print(f"diagnosed {len(d['positive']) + len(d['negative'])}/{session.config.n}; "
          f"tests so far: {session.bridge.physical_tests}")
    if session.status == "complete":
        pos = [session.config.label_of(s) for s in d["positive"]]
        print(f"positives: {pos if pos else 'none'}")


def cmd_session(args, parser) -> int:
    if args.action == "start":
        if not args.plan:
            parser.error("session start requires --plan")
        with open(args.plan, encoding="utf-8") as fh:
            plan = json.load(fh)
        config = SessionConfig.from_doc(plan["config"])
        session = Session.create(config)
        session.save(args.file)
        print(f"session {session.session_id} started; next pooled tests:")
        _print_pending(session)
        return 0
    session = Session.load(args.file)
    if args.action == "next":
        _print_pending(session)
        return 0
    if args.action == "status":
        _print_status(session)
        return 0
    # report
    if not args.outcomes:
        parser.error("session report requires --outcomes")
    outcomes = _parse_outcomes(args.outcomes, parser)
    session.report_outcomes(outcomes)
    session.save(args.file)
    if session.status == "active":
        print("next pooled tests:")
        _print_pending(session)
    else:
        _print_status(session)
    return 0


def cmd_nt_table(args, parser) -> int:
    table = build_cost_table(args.alpha, args.n_max, allow_large=args.allow_large)
    doc = table.to_doc()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")
        print(f"table written to {args.out}")
    print(f"expected tests for a full pool of {args.n_max}: "
          f"{table.expected_tests(args.n_max):.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
