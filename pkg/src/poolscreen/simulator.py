"""Plan evaluation by exhaustive enumeration and seeded Monte Carlo.

Trials are driven by a counter-based RNG keyed on (seed, trial, stream), so
reports are independent of execution order and reproducible bit for bit.
The hot configuration (nested testing, ideal oracle, no replication,
Bernoulli truth) routes through the compiled kernels; everything else runs
the real planner state machines through the replication bridge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

from . import backend
from .dilution import DilutionQuery, pooled_sensitivity
from .errors import ConfigError, DomainError
from .planners import (GroupOutcome, build_cost_table, create_planner,
                       expected_tests, gbs_worst_case_bound,
                       mst_worst_case_bound, optimal_stage_count)
from .rng import (STREAM_LOAD, STREAM_NOISE, STREAM_TRUTH, stream_key, u01_at,
                  u64_at)
from .session import PortionLedger, ReplicationBridge
from .testmodel import ReplicationPolicy, TestKitProfile, replicated_fnr, replicated_fpr

EXHAUSTIVE_CAP = 20

ALGORITHMS = ("gbs", "mst", "nt", "conventional")


@dataclass(frozen=True)
class PlannerSpec:
    algorithm: str
    n: int
    d: int | None = None
    alpha: float | None = None
    stages: int | None = None
    verify: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.n < 1:
            raise ConfigError(f"need n >= 1, got {self.n}")
        if self.algorithm in ("gbs", "mst") and self.d is None:
            raise ConfigError(f"{self.algorithm} needs d")
        if self.algorithm == "nt" and self.alpha is None:
            raise ConfigError("nt needs alpha")


@dataclass(frozen=True)
class TruthModel:
    """How infection patterns and viral loads are drawn per trial."""

    kind: str = "bernoulli"            # "bernoulli" | "fixed-d"
    alpha: float | None = None
    d: int | None = None
    vp: float | tuple[float, float] = 1e6   # constant, or (lo, hi) log-uniform

    def __post_init__(self):
        if self.kind == "bernoulli":
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ConfigError(f"bernoulli truth needs alpha in [0,1], got {self.alpha}")
        elif self.kind == "fixed-d":
            if self.d is None or self.d < 0:
                raise ConfigError(f"fixed-d truth needs d >= 0, got {self.d}")
        else:
            raise ConfigError(f"unknown truth kind {self.kind!r}")
        if isinstance(self.vp, tuple):
            lo, hi = self.vp
            if not 0 < lo <= hi:
                raise ConfigError(f"need 0 < lo <= hi for the load range, got {self.vp}")
        elif self.vp <= 0:
            raise ConfigError(f"viral load must be positive, got {self.vp}")


@dataclass(frozen=True)
class OutcomeOracle:
    """Ideal: a pooled test is positive iff the group holds an infected
    sample.  Noisy: an infected group turns positive with the pooled
    dilution sensitivity of its actual infected load, a clean group with
    probability beta."""

    kind: str = "ideal"                 # "ideal" | "noisy"
    profile: TestKitProfile | None = None
    portions_per_sample: int = 1

    def __post_init__(self):
        if self.kind not in ("ideal", "noisy"):
            raise ConfigError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "noisy" and self.profile is None:
            raise ConfigError("noisy oracle needs a kit profile")
        if self.portions_per_sample < 1:
            raise ConfigError("portions_per_sample must be >= 1")

    def positive_probability(self, group, infected, loads) -> float:
        hot = [s for s in group if s in infected]
        if self.kind == "ideal":
            return 1.0 if hot else 0.0
        if not hot:
            return self.profile.beta
        # Per-portion loads of the infected members, through the pooled
        # dilution curve; dilution is emergent, not assumed.
        total = sum(loads[s] for s in hot) / self.portions_per_sample
        mean_vp = total / len(hot)
        q = DilutionQuery(self.profile, n=len(group), d=len(hot), vp=mean_vp)
        return pooled_sensitivity(q)


@dataclass
class SimulationReport:
    algorithm: str
    n: int
    trials: int
    seed: int | None
    tests_mean: float
    tests_max: int
    tests_min: int
    histogram: dict[int, int]
    sensitivity: float | None
    false_positive_rate: float | None
    mean_portions_per_sample: float
    planner_failures: int
    params: dict

    def to_doc(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "tests": {
                "mean": self.tests_mean,
                "max": self.tests_max,
                "min": self.tests_min,
                "histogram": {str(k): self.histogram[k] for k in sorted(self.histogram)},
            },
            "sensitivity": self.sensitivity,
            "false_positive_rate": self.false_positive_rate,
            "mean_portions_per_sample": self.mean_portions_per_sample,
            "planner_failures": self.planner_failures,
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=1) + "\n"


class _Tally:
    def __init__(self):
        self.trials = 0
        self.tests_total = 0
        self.tests_max = 0
        self.tests_min = None
        self.histogram: dict[int, int] = {}
        self.infected_total = 0
        self.flagged_infected = 0
        self.clean_total = 0
        self.flagged_clean = 0
        self.incidences = 0
        self.failures = 0

    def add(self, tests: int, incid: int, n_infected: int, n_clean: int,
            true_pos: int, false_pos: int, failures: int) -> None:
        self.trials += 1
        self.tests_total += tests
        self.tests_max = max(self.tests_max, tests)
        self.tests_min = tests if self.tests_min is None else min(self.tests_min, tests)
        self.histogram[tests] = self.histogram.get(tests, 0) + 1
        self.infected_total += n_infected
        self.flagged_infected += true_pos
        self.clean_total += n_clean
        self.flagged_clean += false_pos
        self.incidences += incid
        self.failures += failures

    def report(self, spec: PlannerSpec, seed, params: dict) -> SimulationReport:
        return SimulationReport(
            algorithm=spec.algorithm,
            n=spec.n,
            trials=self.trials,
            seed=seed,
            tests_mean=self.tests_total / self.trials,
            tests_max=self.tests_max,
            tests_min=self.tests_min or 0,
            histogram=self.histogram,
            sensitivity=(self.flagged_infected / self.infected_total
                         if self.infected_total else None),
            false_positive_rate=(self.flagged_clean / self.clean_total
                                 if self.clean_total else None),
            mean_portions_per_sample=self.incidences / (spec.n * self.trials),
            planner_failures=self.failures,
            params=params,
        )


def _draw_truth(truth: TruthModel, n: int, seed: int, trial: int) -> set[int]:
    key = stream_key(seed, trial, STREAM_TRUTH)
    if truth.kind == "bernoulli":
        return {i + 1 for i in range(n) if u01_at(key, i) < truth.alpha}
    idx = list(range(n))
    for k in range(truth.d):
        j = k + u64_at(key, k) % (n - k)
        idx[k], idx[j] = idx[j], idx[k]
    return {i + 1 for i in idx[:truth.d]}


def _draw_loads(truth: TruthModel, n: int, seed: int, trial: int) -> dict[int, float]:
    if not isinstance(truth.vp, tuple):
        return {s: truth.vp for s in range(1, n + 1)}
    lo, hi = truth.vp
    key = stream_key(seed, trial, STREAM_LOAD)
    span = math.log(hi / lo)
    return {i + 1: lo * math.exp(span * u01_at(key, i)) for i in range(n)}


def _make_planner(spec: PlannerSpec, table=None):
    return create_planner(spec.algorithm, spec.n, d=spec.d, alpha=spec.alpha,
                          stages=spec.stages, verify=spec.verify, table=table)


def _trace_trial(spec: PlannerSpec, infected: set[int], loads, oracle: OutcomeOracle,
                 policy: ReplicationPolicy, noise_key, table=None):
    """Run one full session-equivalent trial; returns trial statistics."""
    planner = _make_planner(spec, table=table)
    ledger = PortionLedger(None)
    bridge = ReplicationBridge(planner, policy, ledger)
    noise_ctr = 0
    while not bridge.done:
        outcomes = []
        for q in bridge.pending():
            p = oracle.positive_probability(q.members, infected, loads)
            if p >= 1.0:
                positive = True
            elif p <= 0.0:
                positive = False
            else:
                positive = u01_at(noise_key, noise_ctr) < p
            if oracle.kind == "noisy":
                noise_ctr += 1
            outcomes.append(GroupOutcome(q.query_id, positive))
        bridge.report(outcomes)
    flagged = set(planner.positive)
    return (bridge.physical_tests, bridge.incidences,
            len(flagged & infected), len(flagged - infected),
            planner.failure_events)


def _conventional_trial(n: int, infected: set[int], loads, oracle: OutcomeOracle,
                        policy: ReplicationPolicy, noise_key):
    """Individual testing of every sample with replication (the baseline)."""
    tests = 0
    noise_ctr = 0
    true_pos = 0
    false_pos = 0
    reads_per_sample = policy.r if policy.mode == "all" else 1
    for s in range(1, n + 1):
        reads = []
        planned = reads_per_sample
        i = 0
        while i < planned:
            p = oracle.positive_probability((s,), infected, loads)
            if p >= 1.0:
                positive = True
            elif p <= 0.0:
                positive = False
            else:
                positive = u01_at(noise_key, noise_ctr) < p
            if oracle.kind == "noisy":
                noise_ctr += 1
            reads.append(positive)
            tests += 1
            i += 1
            if (policy.mode == "negatives-only" and planned == 1
                    and not positive and policy.r > 1):
                planned = policy.r
        positives = sum(reads)
        decided = positives >= (len(reads) + 1) // 2
        if decided and s in infected:
            true_pos += 1
        elif decided:
            false_pos += 1
    return tests, tests, true_pos, false_pos, 0


def simulate(spec: PlannerSpec, truth: TruthModel, oracle: OutcomeOracle,
             replication: ReplicationPolicy | None = None,
             trials: int = 1000, seed: int = 0,
             use_kernel: bool = True) -> SimulationReport:
    """Independent seeded trials of one plan; identical inputs give an
    identical report regardless of kernel backend or trial order."""
    if trials < 1:
        raise ConfigError(f"need trials >= 1, got {trials}")
    if seed is None or seed < 0:
        raise ConfigError("a nonnegative seed is required")
    policy = replication or ReplicationPolicy(1, "none")
    params = {
        "d": spec.d, "alpha": spec.alpha, "stages": spec.stages, "verify": spec.verify,
        "truth": {"kind": truth.kind, "alpha": truth.alpha, "d": truth.d,
                  "vp": list(truth.vp) if isinstance(truth.vp, tuple) else truth.vp},
        "oracle": {"kind": oracle.kind,
                   "profile": oracle.profile.to_doc() if oracle.profile else None,
                   "portions_per_sample": oracle.portions_per_sample},
        "replication": policy.to_doc(),
    }
    tally = _Tally()
    if (use_kernel and spec.algorithm == "nt" and truth.kind == "bernoulli"
            and oracle.kind == "ideal" and policy.mode == "none"):
        table = build_cost_table(spec.alpha, spec.n)
        tests, npos, incid = backend.nt_trials(truth.alpha, spec.n, trials,
                                               seed, table.choice)
        for t in range(trials):
            k = int(npos[t])
            tally.add(int(tests[t]), int(incid[t]), k, spec.n - k, k, 0, 0)
        return tally.report(spec, seed, params)

    table = build_cost_table(spec.alpha, spec.n) if spec.algorithm == "nt" else None
    for trial in range(trials):
        infected = _draw_truth(truth, spec.n, seed, trial)
        loads = _draw_loads(truth, spec.n, seed, trial)
        noise_key = stream_key(seed, trial, STREAM_NOISE)
        if spec.algorithm == "conventional":
            tests, incid, tp, fp, fails = _conventional_trial(
                spec.n, infected, loads, oracle, policy, noise_key)
        else:
            tests, incid, tp, fp, fails = _trace_trial(
                spec, infected, loads, oracle, policy, noise_key, table=table)
        k = len(infected)
        tally.add(tests, incid, k, spec.n - k, tp, fp, fails)
    return tally.report(spec, seed, params)


def exhaustive_sweep(spec: PlannerSpec, replication: ReplicationPolicy | None = None):
    """Enumerate every infection pattern and report exact statistics.

    CGT plans sweep all patterns with at most d infected (uniform mean);
    nested testing sweeps all 2^n patterns with their Bernoulli weights.
    Returns (report, certificate) where the certificate names the worst
    pattern.
    """
    if spec.n > EXHAUSTIVE_CAP:
        raise ConfigError(f"exhaustive sweep capped at n <= {EXHAUSTIVE_CAP}")
    policy = replication or ReplicationPolicy(1, "none")
    oracle = OutcomeOracle(kind="ideal")
    loads = {s: 1e6 for s in range(1, spec.n + 1)}
    table = build_cost_table(spec.alpha, spec.n) if spec.algorithm == "nt" else None

    if spec.algorithm in ("gbs", "mst"):
        patterns = (set(c) for k in range(spec.d + 1)
                    for c in combinations(range(1, spec.n + 1), k))
        weighted = False
    elif spec.algorithm == "nt":
        patterns = ({i + 1 for i in range(spec.n) if mask >> i & 1}
                    for mask in range(2 ** spec.n))
        weighted = True
    else:
        raise ConfigError(f"exhaustive sweep does not support {spec.algorithm!r}")

    tally = _Tally()
    worst = (-1, None)
    expectation = 0.0
    for infected in patterns:
        tests, incid, tp, fp, fails = _trace_trial(
            spec, infected, loads, oracle, policy, noise_key=0, table=table)
        k = len(infected)
        tally.add(tests, incid, k, spec.n - k, tp, fp, fails)
        if tests > worst[0]:
            worst = (tests, sorted(infected))
        if weighted:
            expectation += (spec.alpha ** k) * ((1.0 - spec.alpha) ** (spec.n - k)) * tests
    report = tally.report(spec, None, {
        "d": spec.d, "alpha": spec.alpha, "stages": spec.stages,
        "mode": "exhaustive", "replication": policy.to_doc()})
    certificate = {
        "worst_tests": worst[0],
        "worst_pattern": worst[1],
        "patterns": tally.trials,
        "expected_tests": expectation if weighted else report.tests_mean,
        "weighting": "bernoulli" if weighted else "uniform",
    }
    return report, certificate


# -- figure tables ---------------------------------------------------------------

FIGURE_KEYS = ("replication", "portions", "pool-dilution", "gbs-wc",
               "mst-stages", "mst-wc", "gbs-vs-mst", "nt-avg")


class FigureTable:
    def __init__(self, name: str, columns: list[str], rows: list[tuple]):
        self.name = name
        self.columns = columns
        self.rows = rows

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def figure_tables(which: str, profile: TestKitProfile | None = None,
                  replicates: int = 2) -> FigureTable:
    """Deterministic grids behind the report figures, as CSV-ready tables."""
    from .dilution import max_portions, required_load
    from .testmodel import DEFAULT_KIT

    profile = profile or DEFAULT_KIT
    if which == "replication":
        rows = []
        for r in (1, 2, 3):
            for i in range(51):
                rate = i / 100.0
                rows.append((rate, r, replicated_fnr(rate, r), replicated_fpr(rate, r)))
        return FigureTable(which, ["per_read_rate", "replicates",
                                   "majority_fnr", "majority_fpr"], rows)
    if which == "portions":
        rows = []
        for gamma_star in (0.02, 0.05, 0.10):
            load = required_load(profile, gamma_star, replicates=3)
            for k in range(13):
                vl = 10.0 ** (2 + k / 4.0)
                count = max_portions(vl, load)
                rows.append((vl, gamma_star, 3, load, count.portions))
        return FigureTable(which, ["viral_load", "gamma_star", "replicates",
                                   "required_load", "portions"], rows)
    if which == "pool-dilution":
        rows = []
        steps = 20
        for n in (2, 4, 8, 16, 32, 64):
            for t in range(steps + 1):
                per_test = profile.v50 * (profile.v95 / profile.v50) ** (t / steps)
                vp = per_test * n
                sens = pooled_sensitivity(DilutionQuery(profile, n=n, d=1, vp=vp))
                rows.append((n, 1, per_test, sens))
        return FigureTable(which, ["pool_size", "infected", "per_test_load",
                                   "sensitivity"], rows)
    if which == "gbs-wc":
        rows = []
        for n in range(4, 65):
            for d in range(1, 7):
                if d >= n:
                    continue
                b = gbs_worst_case_bound(n, d)
                rows.append((n, d, b, math.ceil(b) * replicates))
        return FigureTable(which, ["n", "d", "worst_bound",
                                   "worst_bound_replicated"], rows)
    if which == "mst-stages":
        rows = [(n, d, optimal_stage_count(n, d))
                for n in range(8, 65) for d in range(1, 7) if d < n]
        return FigureTable(which, ["n", "d", "stages"], rows)
    if which == "mst-wc":
        rows = []
        for n in range(8, 65):
            for d in range(1, 7):
                if d >= n:
                    continue
                b = mst_worst_case_bound(n, d)
                capped = min(math.ceil(b), n)
                rows.append((n, d, b, capped, capped * replicates))
        return FigureTable(which, ["n", "d", "worst_bound", "worst_bound_capped",
                                   "worst_bound_replicated"], rows)
    if which == "gbs-vs-mst":
        rows = []
        for n in range(8, 49):
            for d in range(1, 7):
                if d >= n:
                    continue
                gbs_b = math.ceil(gbs_worst_case_bound(n, d))
                mst_b = math.ceil(mst_worst_case_bound(n, d))
                rows.append((n, d, gbs_b, mst_b, n))
        return FigureTable(which, ["n", "d", "gbs_worst_bound", "mst_worst_bound",
                                   "conventional"], rows)
    if which == "nt-avg":
        rows = []
        for alpha in (0.01, 0.02, 0.05, 0.1, 0.2, 0.3):
            table = build_cost_table(alpha, 64)
            for n in range(2, 65):
                rows.append((n, alpha, table.expected_tests(n)))
        return FigureTable(which, ["n", "alpha", "expected_tests"], rows)
    raise DomainError(f"unknown figure key {which!r}; known: {', '.join(FIGURE_KEYS)}")
