"""Pooling-dilution limits: pooled sensitivity, pool sizing, portion budgets.

Mixing one swab portion with N-1 clean ones divides its viral load by N;
the probit sensitivity curve then says how much detection probability
survives.  Inverting that relation gives the largest usable pool size, and
dividing a swab's total load by the minimum detectable load gives how many
portions it can be split into.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DomainError
from .normal import Z95, norm_cdf, norm_quantile
from .testmodel import TestKitProfile, replicated_fnr, sensitivity_at_load

# Pooling reduces total tests only while the infected fraction stays below
# (3 - sqrt(5)) / 2, about 0.382.
POOLING_FRACTION_LIMIT = (3.0 - math.sqrt(5.0)) / 2.0

_LOG2_E = math.log2(math.e)


@dataclass(frozen=True)
class DilutionQuery:
    """One pooled test: d infected swabs of load vp each, pooled n-wide."""

    profile: TestKitProfile
    n: int
    d: int
    vp: float

    def __post_init__(self):
        if not 1 <= self.d <= self.n:
            raise DomainError(f"need 1 <= d <= n, got d={self.d} n={self.n}")
        if self.vp <= 0:
            raise DomainError(f"viral load must be positive, got {self.vp}")


class PoolSize(NamedTuple):
    size: int     # floored, physical pool size (>= 1)
    raw: float    # un-floored value of the sizing formula


class PortionCount(NamedTuple):
    portions: int
    usable: bool  # False when even the undivided swab is below the detection load


def pooled_sensitivity(q: DilutionQuery) -> float:
    """Sensitivity after pooling dilution.

    Phi( z95 * log10(chi d vp / (n v50)) / log10(v95 / v50) ): the probit
    curve evaluated at the per-test load d*vp/n the pool delivers.
    """
    p = q.profile
    arg = Z95 * math.log10(p.chi * q.d * q.vp / (q.n * p.v50)) / math.log10(p.v95 / p.v50)
    return norm_cdf(arg)


def max_pool_size(vl: float, replicates: int, tests_per_sample: float,
                  profile: TestKitProfile, gamma_star: float = 0.05) -> PoolSize:
    """Largest pool size keeping false negatives at or below gamma_star.

    A swab of load vl split across `replicates * tests_per_sample` physical
    tests delivers vl/(r*T) particles per test; diluting that n-fold must
    still sit at the load where sensitivity is 1-gamma_star.  Assumes the
    worst case of a single infected swab in the pool.  For gamma_star = 0.05
    the expression collapses exactly to vl / (r * T * v95).
    """
    if vl <= 0 or tests_per_sample <= 0:
        raise DomainError("viral load and tests per sample must be positive")
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    if not 0.0 < gamma_star < 0.5:
        raise DomainError(f"need 0 < gamma_star < 0.5, got {gamma_star}")
    denom = replicates * tests_per_sample
    z = norm_quantile(1.0 - gamma_star)
    if abs(z - Z95) < 1e-12:
        # Exact algebraic simplification at the 95% point; avoids the
        # round-trip through 10**log10 so the floor cannot slip by one ulp.
        raw = vl / (denom * profile.v95)
    else:
        raw = (vl / (denom * profile.v50)) * 10.0 ** (
            -(z / Z95) * math.log10(profile.v95 / profile.v50))
    return PoolSize(size=max(1, math.floor(raw)), raw=raw)


def max_pool_size_log_rule(vl: float, replicates: int, v95: float) -> PoolSize:
    """Pool size when each sample is budgeted log2(N) tests.

    Solving n * log2(n) = vl / (r * v95) gives n = exp(W0(vl / (r v95 log2 e))).
    Covers dilution from both splitting the swab and pooling the portions.
    """
    if vl <= 0 or v95 <= 0:
        raise DomainError("viral loads must be positive")
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    x = vl / (replicates * v95 * _LOG2_E)
    w = lambert_w0(x)
    raw = x / w if w > 1e-12 else math.exp(w)
    return PoolSize(size=max(1, math.floor(raw)), raw=raw)


def lambert_w0(x: float) -> float:
    """Principal branch of w * e^w = x for x >= 0.

    Halley iteration seeded at log1p(x); residual tolerance 1e-10 relative.
    """
    if x < 0.0:
        raise DomainError(f"lambert_w0 requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    w = math.log1p(x)
    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 1e-10 * x:
            return w
        fp = ew * (1.0 + w)
        # Halley: second-order correction keeps convergence cubic.
        w -= f / (fp - f * (w + 2.0) / (2.0 * (w + 1.0)))
    ew = math.exp(w)
    if abs(w * ew - x) <= 1e-10 * x:
        return w
    raise DomainError(f"lambert_w0 failed to converge for x={x}")


def required_load(profile: TestKitProfile, gamma_star: float,
                  replicates: int = 1) -> float:
    """Smallest per-test viral load achieving a decision-level FNR gamma_star.

    With replication the per-read FNR may be larger: first invert the
    majority-decision FNR, then invert the sensitivity curve by bisection.
    """
    if not 0.0 < gamma_star < 0.5:
        raise DomainError(f"need 0 < gamma_star < 0.5, got {gamma_star}")
    per_read = _invert_replicated_fnr(gamma_star, replicates)
    target = 1.0 - per_read
    lo, hi = profile.v50, profile.v95
    while sensitivity_at_load(profile, lo) > target:
        lo /= 2.0
    while sensitivity_at_load(profile, hi) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sensitivity_at_load(profile, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_portions(vl: float, required: float) -> PortionCount:
    """How many portions a swab of load vl yields at `required` load each."""
    if vl <= 0 or required <= 0:
        raise DomainError("viral loads must be positive")
    if required > vl:
        return PortionCount(portions=0, usable=False)
    return PortionCount(portions=math.floor(vl / required), usable=True)


def pooling_beneficial(d: int, n: int) -> bool:
    """True when pooled testing beats testing each sample individually."""
    if n < 1 or not 0 <= d <= n:
        raise DomainError(f"need 1 <= n and 0 <= d <= n, got d={d} n={n}")
    return d / n < POOLING_FRACTION_LIMIT


def _invert_replicated_fnr(gamma_star: float, replicates: int) -> float:
    """Per-read FNR whose r-replicate majority FNR equals gamma_star."""
    if replicates == 1:
        return gamma_star
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if replicated_fnr(mid, replicates) < gamma_star:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dilution_report(vl: float, v95: float, v50: float | None = None,
                    gamma_star: float = 0.05, replicates: int = 1,
                    tests_per_sample: float | None = None,
                    beta: float = 0.1) -> dict:
    """Pool-size and portion budget summary consumed by the CLI and service.

    With `tests_per_sample` given the general sizing formula applies;
    otherwise the log2(N)-tests rule.  v50 is only needed away from the
    gamma_star = 0.05 point, where the required load is exactly v95.
    """
    if v95 <= 0 or vl <= 0:
        raise DomainError("viral loads must be positive")
    if v50 is not None and v50 >= v95:
        raise DomainError(f"need v50 < v95, got v50={v50} v95={v95}")
    profile = None
    if v50 is not None:
        profile = TestKitProfile(v50=v50, v95=v95, beta=beta)

    z95_point = abs(norm_quantile(1.0 - gamma_star) - Z95) < 1e-12
    if tests_per_sample is not None:
        if profile is None:
            if not z95_point:
                raise DomainError("v50 is required when gamma_star != 0.05")
            # Only the v95 anchor matters on the simplified path.
            profile = TestKitProfile(v50=v95 / 10.0, v95=v95, beta=beta)
        pool = max_pool_size(vl, replicates, tests_per_sample, profile, gamma_star)
        rule = "general"
    else:
        pool = max_pool_size_log_rule(vl, replicates, v95)
        rule = "log-rule"

    if profile is not None and not z95_point:
        load = required_load(profile, gamma_star, replicates)
    else:
        load = v95
    budget = max_portions(vl, load)

    report = {
        "pool_size": pool.size,
        "raw": pool.raw,
        "portions": budget.portions,
        "assumptions": {
            "rule": rule,
            "viral_load": vl,
            "v95": v95,
            "v50": v50,
            "gamma_star": gamma_star,
            "replicates": replicates,
            "tests_per_sample": tests_per_sample,
            "required_load_per_portion": load,
            "worst_case_single_infected": True,
        },
    }
    if not budget.usable:
        report["note"] = "sample unusable for pooling: required load exceeds swab load"
    return report
