"""Assay error model and per-sample test statistics.

A test kit is characterized by the viral loads at which it reaches 50% and
95% sensitivity (a probit law in log-load), a flat false-positive rate, and
the number of RNA copies contributed per viral particle.  On top of that sit
the replication statistics: majority decisions over r independent reads, the
resulting error rates, and the posterior odds used to call a sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .normal import Z95, norm_cdf, norm_quantile

VALID_REPLICATION_MODES = ("none", "negatives-only", "all")


@dataclass(frozen=True)
class TestKitProfile:
    """Sensitivity curve parameters of one assay.

    v50/v95 are the viral-particle counts per test at which sensitivity is
    0.5 and 0.95; beta is the false-positive rate; chi is the number of
    detectable RNA copies each viral particle contributes (often 1).
    """

    __test__ = False  # keep pytest collection away from the Test* name

    v50: float
    v95: float
    beta: float
    chi: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.v50 < self.v95:
            raise DomainError(f"need 0 < v50 < v95, got v50={self.v50} v95={self.v95}")
        if not 0.0 <= self.beta < 0.5:
            raise DomainError(f"need 0 <= beta < 0.5, got {self.beta}")
        if self.chi < 1.0:
            raise DomainError(f"need chi >= 1, got {self.chi}")

    def to_doc(self) -> dict:
        return {"v50": self.v50, "v95": self.v95, "beta": self.beta, "chi": self.chi}

    @classmethod
    def from_doc(cls, doc: dict) -> "TestKitProfile":
        return cls(v50=float(doc["v50"]), v95=float(doc["v95"]),
                   beta=float(doc["beta"]), chi=float(doc.get("chi", 1.0)))


@dataclass(frozen=True)
class ReplicationPolicy:
    """How physical reads are repeated: r reads, expanded per `mode`.

    mode "none" runs each test once (r must be 1); "all" runs every test r
    times up front; "negatives-only" confirms only first reads that came back
    negative with r-1 extra reads.
    """

    r: int = 1
    mode: str = "none"

    def __post_init__(self):
        if self.mode not in VALID_REPLICATION_MODES:
            raise DomainError(f"unknown replication mode {self.mode!r}")
        if self.r < 1:
            raise DomainError(f"need r >= 1, got {self.r}")
        if self.mode == "none" and self.r != 1:
            raise DomainError("mode 'none' implies r = 1")

    def to_doc(self) -> dict:
        return {"r": self.r, "mode": self.mode}

    @classmethod
    def from_doc(cls, doc: dict) -> "ReplicationPolicy":
        return cls(r=int(doc["r"]), mode=str(doc["mode"]))


@dataclass(frozen=True)
class PriorEstimate:
    """Infection prior backed by the counts it was estimated from."""

    positives: int
    tests: int
    alpha: float


def estimate_prior(positives: int, tests: int) -> PriorEstimate:
    """Prior = positives observed / tests performed."""
    if tests <= 0:
        raise DomainError("tests must be positive")
    if not 0 <= positives <= tests:
        raise DomainError("need 0 <= positives <= tests")
    return PriorEstimate(positives=positives, tests=tests, alpha=positives / tests)


def sensitivity_at_load(profile: TestKitProfile, load: float) -> float:
    """Detection probability for a single test holding `load` viral particles.

    Probit in log10 dose, pinned so sensitivity(v50) = 0.5 and
    sensitivity(v95) = 0.95.
    """
    if load <= 0.0:
        raise DomainError(f"viral load must be positive, got {load}")
    arg = Z95 * math.log10(profile.chi * load / profile.v50) / math.log10(profile.v95 / profile.v50)
    return norm_cdf(arg)


def false_negative_at_load(profile: TestKitProfile, load: float) -> float:
    return 1.0 - sensitivity_at_load(profile, load)


def profile_from_points(point_a: tuple[float, float], point_b: tuple[float, float],
                        beta: float, chi: float = 1.0) -> TestKitProfile:
    """Fit (v50, v95) through two (load, sensitivity) anchor points.

    The probit law is linear in log10(load), so two anchors determine it
    exactly.
    """
    (la, sa), (lb, sb) = point_a, point_b
    if la <= 0 or lb <= 0 or la == lb:
        raise DomainError("anchor loads must be positive and distinct")
    if not (0.0 < sa < 1.0 and 0.0 < sb < 1.0) or sa == sb:
        raise DomainError("anchor sensitivities must be distinct and inside (0, 1)")
    za = norm_quantile(sa) / Z95
    zb = norm_quantile(sb) / Z95
    slope = (zb - za) / (math.log10(lb) - math.log10(la))
    if slope <= 0:
        raise DomainError("anchors imply a non-increasing sensitivity curve")
    log_v50 = math.log10(chi * la) - za / slope
    v50 = 10.0 ** log_v50
    v95 = v50 * 10.0 ** (1.0 / slope)
    return TestKitProfile(v50=v50, v95=v95, beta=beta, chi=chi)


# Reference kit fitted through two published qRT-PCR operating points:
# roughly 93% detection at 5 particles and 99.9% at 10, with a 10%
# false-positive rate.  Used as the CLI default when no kit is given.
DEFAULT_KIT = profile_from_points((5.0, 0.93), (10.0, 0.999), beta=0.1)


def replicated_fnr(gamma: float, r: int) -> float:
    """False-negative rate of the majority decision over r independent reads.

    Sum over t = floor(r/2)+1 .. r of C(r,t) gamma^t (1-gamma)^(r-t): the
    probability that more than half the reads miss.  Ties (r even) resolve
    positive, so they do not count here.
    """
    _check_rate(gamma, "gamma")
    _check_replicates(r)
    total = 0.0
    for t in range(r // 2 + 1, r + 1):
        total += math.comb(r, t) * gamma ** t * (1.0 - gamma) ** (r - t)
    return total


def replicated_fpr(beta: float, r: int) -> float:
    """False-positive rate of the majority decision over r independent reads.

    Sum over t = ceil(r/2) .. r of C(r,t) beta^t (1-beta)^(r-t); ties count
    as positive.
    """
    _check_rate(beta, "beta")
    _check_replicates(r)
    total = 0.0
    for t in range((r + 1) // 2, r + 1):
        total += math.comb(r, t) * beta ** t * (1.0 - beta) ** (r - t)
    return total


def majority_decide(outcomes: list[bool]) -> bool:
    """Majority rule over replicate outcomes; ties resolve positive."""
    if not outcomes:
        raise DomainError("majority_decide needs at least one outcome")
    r = len(outcomes)
    return sum(1 for o in outcomes if o) >= (r + 1) // 2


def posterior_negative_odds(alpha: float, gamma: float, beta: float,
                            r: int, negatives: int) -> float:
    """Odds that the sample is uninfected given its replicate outcomes.

    With m negative reads out of r:
        (1-alpha) beta^(r-m) (1-beta)^m / (alpha gamma^m (1-gamma)^(r-m)).
    Greater than 1 means call the sample negative.  Outcomes impossible
    under one hypothesis collapse to the sentinels 0.0 (certainly infected)
    or inf (certainly uninfected); impossible under both gives nan.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"need 0 < alpha < 1, got {alpha}")
    _check_rate(gamma, "gamma")
    _check_rate(beta, "beta")
    _check_replicates(r)
    if not 0 <= negatives <= r:
        raise DomainError(f"need 0 <= negatives <= r, got {negatives}")
    m = negatives
    num = (1.0 - alpha) * beta ** (r - m) * (1.0 - beta) ** m
    den = alpha * gamma ** m * (1.0 - gamma) ** (r - m)
    if den == 0.0:
        return math.nan if num == 0.0 else math.inf
    return num / den


def _check_rate(p: float, name: str) -> None:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")


def _check_replicates(r: int) -> None:
    if r < 1:
        raise DomainError(f"replicate count must be >= 1, got {r}")
