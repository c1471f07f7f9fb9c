"""Issue scoring, weighted multi-objective offer utility, and time pressure.

Offers are judged on three issues: the proposer's trust, its error rate and
its cumulative update time. Each issue value is scored into [0, 1] and the
weighted sum gives a scalar cost (lower is better). Time-dependent decision
functions model how an initiator concedes as a negotiation approaches its
deadline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from .negotiation import Offer

MINIMIZE = "MINIMIZE"
MAXIMIZE = "MAXIMIZE"


@dataclass(frozen=True)
class IssueDomain:
    """Acceptable value interval for one issue, with its preferred direction."""

    lower: float
    upper: float
    direction: str = MINIMIZE

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"degenerate domain [{self.lower}, {self.upper}]")
        if self.direction not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class IssueWeightProfile:
    """Relative importance of the Trust, Error and CostTime issues; sums to 1."""

    trust: float = 0.2
    error: float = 0.5
    cost_time: float = 0.3

    def __post_init__(self):
        for name, w in zip(("trust", "error", "cost_time"), self.as_tuple()):
            if w < 0:
                raise ValueError(f"issue weight {name} must be >= 0, got {w}")
        total = self.trust + self.error + self.cost_time
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"issue weights must sum to 1, got {total}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.trust, self.error, self.cost_time)


@dataclass(frozen=True)
class TimeStrategyParams:
    """Parameters of the time-dependent issue-value strategy."""

    f1: float
    f2: float
    t_init: float
    t_max: float
    beta: float = 1.0

    def __post_init__(self):
        if not self.t_init < self.t_max:
            raise ValueError(f"t_init must precede t_max ({self.t_init} >= {self.t_max})")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class DeadlineParams:
    """Deadline (absolute time or round count) and concession attitude."""

    t_d: float
    beta: float = 1.0

    def __post_init__(self):
        if self.t_d <= 0:
            raise ValueError(f"deadline must be positive, got {self.t_d}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


def linear_score(value: float, domain: IssueDomain) -> float:
    """Linear score of an issue value into [0, 1]; out-of-range values clamp."""
    v = min(max(value, domain.lower), domain.upper)
    span = domain.upper - domain.lower
    if domain.direction == MAXIMIZE:
        return (v - domain.lower) / span
    return (domain.upper - v) / span


def aggregate_utility(profile: IssueWeightProfile, scores: Sequence[float]) -> float:
    """Weighted sum of per-issue scores, ordered (trust, error, cost_time)."""
    weights = profile.as_tuple()
    if len(scores) != len(weights):
        raise ValueError(f"expected {len(weights)} scores, got {len(scores)}")
    return sum(w * s for w, s in zip(weights, scores))


def _badness(value: float, domain: Optional[IssueDomain]) -> float:
    # Lower raw values are better for error and time, so badness inverts the
    # minimizing linear score. A missing domain means every offer tied this
    # round and the issue carries no information.
    if domain is None:
        return 0.0
    return 1.0 - linear_score(value, domain)


def offer_cost(
    offer: "Offer",
    profile: IssueWeightProfile,
    error_domain: Optional[IssueDomain],
    time_domain: Optional[IssueDomain],
) -> float:
    """Composite cost of an offer in [0, 1]; the best offer minimizes it.

    Trust contributes (1 - trust); error rate and cost time contribute their
    normalized badness within the round's observed ranges.
    """
    err_rate = offer.err_count / offer.instances if offer.instances > 0 else 0.0
    return aggregate_utility(
        profile,
        (
            1.0 - offer.trust,
            _badness(err_rate, error_domain),
            _badness(offer.cost_time, time_domain),
        ),
    )


def round_domain(values: Sequence[float]) -> Optional[IssueDomain]:
    """Minimizing domain spanning one round's observed issue values.

    Returns None when all offers tie, in which case the issue is scored as
    zero badness for everyone.
    """
    lo, hi = min(values), max(values)
    if hi - lo <= 0.0:
        return None
    return IssueDomain(lo, hi, MINIMIZE)


def time_dependent_value(t: float, p: TimeStrategyParams) -> float:
    """Issue value conceded from f1 toward f2 as t runs from t_init to t_max."""
    t = min(max(t, p.t_init), p.t_max)
    frac = (t - p.t_init) / (p.t_max - p.t_init)
    return p.f1 + frac ** (1.0 / p.beta) * (p.f2 - p.f1)


def time_pressure(t: float, p: DeadlineParams) -> float:
    """Polynomial pressure decaying from 1 at t=0 to 0 at the deadline."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    return 1.0 - (min(t, p.t_d) / p.t_d) ** (1.0 / p.beta)
