"""Confidence widths, empirical summaries, and captime-doubling rules.

The confidence width for a configuration observed ``m`` times at captime
``kappa`` is

    alpha(m, kappa) = sqrt( ln(11 n m^2 (log2(kappa) + 1)^2 / delta) / (2 m) )

for a fixed pool of ``n`` configurations, and

    alpha_p(m, kappa) = sqrt( ln(36 p^2 n_p m^2 (log2(kappa) + 1)^2 / delta) / (2 m) )

inside phase ``p`` of a phased run over a pool of size ``n_p``.  The log is
base 2 because captimes live on the doubling grid ``kappa = 2^(l-1)``; the
union bound behind the width is indexed by ``l = log2(kappa) + 1``.

Upper and lower utility bounds for empirical mean utility ``u_hat`` and
completion fraction ``f_hat`` at captime ``kappa`` are

    UCB = u_hat + (1 - u(kappa)) * alpha
    LCB = u_hat - alpha - u(kappa) * (1 - f_hat)

so the width obeys the exact identity

    UCB - LCB = (2 - u(kappa)) * alpha + u(kappa) * (1 - f_hat)

which holds to floating-point accuracy at every snapshot and serves as a
test oracle.  Bounds are never clamped to [0, 1]; clamping would break the
identity, and consumers only ever compare bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .oracles import CappedObservation
from .utility import UtilityFunction


@dataclass(frozen=True)
class BoundContext:
    """Pool size, failure probability, and (for phased runs) the phase index."""

    n: int
    delta: float
    phase: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"pool size must be at least 1, got {self.n}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"failure probability must lie in (0, 1), got {self.delta}")
        if self.phase is not None and self.phase < 1:
            raise ValueError(f"phase index must be at least 1, got {self.phase}")


def _check_kappa(kappa: float) -> float:
    """Captimes must sit on the doubling grid 1, 2, 4, ...; returns log2(kappa)."""
    if kappa < 1:
        raise ValueError(f"captime must be at least 1, got {kappa}")
    level = math.log2(kappa)
    if 2.0 ** round(level) != kappa:
        raise ValueError(f"captime must be a power of two, got {kappa}")
    return round(level)


def alpha(ctx: BoundContext, m: int, kappa: float) -> float:
    """Confidence width after m observations at captime kappa.

    Strictly decreasing in m, weakly increasing in kappa, increasing as
    delta shrinks.  Undefined at m = 0: fresh configurations carry the
    sentinel bounds UCB = 1, LCB = 0 instead.
    """
    if m < 1:
        raise ValueError("confidence width is undefined before the first observation")
    level = _check_kappa(kappa)
    log_term = (level + 1) ** 2
    if ctx.phase is None:
        arg = 11.0 * ctx.n * m * m * log_term / ctx.delta
    else:
        arg = 36.0 * ctx.phase * ctx.phase * ctx.n * m * m * log_term / ctx.delta
    return math.sqrt(math.log(arg) / (2.0 * m))


def empirical_cdf_at_cap(observations: list[CappedObservation]) -> float:
    """Fraction of runs that completed below the captime."""
    if not observations:
        raise ValueError("empirical completion fraction needs at least one observation")
    return sum(1 for o in observations if o.completed) / len(observations)


def empirical_utility(observations: list[CappedObservation], u: UtilityFunction) -> float:
    """Mean utility of the observed (capped) durations."""
    if not observations:
        raise ValueError("empirical utility needs at least one observation")
    return sum(u(o.duration) for o in observations) / len(observations)


def doubling_old(alpha_value: float, u_at_kappa: float, f_hat: float) -> bool:
    """Double the captime once sampling error falls below the capping error."""
    return 2.0 * alpha_value <= u_at_kappa * (1.0 - f_hat)

def doubling_new(alpha_value: float, u_at_kappa: float, f_hat: float) -> bool:
    """Balanced rule: compare the two terms of the exact confidence width.

    The width splits into ``2 (1 - u(kappa)) alpha`` (uncertainty from runs
    below the captime) plus ``u(kappa) (1 - f_hat + alpha)`` (uncertainty
    from runs above it); doubling fires while the second term dominates.
    """
    return 2.0 * (1.0 - u_at_kappa) * alpha_value <= u_at_kappa * (1.0 - f_hat + alpha_value)


DOUBLING_RULES = {"old": doubling_old, "new": doubling_new}


@dataclass(frozen=True)
class BoundSnapshot:
    """Bounds for one configuration, recomputed from its stored observations."""

    m: int
    kappa: float
    f_hat: float
    u_hat: float
    alpha: float
    u_at_kappa: float
    ucb: float
    lcb: float

    @classmethod
    def fresh(cls, kappa: float = 1.0) -> "BoundSnapshot":
        """Sentinel bounds for a configuration that has never been run."""
        return cls(
            m=0,
            kappa=kappa,
            f_hat=0.0,
            u_hat=0.0,
            alpha=math.nan,
            u_at_kappa=math.nan,
            ucb=1.0,
            lcb=0.0,
        )

    @property
    def width(self) -> float:
        return self.ucb - self.lcb


def make_snapshot(
    ctx: BoundContext,
    m: int,
    kappa: float,
    observations: list[CappedObservation],
    u: UtilityFunction,
) -> BoundSnapshot:
    """Recompute all bound quantities from scratch for m observations at kappa."""
    if m == 0:
        if observations:
            raise ValueError("m = 0 but observations were supplied")
        return BoundSnapshot.fresh(kappa)
    if len(observations) != m:
        raise ValueError(f"expected {m} observations, got {len(observations)}")
    f_hat = empirical_cdf_at_cap(observations)
    u_hat = empirical_utility(observations, u)
    a = alpha(ctx, m, kappa)
    u_k = u(kappa)
    return BoundSnapshot(
        m=m,
        kappa=kappa,
        f_hat=f_hat,
        u_hat=u_hat,
        alpha=a,
        u_at_kappa=u_k,
        ucb=u_hat + (1.0 - u_k) * a,
        lcb=u_hat - a - u_k * (1.0 - f_hat),
    )
