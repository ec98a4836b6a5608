"""Reference procedures: round-robin elimination, fixed-sample Hoeffding, and
successive halving.

The round-robin procedure sweeps every surviving configuration in turn,
advancing each by one observation with the same per-arm mechanics as the
greedy engine (captime doubling included), and eliminates provably worse
configurations only at sweep boundaries, which keeps observation counts
balanced to within one inside a sweep.  It reports the same anytime
guarantee as the greedy engine so traces are directly comparable.

The naive procedure picks a captime high enough that the utility lost to
capping is at most eps/2, takes enough samples per configuration for the
sampling error to be at most eps/2 at confidence delta/n each, and returns
the best empirical mean; no adaptivity, one certificate at the end.

Successive halving ranks by empirical mean utility at a fixed captime,
keeping the top 1/eta of configurations each round while doubling the
per-survivor cumulative sample count; runs are reused across rounds, so a
budget B is consumed exactly when it divides the round structure evenly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .arms import ArmState, best_by, pull_arm
from .bounds import DOUBLING_RULES, BoundContext
from .oracles import InstanceExhaustedError, RuntimeOracle
from .records import (
    BudgetSeconds,
    CostLedger,
    MaxRounds,
    RunResult,
    SingleSurvivor,
    StepReport,
    StopRule,
    TargetEpsilon,
    TraceRow,
)
from .utility import UtilityFunction


class UpRun:
    """Round-robin sweeps with sweep-boundary elimination."""

    procedure = "up"

    def __init__(
        self,
        oracle: RuntimeOracle,
        utility: UtilityFunction,
        delta: float,
        *,
        doubling: str = "old",
        pool: list[int] | None = None,
        debug_check_bounds: bool = False,
    ):
        if pool is None:
            pool = list(range(oracle.n_configs))
        if not pool:
            raise ValueError("configuration pool must not be empty")
        self.oracle = oracle
        self.utility = utility
        self.ctx = BoundContext(n=len(pool), delta=delta)
        self.doubling_rule = DOUBLING_RULES[doubling]
        self.doubling = doubling
        self.debug_check_bounds = debug_check_bounds
        self.arms = [ArmState(config) for config in pool]
        self.survivors = list(range(len(self.arms)))
        self._sweep: list[int] = []
        self.round = 0
        self.ledger = CostLedger()
        self.trace: list[TraceRow] = []
        self.eps_min = self.guaranteed_epsilon()
        self.eps_min_round = 0

    def incumbent(self) -> int:
        return best_by(self.arms, self.survivors, lambda s: s.lcb)

    def guaranteed_epsilon(self) -> float:
        top_ucb = max(self.arms[i].snapshot.ucb for i in self.survivors)
        top_lcb = max(self.arms[i].snapshot.lcb for i in self.survivors)
        return top_ucb - top_lcb

    def step(self) -> StepReport:
        if not self._sweep:
            self._sweep = list(self.survivors)
        i = self._sweep.pop(0)
        arm = self.arms[i]
        try:
            outcome = pull_arm(
                arm,
                self.ctx,
                self.utility,
                self.oracle,
                self.doubling_rule,
                self.ledger,
                ledger_key=i,
                debug_check=self.debug_check_bounds,
            )
        except InstanceExhaustedError as err:
            err.achieved_epsilon = self.eps_min
            err.partial = self._result("instance_exhausted")
            raise
        self.round += 1
        eliminations = []
        if not self._sweep:
            # sweep boundary: every survivor has been advanced once
            threshold = self.arms[self.incumbent()].snapshot.lcb
            for j in list(self.survivors):
                if self.arms[j].snapshot.ucb < threshold:
                    self.arms[j].eliminated = True
                    self.survivors.remove(j)
                    eliminations.append(j)
        star = self.incumbent()
        eps_raw = self.guaranteed_epsilon()
        if eps_raw < self.eps_min:
            self.eps_min = eps_raw
            self.eps_min_round = self.round
        self.trace.append(
            TraceRow(
                round=self.round,
                ledger_seconds=self.ledger.total_seconds,
                selected=i,
                doubled=outcome.doubled,
                eps_raw=eps_raw,
                eps_min=self.eps_min,
                survivors=len(self.survivors),
                incumbent=star,
            )
        )
        return StepReport(
            selected=i,
            doubled=outcome.doubled,
            runs_executed=outcome.runs_executed,
            time_spent=outcome.time_spent,
            eliminations=tuple(eliminations),
        )

    def _stop_fires(self, stop: StopRule) -> str | None:
        if isinstance(stop, TargetEpsilon):
            if self.eps_min <= stop.epsilon:
                return "target_epsilon"
        elif isinstance(stop, BudgetSeconds):
            if self.ledger.total_seconds >= stop.seconds:
                return "budget_exhausted"
        elif isinstance(stop, SingleSurvivor):
            if len(self.survivors) <= 1:
                return "single_survivor"
        elif isinstance(stop, MaxRounds):
            if self.round >= stop.rounds:
                return "max_rounds"
        else:
            raise TypeError(f"unsupported stop rule {stop!r}")
        return None

    def run_until(self, stop: StopRule) -> RunResult:
        while True:
            reason = self._stop_fires(stop)
            if reason is not None:
                return self._result(reason)
            self.step()

    def _result(self, stop_reason: str) -> RunResult:
        star = self.incumbent()
        return RunResult(
            procedure=self.procedure,
            incumbent=star,
            incumbent_config=self.arms[star].config,
            incumbent_name=self.oracle.name(self.arms[star].config),
            eps_raw=self.guaranteed_epsilon(),
            eps_min=self.eps_min,
            eps_min_round=self.eps_min_round,
            rounds=self.round,
            survivors=tuple(self.survivors),
            trace=self.trace,
            ledger=self.ledger,
            stop_reason=stop_reason,
        )


# ---------------------------------------------------------------------------
# Naive fixed-sample procedure
# ---------------------------------------------------------------------------


@dataclass
class NaiveResult:
    procedure: str
    incumbent: int
    incumbent_config: int
    incumbent_name: str
    epsilon: float
    kappa_bar: float
    runs_per_config: int
    means: list[float]
    trace: list[TraceRow]
    ledger: CostLedger
    extra: dict = field(default_factory=dict)


def naive_captime(u: UtilityFunction, epsilon: float, max_level: int = 200) -> float:
    """Smallest power-of-two captime at which utility is at most epsilon/2."""
    if epsilon <= 0:
        raise ValueError(f"target epsilon must be positive, got {epsilon}")
    kappa = 1.0
    for _ in range(max_level + 1):
        if u(kappa) <= epsilon / 2.0:
            return kappa
        kappa *= 2.0
    raise ValueError(
        f"utility never falls to {epsilon / 2.0} below captime 2^{max_level}; "
        f"the capping error cannot be brought under epsilon/2"
    )


def naive_sample_count(n: int, delta: float, epsilon: float) -> int:
    """Two-sided Hoeffding count: eps/2 sampling error at confidence delta/n
    per configuration, alongside the eps/2 capping error."""
    return math.ceil(2.0 / epsilon ** 2 * math.log(2.0 * n / delta))


def naive_run(
    oracle: RuntimeOracle,
    utility: UtilityFunction,
    epsilon: float,
    delta: float,
    *,
    pool: list[int] | None = None,
) -> NaiveResult:
    if pool is None:
        pool = list(range(oracle.n_configs))
    if not pool:
        raise ValueError("configuration pool must not be empty")
    kappa_bar = naive_captime(utility, epsilon)
    m = naive_sample_count(len(pool), delta, epsilon)
    ledger = CostLedger()
    trace: list[TraceRow] = []
    sums = [0.0 for _ in pool]
    counts = [0 for _ in pool]
    rounds = 0
    best = 0
    total = len(pool) * m
    for a, config in enumerate(pool):
        for j in range(m):
            obs = oracle.run(config, j, kappa_bar)
            ledger.charge(a, obs.duration)
            sums[a] += utility(obs.duration)
            counts[a] += 1
            rounds += 1
            best = max(
                range(len(pool)),
                key=lambda i: (sums[i] / counts[i] if counts[i] else -math.inf, -i),
            )
            done = rounds == total
            eps_now = epsilon if done else 1.0
            trace.append(
                TraceRow(
                    round=rounds,
                    ledger_seconds=ledger.total_seconds,
                    selected=a,
                    doubled=False,
                    eps_raw=eps_now,
                    eps_min=eps_now,
                    survivors=len(pool),
                    incumbent=best,
                )
            )
    means = [sums[a] / m for a in range(len(pool))]
    return NaiveResult(
        procedure="naive",
        incumbent=best,
        incumbent_config=pool[best],
        incumbent_name=oracle.name(pool[best]),
        epsilon=epsilon,
        kappa_bar=kappa_bar,
        runs_per_config=m,
        means=means,
        trace=trace,
        ledger=ledger,
    )


# ---------------------------------------------------------------------------
# Successive halving
# ---------------------------------------------------------------------------


@dataclass
class HalvingResult:
    procedure: str
    incumbent: int
    incumbent_config: int
    incumbent_name: str
    round_sizes: list[int]
    round_counts: list[int]
    runs_used: int
    trace: list[TraceRow]
    ledger: CostLedger
    extra: dict = field(default_factory=dict)


def halving_round_structure(n: int, eta: int) -> tuple[list[int], list[int]]:
    """Survivor sizes per round and the unit cost of each round.

    Sizes shrink by a factor eta down to a final singleton round; the
    per-survivor cumulative count doubles by eta each round with run reuse,
    so round k at unit rate r costs ``sizes[k] * (r eta^k - r eta^(k-1))``
    fresh runs beyond the first round's ``n * r``.
    """
    if eta < 2:
        raise ValueError(f"elimination factor must be at least 2, got {eta}")
    sizes = [n]
    while sizes[-1] > 1:
        sizes.append(max(1, sizes[-1] // eta))
    unit_costs = [sizes[0]]
    for k in range(1, len(sizes)):
        unit_costs.append(sizes[k] * (eta ** k - eta ** (k - 1)))
    return sizes, unit_costs


def successive_halving(
    oracle: RuntimeOracle,
    utility: UtilityFunction,
    budget: int,
    eta: int,
    kappa: float,
    *,
    pool: list[int] | None = None,
) -> HalvingResult:
    if pool is None:
        pool = list(range(oracle.n_configs))
    if not pool:
        raise ValueError("configuration pool must not be empty")
    sizes, unit_costs = halving_round_structure(len(pool), eta)
    rate = budget // sum(unit_costs)
    if rate < 1:
        raise ValueError(
            f"budget {budget} is too small: one pass over the round structure "
            f"costs {sum(unit_costs)} runs"
        )
    ledger = CostLedger()
    trace: list[TraceRow] = []
    sums = {a: 0.0 for a in range(len(pool))}
    counts = {a: 0 for a in range(len(pool))}
    alive = list(range(len(pool)))
    rounds = 0
    used = 0
    round_counts = []
    for k, size in enumerate(sizes):
        target = rate * eta ** k
        round_counts.append(target)
        for a in alive:
            while counts[a] < target:
                obs = oracle.run(pool[a], counts[a], kappa)
                ledger.charge(a, obs.duration)
                sums[a] += utility(obs.duration)
                counts[a] += 1
                used += 1
                rounds += 1
                best = max(
                    alive,
                    key=lambda i: (sums[i] / counts[i] if counts[i] else -math.inf, -i),
                )
                trace.append(
                    TraceRow(
                        round=rounds,
                        ledger_seconds=ledger.total_seconds,
                        selected=a,
                        doubled=False,
                        eps_raw=1.0,
                        eps_min=1.0,
                        survivors=len(alive),
                        incumbent=best,
                    )
                )
        if k + 1 < len(sizes):
            keep = sizes[k + 1]
            alive = sorted(
                sorted(alive), key=lambda i: (-(sums[i] / counts[i]), i)
            )[:keep]
            alive.sort()
    winner = alive[0]
    return HalvingResult(
        procedure="sh",
        incumbent=winner,
        incumbent_config=pool[winner],
        incumbent_name=oracle.name(pool[winner]),
        round_sizes=sizes,
        round_counts=round_counts,
        runs_used=used,
        trace=trace,
        ledger=ledger,
    )
