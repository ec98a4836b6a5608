"""Greedy anytime search over a finite configuration pool.

Each round selects the surviving configuration with the largest upper
confidence bound, advances it by one observation (doubling its captime when
warranted), then eliminates every configuration whose upper bound has fallen
below the incumbent's lower bound.  The guarantee that can be read off at
any point is

    eps = max_i UCB_i  -  max_i LCB_i      (over surviving configurations)

which is non-increasing except that a captime doubling can enlarge the
width's log term; the reported guarantee is therefore also tracked as a
running minimum, together with the round at which each minimum was achieved.
"""

from __future__ import annotations

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


class OupRun:
    """One sequential run over a fixed pool.

    ``pool`` lists oracle configuration ids; arms are addressed by their
    position in the pool.  ``ctx`` may be supplied to force a particular
    bound context (used to compare against a single phase of the phased
    engine); ``eliminate=False`` disables the elimination step for the same
    purpose.
    """

    procedure = "oup"

    def __init__(
        self,
        oracle: RuntimeOracle,
        utility: UtilityFunction,
        delta: float,
        *,
        doubling: str = "old",
        pool: list[int] | None = None,
        ctx: BoundContext | None = None,
        eliminate: bool = True,
        debug_check_bounds: bool = False,
    ):
        if pool is None:
            pool = list(range(oracle.n_configs))
        if not pool:
            raise ValueError("configuration pool must not be empty")
        self.oracle = oracle
        self.utility = utility
        self.ctx = ctx if ctx is not None else BoundContext(n=len(pool), delta=delta)
        self.doubling_rule = DOUBLING_RULES[doubling]
        self.doubling = doubling
        self.eliminate = eliminate
        self.debug_check_bounds = debug_check_bounds
        self.arms = [ArmState(config) for config in pool]
        self.survivors = list(range(len(self.arms)))
        self.round = 0
        self.ledger = CostLedger()
        self.trace: list[TraceRow] = []
        self.eps_min = self.guaranteed_epsilon()
        self.eps_min_round = 0

    def select_arm(self) -> int:
        if not self.survivors:
            raise RuntimeError("survivor set is empty; invariant violated")
        return best_by(self.arms, self.survivors, lambda s: s.ucb)

    def incumbent(self) -> int:
        return best_by(self.arms, self.survivors, lambda s: s.lcb)

    def guaranteed_epsilon(self) -> float:
        top_ucb = max(self.arms[i].snapshot.ucb for i in self.survivors)
        top_lcb = max(self.arms[i].snapshot.lcb for i in self.survivors)
        return top_ucb - top_lcb

    def step(self) -> StepReport:
        i = self.select_arm()
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
        star = self.incumbent()
        eliminations = []
        if self.eliminate:
            threshold = self.arms[star].snapshot.lcb
            for j in list(self.survivors):
                if self.arms[j].snapshot.ucb < threshold:
                    self.arms[j].eliminated = True
                    self.survivors.remove(j)
                    eliminations.append(j)
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
