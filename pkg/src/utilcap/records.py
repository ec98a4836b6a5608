"""Run records: cost ledger, per-round trace rows, step reports, stop rules.

Trace serialization is centralized here so that independent engines
producing the same decisions emit byte-identical rows.  Floats are written
with ``repr``, the shortest round-tripping form, which is deterministic for
a given value.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class CostLedger:
    """Accumulated simulated runtime, charged once per executed run.

    Every oracle call is charged at its observed capped duration, including
    reruns triggered by captime doubling (restarting a capped run costs the
    full rerun, not the difference).
    """

    def __init__(self):
        self.total_seconds = 0.0
        self.per_config_seconds: dict[int, float] = {}
        self.run_count = 0

    def charge(self, key: int, seconds: float) -> None:
        self.total_seconds += seconds
        self.per_config_seconds[key] = self.per_config_seconds.get(key, 0.0) + seconds
        self.run_count += 1


@dataclass(frozen=True)
class StepReport:
    """What one engine step did."""

    selected: int
    doubled: bool
    runs_executed: int
    time_spent: float
    eliminations: tuple[int, ...] = ()


@dataclass(frozen=True)
class TraceRow:
    """One row per engine round.

    ``selected`` and ``incumbent`` are arm positions within the run's pool;
    ``survivors`` counts arms still under consideration (the full pool for
    procedures that never eliminate).
    """

    round: int
    ledger_seconds: float
    selected: int
    doubled: bool
    eps_raw: float
    eps_min: float
    survivors: int
    incumbent: int


TRACE_COLUMNS = (
    "round",
    "ledger_seconds",
    "selected",
    "doubled",
    "eps_raw",
    "eps_min",
    "survivors",
    "incumbent",
)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trace_row_values(row: TraceRow) -> tuple[str, ...]:
    return (
        str(row.round),
        format_value(row.ledger_seconds),
        str(row.selected),
        format_value(row.doubled),
        format_value(row.eps_raw),
        format_value(row.eps_min),
        str(row.survivors),
        str(row.incumbent),
    )


def trace_csv_lines(rows: list[TraceRow]) -> list[str]:
    lines = [",".join(TRACE_COLUMNS)]
    lines.extend(",".join(trace_row_values(row)) for row in rows)
    return lines


# ---------------------------------------------------------------------------
# Stop rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetEpsilon:
    """Stop once the running-minimum guarantee reaches the target."""

    epsilon: float


@dataclass(frozen=True)
class BudgetSeconds:
    """Stop once total simulated time reaches the budget."""

    seconds: float


@dataclass(frozen=True)
class SingleSurvivor:
    """Stop once elimination leaves a single configuration."""


@dataclass(frozen=True)
class MaxRounds:
    rounds: int


@dataclass(frozen=True)
class MaxPhases:
    phases: int


StopRule = TargetEpsilon | BudgetSeconds | SingleSurvivor | MaxRounds
PhasedStopRule = MaxPhases | BudgetSeconds


@dataclass
class RunResult:
    """Final state of a sequential (non-phased) run."""

    procedure: str
    incumbent: int
    incumbent_config: int
    incumbent_name: str
    eps_raw: float
    eps_min: float
    eps_min_round: int
    rounds: int
    survivors: tuple[int, ...]
    trace: list[TraceRow]
    ledger: CostLedger
    stop_reason: str
    extra: dict = field(default_factory=dict)
