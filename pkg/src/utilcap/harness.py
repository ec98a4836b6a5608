"""Experiment orchestration: specs, runs, trace files, curves, validators.

Everything here is simulation-only: time is the sum of observed capped
durations, never the wall clock, so a spec plus a seed fully determines
every output byte.  All outputs are CSV with ``repr`` float formatting.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

from .baselines import UpRun, naive_run, successive_halving
from .coup import (
    CoupRun,
    FinitePoolSampler,
    ParametricSampler,
    Schedule,
    exponential_mean_map,
    opt_gamma,
)
from .oracles import (
    Exponential,
    InstanceExhaustedError,
    LogNormal,
    MatrixOracle,
    SyntheticOracle,
    TwoPoint,
    load_runtime_matrix,
)
from .oup import OupRun
from .records import (
    BudgetSeconds,
    MaxPhases,
    MaxRounds,
    SingleSurvivor,
    TargetEpsilon,
    TraceRow,
    format_value,
    trace_row_values,
    TRACE_COLUMNS,
)
from .utility import parse_utility

OUTPUT_DIR_ENV = "UTILCAP_OUT"

PROCEDURES = ("oup", "coup", "up", "naive", "sh")

_TOL = 1e-12


class SpecError(ValueError):
    """An experiment spec failed validation; maps to exit code 2."""


class GuaranteeViolation(AssertionError):
    """A Monte Carlo validation exceeded its failure bound; exit code 4."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to replay one run byte for byte."""

    procedure: str
    oracle: str
    utility: str
    stop: str
    seed: int
    delta: float = 0.01
    doubling: str = "old"
    schedule: str = "default"
    without_replacement: bool = False
    sh_eta: int = 2
    sh_kappa: float = 1.0


# ---------------------------------------------------------------------------
# Spec parsing
# ---------------------------------------------------------------------------


def parse_stop(text: str, procedure: str):
    name, _, value = text.partition(":")
    name = name.strip()
    try:
        if procedure == "coup":
            if name == "phases":
                return MaxPhases(int(value))
            if name == "budget":
                return BudgetSeconds(float(value))
            raise SpecError(
                f"stop rule for coup must be phases:N or budget:SECONDS, got {text!r}"
            )
        if procedure in ("oup", "up"):
            if name == "epsilon":
                return TargetEpsilon(float(value))
            if name == "budget":
                return BudgetSeconds(float(value))
            if name == "single_survivor":
                return SingleSurvivor()
            if name == "rounds":
                return MaxRounds(int(value))
            raise SpecError(
                f"stop rule for {procedure} must be epsilon:X, budget:SECONDS, "
                f"single_survivor or rounds:N, got {text!r}"
            )
        if procedure == "naive":
            if name == "epsilon":
                return TargetEpsilon(float(value))
            raise SpecError(f"stop rule for naive must be epsilon:X, got {text!r}")
        if procedure == "sh":
            if name == "budget":
                return BudgetSeconds(float(value))
            raise SpecError(f"stop rule for sh must be budget:RUNS, got {text!r}")
    except ValueError as err:
        if isinstance(err, SpecError):
            raise
        raise SpecError(f"bad stop rule value in {text!r}: {err}") from None
    raise SpecError(f"unknown procedure {procedure!r}; expected one of {PROCEDURES}")


@dataclass(frozen=True)
class SyntheticSpec:
    family: str
    entries: tuple
    seed: int


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    """Parse a synthetic pool file of key=value lines.

    Keys: ``family`` (exponential, lognormal, twopoint, parametric_exponential),
    ``params`` (semicolon-separated entries; comma-separated fields within an
    entry), ``n_configs`` and ``seed``.  The file seed is a default used when
    the caller supplies none; experiment specs carry their own seed, which
    wins.
    """
    path = Path(path)
    fields: dict[str, str] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise SpecError(f"cannot read synthetic pool file {path}: {err}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SpecError(f"{path}:{lineno}: expected key=value, got {line!r}")
        fields[key.strip()] = value.strip()
    family = fields.get("family")
    if family is None:
        raise SpecError(f"{path}: missing required key 'family'")
    params = fields.get("params", "")
    seed = int(fields.get("seed", "0"))
    entries = []
    if family == "parametric_exponential":
        parts = params.split(",")
        if len(parts) != 2:
            raise SpecError(f"{path}: parametric_exponential needs params=scale,growth")
        entries = (float(parts[0]), float(parts[1]))
        return SyntheticSpec(family=family, entries=entries, seed=seed)
    for i, chunk in enumerate(filter(None, (c.strip() for c in params.split(";"))), start=1):
        values = [float(v) for v in chunk.split(",")]
        try:
            if family == "exponential":
                (mean,) = values
                entries.append(Exponential(mean=mean))
            elif family == "lognormal":
                mu, sigma = values
                entries.append(LogNormal(mu=mu, sigma=sigma))
            elif family == "twopoint":
                t_fast, t_slow, p_fast = values
                entries.append(TwoPoint(t_fast=t_fast, t_slow=t_slow, p_fast=p_fast))
            else:
                raise SpecError(f"{path}: unknown family {family!r}")
        except ValueError as err:
            raise SpecError(f"{path}: params entry {i} ({chunk!r}): {err}") from None
    if not entries:
        raise SpecError(f"{path}: no configurations in params")
    declared = fields.get("n_configs")
    if declared is not None and int(declared) != len(entries):
        raise SpecError(
            f"{path}: n_configs={declared} but params lists {len(entries)} entries"
        )
    return SyntheticSpec(family=family, entries=tuple(entries), seed=seed)


def build_oracle(oracle_spec: str, seed: int):
    """Build the runtime oracle named by an oracle spec string."""
    kind, _, target = oracle_spec.partition(":")
    if not target:
        raise SpecError(f"oracle spec must look like matrix:PATH or synthetic:PATH, got {oracle_spec!r}")
    if kind == "matrix":
        try:
            dataset = load_runtime_matrix(target, seed)
        except (OSError, ValueError) as err:
            raise SpecError(f"cannot load runtime matrix: {err}") from None
        return MatrixOracle(dataset), None
    if kind == "synthetic":
        spec = load_synthetic_spec(target)
        if spec.family == "parametric_exponential":
            scale, growth = spec.entries
            oracle = SyntheticOracle([], seed)
            make = exponential_mean_map(scale, growth)
            return oracle, ("parametric", make)
        return SyntheticOracle(list(spec.entries), seed), None
    raise SpecError(f"unknown oracle kind {kind!r} in {oracle_spec!r}")


def build_sampler(spec: ExperimentSpec, oracle, parametric):
    if parametric is not None:
        _, make = parametric
        return ParametricSampler(oracle, spec.seed, make)
    return FinitePoolSampler(oracle, spec.seed, replace=not spec.without_replacement)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[tuple]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_trace_csv(path: Path, procedure: str, trace: list[TraceRow]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("procedure",) + TRACE_COLUMNS)
        for row in trace:
            writer.writerow((procedure,) + trace_row_values(row))


SUMMARY_COLUMNS = (
    "procedure",
    "oracle",
    "utility",
    "delta",
    "doubling",
    "schedule",
    "stop",
    "seed",
    "incumbent",
    "incumbent_name",
    "final_epsilon",
    "total_seconds",
    "run_count",
    "rounds",
    "stop_reason",
)

CERTIFICATE_COLUMNS = (
    "phase",
    "epsilon_p",
    "gamma_p",
    "n_p",
    "incumbent_name",
    "incumbent_lcb",
    "ledger_seconds",
)


def output_directory(requested: str | Path) -> Path:
    """Resolve the output directory; the environment override wins."""
    override = os.environ.get(OUTPUT_DIR_ENV)
    return Path(override) if override else Path(requested)


# ---------------------------------------------------------------------------
# Running experiments
# ---------------------------------------------------------------------------


def _validate_spec(spec: ExperimentSpec) -> None:
    if spec.procedure not in PROCEDURES:
        raise SpecError(f"unknown procedure {spec.procedure!r}; expected one of {PROCEDURES}")
    if spec.doubling not in ("old", "new"):
        raise SpecError(f"doubling must be 'old' or 'new', got {spec.doubling!r}")
    if not 0.0 < spec.delta < 1.0:
        raise SpecError(f"delta must lie in (0, 1), got {spec.delta}")
    try:
        parse_utility(spec.utility)
    except ValueError as err:
        raise SpecError(str(err)) from None


def execute(spec: ExperimentSpec):
    """Run the procedure of a spec in memory; returns the engine result."""
    _validate_spec(spec)
    utility = parse_utility(spec.utility)
    stop = parse_stop(spec.stop, spec.procedure)
    oracle, parametric = build_oracle(spec.oracle, spec.seed)
    if spec.procedure != "coup" and parametric is not None:
        raise SpecError(
            "a parametric configuration space needs phased sampling; "
            "only the coup procedure can search it"
        )
    if spec.procedure == "oup":
        return OupRun(oracle, utility, spec.delta, doubling=spec.doubling).run_until(stop)
    if spec.procedure == "up":
        return UpRun(oracle, utility, spec.delta, doubling=spec.doubling).run_until(stop)
    if spec.procedure == "naive":
        return naive_run(oracle, utility, stop.epsilon, spec.delta)
    if spec.procedure == "sh":
        budget = int(stop.seconds)
        try:
            return successive_halving(oracle, utility, budget, spec.sh_eta, spec.sh_kappa)
        except ValueError as err:
            raise SpecError(str(err)) from None
    sampler = build_sampler(spec, oracle, parametric)
    run = CoupRun(
        sampler,
        oracle,
        utility,
        spec.delta,
        Schedule.from_spec(spec.schedule),
        doubling=spec.doubling,
    )
    result = run.run_phases(stop)
    result.extra["sampler"] = sampler
    return result


def _summary_row(spec: ExperimentSpec, result) -> tuple:
    if spec.procedure == "coup":
        final_eps = result.certificates[-1].epsilon if result.certificates else math.nan
        incumbent = result.recommendation if result.recommendation is not None else -1
        name = result.recommendation_name or ""
        rounds = len(result.trace)
    elif spec.procedure == "naive":
        final_eps = result.epsilon
        incumbent = result.incumbent
        name = result.incumbent_name
        rounds = len(result.trace)
    elif spec.procedure == "sh":
        final_eps = math.nan
        incumbent = result.incumbent
        name = result.incumbent_name
        rounds = len(result.trace)
    else:
        final_eps = result.eps_min
        incumbent = result.incumbent
        name = result.incumbent_name
        rounds = result.rounds
    stop_reason = getattr(result, "stop_reason", "completed")
    return (
        spec.procedure,
        spec.oracle,
        spec.utility,
        spec.delta,
        spec.doubling,
        spec.schedule if spec.procedure == "coup" else "",
        spec.stop,
        spec.seed,
        incumbent,
        name,
        final_eps,
        result.ledger.total_seconds,
        result.ledger.run_count,
        rounds,
        stop_reason,
    )


def run_experiment(spec: ExperimentSpec, outdir: str | Path) -> dict:
    """Execute a spec and write trace.csv, summary.csv (and certificates.csv).

    On instance exhaustion the partial trace and summary are still written,
    then the error propagates so callers can surface the diagnostic.
    """
    outdir = output_directory(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        result = execute(spec)
    except InstanceExhaustedError as err:
        if err.partial is not None:
            write_trace_csv(outdir / "trace.csv", err.partial.procedure, err.partial.trace)
            _write_csv(
                outdir / "summary.csv", SUMMARY_COLUMNS, [_summary_row(spec, err.partial)]
            )
        raise
    write_trace_csv(outdir / "trace.csv", result.procedure, result.trace)
    _write_csv(outdir / "summary.csv", SUMMARY_COLUMNS, [_summary_row(spec, result)])
    if spec.procedure == "coup":
        rows = [
            (
                c.phase,
                c.epsilon,
                c.gamma,
                c.n,
                c.incumbent_name,
                c.incumbent_lcb,
                c.ledger_seconds,
            )
            for c in result.certificates
        ]
        _write_csv(outdir / "certificates.csv", CERTIFICATE_COLUMNS, rows)
    summary = dict(zip(SUMMARY_COLUMNS, _summary_row(spec, result)))
    summary["outdir"] = str(outdir)
    return summary


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------


def epsilon_vs_time_curve(runs: list[tuple[dict, list[TraceRow]]]) -> list[tuple]:
    """Align (simulated seconds, running-minimum guarantee) across procedures.

    All runs must share the oracle, utility and seed; the output is one
    passthrough row per trace round, long-form, ordered by procedure then
    round.
    """
    if not runs:
        return []
    key = None
    for summary, _ in runs:
        this = (summary["oracle"], summary["utility"], summary["seed"])
        if key is None:
            key = this
        elif this != key:
            raise SpecError(
                f"runs are not comparable: {this} differs from {key}; "
                f"curves require a shared oracle, utility and seed"
            )
    rows = []
    for summary, trace in runs:
        last = math.inf
        for row in trace:
            if row.eps_min > last + _TOL:
                raise AssertionError("eps_min column must be non-increasing")
            last = row.eps_min
            rows.append((summary["procedure"], row.ledger_seconds, row.eps_min))
    return rows


def per_config_time_profile(ledger, names: list[str], true_utilities: list[float]) -> list[tuple]:
    """Seconds spent per configuration, best true utility first."""
    order = sorted(range(len(names)), key=lambda i: (-true_utilities[i], i))
    return [
        (names[i], true_utilities[i], ledger.per_config_seconds.get(i, 0.0))
        for i in order
    ]


# ---------------------------------------------------------------------------
# Monte Carlo guarantee validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    procedure: str
    trials: int
    failures: int
    failure_rate: float
    bound: float
    ok: bool
    per_phase_rates: dict[int, float]
    details: list


def _true_gap(oracle, utility, config: int) -> float:
    utilities = oracle.true_utilities(utility)
    return max(utilities) - utilities[config]


def validate_guarantee(
    template: ExperimentSpec, trials: int, base_seed: int = 0
) -> ValidationReport:
    """Replay a spec across seeded trials and measure certificate violations.

    Needs analytic ground truth, so the oracle must be synthetic.  The
    empirical failure rate is compared against delta plus three binomial
    standard errors.
    """
    if trials < 1:
        raise SpecError(f"trials must be positive, got {trials}")
    if not template.oracle.startswith("synthetic:"):
        raise SpecError("guarantee validation needs a synthetic oracle with ground truth")
    _validate_spec(template)
    utility = parse_utility(template.utility)
    failures = 0
    details = []
    phase_failures: dict[int, int] = {}
    phase_counts: dict[int, int] = {}
    for k in range(trials):
        spec = replace(template, seed=base_seed + k)
        result = execute(spec)
        if template.procedure == "coup":
            sampler = result.extra["sampler"]
            arm_configs = result.extra["arm_configs"]
            violated = False
            for cert in result.certificates:
                threshold = opt_gamma(sampler, utility, cert.gamma) - cert.epsilon
                # certificates name arms by pool position; map back to the oracle
                config = arm_configs[cert.incumbent]
                truth = sampler.oracle.true_utility(config, utility)
                bad = truth < threshold - _TOL
                phase_counts[cert.phase] = phase_counts.get(cert.phase, 0) + 1
                if bad:
                    phase_failures[cert.phase] = phase_failures.get(cert.phase, 0) + 1
                    violated = True
                details.append((spec.seed, cert.phase, truth, threshold, bad))
            failures += int(violated)
        else:
            oracle, _ = build_oracle(spec.oracle, spec.seed)
            if template.procedure == "naive":
                certified = result.epsilon
            else:
                certified = result.eps_min
            gap = _true_gap(oracle, utility, result.incumbent_config)
            bad = gap > certified + _TOL
            failures += int(bad)
            details.append((spec.seed, gap, certified, bad))
    rate = failures / trials
    bound = template.delta + 3.0 * math.sqrt(template.delta * (1.0 - template.delta) / trials)
    per_phase = {
        p: phase_failures.get(p, 0) / phase_counts[p] for p in sorted(phase_counts)
    }
    return ValidationReport(
        procedure=template.procedure,
        trials=trials,
        failures=failures,
        failure_rate=rate,
        bound=bound,
        ok=rate <= bound,
        per_phase_rates=per_phase,
        details=details,
    )
