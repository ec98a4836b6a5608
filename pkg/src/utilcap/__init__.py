"""Utility-driven algorithm configuration on simulated capped runs."""

from .baselines import HalvingResult, NaiveResult, UpRun, naive_run, successive_halving
from .bounds import (
    BoundContext,
    BoundSnapshot,
    alpha,
    doubling_new,
    doubling_old,
    empirical_cdf_at_cap,
    empirical_utility,
    make_snapshot,
)
from .coup import (
    CoupResult,
    CoupRun,
    FinitePoolSampler,
    ParametricSampler,
    PhaseCertificate,
    SamplerExhaustedError,
    Schedule,
    exponential_mean_map,
    finite_population_quantile,
    opt_gamma,
    phase_size,
)
from .harness import (
    ExperimentSpec,
    GuaranteeViolation,
    SpecError,
    ValidationReport,
    epsilon_vs_time_curve,
    per_config_time_profile,
    run_experiment,
    validate_guarantee,
)
from .oracles import (
    CappedObservation,
    Exponential,
    InstanceExhaustedError,
    LogNormal,
    MatrixOracle,
    RuntimeMatrixDataset,
    SyntheticOracle,
    TwoPoint,
    expected_capped_utility,
    load_runtime_matrix,
    true_capped_utility,
)
from .oup import OupRun
from .records import (
    BudgetSeconds,
    CostLedger,
    MaxPhases,
    MaxRounds,
    RunResult,
    SingleSurvivor,
    StepReport,
    TargetEpsilon,
    TraceRow,
)
from .utility import DEFAULT_UTILITY, LogLaplaceUtility, UniformUtility, parse_utility

__version__ = "0.1.0"
