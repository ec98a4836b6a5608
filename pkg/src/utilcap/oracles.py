"""Runtime sources: dataset replay and synthetic distributions with ground truth.

An oracle answers capped runs: given (configuration, instance, captime) it
returns the observed duration ``min(t, captime)`` and whether the run
completed, where completion means the true runtime is strictly below the
captime.  Repeating a run at a higher captime reveals strictly more of the
same underlying runtime.

Two oracle kinds are provided.  ``MatrixOracle`` replays a recorded runtime
matrix with a seeded column order, so every procedure consuming it sees the
same instance sequence.  ``SyntheticOracle`` draws runtimes from closed-form
distributions through keyed uniform streams, and can report exact capped
expected utilities for use as ground truth in tests and validators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .rng import RUNTIME_STREAM, UniformStream, seeded_permutation
from .utility import UtilityFunction


class InstanceExhaustedError(RuntimeError):
    """A run was requested past the last available instance.

    Engines annotate the exception with the guarantee achieved so far
    (``achieved_epsilon``) and the partial result (``partial``) before
    letting it propagate.
    """

    def __init__(self, config: int, instance: int, available: int):
        super().__init__(
            f"configuration {config} has no instance {instance}: "
            f"only {available} instances available"
        )
        self.config = config
        self.instance = instance
        self.available = available
        self.achieved_epsilon: float | None = None
        self.partial = None


@dataclass(frozen=True)
class CappedObservation:
    """Outcome of one capped run: observed duration and completion flag."""

    duration: float
    completed: bool

    @classmethod
    def observe(cls, true_runtime: float, captime: float) -> "CappedObservation":
        if captime <= 0:
            raise ValueError(f"captime must be positive, got {captime}")
        if true_runtime < 0:
            raise ValueError(f"true runtime must be nonnegative, got {true_runtime}")
        # a run landing exactly on the captime counts as capped
        if true_runtime < captime:
            return cls(duration=true_runtime, completed=True)
        return cls(duration=captime, completed=False)


# ---------------------------------------------------------------------------
# Runtime distributions with closed-form ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    mean: float

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError(f"exponential mean must be positive, got {self.mean}")

    def runtime_from_uniform(self, v: float) -> float:
        return -self.mean * math.log1p(-v)

    def runtimes_from_uniform(self, v: np.ndarray) -> np.ndarray:
        return -self.mean * np.log1p(-v)

    def completion_probability(self, kappa: float) -> float:
        """P(t < kappa); the distribution is continuous so ties have no mass."""
        if math.isinf(kappa):
            return 1.0
        return -math.expm1(-kappa / self.mean)

    def pdf(self, t: float) -> float:
        return math.exp(-t / self.mean) / self.mean

    def label(self) -> str:
        return f"exp(mean={self.mean!r})"


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"lognormal sigma must be positive, got {self.sigma}")

    def runtime_from_uniform(self, v: float) -> float:
        return math.exp(self.mu + self.sigma * ndtri(v)) if v > 0.0 else 0.0

    def runtimes_from_uniform(self, v: np.ndarray) -> np.ndarray:
        out = np.exp(self.mu + self.sigma * ndtri(v))
        return np.where(v > 0.0, out, 0.0)

    def completion_probability(self, kappa: float) -> float:
        if math.isinf(kappa):
            return 1.0
        if kappa <= 0:
            return 0.0
        return float(ndtr((math.log(kappa) - self.mu) / self.sigma))

    def pdf(self, t: float) -> float:
        if t <= 0:
            return 0.0
        z = (math.log(t) - self.mu) / self.sigma
        return math.exp(-0.5 * z * z) / (t * self.sigma * math.sqrt(2 * math.pi))

    def label(self) -> str:
        return f"lognormal(mu={self.mu!r},sigma={self.sigma!r})"


@dataclass(frozen=True)
class TwoPoint:
    """Mass ``p_fast`` at ``t_fast`` and the rest at ``t_slow``."""

    t_fast: float
    t_slow: float
    p_fast: float

    def __post_init__(self):
        if self.t_fast < 0 or self.t_slow < 0:
            raise ValueError("two-point runtimes must be nonnegative")
        if not 0.0 <= self.p_fast <= 1.0:
            raise ValueError(f"mixture weight must lie in [0, 1], got {self.p_fast}")

    def runtime_from_uniform(self, v: float) -> float:
        return self.t_fast if v < self.p_fast else self.t_slow

    def runtimes_from_uniform(self, v: np.ndarray) -> np.ndarray:
        return np.where(v < self.p_fast, self.t_fast, self.t_slow)

    def completion_probability(self, kappa: float) -> float:
        """P(t < kappa), strict, matching the completion flag of capped runs."""
        prob = 0.0
        if self.t_fast < kappa:
            prob += self.p_fast
        if self.t_slow < kappa:
            prob += 1.0 - self.p_fast
        return prob

    def label(self) -> str:
        return f"twopoint(t_fast={self.t_fast!r},t_slow={self.t_slow!r},p={self.p_fast!r})"


RuntimeDistribution = Exponential | LogNormal | TwoPoint

_QUAD_ABS_TOL = 1e-12  # target for each quadrature piece; well under the 1e-9 contract


def expected_capped_utility(dist: RuntimeDistribution, u: UtilityFunction, kappa: float) -> float:
    """E[u(min(t, kappa))] by closed form (atoms) or adaptive quadrature."""
    if kappa <= 0:
        raise ValueError(f"captime must be positive, got {kappa}")
    if not isinstance(dist, (Exponential, LogNormal, TwoPoint)):
        raise NotImplementedError(
            f"no ground-truth formula for distribution {type(dist).__name__}"
        )
    if isinstance(dist, TwoPoint):
        return (
            dist.p_fast * u(min(dist.t_fast, kappa))
            + (1.0 - dist.p_fast) * u(min(dist.t_slow, kappa))
        )
    kink = u.kappa0

    def integrand(t: float) -> float:
        return u(t) * dist.pdf(t)

    if math.isinf(kappa):
        head, _ = integrate.quad(integrand, 0.0, kink, epsabs=_QUAD_ABS_TOL, limit=200)
        tail, _ = integrate.quad(integrand, kink, math.inf, epsabs=_QUAD_ABS_TOL, limit=200)
        return head + tail
    points = [kink] if kink < kappa else None
    body, _ = integrate.quad(
        integrand, 0.0, kappa, points=points, epsabs=_QUAD_ABS_TOL, limit=200
    )
    survival = 1.0 - dist.completion_probability(kappa)
    return body + u(kappa) * survival


def true_capped_utility(
    dist: RuntimeDistribution, u: UtilityFunction, kappa: float
) -> tuple[float, float]:
    """Exact (capped expected utility, completion probability) at ``kappa``.

    ``kappa = inf`` yields the uncapped expected utility and probability 1.
    """
    return expected_capped_utility(dist, u, kappa), dist.completion_probability(kappa)


# ---------------------------------------------------------------------------
# Dataset-backed oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RuntimeMatrixDataset:
    """Recorded true runtimes: rows are configurations, columns are instances."""

    runtimes: np.ndarray
    names: tuple[str, ...]
    instance_order: tuple[int, ...]

    def __post_init__(self):
        r, c = self.runtimes.shape
        if len(self.names) != r:
            raise ValueError("one name per configuration row is required")
        if sorted(self.instance_order) != list(range(c)):
            raise ValueError("instance_order must be a permutation of the columns")


def load_runtime_matrix(path: str | Path, seed: int) -> RuntimeMatrixDataset:
    """Load a runtime matrix CSV: ``name,t1,t2,...`` per row, no header.

    Columns are permuted once by the seed; every consumer of the dataset sees
    the same instance sequence, so comparisons between procedures are paired.
    """
    path = Path(path)
    names: list[str] = []
    rows: list[list[float]] = []
    width = None
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'name,runtimes...', got {line!r}")
            name, *cells = fields
            values = []
            for col, cell in enumerate(cells, start=2):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: column {col}: non-numeric runtime {cell!r}"
                    ) from None
                if not math.isfinite(value) or value < 0:
                    raise ValueError(
                        f"{path}:{lineno}: column {col}: runtime must be finite and "
                        f"nonnegative, got {cell!r}"
                    )
                values.append(value)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(
                    f"{path}:{lineno}: ragged row: {len(values)} runtimes, expected {width}"
                )
            names.append(name)
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty runtime matrix")
    matrix = np.asarray(rows, dtype=np.float64)
    order = seeded_permutation(matrix.shape[1], seed)
    return RuntimeMatrixDataset(runtimes=matrix, names=tuple(names), instance_order=order)


class MatrixOracle:
    """Capped runs replayed from a runtime matrix in its seeded column order."""

    def __init__(self, dataset: RuntimeMatrixDataset):
        self.dataset = dataset

    @property
    def n_configs(self) -> int:
        return self.dataset.runtimes.shape[0]

    @property
    def n_instances(self) -> int:
        return self.dataset.runtimes.shape[1]

    def name(self, config: int) -> str:
        return self.dataset.names[config]

    def true_runtime(self, config: int, instance: int) -> float:
        if instance >= self.n_instances:
            raise InstanceExhaustedError(config, instance, self.n_instances)
        column = self.dataset.instance_order[instance]
        return float(self.dataset.runtimes[config, column])

    def run(self, config: int, instance: int, captime: float) -> CappedObservation:
        return CappedObservation.observe(self.true_runtime(config, instance), captime)

    def true_utilities(self, u: UtilityFunction) -> list[float]:
        """Per-configuration mean utility over every recorded instance.

        The dataset-wide mean stands in for the unknown population value.
        """
        return [float(np.mean(u.array(row))) for row in self.dataset.runtimes]


# ---------------------------------------------------------------------------
# Synthetic oracle with analytic ground truth
# ---------------------------------------------------------------------------


class SyntheticOracle:
    """Capped runs drawn from per-configuration runtime distributions.

    Instances are unbounded.  The runtime of (config, instance) is a pure
    function of (seed, config, instance): one uniform double drawn from the
    configuration's keyed stream, pushed through the inverse CDF.  New
    configurations may be registered at any time without disturbing the
    runtimes of existing ones.
    """

    def __init__(self, distributions, seed: int):
        self.seed = int(seed)
        self._dists: list[RuntimeDistribution] = list(distributions)
        self._streams: dict[int, UniformStream] = {}
        self._truth_cache: dict = {}

    @property
    def n_configs(self) -> int:
        return len(self._dists)

    @property
    def n_instances(self) -> None:
        return None  # unbounded

    def add_config(self, dist: RuntimeDistribution) -> int:
        self._dists.append(dist)
        return len(self._dists) - 1

    def distribution(self, config: int) -> RuntimeDistribution:
        return self._dists[config]

    def name(self, config: int) -> str:
        return self._dists[config].label()

    def _stream(self, config: int) -> UniformStream:
        stream = self._streams.get(config)
        if stream is None:
            stream = UniformStream(self.seed, RUNTIME_STREAM, config)
            self._streams[config] = stream
        return stream

    def true_runtime(self, config: int, instance: int) -> float:
        v = self._stream(config).value(instance)
        return self._dists[config].runtime_from_uniform(v)

    def true_runtimes(self, config: int, count: int) -> np.ndarray:
        """First ``count`` runtimes of a configuration, vectorized."""
        v = self._stream(config).prefix(count)
        return self._dists[config].runtimes_from_uniform(v)

    def run(self, config: int, instance: int, captime: float) -> CappedObservation:
        return CappedObservation.observe(self.true_runtime(config, instance), captime)

    def true_capped_utility(
        self, config: int, u: UtilityFunction, kappa: float
    ) -> tuple[float, float]:
        key = (config, u, kappa)
        cached = self._truth_cache.get(key)
        if cached is None:
            cached = true_capped_utility(self._dists[config], u, kappa)
            self._truth_cache[key] = cached
        return cached

    def true_utility(self, config: int, u: UtilityFunction) -> float:
        return self.true_capped_utility(config, u, math.inf)[0]

    def true_utilities(self, u: UtilityFunction) -> list[float]:
        return [self.true_utility(c, u) for c in range(self.n_configs)]


RuntimeOracle = MatrixOracle | SyntheticOracle
