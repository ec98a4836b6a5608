"""Shared fixtures-in-code: benchmark pools and an instrumented greedy run.

The instrumented runner replays a greedy run round by round against analytic
ground truth, recording everything the behavioral assertions need: whether
the confidence bands held at every round (a clean execution), the first
round at which each arm's width-plus-capping term fell below its true gap,
every selection, and the soundness of the anytime guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import utilcap as uc
from utilcap.bounds import alpha

TOL = 1e-9

# 10 arms, two-point and exponential, unique optimum exp(0.5)
A2_DISTS = (
    uc.TwoPoint(0.2, 150.0, 0.95),
    uc.TwoPoint(0.5, 300.0, 0.9),
    uc.TwoPoint(1.0, 100.0, 0.8),
    uc.TwoPoint(2.0, 500.0, 0.6),
    uc.TwoPoint(5.0, 1000.0, 0.4),
    uc.Exponential(0.5),
    uc.Exponential(5.0),
    uc.Exponential(30.0),
    uc.Exponential(100.0),
    uc.Exponential(300.0),
)

# 20 arms: one strong, nine moderate, ten with true gap at least 0.3
A3_MEANS = tuple([1.0] + [8.0 + 2.0 * i for i in range(9)] + [80.0 + 35.0 * i for i in range(10)])

# 10 arms: one strong, nine far behind; used for the doubling-rule comparison
A8_MEANS = (1.0, 60.0, 80.0, 100.0, 130.0, 170.0, 220.0, 300.0, 400.0, 500.0)

UTILITY = uc.LogLaplaceUtility(60.0, 1.0)

PARAMETRIC_SCALE = 0.1
PARAMETRIC_GROWTH = 10000.0


def a2_oracle(seed: int) -> uc.SyntheticOracle:
    return uc.SyntheticOracle(list(A2_DISTS), seed=seed)


def a3_oracle(seed: int) -> uc.SyntheticOracle:
    return uc.SyntheticOracle([uc.Exponential(m) for m in A3_MEANS], seed=seed)


def a8_oracle(seed: int) -> uc.SyntheticOracle:
    return uc.SyntheticOracle([uc.Exponential(m) for m in A8_MEANS], seed=seed)


def parametric_setup(seed: int):
    oracle = uc.SyntheticOracle([], seed=seed)
    make = uc.exponential_mean_map(PARAMETRIC_SCALE, PARAMETRIC_GROWTH)
    sampler = uc.ParametricSampler(oracle, seed=seed, make_distribution=make)
    return oracle, sampler


@dataclass
class InstrumentedRun:
    result: uc.RunResult
    clean: bool
    optimal_surviving: bool
    trigger_round: dict[int, int]
    stop_selection_ok: bool
    eps_sound: bool
    width_bound_ok: bool
    selections: list[int] = field(default_factory=list)


def instrumented_oup(
    oracle: uc.SyntheticOracle,
    utility,
    delta: float,
    doubling: str,
    target_epsilon: float,
    max_rounds: int = 200_000,
) -> InstrumentedRun:
    """Run the greedy engine to a target guarantee under full ground-truth watch."""
    run = uc.OupRun(oracle, utility, delta, doubling=doubling)
    true_u = oracle.true_utilities(utility)
    best_u = max(true_u)
    gaps = [best_u - v for v in true_u]
    optimal_arm = true_u.index(best_u)

    truth_at: dict[tuple[int, float], tuple[float, float]] = {}

    def truth(arm_index: int, kappa: float) -> tuple[float, float]:
        key = (arm_index, kappa)
        got = truth_at.get(key)
        if got is None:
            got = oracle.true_capped_utility(run.arms[arm_index].config, utility, kappa)
            truth_at[key] = got
        return got

    trigger_round: dict[int, int] = {}
    clean = True
    stop_selection_ok = True
    eps_sound = True
    width_bound_ok = True
    selections: list[int] = []

    while run.eps_min > target_epsilon and run.round < max_rounds:
        upcoming = run.round + 1
        # trigger check at round start, on the state left by the previous round
        for i, arm in enumerate(run.arms):
            if arm.m == 0 or i in trigger_round:
                continue
            a = alpha(run.ctx, arm.m, arm.kappa)
            u_k = utility(arm.kappa)
            f_true = truth(i, arm.kappa)[1]
            if 2.0 * a + u_k * (1.0 - f_true) < gaps[i]:
                trigger_round[i] = upcoming
        report = run.step()
        selections.append(report.selected)
        if report.selected in trigger_round and upcoming >= trigger_round[report.selected]:
            stop_selection_ok = False
        # clean bands and width bound for every arm with observations
        for i, arm in enumerate(run.arms):
            if arm.m == 0:
                continue
            snap = arm.snapshot
            u_true, f_true = truth(i, snap.kappa)
            if (
                abs(snap.f_hat - f_true) > snap.alpha + TOL
                or abs(snap.u_hat - u_true) > (1.0 - snap.u_at_kappa) * snap.alpha + TOL
            ):
                clean = False
            if snap.width > 2.0 * snap.alpha + snap.u_at_kappa * (1.0 - f_true) + TOL:
                width_bound_ok = False
        star = run.incumbent()
        if gaps[star] > run.guaranteed_epsilon() + TOL:
            eps_sound = False

    result = run._result("target_epsilon" if run.eps_min <= target_epsilon else "max_rounds")
    optimal_surviving = optimal_arm in result.survivors
    return InstrumentedRun(
        result=result,
        clean=clean,
        optimal_surviving=optimal_surviving,
        trigger_round=trigger_round,
        stop_selection_ok=stop_selection_ok,
        eps_sound=eps_sound,
        width_bound_ok=width_bound_ok,
        selections=selections,
    )
