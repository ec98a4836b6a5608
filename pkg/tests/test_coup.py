import dataclasses
import math

import pytest

import utilcap as uc
from utilcap.records import trace_csv_lines

from helpers import UTILITY, parametric_setup

U60 = uc.LogLaplaceUtility(60.0, 1.0)


def finite_setup(seed=0, replace=True):
    oracle = uc.SyntheticOracle(
        [uc.Exponential(m) for m in (1.0, 5.0, 20.0, 80.0, 200.0)], seed=seed
    )
    sampler = uc.FinitePoolSampler(oracle, seed=seed, replace=replace)
    return oracle, sampler


def make_run(seed=0, schedule="default", delta=0.05, parametric=True, **kwargs):
    if parametric:
        oracle, sampler = parametric_setup(seed)
    else:
        oracle, sampler = finite_setup(seed)
    return uc.CoupRun(
        sampler, oracle, UTILITY, delta, uc.Schedule.from_spec(schedule), doubling="new", **kwargs
    )


# ---------------------------------------------------------------------------
# Schedules and phase sizing
# ---------------------------------------------------------------------------


def test_phase_size_examples():
    assert uc.phase_size(1, math.exp(-1 / 3), 0.01) == 9
    assert uc.phase_size(1, 0.5, 0.5) == 4


def test_phase_size_monotone_in_gamma():
    sizes = [uc.phase_size(1, g, 0.01) for g in (0.9, 0.5, 0.25, 0.1, 0.05)]
    assert sizes == sorted(sizes)


def test_phase_size_validation():
    with pytest.raises(ValueError):
        uc.phase_size(0, 0.5, 0.1)
    with pytest.raises(ValueError):
        uc.phase_size(1, 1.5, 0.1)


def test_preset_schedules_match_formulas():
    cases = {
        "default": lambda p: (math.exp(-p / 6), math.exp(-p / 3)),
        "gamma_focus": lambda p: (math.exp(-p / 30), math.exp(-p / 3)),
        "epsilon_focus": lambda p: (math.exp(-p / 3), math.exp(-p / 30)),
        "balanced": lambda p: (math.exp(-p / 5), math.exp(-p / 5)),
        "gamma_then_epsilon": lambda p: (math.exp(-p ** 3 / 300), math.exp(-p ** 2 / 30)),
    }
    for name, fn in cases.items():
        schedule = uc.Schedule.from_spec(name)
        for p in range(1, 8):
            assert schedule.at(p) == fn(p)


def test_custom_schedule_parsing():
    schedule = uc.Schedule.from_spec("custom:eps=e^-p/6,gamma=e^-p/3")
    default = uc.Schedule.from_spec("default")
    for p in range(1, 6):
        assert schedule.at(p) == default.at(p)
    powered = uc.Schedule.from_spec("custom:eps=e^-p^3/300,gamma=e^-p^2/30")
    assert powered.at(2) == (math.exp(-8 / 300), math.exp(-4 / 30))


def test_bad_schedules_rejected():
    for bad in ("nope", "custom:eps=e^-p/6", "custom:eps=2p,gamma=e^-p/3",
                "custom:eps=e^-p/0,gamma=e^-p/3"):
        with pytest.raises(ValueError):
            uc.Schedule.from_spec(bad)


def test_explicit_schedule_values_validated():
    schedule = uc.Schedule.explicit([(0.5, 0.5), (0.25, 1.5)])
    assert schedule.at(1) == (0.5, 0.5)
    with pytest.raises(ValueError):
        schedule.at(2)
    with pytest.raises(ValueError):
        schedule.at(3)


# ---------------------------------------------------------------------------
# Phase lifecycle
# ---------------------------------------------------------------------------


def test_first_phase_initializes_fresh_arms():
    run = make_run(seed=1)
    p, eps_1, gamma_1, n_1 = run.begin_phase()
    assert p == 1
    assert n_1 == uc.phase_size(1, gamma_1, 0.05)
    assert len(run.arms) == n_1
    for arm in run.arms:
        assert (arm.snapshot.ucb, arm.snapshot.lcb, arm.m) == (1.0, 0.0, 0)


def test_phase_step_selects_lowest_index_on_fresh_pool():
    run = make_run(seed=1)
    run.begin_phase()
    report = run.phase_step()
    assert report.selected == 0


def test_carryover_keeps_observations_and_widens_bounds():
    run = make_run(seed=2)
    run.begin_phase()
    for _ in range(40):
        run.phase_step()
    kept = {
        i: (list(a.durations), a.m, a.kappa, a.snapshot.width)
        for i, a in enumerate(run.arms)
        if a.m > 0
    }
    pool_before = len(run.arms)
    run.begin_phase()
    assert len(run.arms) >= pool_before  # pool only grows
    for i, (durations, m, kappa, width) in kept.items():
        arm = run.arms[i]
        assert arm.durations == durations
        assert (arm.m, arm.kappa) == (m, kappa)
        # same observations, larger phase log factor: width weakly increases
        assert arm.snapshot.width >= width - 1e-12


def test_shrinking_requirement_keeps_pool():
    # second phase needs fewer configurations than already exist
    oracle, sampler = parametric_setup(3)
    schedule = uc.Schedule.explicit([(0.5, 0.05), (0.5, 0.9)])
    run = uc.CoupRun(sampler, oracle, UTILITY, 0.1, schedule, doubling="new")
    run.begin_phase()
    n_1 = len(run.arms)
    assert n_1 == uc.phase_size(1, 0.05, 0.1)
    run.begin_phase()
    assert len(run.arms) == n_1  # nothing added, nothing removed
    assert run.n_p == uc.phase_size(2, 0.9, 0.1)
    assert run.ctx.n == run.n_p  # the phase requirement, not the pool size


def test_phase_done_uses_both_maxima():
    run = make_run(seed=1)
    run.begin_phase()
    run.eps_p = 0.1
    snap = run.arms[0].snapshot
    run.arms[0].snapshot = dataclasses.replace(snap, ucb=0.9, lcb=0.1)
    run.arms[1].snapshot = dataclasses.replace(snap, ucb=0.85, lcb=0.84)
    for arm in run.arms[2:]:
        arm.snapshot = dataclasses.replace(arm.snapshot, ucb=0.5, lcb=0.0)
    # max UCB comes from arm 0, max LCB from arm 1
    assert run.guaranteed_epsilon() == pytest.approx(0.9 - 0.84)
    assert run.phase_done()
    run.eps_p = 0.05
    assert not run.phase_done()


def test_fresh_pool_is_never_done():
    run = make_run(seed=1)
    run.begin_phase()
    assert not run.phase_done()


# ---------------------------------------------------------------------------
# Multi-phase runs
# ---------------------------------------------------------------------------


def test_zero_budget_yields_no_certificates():
    run = make_run(seed=4)
    result = run.run_phases(uc.BudgetSeconds(0.0))
    assert result.certificates == []
    assert result.trace == []
    assert result.recommendation is None
    assert result.stop_reason == "budget_exhausted"


def test_max_phases_gives_one_certificate_per_phase():
    run = make_run(seed=4)
    result = run.run_phases(uc.MaxPhases(3))
    assert [c.phase for c in result.certificates] == [1, 2, 3]
    for c in result.certificates:
        eps_p, gamma_p = uc.Schedule.from_spec("default").at(c.phase)
        assert (c.epsilon, c.gamma) == (eps_p, gamma_p)
        assert c.n == uc.phase_size(c.phase, gamma_p, 0.05)
    assert result.recommendation == result.certificates[-1].incumbent


def test_budget_exhaustion_mid_phase_keeps_previous_certificate():
    probe = make_run(seed=4).run_phases(uc.MaxPhases(1))
    first_phase_cost = probe.ledger.total_seconds
    run = make_run(seed=4)
    result = run.run_phases(uc.BudgetSeconds(first_phase_cost))
    assert len(result.certificates) == 1
    assert result.recommendation == result.certificates[0].incumbent
    assert result.stop_reason == "budget_exhausted"


def test_monotone_pool_and_observation_retention():
    run = make_run(seed=6)
    sizes = []
    totals = []
    for _ in range(3):
        run.begin_phase()
        sizes.append(len(run.arms))
        while not run.phase_done():
            run.phase_step()
        totals.append(sum(a.m for a in run.arms))
    assert sizes == sorted(sizes)
    assert totals == sorted(totals)


def test_runs_are_deterministic():
    a = make_run(seed=9).run_phases(uc.MaxPhases(2))
    b = make_run(seed=9).run_phases(uc.MaxPhases(2))
    assert trace_csv_lines(a.trace) == trace_csv_lines(b.trace)
    assert [dataclasses.astuple(c) for c in a.certificates] == [
        dataclasses.astuple(c) for c in b.certificates
    ]


# ---------------------------------------------------------------------------
# Samplers and ground truth
# ---------------------------------------------------------------------------


def test_finite_quantile_examples():
    assert uc.finite_population_quantile([0.1, 0.5, 0.9], 1 / 3) == 0.5
    assert uc.finite_population_quantile([0.1, 0.5, 0.9], 1e-9) == 0.9
    grid = [i / 10000 for i in range(10001)]
    assert uc.finite_population_quantile(grid, 0.25) == 0.75


def test_opt_gamma_parametric_matches_direct_quantile():
    oracle, sampler = parametric_setup(0)
    gamma = 0.3
    threshold = uc.opt_gamma(sampler, UTILITY, gamma)
    assert threshold == pytest.approx(sampler.utility_at(gamma, UTILITY), rel=1e-12)
    # the map is strictly decreasing, so exactly the top gamma of thetas beat it
    assert sampler.utility_at(gamma - 0.01, UTILITY) > threshold
    assert sampler.utility_at(gamma + 0.01, UTILITY) < threshold


def test_opt_gamma_finite_sampler():
    oracle, sampler = finite_setup()
    values = oracle.true_utilities(UTILITY)
    assert uc.opt_gamma(sampler, UTILITY, 0.19) == uc.finite_population_quantile(values, 0.19)


def test_opt_gamma_requires_ground_truth():
    class Opaque:
        pass

    with pytest.raises(NotImplementedError):
        uc.opt_gamma(Opaque(), UTILITY, 0.5)


def test_with_replacement_duplicates_share_runtimes():
    oracle, sampler = finite_setup(seed=3)
    draws = sampler.sample(40)
    assert len(set(draws)) < len(draws)  # duplicates occur
    first = draws.index(draws[0], 1) if draws[0] in draws[1:] else None
    # any duplicated configuration replays the same runtime stream
    seen = {}
    for config in draws:
        runs = [oracle.run(config, j, 4.0) for j in range(5)]
        if config in seen:
            assert runs == seen[config]
        seen[config] = runs


def test_without_replacement_exhaustion_names_maximum():
    oracle, sampler = finite_setup(seed=3, replace=False)
    sampler.sample(4)
    with pytest.raises(uc.SamplerExhaustedError) as err:
        sampler.sample(2)
    assert err.value.available == 5
    assert "5" in str(err.value)


def test_without_replacement_draws_are_distinct():
    oracle, sampler = finite_setup(seed=7, replace=False)
    draws = sampler.sample(5)
    assert sorted(draws) == [0, 1, 2, 3, 4]


def test_begin_phase_surfaces_sampler_exhaustion():
    oracle, sampler = finite_setup(seed=1, replace=False)
    run = uc.CoupRun(
        sampler, oracle, UTILITY, 0.05, uc.Schedule.from_spec("default"), doubling="new"
    )
    # the first phase already needs 6 distinct configurations, one more than exist
    assert uc.phase_size(1, math.exp(-1 / 3), 0.05) == 6
    with pytest.raises(uc.SamplerExhaustedError, match="only 5"):
        run.begin_phase()


def test_dataset_backed_phases_match_size_formula(tmp_path):
    import numpy as np
    from utilcap.rng import stream_generator

    gen = stream_generator(99, 7)
    rows = []
    for i in range(8):
        mean = (1.0, 4.0, 10.0, 25.0, 60.0, 120.0, 240.0, 480.0)[i]
        rows.append(
            f"cfg{i}," + ",".join(repr(float(v)) for v in -mean * np.log1p(-gen.random(1500)))
        )
    path = tmp_path / "runtimes.csv"
    path.write_text("\n".join(rows) + "\n")
    oracle = uc.MatrixOracle(uc.load_runtime_matrix(path, seed=2))
    sampler = uc.FinitePoolSampler(oracle, seed=2, replace=True)
    run = uc.CoupRun(
        sampler, oracle, UTILITY, 0.1, uc.Schedule.from_spec("default"), doubling="new"
    )
    result = run.run_phases(uc.MaxPhases(2))
    schedule = uc.Schedule.from_spec("default")
    for cert in result.certificates:
        _, gamma_p = schedule.at(cert.phase)
        assert cert.n == uc.phase_size(cert.phase, gamma_p, 0.1)
    assert result.pool_size == result.certificates[-1].n
    # duplicated rows are distinct arms sharing one runtime row
    configs = result.extra["arm_configs"]
    assert len(set(configs)) < len(configs)


def test_mid_phase_selection_ignores_sampling_phase():
    # a carried-over arm with the top bound is selected ahead of newer arms
    run = make_run(seed=5)
    run.begin_phase()
    while not run.phase_done():
        run.phase_step()
    run.begin_phase()
    boosted = 0  # sampled in phase 1
    for i, arm in enumerate(run.arms):
        lift = 2.0 if i == boosted else 0.0
        arm.snapshot = dataclasses.replace(arm.snapshot, ucb=arm.snapshot.ucb + lift)
    assert run.phase_step().selected == boosted


def test_every_preset_schedule_runs():
    for name in ("default", "gamma_focus", "epsilon_focus", "balanced", "gamma_then_epsilon"):
        run = make_run(seed=3, schedule=name)
        result = run.run_phases(uc.MaxPhases(2))
        assert len(result.certificates) == 2
        schedule = uc.Schedule.from_spec(name)
        assert result.certificates[1].epsilon == schedule.at(2)[0]


def test_phase_cost_within_factor_three_of_direct_search():
    # searching the space phase by phase should not cost much more than
    # running the greedy engine directly on the final pool of each phase
    oracle, sampler = parametric_setup(0)
    run = uc.CoupRun(
        sampler, oracle, UTILITY, 0.01, uc.Schedule.from_spec("default"), doubling="new"
    )
    ledgers = {}
    for p in range(1, 7):
        run.begin_phase()
        while not run.phase_done():
            run.phase_step()
        run._certify()
        ledgers[p] = run.ledger.total_seconds
    for cert in run.certificates:
        pool = [sampler.make_distribution(t) for t in sampler.thetas[: cert.n]]
        direct = uc.OupRun(
            uc.SyntheticOracle(pool, seed=0), UTILITY, 0.01, doubling="new"
        ).run_until(uc.TargetEpsilon(cert.epsilon))
        assert ledgers[cert.phase] <= 3.0 * direct.ledger.total_seconds


# ---------------------------------------------------------------------------
# Differential equivalence against the greedy engine
# ---------------------------------------------------------------------------


def test_single_phase_matches_greedy_engine_trace():
    for seed in range(3):
        oracle_c, sampler = parametric_setup(seed)
        coup = uc.CoupRun(
            sampler, oracle_c, UTILITY, 0.05, uc.Schedule.from_spec("default"), doubling="new"
        )
        _, _, _, n_1 = coup.begin_phase()
        for _ in range(120):
            coup.phase_step()

        oracle_o = uc.SyntheticOracle(
            [sampler.make_distribution(t) for t in sampler.thetas], seed=seed
        )
        forced = uc.BoundContext(n=n_1, delta=0.05, phase=1)
        oup = uc.OupRun(
            oracle_o, UTILITY, 0.05, doubling="new", ctx=forced, eliminate=False
        )
        for _ in range(120):
            oup.step()
        assert trace_csv_lines(coup.trace) == trace_csv_lines(oup.trace)
        assert coup.ledger.total_seconds == oup.ledger.total_seconds
