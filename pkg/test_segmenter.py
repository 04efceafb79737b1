import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import segmenter
from config import DustSettings
from dual_engine import DualEvalPlan, Strategy
from errors import ConfigError, CorruptState, DegenerateSegment, SegmentIndexError
from exp_family import get_model
from segmenter import (
    CandidateSet,
    PruningMode,
    backtrack,
    op_reference,
    pelt_test,
    run,
    segmentation_cost,
)
from simgen import SimSpec, simulate, worstcase_gauss
from stat_store import StatStore

# (model, strategy, constraints) combinations the engine supports
DUST_CASES = [
    ("gauss", Strategy.EXACT_1D, 1),
    ("gauss", Strategy.GAUSS_CLOSED, 1),
    ("gauss", Strategy.QUASI_NEWTON, 1),
    ("gauss", Strategy.RANDOM_UNIFORM, 1),
    ("gauss", Strategy.AT_ZERO, 1),
    ("poisson", Strategy.EXACT_1D, 1),
    ("poisson", Strategy.RANDOM_UNIFORM, 1),
    ("exponential", Strategy.EXACT_1D, 1),
    ("exponential", Strategy.QUASI_NEWTON, 1),
    ("geometric", Strategy.EXACT_1D, 1),
    ("bernoulli", Strategy.EXACT_1D, 1),
    ("binomial", Strategy.EXACT_1D, 1),
    ("negbin", Strategy.EXACT_1D, 1),
    ("variance", Strategy.EXACT_1D, 1),
    ("variance", Strategy.QUASI_NEWTON, 1),
    ("meanvar", Strategy.MEANVAR_CLOSED, 1),
    ("meanvar", Strategy.MEANVAR_CLOSED, 2),
    ("meanvar", Strategy.QUASI_NEWTON, 2),
    ("meanvar", Strategy.RANDOM_UNIFORM, 1),
    ("quadratic-regression", Strategy.RANDOM_UNIFORM, 1),
    ("quadratic-regression", Strategy.AT_ZERO, 1),
]


def simulated(name, n=120, seed=0, segment_len=30):
    return simulate(SimSpec(model=name, n=n, segment_len=segment_len, seed=seed))


def test_single_point_series():
    result = run(get_model("gauss"), [1.5], 3.0)
    assert result.changepoints == [1]
    assert result.global_cost == pytest.approx(-0.5 * 1.5 ** 2 + 3.0)
    assert result.remaining_candidates == 1


def test_small_example_q_values():
    result = op_reference(get_model("gauss"), [2.0, -1.0, 0.0], 2.0, q0=-2.0)
    assert_allclose(result.q_values, [-2.0, -2.0, -0.5, -0.25])
    assert result.changepoints == [1, 3]


@pytest.mark.parametrize("name, strategy, constraints", DUST_CASES)
def test_pruned_runs_match_optimal_partitioning(name, strategy, constraints):
    model = get_model(name)
    beta = 2.0 * model.penalty_scale * math.log(120)
    for seed in range(3):
        data = simulated(name, seed=seed)
        reference = op_reference(model, data, beta)
        plan = DualEvalPlan(strategy=strategy, constraints=constraints)
        for pruning in (PruningMode.PELT, PruningMode.DUST):
            result = run(model, data, beta, pruning=pruning, plan=plan, seed=seed)
            assert result.changepoints == reference.changepoints
            assert result.global_cost == pytest.approx(reference.global_cost, rel=1e-12, abs=1e-9)
            assert np.all(result.candidate_trace <= reference.candidate_trace)


def test_meanvar_discards_one_step_late(monkeypatch):
    # (t, t + 1] is not a meanvar segment, so a candidate beaten at t must survive step t + 1
    def prune_everything(model, store, plan, live, *args, **kwargs):
        return np.ones(live.size, dtype=bool)

    monkeypatch.setattr(segmenter, "prune_mask", prune_everything)
    data = simulated("meanvar", n=40, segment_len=10)
    held = run(get_model("meanvar"), data, 5.0, pruning=PruningMode.PELT)
    assert held.candidate_trace[1:].tolist() == [1] + [2] * 39
    assert held.changepoints == list(range(2, 41, 2))
    immediate = run(get_model("gauss"), data, 5.0, pruning=PruningMode.PELT)
    assert immediate.candidate_trace[1:].tolist() == [1] * 40


@pytest.mark.parametrize("constraints", [1, 2])
def test_meanvar_pruning_keeps_the_optimum_across_seeds(constraints):
    model = get_model("meanvar")
    beta = 2.0 * math.log(120)
    plan = DualEvalPlan(strategy=Strategy.MEANVAR_CLOSED, constraints=constraints)
    for seed in range(6):
        data = simulated("meanvar", seed=seed)
        reference = op_reference(model, data, beta)
        for pruning in (PruningMode.PELT, PruningMode.DUST):
            result = run(model, data, beta, pruning=pruning, plan=plan)
            assert result.changepoints == reference.changepoints
            assert result.global_cost == pytest.approx(reference.global_cost, rel=1e-12, abs=1e-9)


def test_dust_never_keeps_more_than_pelt():
    model = get_model("gauss")
    data = simulated("gauss", n=400, segment_len=100)
    beta = 2.0 * math.log(400)
    pelt = run(model, data, beta, pruning=PruningMode.PELT)
    dust = run(model, data, beta, pruning=PruningMode.DUST, plan=DualEvalPlan(strategy=Strategy.EXACT_1D))
    assert np.all(dust.candidate_trace <= pelt.candidate_trace)
    assert dust.candidate_trace.sum() < pelt.candidate_trace.sum()


def test_dust_prunes_no_change_series_harder_than_pelt():
    model = get_model("gauss")
    data = np.random.default_rng(3).normal(0.0, 1.0, 2000)
    beta = 2.0 * math.log(2000)
    pelt = run(model, data, beta, pruning=PruningMode.PELT)
    dust = run(model, data, beta, plan=DualEvalPlan(strategy=Strategy.EXACT_1D))
    assert dust.changepoints == pelt.changepoints
    assert dust.candidate_trace.sum() < pelt.candidate_trace.sum()


def test_multivariate_gauss_run():
    model = get_model("gauss", components=2)
    data = simulate(SimSpec(model="gauss", n=150, segment_len=50, dim=2, seed=4))
    beta = 2.0 * 2 * math.log(150)
    reference = op_reference(model, data, beta)
    for strategy in (Strategy.QUASI_NEWTON, Strategy.RANDOM_UNIFORM):
        result = run(model, data, beta, plan=DualEvalPlan(strategy=strategy))
        assert result.changepoints == reference.changepoints


def test_no_pruning_trace_counts_every_index():
    result = op_reference(get_model("poisson"), simulated("poisson", n=60), 5.0)
    assert result.candidate_trace.tolist() == list(range(61))
    assert result.remaining_candidates == 60
    assert result.strategy is None


def test_worst_case_series_defeats_every_rule():
    n = 200
    beta = 2.0 * math.log(n)
    data = worstcase_gauss(n, beta)
    model = get_model("gauss")
    for pruning in (PruningMode.NONE, PruningMode.PELT, PruningMode.DUST):
        assert run(model, data, beta, pruning=pruning).remaining_candidates == n


def test_result_dict():
    model = get_model("gauss")
    result = run(model, simulated("gauss", n=50), 4.0)
    data = result.to_dict(include_trace=True, include_timing=False)
    assert data["pruning"] == "dust"
    assert data["strategy"] == "exact1d"
    assert data["model"] == "gauss"
    assert len(data["candidate_trace"]) == 50
    assert "wall_time" not in data
    assert data["remaining_candidates"] == result.remaining_candidates


def test_run_rejects_bad_arguments():
    model = get_model("gauss")
    with pytest.raises(ConfigError):
        run(model, [1.0, 2.0], 0.0)
    with pytest.raises(ConfigError):
        run(get_model("meanvar"), [1.0, 2.0, 3.0], 1.0, plan=DualEvalPlan(strategy=Strategy.EXACT_1D))
    # PELT ignores the dual strategy
    run(get_model("meanvar"), [1.0, 2.0, 3.0, 5.0], 1.0, pruning=PruningMode.PELT,
        plan=DualEvalPlan(strategy=Strategy.EXACT_1D))


def test_all_segmentations_degenerate():
    with pytest.raises(DegenerateSegment):
        run(get_model("meanvar"), [1.0], 1.0, pruning=PruningMode.NONE)


def test_runs_are_reproducible_with_seed():
    model = get_model("poisson")
    data = simulated("poisson", n=200, segment_len=50)
    plan = DualEvalPlan(strategy=Strategy.RANDOM_UNIFORM)
    first = run(model, data, 10.0, plan=plan, seed=7)
    second = run(model, data, 10.0, plan=plan, seed=7)
    assert first.candidate_trace.tolist() == second.candidate_trace.tolist()


def test_backtrack():
    assert backtrack([0, 0, 0, 2]) == [2, 3]
    assert backtrack([0, 0, 1, 2]) == [1, 2, 3]
    assert backtrack([0, 0]) == [1]
    with pytest.raises(CorruptState):
        backtrack([0])
    with pytest.raises(CorruptState):
        backtrack([0, 0, 2])


def test_pelt_test_cases():
    model = get_model("meanvar")
    store = StatStore.from_series(model, [0.0, 1.0, 2.0, 2.0])
    for t, q in ((1, np.inf), (2, 1.0), (3, 1.0), (4, 1.0)):
        store.set_q(t, q)
    assert pelt_test(model, store, 1, 4, 1.0)
    # (2, 4] is constant
    assert not pelt_test(model, store, 2, 4, 1.0)
    with pytest.raises(SegmentIndexError):
        pelt_test(model, store, 4, 4, 1.0)


def test_segmentation_cost_matches_global_cost():
    model = get_model("exponential")
    data = simulated("exponential", n=90)
    beta = 2.0 * math.log(90)
    result = op_reference(model, data, beta)
    store = StatStore.from_series(model, data)
    assert segmentation_cost(model, store, result.changepoints, beta) == pytest.approx(result.global_cost)
    assert segmentation_cost(model, store, [90], beta) >= result.global_cost - 1e-9
    with pytest.raises(SegmentIndexError):
        segmentation_cost(model, store, [40], beta)
    with pytest.raises(SegmentIndexError):
        segmentation_cost(model, store, [50, 40, 90], beta)


def test_candidate_set():
    cs = CandidateSet(4, compact_dead_fraction=0.5)
    for i in range(6):
        cs.push(i)
    assert len(cs) == 6
    with pytest.raises(CorruptState):
        cs.push(5)
    cs.discard(np.array([1, 3]))
    assert cs.live().tolist() == [0, 2, 4, 5]
    cs.discard(np.array([3, 42]))
    assert len(cs) == 4
    cs.discard(np.array([0, 2]))
    # more than half dead: compacted
    assert cs.live().tolist() == [4, 5]
    cs.push(9)
    assert cs.live().tolist() == [4, 5, 9]


def test_standardise_default_comes_from_settings():
    model = get_model("gauss")
    data = 5.0 * simulated("gauss", n=200, segment_len=50)
    scaled = DustSettings.model_validate({"segmenter": {"standardise": True}})
    from_settings = run(model, data, 10.0, settings=scaled)
    explicit = run(model, data, 10.0, standardise=True)
    raw = run(model, data, 10.0, standardise=False, settings=scaled)
    assert_allclose(from_settings.q_values, explicit.q_values)
    assert from_settings.global_cost != pytest.approx(raw.global_cost)
