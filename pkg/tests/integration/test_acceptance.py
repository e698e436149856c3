"""
Full-size statistical reproductions of the scalar example study
Run: FIE_RUN_SLOW=1 pytest tests/integration -m slow

These take minutes; the reduced versions in tests/unit always run.
"""

import os

import numpy as np
import pytest

from core.bench import RunConfig, early_advantage, run_monte_carlo
from core.cost import CostSpec
from core.fie import EstimationProblem, SolverOptions, brute_force_oracle, solve_fie
from core.scenario import ScenarioConfig, generate_scenario
from core.system_model import example_system

pytestmark = pytest.mark.slow

WORKERS = int(os.getenv('FIE_BENCH_WORKERS', '4'))


def run_preset(tmp_path, name, **overrides):
    config = RunConfig.from_preset(name, output_dir=tmp_path / name, workers=WORKERS, **overrides)
    _, summary = run_monte_carlo(config)
    return summary


@pytest.fixture(scope="module")
def study_runs(tmp_path_factory):
    """Every study preset on seed 42, computed once"""
    root = tmp_path_factory.mktemp("study")
    names = ["paper-exp", "paper-exp-lambda0", "paper-exp-b2-2", "paper-exp-b2-2-lambda0", "paper-poly"]
    return {name: run_preset(root, name) for name in names}


def fie_stats(summary):
    fie = summary.estimators["fie"]
    return fie.pooled_std, fie.pooled_mean_abs


def test_headline_lambda_one(study_runs):
    std, mean_abs = fie_stats(study_runs["paper-exp"])
    assert 0.049 <= std <= 0.081
    assert 0.028 <= mean_abs <= 0.046
    assert study_runs["paper-exp"].failed_instances <= 5


def test_headline_lambda_zero(study_runs):
    std, mean_abs = fie_stats(study_runs["paper-exp-lambda0"])
    assert 0.061 <= std <= 0.101
    assert 0.035 <= mean_abs <= 0.058


def test_growing_weight(study_runs):
    std, mean_abs = fie_stats(study_runs["paper-exp-b2-2"])
    assert std == pytest.approx(0.068, rel=0.25)
    assert mean_abs == pytest.approx(0.038, rel=0.25)
    std0, mean_abs0 = fie_stats(study_runs["paper-exp-b2-2-lambda0"])
    assert std0 == pytest.approx(0.091, rel=0.25)
    assert mean_abs0 == pytest.approx(0.057, rel=0.25)
    assert mean_abs >= fie_stats(study_runs["paper-exp"])[1]


def test_polynomial_cost_matches_exponential(study_runs):
    poly = fie_stats(study_runs["paper-poly"])
    exp = fie_stats(study_runs["paper-exp"])
    for a, b in zip(poly, exp):
        assert a == pytest.approx(b, rel=0.10)


def test_fie_beats_ekf_early(study_runs):
    table = early_advantage(study_runs["paper-exp"])
    early = table[table["early"]]
    assert np.all(early["fie"] < early["ekf"])
    late = table[~table["early"]]
    assert late["ratio"].mean() < early["ratio"].mean()


def test_optimality_sandwich_holds(study_runs):
    for summary in study_runs.values():
        assert summary.estimators["fie"].sandwich_violations == 0


def test_convergence_under_decaying_disturbances(tmp_path):
    summary = run_preset(tmp_path, "convergence")
    per_t = summary.estimators["fie"].per_t.set_index("t")["mean_abs"]
    assert per_t[40] <= 0.1 * per_t[5]


def test_noise_free_biased_prior_converges(tmp_path):
    scenario = ScenarioConfig(sigma_w=0.0, sigma_v=0.0, horizon=40, instances=20)
    config = RunConfig(scenario=scenario, estimators=("fie",), output_dir=tmp_path, workers=WORKERS)
    records, _ = run_monte_carlo(config)
    final = [abs(r.e_fie) for r in records if r.t == 40]
    assert max(final) <= 1e-4


def test_long_horizon_stays_bounded(tmp_path, study_runs):
    long_run = run_preset(tmp_path, "long-horizon")
    short_max = study_runs["paper-exp"].estimators["fie"].max_abs
    assert long_run.estimators["fie"].max_abs <= 5 * short_max


def test_oracle_dominance_fifty_instances():
    model, _ = example_system()
    config = ScenarioConfig(instances=50, horizon=2, seed=99)
    cost = CostSpec.paper_exp()
    for instance in range(config.instances):
        scenario = generate_scenario(config, instance, model)
        for t in (0, 1, 2):
            problem = EstimationProblem.from_scenario(scenario, model, t)
            _, grid_cost = brute_force_oracle(problem, cost)
            assert solve_fie(problem, cost, SolverOptions()).cost <= grid_cost + 1e-3


def test_determinism_across_worker_counts(tmp_path):
    names = ["records.csv", "per_t.csv", "ecdf_fie.csv", "ecdf_ekf.csv", "summary.json"]
    one = RunConfig.from_preset("paper-exp", instances=40, output_dir=tmp_path / "one", workers=1)
    many = RunConfig.from_preset("paper-exp", instances=40, output_dir=tmp_path / "many", workers=WORKERS)
    run_monte_carlo(one)
    run_monte_carlo(many)
    for name in names:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "many" / name).read_bytes()
