"""
Tests for the Monte-Carlo orchestrator and its output files
"""

import json
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

import core.bench as bench
from core.bench import (
    PER_T_COLUMNS,
    RECORD_COLUMNS,
    ErrorRecord,
    InstanceOutcome,
    RunConfig,
    collect_outcomes,
    gather_instances,
    run_monte_carlo,
    run_sweep,
    summarize,
)
from core.cost import CostSpec
from core.errors import CertificateError, DomainError
from core.fie import SolverOptions
from core.presets import PRESETS, Estimator, ExperimentMode
from core.scenario import ScenarioConfig
from scripts.verify_summary import verify_run_directory

OUTPUT_FILES = ["records.csv", "per_t.csv", "ecdf_fie.csv", "ecdf_ekf.csv", "summary.json"]


def tiny_config(tmp_path, **overrides):
    values = dict(
        scenario=ScenarioConfig(instances=3, horizon=3, seed=42),
        solver=SolverOptions(restarts=2),
        output_dir=tmp_path,
    )
    values.update(overrides)
    return RunConfig(**values)


class TestConfig:
    def test_requires_an_estimator(self):
        with pytest.raises(ValidationError):
            RunConfig(estimators=())

    def test_estimator_order_is_canonical(self):
        config = RunConfig(estimators=("ekf", "fie", "ekf"))
        assert config.estimators == (Estimator.FIE, Estimator.EKF)

    def test_from_preset_overrides(self, tmp_path):
        config = RunConfig.from_preset("paper-exp", b2=2.0, lambda_w=0.0, instances=7, seed=3, output_dir=tmp_path)
        assert config.cost.b2 == 2.0
        assert config.cost.lambda_w == 0.0
        assert config.cost.lambda_v == 1.0
        assert config.scenario.instances == 7
        assert config.scenario.seed == 3
        assert config.preset == "paper-exp"

    def test_preset_catalogue(self):
        convergence = RunConfig.from_preset("convergence")
        assert convergence.mode is ExperimentMode.CONVERGENCE
        assert convergence.scenario.decay_rate == 0.5
        assert convergence.scenario.horizon == 40
        assert RunConfig.from_preset("long-horizon").scenario.horizon == 60
        poly = RunConfig.from_preset("paper-poly-lambda0")
        assert poly.cost.b2 == 0.21 and poly.cost.lambda_v == 0.0
        assert poly.polynomial_certificate
        assert len(PRESETS) == 8

    def test_unknown_preset(self):
        with pytest.raises(DomainError):
            RunConfig.from_preset("paper-unknown")


class TestSummarize:
    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            summarize([])

    def test_symmetric_errors(self):
        records = [ErrorRecord(0, 0, 1.0, e_fie=1.0), ErrorRecord(1, 0, 1.0, e_fie=-1.0)]
        summary = summarize(records, (Estimator.FIE,))
        fie = summary.estimators["fie"]
        assert fie.pooled_mean_abs == 1.0
        assert fie.pooled_std == 1.0
        assert fie.n_samples == 2

    def test_failed_instances_excluded_and_counted(self):
        records = [
            ErrorRecord(0, 0, 1.0, e_fie=0.5, e_ekf=0.1),
            ErrorRecord(1, 0, 1.0, e_fie=None, e_ekf=0.3),
        ]
        outcomes = [InstanceOutcome(0, records[:1]), InstanceOutcome(1, records[1:], failed={"fie": True})]
        summary = summarize(records, (Estimator.FIE, Estimator.EKF), outcomes)
        assert summary.estimators["fie"].n_samples == 1
        assert summary.estimators["fie"].failed_instances == 1
        assert summary.estimators["ekf"].n_samples == 2
        assert summary.failed_instances == 1


class TestRun:
    def test_noise_free_exact_prior_gives_zero_errors(self, tmp_path):
        scenario = ScenarioConfig(sigma_w=0.0, sigma_v=0.0, x0_std=0.0, x0_mean=2.0, prior=2.0, instances=1, horizon=3)
        records, summary = run_monte_carlo(tiny_config(tmp_path, scenario=scenario))
        for record in records:
            assert record.e_fie == pytest.approx(0.0, abs=1e-12)
            assert record.e_ekf == pytest.approx(0.0, abs=1e-12)
        assert summary.estimators["fie"].pooled_std == pytest.approx(0.0, abs=1e-12)

    def test_outputs_written(self, tmp_path):
        records, summary = run_monte_carlo(tiny_config(tmp_path))
        for name in OUTPUT_FILES:
            assert (tmp_path / name).exists()
        frame = pd.read_csv(tmp_path / "records.csv")
        assert list(frame.columns) == RECORD_COLUMNS
        assert len(frame) == 3 * 4
        assert list(pd.read_csv(tmp_path / "per_t.csv").columns) == PER_T_COLUMNS
        assert list(pd.read_csv(tmp_path / "ecdf_fie.csv").columns) == ["abs_error", "cum_prob"]

        data = json.loads((tmp_path / "summary.json").read_text())
        assert data["instances"] == 3 and data["horizon"] == 3 and data["seed"] == 42
        fie = next(e for e in data["estimators"] if e["estimator"] == "fie")
        for key in ("pooled_std", "pooled_mean_abs", "n_samples", "failed_instances", "pooled_std_sample"):
            assert key in fie
        assert fie["n_samples"] == 12

    def test_records_consistent(self, tmp_path):
        records, _ = run_monte_carlo(tiny_config(tmp_path))
        for record in records:
            assert record.e_fie == record.x_true - record.xhat_fie
            assert record.e_ekf == record.x_true - record.xhat_ekf
        assert [(r.instance, r.t) for r in records] == sorted((r.instance, r.t) for r in records)

    def test_summary_recomputes_from_records(self, tmp_path):
        run_monte_carlo(tiny_config(tmp_path))
        assert verify_run_directory(tmp_path) == []

    def test_parallel_run_is_byte_identical(self, tmp_path):
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        run_monte_carlo(tiny_config(serial, workers=1))
        run_monte_carlo(tiny_config(parallel, workers=2))
        for name in OUTPUT_FILES:
            assert (serial / name).read_bytes() == (parallel / name).read_bytes()

    def test_uncertified_cost_refused(self, tmp_path):
        config = tiny_config(tmp_path, cost=CostSpec.paper_exp(b2=0.5))
        with pytest.raises(CertificateError) as info:
            run_monte_carlo(config)
        assert info.value.verdict.margin < 0

    def test_uncertified_cost_allowed_with_override(self, tmp_path):
        config = tiny_config(
            tmp_path, cost=CostSpec.paper_exp(b2=0.5), allow_uncertified=True, estimators=("ekf",)
        )
        _, summary = run_monte_carlo(config, write=False)
        assert list(summary.estimators) == ["ekf"]

    def test_ekf_only_run(self, tmp_path):
        records, summary = run_monte_carlo(tiny_config(tmp_path, estimators=("ekf",)))
        assert all(r.e_fie is None for r in records)
        assert (tmp_path / "ecdf_ekf.csv").exists()
        assert not (tmp_path / "ecdf_fie.csv").exists()

    @pytest.mark.asyncio
    async def test_gather_instances_sorted_by_caller(self, tmp_path):
        config = tiny_config(tmp_path, workers=2, estimators=("ekf",))
        outcomes = await gather_instances(config, [2, 0, 1])
        assert [o.instance for o in outcomes] == [2, 0, 1]
        serial = collect_outcomes(tiny_config(tmp_path, estimators=("ekf",)))
        by_instance = {o.instance: o for o in outcomes}
        for outcome in serial:
            assert [r.e_ekf for r in by_instance[outcome.instance].records] == [r.e_ekf for r in outcome.records]


def test_sweep_writes_comparison(tmp_path):
    base = RunConfig.from_preset(
        "paper-exp", instances=2, horizon=2, output_dir=tmp_path, solver=SolverOptions(restarts=1)
    )
    table = run_sweep(base, ["paper-exp", "paper-poly"], instances=2, horizon=2)
    assert (tmp_path / "comparison.csv").exists()
    assert (tmp_path / "paper-poly" / "summary.json").exists()
    assert set(table["preset"]) == {"paper-exp", "paper-poly"}
    assert len(table) == 4
    assert np.all(table["n_samples"] == 6)


def record_sweep_configs(monkeypatch):
    seen = {}

    def fake_run(config):
        seen[config.preset] = config
        return [], SimpleNamespace(estimators={})

    monkeypatch.setattr(bench, "run_monte_carlo", fake_run)
    return seen


def test_sweep_keeps_each_preset_size(tmp_path, monkeypatch):
    seen = record_sweep_configs(monkeypatch)
    base = RunConfig.from_preset("paper-exp", seed=5, output_dir=tmp_path)
    run_sweep(base, ["paper-exp", "long-horizon", "convergence"])
    assert (seen["paper-exp"].scenario.horizon, seen["paper-exp"].scenario.instances) == (20, 500)
    assert (seen["long-horizon"].scenario.horizon, seen["long-horizon"].scenario.instances) == (60, 100)
    assert seen["convergence"].scenario.horizon == 40
    assert seen["convergence"].scenario.decay_rate == 0.5
    assert {config.scenario.seed for config in seen.values()} == {5}


def test_sweep_explicit_size_applies_to_all(tmp_path, monkeypatch):
    seen = record_sweep_configs(monkeypatch)
    base = RunConfig.from_preset("paper-exp", output_dir=tmp_path)
    run_sweep(base, ["paper-exp", "long-horizon"], horizon=4)
    assert {config.scenario.horizon for config in seen.values()} == {4}
    assert seen["long-horizon"].scenario.instances == 100
