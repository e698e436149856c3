"""
FIE Benchmark - Monte-Carlo Orchestrator
Runs FIE and the EKF over many random instances, pools the estimation errors
and writes plot-ready CSV/JSON files.

Instances run in worker processes when workers > 1. Every instance has its own
random stream and results are sorted by (instance, t) before anything is
written, so outputs do not depend on scheduling.
"""

import asyncio
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.comparison_functions import CertificateVerdict
from core.cost import CostSpec, validate_rgas
from core.ekf import run_ekf
from core.errors import CertificateError, DomainError, NumericalError, SolverFailureError
from core.fie import SolverOptions, run_fie_sequence, sandwich_holds, truth_cost
from core.presets import Estimator, ExperimentMode, get_preset
from core.scenario import ScenarioConfig, generate_scenario
from core.system_model import example_system
from utils.statistics import ecdf, pooled_stats, per_time_stats

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = Path("data/results")
RECORD_COLUMNS = ["instance", "t", "x_true", "xhat_fie", "xhat_ekf", "e_fie", "e_ekf", "cost", "feasible"]
PER_T_COLUMNS = ["estimator", "t", "mean", "std", "mean_abs", "n"]
# share of failed instances above which a run counts as failed
FAILURE_THRESHOLD = 0.01


class RunConfig(BaseModel):
    """Everything one benchmark run depends on"""

    model_config = ConfigDict(frozen=True)

    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    cost: CostSpec = Field(default_factory=CostSpec.paper_exp)
    estimators: Tuple[Estimator, ...] = (Estimator.FIE, Estimator.EKF)
    output_dir: Path = DEFAULT_OUTPUT_DIR
    mode: ExperimentMode = ExperimentMode.STUDY
    workers: int = Field(1, ge=1)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    allow_uncertified: bool = False
    polynomial_certificate: bool = False
    preset: Optional[str] = None

    @field_validator("estimators")
    @classmethod
    def _at_least_one(cls, value):
        if not value:
            raise ValueError("Select at least one estimator")
        # canonical order keeps output files stable
        return tuple(e for e in Estimator if e in set(value))

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "RunConfig":
        """
        Build a config from a named preset

        Recognised overrides: b2, lambda_w, lambda_v and any ScenarioConfig field
        go into the cost/scenario; remaining keys are RunConfig fields.
        """
        preset = get_preset(name)
        cost = preset.cost(
            b2=overrides.pop("b2", None),
            lambda_w=overrides.pop("lambda_w", None),
            lambda_v=overrides.pop("lambda_v", None),
        )
        scenario_keys = set(ScenarioConfig.model_fields) & set(overrides)
        scenario = preset.scenario_config(**{k: overrides.pop(k) for k in scenario_keys})
        fields = {k: v for k, v in overrides.items() if v is not None}
        return cls(
            scenario=scenario,
            cost=cost,
            mode=preset.mode,
            polynomial_certificate=preset.polynomial_certificate,
            preset=name,
            **fields,
        )


@dataclass(frozen=True)
class ErrorRecord:
    """One (instance, t) row; e = x_true - xhat exactly, None where an estimator did not run"""

    instance: int
    t: int
    x_true: float
    xhat_fie: Optional[float] = None
    xhat_ekf: Optional[float] = None
    e_fie: Optional[float] = None
    e_ekf: Optional[float] = None
    cost: Optional[float] = None
    feasible: Optional[bool] = None


@dataclass(frozen=True)
class InstanceOutcome:
    instance: int
    records: List[ErrorRecord]
    failed: Dict[str, bool] = field(default_factory=dict)
    sandwich_violations: int = 0
    infeasible_solves: int = 0
    message: str = ""


@dataclass(frozen=True, eq=False)
class EstimatorSummary:
    estimator: str
    pooled_std: float
    pooled_std_sample: float
    pooled_mean: float
    pooled_mean_abs: float
    max_abs: float
    n_samples: int
    failed_instances: int
    sandwich_violations: int
    infeasible_solves: int
    per_t: pd.DataFrame
    ecdf: List[Tuple[float, float]]

    def to_dict(self) -> Dict:
        return {
            "estimator": self.estimator,
            "pooled_std": _json_float(self.pooled_std),
            "pooled_mean_abs": _json_float(self.pooled_mean_abs),
            "n_samples": self.n_samples,
            "failed_instances": self.failed_instances,
            "pooled_std_sample": _json_float(self.pooled_std_sample),
            "pooled_mean": _json_float(self.pooled_mean),
            "max_abs": _json_float(self.max_abs),
            "sandwich_violations": self.sandwich_violations,
            "infeasible_solves": self.infeasible_solves,
        }


@dataclass(frozen=True, eq=False)
class RunSummary:
    estimators: Dict[str, EstimatorSummary]
    preset: Optional[str] = None
    seed: Optional[int] = None
    instances: int = 0
    horizon: int = 0
    mode: str = ExperimentMode.STUDY.value

    @property
    def failed_instances(self) -> int:
        return max((s.failed_instances for s in self.estimators.values()), default=0)

    def to_dict(self) -> Dict:
        return {
            "preset": self.preset,
            "seed": self.seed,
            "instances": self.instances,
            "horizon": self.horizon,
            "mode": self.mode,
            "estimators": [s.to_dict() for s in self.estimators.values()],
        }


def _json_float(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

def certify(config: RunConfig) -> CertificateVerdict:
    """Check the run's cost against the example certificate; raises unless overridden"""
    _, certificate = example_system(polynomial_certificate=config.polynomial_certificate)
    verdict = validate_rgas(config.cost, certificate)
    if not verdict.passed:
        message = (
            f"Cost {config.cost.family.value} (b2={config.cost.b2}) fails {verdict.condition.value} "
            f"with margin {verdict.margin:.6g}"
        )
        if not config.allow_uncertified:
            raise CertificateError(message, verdict)
        logger.warning("%s; running anyway", message)
    return verdict


# ---------------------------------------------------------------------------
# Per-instance work
# ---------------------------------------------------------------------------

def run_instance(config: RunConfig, instance: int) -> InstanceOutcome:
    """Solve one instance with every selected estimator (module level so it pickles)"""
    logger.debug("Instance %d started", instance)
    model, _ = example_system(polynomial_certificate=config.polynomial_certificate)
    scenario = generate_scenario(config.scenario, instance, model)
    horizon = scenario.horizon
    rows = [{"instance": instance, "t": t, "x_true": float(scenario.states[t, 0])} for t in range(horizon + 1)]
    failed: Dict[str, bool] = {}
    violations = infeasible = 0
    messages = []

    if Estimator.FIE in config.estimators:
        try:
            results = run_fie_sequence(scenario, config.cost, config.solver, model)
        except SolverFailureError as exc:
            logger.warning("Instance %d: FIE failed: %s", instance, exc)
            failed[Estimator.FIE.value] = True
            messages.append(str(exc))
        else:
            for row, result in zip(rows, results):
                row.update(
                    xhat_fie=float(result.current_state[0]),
                    e_fie=float(result.error[0]),
                    cost=result.cost,
                    feasible=result.feasible,
                )
                if not result.feasible:
                    infeasible += 1
                    continue
                truth = truth_cost(scenario, config.cost, result.t)
                if not sandwich_holds(result, truth, config.cost):
                    violations += 1
                    logger.warning(
                        "Instance %d t=%d: V_t° = %.6g exceeds V_t(truth) = %.6g",
                        instance,
                        result.t,
                        result.cost,
                        truth,
                    )

    if Estimator.EKF in config.estimators:
        try:
            errors, states = run_ekf(scenario, model)
        except NumericalError as exc:
            logger.warning("Instance %d: EKF failed: %s", instance, exc)
            failed[Estimator.EKF.value] = True
            messages.append(str(exc))
        else:
            for row, error, state in zip(rows, errors, states):
                row.update(xhat_ekf=float(state.mean[0]), e_ekf=float(error[0]))

    logger.debug("Instance %d finished", instance)
    return InstanceOutcome(
        instance=instance,
        records=[ErrorRecord(**row) for row in rows],
        failed=failed,
        sandwich_violations=violations,
        infeasible_solves=infeasible,
        message="; ".join(messages),
    )


async def gather_instances(config: RunConfig, instances: Sequence[int]) -> List[InstanceOutcome]:
    """Fan instances out to a process pool"""
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [loop.run_in_executor(pool, run_instance, config, i) for i in instances]
        return list(await asyncio.gather(*futures))


def collect_outcomes(config: RunConfig) -> List[InstanceOutcome]:
    instances = range(config.scenario.instances)
    if config.workers == 1:
        outcomes = [run_instance(config, i) for i in instances]
    else:
        outcomes = asyncio.run(gather_instances(config, instances))
    return sorted(outcomes, key=lambda o: o.instance)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def records_frame(records: Sequence[ErrorRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in records], columns=RECORD_COLUMNS)
    return frame.sort_values(["instance", "t"], kind="mergesort").reset_index(drop=True)


def summarize(
    records: Sequence[ErrorRecord],
    estimators: Sequence[Estimator] = (Estimator.FIE, Estimator.EKF),
    outcomes: Optional[Sequence[InstanceOutcome]] = None,
    config: Optional[RunConfig] = None,
) -> RunSummary:
    """
    Pool e over every (instance, t) pair, per estimator

    Instances where an estimator failed carry no errors for it and so drop out
    of its statistics; the count is reported.
    """
    if not records:
        raise DomainError("Cannot summarize an empty record set")
    frame = records_frame(records)
    outcomes = outcomes or []

    summaries: Dict[str, EstimatorSummary] = {}
    for estimator in estimators:
        column = f"e_{estimator.value}"
        errors = frame[column].dropna().to_numpy(dtype=float)
        stats = pooled_stats(errors)
        per_t = per_time_stats(frame, column) if errors.size else pd.DataFrame(columns=PER_T_COLUMNS[1:])
        summaries[estimator.value] = EstimatorSummary(
            estimator=estimator.value,
            pooled_std=stats.std,
            pooled_std_sample=stats.std_sample,
            pooled_mean=stats.mean,
            pooled_mean_abs=stats.mean_abs,
            max_abs=stats.max_abs,
            n_samples=stats.n_samples,
            failed_instances=sum(1 for o in outcomes if o.failed.get(estimator.value)),
            sandwich_violations=sum(o.sandwich_violations for o in outcomes) if estimator is Estimator.FIE else 0,
            infeasible_solves=sum(o.infeasible_solves for o in outcomes) if estimator is Estimator.FIE else 0,
            per_t=per_t,
            ecdf=ecdf(errors),
        )

    return RunSummary(
        estimators=summaries,
        preset=config.preset if config else None,
        seed=config.scenario.seed if config else None,
        instances=int(frame["instance"].nunique()),
        horizon=int(frame["t"].max()),
        mode=config.mode.value if config else ExperimentMode.STUDY.value,
    )


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def write_outputs(output_dir: Path, records: Sequence[ErrorRecord], summary: RunSummary) -> List[Path]:
    """records.csv, per_t.csv, ecdf_<estimator>.csv and summary.json"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = output_dir / "records.csv"
    records_frame(records).to_csv(path, index=False)
    written.append(path)

    per_t = []
    for name, est in summary.estimators.items():
        table = est.per_t.copy()
        table.insert(0, "estimator", name)
        per_t.append(table)
    path = output_dir / "per_t.csv"
    pd.concat(per_t, ignore_index=True)[PER_T_COLUMNS].to_csv(path, index=False)
    written.append(path)

    for name, est in summary.estimators.items():
        path = output_dir / f"ecdf_{name}.csv"
        pd.DataFrame(est.ecdf, columns=["abs_error", "cum_prob"]).to_csv(path, index=False)
        written.append(path)

    path = output_dir / "summary.json"
    path.write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    written.append(path)
    logger.info("Wrote %d files to %s", len(written), output_dir)
    return written


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def run_monte_carlo(config: RunConfig, write: bool = True) -> Tuple[List[ErrorRecord], RunSummary]:
    """Certify, run every instance, summarize and (optionally) write the output files"""
    certify(config)
    logger.info(
        "Running %d instances, T=%d, estimators=%s, workers=%d",
        config.scenario.instances,
        config.scenario.horizon,
        ",".join(e.value for e in config.estimators),
        config.workers,
    )
    outcomes = collect_outcomes(config)
    records = [r for o in outcomes for r in o.records]
    summary = summarize(records, config.estimators, outcomes, config)
    if write:
        write_outputs(config.output_dir, records, summary)
    logger.info("Run finished with %d failed instances", summary.failed_instances)
    return records, summary


def failure_rate(summary: RunSummary) -> float:
    return summary.failed_instances / summary.instances if summary.instances else 0.0


def run_sweep(
    base: RunConfig,
    presets: Sequence[str],
    instances: Optional[int] = None,
    horizon: Optional[int] = None,
) -> pd.DataFrame:
    """
    Run each preset on the base seed into <output_dir>/<preset> and write comparison.csv

    Each preset keeps its own instance count and horizon unless instances or
    horizon is given explicitly.
    """
    rows = []
    for name in presets:
        config = RunConfig.from_preset(
            name,
            seed=base.scenario.seed,
            instances=instances,
            horizon=horizon,
            estimators=base.estimators,
            output_dir=Path(base.output_dir) / name,
            workers=base.workers,
            solver=base.solver,
            allow_uncertified=base.allow_uncertified,
        )
        _, summary = run_monte_carlo(config)
        for est in summary.estimators.values():
            rows.append(
                {
                    "preset": name,
                    "estimator": est.estimator,
                    "pooled_std": est.pooled_std,
                    "pooled_mean_abs": est.pooled_mean_abs,
                    "n_samples": est.n_samples,
                    "failed_instances": est.failed_instances,
                }
            )
    table = pd.DataFrame(
        rows, columns=["preset", "estimator", "pooled_std", "pooled_mean_abs", "n_samples", "failed_instances"]
    )
    Path(base.output_dir).mkdir(parents=True, exist_ok=True)
    table.to_csv(Path(base.output_dir) / "comparison.csv", index=False)
    return table


def early_advantage(summary: RunSummary, until: int = 5) -> pd.DataFrame:
    """Per-t mean |e| of both estimators side by side with their ratio ekf/fie"""
    fie = summary.estimators[Estimator.FIE.value].per_t.set_index("t")["mean_abs"]
    ekf = summary.estimators[Estimator.EKF.value].per_t.set_index("t")["mean_abs"]
    table = pd.DataFrame({"fie": fie, "ekf": ekf})
    table["ratio"] = table["ekf"] / table["fie"].replace(0.0, np.nan)
    table["early"] = table.index <= until
    return table
