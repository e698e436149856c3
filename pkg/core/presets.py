"""
FIE Benchmark - Experiment Presets
Named, one-flag configurations of the scalar example study.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from core.cost import CostSpec, DiscountFamily
from core.errors import DomainError
from core.scenario import ScenarioConfig


class ExperimentMode(str, Enum):
    STUDY = "study"
    CONVERGENCE = "convergence"
    LONG_HORIZON = "long_horizon"


class Estimator(str, Enum):
    FIE = "fie"
    EKF = "ekf"


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    family: DiscountFamily = DiscountFamily.EXP
    b2: float = 0.81
    lam: float = 1.0
    mode: ExperimentMode = ExperimentMode.STUDY
    polynomial_certificate: bool = False
    scenario: Dict[str, Any] = field(default_factory=dict)

    def cost(
        self,
        b2: Optional[float] = None,
        lambda_w: Optional[float] = None,
        lambda_v: Optional[float] = None,
    ) -> CostSpec:
        """Cost with quadratic 1/sigma**2 weights at the nominal noise levels"""
        factory = CostSpec.paper_poly if self.family is DiscountFamily.POLY else CostSpec.paper_exp
        return factory(
            b2=self.b2 if b2 is None else b2,
            lambda_w=self.lam if lambda_w is None else lambda_w,
            lambda_v=self.lam if lambda_v is None else lambda_v,
        )

    def scenario_config(self, **overrides) -> ScenarioConfig:
        values = dict(self.scenario)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ScenarioConfig(**values)


PRESETS: Dict[str, Preset] = {
    preset.name: preset
    for preset in [
        Preset("paper-exp", "Exponential discount, b2=0.81, lambda=1"),
        Preset("paper-exp-lambda0", "Exponential discount, b2=0.81, lambda=0", lam=0.0),
        Preset("paper-exp-b2-2", "Growing exponential weight, b2=2, lambda=1", b2=2.0),
        Preset("paper-exp-b2-2-lambda0", "Growing exponential weight, b2=2, lambda=0", b2=2.0, lam=0.0),
        Preset(
            "paper-poly",
            "Polynomial discount, b2=0.21, lambda=1",
            family=DiscountFamily.POLY,
            b2=0.21,
            polynomial_certificate=True,
        ),
        Preset(
            "paper-poly-lambda0",
            "Polynomial discount, b2=0.21, lambda=0",
            family=DiscountFamily.POLY,
            b2=0.21,
            lam=0.0,
            polynomial_certificate=True,
        ),
        Preset(
            "convergence",
            "Disturbances decaying like 0.5**t, T=40, N=100",
            mode=ExperimentMode.CONVERGENCE,
            scenario={"decay_rate": 0.5, "horizon": 40, "instances": 100},
        ),
        Preset(
            "long-horizon",
            "Paper cost over T=60, N=100",
            mode=ExperimentMode.LONG_HORIZON,
            scenario={"horizon": 60, "instances": 100},
        ),
    ]
}

SWEEP_PRESETS: List[str] = [
    "paper-exp",
    "paper-exp-lambda0",
    "paper-exp-b2-2",
    "paper-exp-b2-2-lambda0",
    "paper-poly",
    "paper-poly-lambda0",
]


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(f"Unknown preset '{name}'. Available: {', '.join(PRESETS)}") from None
