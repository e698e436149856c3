"""
FIE Benchmark - Scenario Generator
Reproducible random problem instances: truncated-Gaussian disturbances, a
random initial state, measurements and the prior.

Each instance draws from its own counter-based stream seeded by
(base seed, instance index), so instances can be generated in any order or in
parallel and still come out bit-identical.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from core.errors import DomainError
from core.system_model import SystemModel, Trajectory, example_system, observe, simulate

logger = logging.getLogger(__name__)


class DecayMode(str, Enum):
    NONE = "none"
    GEOMETRIC = "geometric"


class ScenarioConfig(BaseModel):
    """
    Monte-Carlo instance settings

    Defaults reproduce the scalar example: sigma_w = 0.1, sigma_v = 0.2,
    truncation at 3 sigma, x0 ~ N(5, 2**2) and a deliberately biased prior of 2.
    A standard deviation of zero gives the noise-free limit.
    """

    model_config = ConfigDict(frozen=True)

    sigma_w: float = Field(0.1, ge=0)
    sigma_v: float = Field(0.2, ge=0)
    truncation: float = Field(3.0, gt=0)
    x0_mean: float = 5.0
    x0_std: float = Field(2.0, ge=0)
    prior: float = 2.0
    horizon: int = Field(20, ge=0)
    seed: int = Field(42, ge=0, lt=2**64)
    instances: int = Field(500, ge=1)
    decay_rate: Optional[float] = Field(None, gt=0, le=1)

    @property
    def decay_mode(self) -> DecayMode:
        return DecayMode.NONE if self.decay_rate is None else DecayMode.GEOMETRIC

    @property
    def w_bound(self) -> float:
        return self.truncation * self.sigma_w

    @property
    def v_bound(self) -> float:
        return self.truncation * self.sigma_v


@dataclass(frozen=True, eq=False)
class Scenario:
    """One realised instance; y is exactly observe(simulate(x0, w), v)"""

    instance: int
    x0: np.ndarray
    w: np.ndarray
    v: np.ndarray
    y: np.ndarray
    trajectory: Trajectory
    config: ScenarioConfig

    @property
    def horizon(self) -> int:
        return self.trajectory.horizon

    @property
    def states(self) -> np.ndarray:
        return self.trajectory.states

    @property
    def prior(self) -> np.ndarray:
        return np.full(self.x0.shape, self.config.prior)

    def within_bounds(self) -> bool:
        """Bounded-disturbance premise, checked componentwise"""
        return bool(
            np.all(np.abs(self.w) <= self.config.w_bound)
            and np.all(np.abs(self.v) <= self.config.v_bound)
        )


def instance_rng(seed: int, instance: int) -> np.random.Generator:
    """Independent Philox stream for (seed, instance)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, instance])))


def sample_truncated_normal(rng: np.random.Generator, sigma: float, bound: float) -> float:
    """One draw of N(0, sigma**2) conditioned on |value| <= bound, by rejection"""
    if sigma == 0:
        return 0.0
    if sigma < 0 or bound <= 0:
        raise DomainError(f"Need sigma >= 0 and bound > 0, got sigma={sigma}, bound={bound}")
    while True:
        value = float(rng.normal(0.0, sigma))
        if abs(value) <= bound:
            return value


def sample_truncated_normal_array(
    rng: np.random.Generator, sigma: float, bound: float, size: Tuple[int, ...]
) -> np.ndarray:
    """Vectorised rejection sampler; rejected entries are redrawn in place"""
    if sigma == 0:
        return np.zeros(size)
    if sigma < 0 or bound <= 0:
        raise DomainError(f"Need sigma >= 0 and bound > 0, got sigma={sigma}, bound={bound}")
    out = rng.normal(0.0, sigma, size=size)
    rejected = np.abs(out) > bound
    while rejected.any():
        out[rejected] = rng.normal(0.0, sigma, size=int(rejected.sum()))
        rejected = np.abs(out) > bound
    return out


def truncated_normal_std(sigma: float, m: float) -> float:
    """Std of N(0, sigma**2) truncated to [-m sigma, m sigma]"""
    mass = 2.0 * norm.cdf(m) - 1.0
    return sigma * math.sqrt(1.0 - 2.0 * m * norm.pdf(m) / mass)


def generate_scenario(
    config: ScenarioConfig, instance: int, model: Optional[SystemModel] = None
) -> Scenario:
    """
    Deterministic instance for (config.seed, instance)

    Draw order: x0, then w(0..T-1), then v(0..T). With geometric decay both
    sequences are scaled by rate**k after truncation.
    """
    if not 0 <= instance < config.instances:
        raise DomainError(f"Instance {instance} outside 0..{config.instances - 1}")
    if model is None:
        model, _ = example_system()

    rng = instance_rng(config.seed, instance)
    horizon = config.horizon
    x0 = config.x0_mean + config.x0_std * rng.standard_normal(model.n)
    w = sample_truncated_normal_array(rng, config.sigma_w, config.w_bound, (horizon, model.g))
    v = sample_truncated_normal_array(
        rng, config.sigma_v, config.v_bound, (horizon + 1, model.p)
    )

    if config.decay_mode is DecayMode.GEOMETRIC:
        envelope = config.decay_rate ** np.arange(horizon + 1, dtype=float)
        w = w * envelope[:horizon, None]
        v = v * envelope[:, None]

    trajectory = simulate(model, x0, w)
    y = observe(model, trajectory, v)
    logger.debug("Generated scenario %d (x0=%s)", instance, x0)
    return Scenario(instance=instance, x0=x0, w=w, v=v, y=y, trajectory=trajectory, config=config)
