"""
FIE Benchmark - Cost Functions
RGAS-certified cost families for the full information estimator

V_t = c2 |chi(0) - xbar0|**a2 * discount(t)
      + (lambda_w * sum_i l_w(omega(i)) + lambda_v * sum_i l_v(nu(i))) / (t + 1)
      + (1 - lambda_w) * max_i l_w(omega(i)) + (1 - lambda_v) * max_i l_v(nu(i))

discount(t) is (t + 1)**(-b2) for the polynomial family and b2**t for the
exponential family. Stage costs are Power forms W * |z|**p; quadratic stages
with W = 1/sigma**2 give the costs of the scalar example. nu(t), the fit to
the current measurement, is always penalised.

The max terms are not differentiable; the smoothed evaluator replaces each by
tau * logsumexp(values / tau), which over-estimates the max by at most
tau * ln(count).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp, softmax

from core.comparison_functions import (
    CertificateVerdict,
    ConditionId,
    KFunc,
    LFamily,
    LFunc,
    check_exp_condition,
    check_poly_condition,
    check_sensitivity_condition,
    factorize_kl_bound,
    sensitivity_margin,
)
from core.errors import DomainError, UnsupportedFamilyError
from core.system_model import IossCertificate

logger = logging.getLogger(__name__)


class DiscountFamily(str, Enum):
    POLY = "poly"
    EXP = "exp"


class CostSpec(BaseModel):
    """One RGAS-candidate cost family and its parameters"""

    model_config = ConfigDict(frozen=True)

    family: DiscountFamily = DiscountFamily.EXP
    a2: float = Field(2.0, gt=0)
    b2: float = Field(0.81, gt=0)
    c2: float = Field(0.25, gt=0)
    lambda_w: float = Field(1.0, ge=0, le=1)
    lambda_v: float = Field(1.0, ge=0, le=1)
    weight_w: float = Field(100.0, gt=0)
    weight_v: float = Field(25.0, gt=0)
    stage_exponent: float = Field(2.0, gt=0)
    tau: float = Field(1e-3, gt=0)

    @classmethod
    def paper_exp(
        cls,
        b2: float = 0.81,
        lambda_w: float = 1.0,
        lambda_v: float = 1.0,
        sigma_w: float = 0.1,
        sigma_v: float = 0.2,
        sigma_x0: float = 2.0,
        **overrides,
    ) -> "CostSpec":
        """Exponential-discount cost of the scalar example"""
        return cls(
            family=DiscountFamily.EXP,
            a2=2.0,
            b2=b2,
            c2=1.0 / sigma_x0**2,
            lambda_w=lambda_w,
            lambda_v=lambda_v,
            weight_w=1.0 / sigma_w**2,
            weight_v=1.0 / sigma_v**2,
            **overrides,
        )

    @classmethod
    def paper_poly(
        cls,
        b2: float = 0.21,
        lambda_w: float = 1.0,
        lambda_v: float = 1.0,
        sigma_w: float = 0.1,
        sigma_v: float = 0.2,
        sigma_x0: float = 2.0,
        **overrides,
    ) -> "CostSpec":
        """Polynomial-discount cost of the scalar example"""
        return cls.paper_exp(b2, lambda_w, lambda_v, sigma_w, sigma_v, sigma_x0, **overrides).model_copy(
            update={"family": DiscountFamily.POLY}
        )

    @property
    def initial_term(self) -> KFunc:
        return KFunc(self.c2, self.a2)

    @property
    def stage_w(self) -> KFunc:
        return KFunc(self.weight_w, self.stage_exponent)

    @property
    def stage_v(self) -> KFunc:
        return KFunc(self.weight_v, self.stage_exponent)

    @property
    def smoothing_active(self) -> bool:
        return self.lambda_w < 1.0 or self.lambda_v < 1.0

    def discount(self, t: int) -> float:
        if self.family is DiscountFamily.POLY:
            return float((t + 1.0) ** (-self.b2))
        return float(self.b2**t)

    def with_tau(self, tau: float) -> "CostSpec":
        return self.model_copy(update={"tau": tau})


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    initial: float
    averaged_sum: float
    max_w: float
    max_v: float

    def __post_init__(self):
        parts = (self.initial, self.averaged_sum, self.max_w, self.max_v)
        if min(parts) < 0:
            raise DomainError(f"Cost parts must be nonnegative, got {parts}")


@dataclass(frozen=True)
class SandwichBounds:
    """
    Comparison functions bracketing V_t

    lower: rho(|dx|) d(t) + gamma_w_lower(|w|) + gamma_v_lower(|v|)
    upper: rho(|dx|) d(t) + gamma_w_upper(|w|) + gamma_v_upper(|v|)
    with |w|, |v| the sup norms over the horizon. A lower gamma is None when
    its mixing weight is 1; the averaged sum alone only gives a lower bound
    that decays like 1/(t+1).
    """

    spec: CostSpec
    rho: KFunc
    gamma_w_lower: Optional[KFunc]
    gamma_w_upper: KFunc
    gamma_v_lower: Optional[KFunc]
    gamma_v_upper: KFunc

    @property
    def strict(self) -> bool:
        return self.gamma_w_lower is not None and self.gamma_v_lower is not None

    def lower(self, dx_norm: float, w_norm: float, v_norm: float, t: int) -> float:
        value = self.rho(dx_norm) * self.spec.discount(t)
        if self.gamma_w_lower is not None and t > 0:
            value += self.gamma_w_lower(w_norm)
        if self.gamma_v_lower is not None:
            value += self.gamma_v_lower(v_norm)
        return value

    def upper(self, dx_norm: float, w_norm: float, v_norm: float, t: int) -> float:
        return (
            self.rho(dx_norm) * self.spec.discount(t)
            + self.gamma_w_upper(w_norm)
            + self.gamma_v_upper(v_norm)
        )


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _check_horizon(t: int) -> int:
    if int(t) != t or t < 0:
        raise DomainError(f"Horizon must be a nonnegative integer, got {t!r}")
    return int(t)


def _as_rows(x, length: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim <= 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] != length:
        raise DomainError(f"{what} must have length {length}, got shape {np.shape(x)}")
    return arr


def _prepare(spec: CostSpec, chi0, xbar0, omega, nu, t):
    t = _check_horizon(t)
    omega = _as_rows(omega, t, "omega")
    nu = _as_rows(nu, t + 1, "nu")
    dx = np.atleast_1d(np.asarray(chi0, dtype=float) - np.asarray(xbar0, dtype=float))
    return t, dx, omega, nu


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate_cost_batch(
    spec: CostSpec,
    dx_norm: np.ndarray,
    w_norms: np.ndarray,
    v_norms: np.ndarray,
    t: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact cost parts for a batch of candidates

    dx_norm has shape (N,), w_norms (N, t) and v_norms (N, t + 1), holding the
    magnitudes |omega(i)| and |nu(i)|. Returns (initial, averaged_sum, max_w, max_v).
    """
    t = _check_horizon(t)
    dx_norm = np.asarray(dx_norm, dtype=float)
    w_stage = np.asarray(spec.stage_w(np.asarray(w_norms, dtype=float)))
    v_stage = np.asarray(spec.stage_v(np.asarray(v_norms, dtype=float)))

    initial = np.asarray(spec.initial_term(dx_norm)) * spec.discount(t)
    averaged = (
        spec.lambda_w * w_stage.sum(axis=-1) + spec.lambda_v * v_stage.sum(axis=-1)
    ) / (t + 1.0)
    max_w = (1.0 - spec.lambda_w) * (w_stage.max(axis=-1) if t > 0 else np.zeros_like(dx_norm))
    max_v = (1.0 - spec.lambda_v) * v_stage.max(axis=-1)
    return initial, averaged, max_w, max_v


def evaluate_cost(spec: CostSpec, chi0, xbar0, omega, nu, t: int) -> CostBreakdown:
    """Exact (non-smoothed) V_t at one decision"""
    t, dx, omega, nu = _prepare(spec, chi0, xbar0, omega, nu, t)
    initial, averaged, max_w, max_v = evaluate_cost_batch(
        spec,
        np.array([np.linalg.norm(dx)]),
        np.linalg.norm(omega, axis=1)[None, :],
        np.linalg.norm(nu, axis=1)[None, :],
        t,
    )
    parts = [float(part[0]) for part in (initial, averaged, max_w, max_v)]
    return CostBreakdown(total=sum(parts), initial=parts[0], averaged_sum=parts[1], max_w=parts[2], max_v=parts[3])


def smooth_max(values: np.ndarray, tau: float) -> float:
    """tau * log(sum(exp(values / tau))); zero for an empty set"""
    if values.size == 0:
        return 0.0
    if values.size == 1:
        return float(values[0])
    return float(tau * logsumexp(values / tau))


def evaluate_smoothed_cost(spec: CostSpec, chi0, xbar0, omega, nu, t: int) -> float:
    """V_t with both max terms replaced by their log-sum-exp surrogate"""
    value, _, _, _ = cost_and_gradient(spec, chi0, xbar0, omega, nu, t, smooth=True)
    return value


def _power_gradient(f: KFunc, z: np.ndarray) -> np.ndarray:
    """Row-wise gradient of c * |z|**a; zero where z = 0"""
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    scale = np.zeros_like(norms)
    nonzero = norms > 0
    scale[nonzero] = f.c * f.a * norms[nonzero] ** (f.a - 2.0)
    return scale * z


def _max_weights(stage: np.ndarray, tau: float, smooth: bool) -> np.ndarray:
    if stage.size == 0:
        return stage
    if smooth:
        return softmax(stage / tau)
    weights = np.zeros_like(stage)
    weights[int(np.argmax(stage))] = 1.0
    return weights


def cost_and_gradient(
    spec: CostSpec, chi0, xbar0, omega, nu, t: int, smooth: bool = True
) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """
    V_t and its derivatives with respect to chi(0), omega and nu

    With smooth=False the max terms are exact and their derivative is the
    subgradient that selects the arg-max.
    """
    t, dx, omega, nu = _prepare(spec, chi0, xbar0, omega, nu, t)
    discount = spec.discount(t)
    w_stage = np.asarray(spec.stage_w(np.linalg.norm(omega, axis=1)))
    v_stage = np.asarray(spec.stage_v(np.linalg.norm(nu, axis=1)))

    initial = float(spec.initial_term(float(np.linalg.norm(dx)))) * discount
    averaged = (spec.lambda_w * w_stage.sum() + spec.lambda_v * v_stage.sum()) / (t + 1.0)
    if smooth:
        max_w, max_v = smooth_max(w_stage, spec.tau), smooth_max(v_stage, spec.tau)
    else:
        max_w = float(w_stage.max()) if t > 0 else 0.0
        max_v = float(v_stage.max())
    value = initial + averaged + (1.0 - spec.lambda_w) * max_w + (1.0 - spec.lambda_v) * max_v

    d_chi0 = _power_gradient(spec.initial_term, dx[None, :])[0] * discount
    w_weights = spec.lambda_w / (t + 1.0) + (1.0 - spec.lambda_w) * _max_weights(w_stage, spec.tau, smooth)
    v_weights = spec.lambda_v / (t + 1.0) + (1.0 - spec.lambda_v) * _max_weights(v_stage, spec.tau, smooth)
    d_omega = w_weights[:, None] * _power_gradient(spec.stage_w, omega)
    d_nu = v_weights[:, None] * _power_gradient(spec.stage_v, nu)
    return float(value), d_chi0, d_omega, d_nu


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------

def validate_rgas(spec: CostSpec, cert: IossCertificate) -> CertificateVerdict:
    """
    Check the cost against the system's K·L bound

    Matching families use their closed-form condition; cross-family pairings go
    through the general sensitivity condition with pi(s) = s.
    """
    beta = factorize_kl_bound(cert.beta)
    k, l = beta.k, beta.l
    if spec.family is DiscountFamily.POLY and l.family is LFamily.POLY_DECAY:
        return check_poly_condition(k.a, l.b, spec.a2, spec.b2)
    if spec.family is DiscountFamily.EXP and l.family is LFamily.EXP_DECAY:
        return check_exp_condition(k.a, l.b, spec.a2, spec.b2)

    mu2 = spec.initial_term
    if spec.family is DiscountFamily.POLY:
        return check_sensitivity_condition(k, mu2, l, LFunc.poly_decay(spec.b2), KFunc.identity())
    if spec.family is DiscountFamily.EXP and spec.b2 < 1.0:
        return check_sensitivity_condition(k, mu2, l, LFunc.exp_decay(spec.b2), KFunc.identity())
    if spec.family is DiscountFamily.EXP:
        margin = sensitivity_margin(l, LFamily.EXP_DECAY, spec.b2, k.a / spec.a2)
        return CertificateVerdict(
            passed=margin >= 0,
            margin=margin,
            condition=ConditionId.GENERAL_SENSITIVITY,
            detail="initial-state weight does not decay",
        )
    raise UnsupportedFamilyError(f"Unsupported pairing: {spec.family} cost with {l.family} bound")


def assumption_bounds(spec: CostSpec) -> SandwichBounds:
    """Lower/upper comparison functions for V_t in terms of the sup norms of omega and nu"""
    return SandwichBounds(
        spec=spec,
        rho=spec.initial_term,
        gamma_w_lower=KFunc((1.0 - spec.lambda_w) * spec.weight_w, spec.stage_exponent)
        if spec.lambda_w < 1.0
        else None,
        gamma_w_upper=spec.stage_w,
        gamma_v_lower=KFunc((1.0 - spec.lambda_v) * spec.weight_v, spec.stage_exponent)
        if spec.lambda_v < 1.0
        else None,
        gamma_v_upper=spec.stage_v,
    )
