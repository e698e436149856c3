"""
FIE Benchmark - Comparison Functions
Parametric K, L and K·L functions and the RGAS certificate checkers

Only separable families are representable:
- K functions:  Power      s -> c * s**a
- L functions:  PolyDecay  t -> (t + 1)**(-b)
                ExpDecay   t -> b**t            (0 < b < 1)
- K·L functions: beta(s, t) = k(s) * l(t)

Every function the cost families and the example system use lives in these
families, which keeps the certificate conditions decidable in closed form.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import DomainError, UnsupportedFamilyError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Two sides of a certificate inequality closer than this (relative) are equal
BOUNDARY_RTOL = 1e-12
# Decay rates closer to zero than this are treated as exactly zero
RATE_ATOL = 1e-12
# Slack allowed when the sensitivity grid is compared against its envelope
ENVELOPE_RTOL = 1e-9


class KFamily(str, Enum):
    POWER = "power"


class LFamily(str, Enum):
    POLY_DECAY = "poly_decay"
    EXP_DECAY = "exp_decay"


class ConditionId(str, Enum):
    POLY_RATIO = "PolyRatio"
    EXP_ROOT = "ExpRoot"
    GENERAL_SENSITIVITY = "GeneralSensitivity"


def _nonneg_array(x: ArrayLike, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError(f"{what} must be nonnegative, got {x!r}")
    return arr


def _unwrap(arr: np.ndarray) -> Union[float, np.ndarray]:
    return float(arr) if arr.ndim == 0 else arr


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be a positive finite number, got {value!r}")


# ---------------------------------------------------------------------------
# Function types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KFunc:
    """Power K∞-function s -> c * s**a"""

    c: float
    a: float
    family: KFamily = KFamily.POWER

    def __post_init__(self):
        if self.family is not KFamily.POWER:
            raise UnsupportedFamilyError(f"Unsupported K-function family: {self.family}")
        _require_positive(c=self.c, a=self.a)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "a", float(self.a))

    @classmethod
    def identity(cls) -> "KFunc":
        return cls(1.0, 1.0)

    def __call__(self, s: ArrayLike) -> Union[float, np.ndarray]:
        return eval_k(self, s)


@dataclass(frozen=True)
class LFunc:
    """Decaying L-function of time"""

    family: LFamily
    b: float

    def __post_init__(self):
        family = LFamily(self.family)
        object.__setattr__(self, "family", family)
        _require_positive(b=self.b)
        object.__setattr__(self, "b", float(self.b))
        if family is LFamily.EXP_DECAY and not self.b < 1.0:
            raise DomainError(f"ExpDecay rate must lie in (0, 1), got {self.b}")

    @classmethod
    def poly_decay(cls, b: float) -> "LFunc":
        return cls(LFamily.POLY_DECAY, b)

    @classmethod
    def exp_decay(cls, b: float) -> "LFunc":
        return cls(LFamily.EXP_DECAY, b)

    @property
    def log_rates(self) -> Tuple[float, float]:
        """(E, P) with log l(t) = E*t + P*ln(t+1)"""
        return _log_rates(self.family, self.b)

    def __call__(self, t: ArrayLike) -> Union[float, np.ndarray]:
        return eval_l(self, t)


@dataclass(frozen=True)
class KLFunc:
    """Separable K·L-function beta(s, t) = k(s) * l(t)"""

    k: KFunc
    l: LFunc

    def __post_init__(self):
        if not isinstance(self.k, KFunc) or not isinstance(self.l, LFunc):
            raise UnsupportedFamilyError("KLFunc needs a KFunc and an LFunc")

    def __call__(self, s: ArrayLike, t: ArrayLike) -> Union[float, np.ndarray]:
        return eval_kl(self, s, t)


@dataclass(frozen=True)
class CertificateVerdict:
    """
    Outcome of a certificate check

    margin is the signed slack of the decisive inequality; passed <=> margin >= 0.
    """

    passed: bool
    margin: float
    condition: ConditionId
    detail: str = ""

    def __post_init__(self):
        if bool(self.passed) != (self.margin >= 0):
            raise DomainError(
                f"Inconsistent verdict: passed={self.passed} with margin={self.margin}"
            )


@dataclass(frozen=True, eq=False)
class SensitivityGrid:
    """(s, t) sample points for the numerical cross-check of the sensitivity condition"""

    s: np.ndarray = field(default_factory=lambda: np.logspace(-3, 3, 50))
    t: np.ndarray = field(default_factory=lambda: np.arange(0, 201, dtype=float))

    def __post_init__(self):
        s = _nonneg_array(self.s, "grid s").ravel()
        t = _nonneg_array(self.t, "grid t").ravel()
        if s.size == 0 or t.size == 0:
            raise DomainError("Sensitivity grid must be nonempty")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)


# ---------------------------------------------------------------------------
# Evaluation and algebra
# ---------------------------------------------------------------------------

def eval_k(f: KFunc, s: ArrayLike) -> Union[float, np.ndarray]:
    """c * s**a for s >= 0"""
    arr = _nonneg_array(s, "K-function argument")
    return _unwrap(f.c * np.power(arr, f.a))


def eval_l(l: LFunc, t: ArrayLike) -> Union[float, np.ndarray]:
    arr = _nonneg_array(t, "L-function time argument")
    if l.family is LFamily.POLY_DECAY:
        return _unwrap(np.power(arr + 1.0, -l.b))
    return _unwrap(np.power(l.b, arr))


def eval_kl(beta: KLFunc, s: ArrayLike, t: ArrayLike) -> Union[float, np.ndarray]:
    return _unwrap(np.asarray(eval_k(beta.k, s)) * np.asarray(eval_l(beta.l, t)))


def invert_k(f: KFunc) -> KFunc:
    """Inverse of c * s**a, i.e. (s / c)**(1 / a)"""
    if not isinstance(f, KFunc) or f.family is not KFamily.POWER:
        raise UnsupportedFamilyError(f"Cannot invert {f!r}")
    return KFunc(c=f.c ** (-1.0 / f.a), a=1.0 / f.a)


def check_weak_triangle(f: KFunc, values: ArrayLike) -> bool:
    """
    Weak triangle inequality for K-functions

    f(sum a_i) <= sum f(n * a_i) with n = len(values). Holds for every
    K-function; kept as a regression property.
    """
    vals = _nonneg_array(values, "values").ravel()
    if vals.size == 0:
        raise DomainError("check_weak_triangle needs at least one value")
    n = vals.size
    lhs = float(eval_k(f, float(vals.sum())))
    rhs = float(np.sum(eval_k(f, n * vals)))
    return lhs <= rhs * (1.0 + BOUNDARY_RTOL)


def factorize_kl_bound(beta: KLFunc) -> KLFunc:
    """
    Return a K·L-function dominating beta

    Separable bounds already are K·L, so the input is returned unchanged.
    """
    if not isinstance(beta, KLFunc):
        raise UnsupportedFamilyError(
            f"Only separable K·L bounds are representable, got {type(beta).__name__}"
        )
    return beta


# ---------------------------------------------------------------------------
# Certificate checkers
# ---------------------------------------------------------------------------

def _boundary_margin(lhs: float, rhs: float) -> float:
    if math.isclose(lhs, rhs, rel_tol=BOUNDARY_RTOL, abs_tol=0.0):
        return 0.0
    return lhs - rhs


def check_poly_condition(a1: float, b1: float, a2: float, b2: float) -> CertificateVerdict:
    """Polynomial-decay certificate: a2 / b2 >= a1 / b1"""
    _require_positive(a1=a1, b1=b1, a2=a2, b2=b2)
    lhs, rhs = a2 / b2, a1 / b1
    margin = _boundary_margin(lhs, rhs)
    return CertificateVerdict(
        passed=margin >= 0,
        margin=margin,
        condition=ConditionId.POLY_RATIO,
        detail=f"a2/b2 = {lhs:.6g} vs a1/b1 = {rhs:.6g}",
    )


def check_exp_condition(a1: float, b1: float, a2: float, b2: float) -> CertificateVerdict:
    """
    Exponential-decay certificate: b2**(1/a2) >= b1**(1/a1)

    b2 >= 1 is allowed; the initial-state weight may grow with t.
    """
    _require_positive(a1=a1, a2=a2, b2=b2)
    if not (math.isfinite(b1) and 0.0 < b1 < 1.0):
        raise DomainError(f"b1 must lie in (0, 1), got {b1!r}")
    lhs, rhs = b2 ** (1.0 / a2), b1 ** (1.0 / a1)
    margin = _boundary_margin(lhs, rhs)
    return CertificateVerdict(
        passed=margin >= 0,
        margin=margin,
        condition=ConditionId.EXP_ROOT,
        detail=f"b2^(1/a2) = {lhs:.6g} vs b1^(1/a1) = {rhs:.6g}",
    )


def _log_rates(family: LFamily, rate: float) -> Tuple[float, float]:
    if LFamily(family) is LFamily.POLY_DECAY:
        return 0.0, -rate
    return math.log(rate), 0.0


def sensitivity_margin(
    phi1: LFunc, phi2_family: LFamily, phi2_rate: float, exponent_ratio: float
) -> float:
    """
    Signed slack of the boundedness of h(t) = phi2(t)**(-r) * phi1(t), r = a1/a2

    phi2 is described by family and rate instead of an LFunc so that a
    non-decaying geometric discount (rate >= 1) can be checked too.
    log h(t) = E*t + P*ln(t+1); h is bounded iff E < 0, or E == 0 and P <= 0.
    The margin is -E when E is nonzero, otherwise -P.
    """
    _require_positive(phi2_rate=phi2_rate, exponent_ratio=exponent_ratio)
    e1, p1 = phi1.log_rates
    e2, p2 = _log_rates(phi2_family, phi2_rate)
    exp_rate = e1 - exponent_ratio * e2
    poly_rate = p1 - exponent_ratio * p2
    if abs(exp_rate) > RATE_ATOL:
        return -exp_rate
    return 0.0 if abs(poly_rate) <= RATE_ATOL else -poly_rate


def _sup_profile(phi1: LFunc, phi2: LFunc, ratio: float) -> float:
    """sup over t >= 0 of phi2(t)**(-ratio) * phi1(t) when that is finite"""
    e1, p1 = phi1.log_rates
    e2, p2 = phi2.log_rates
    exp_rate = e1 - ratio * e2
    poly_rate = p1 - ratio * p2
    if poly_rate > 0 and exp_rate < -RATE_ATOL:
        t_star = -poly_rate / exp_rate - 1.0
        if t_star > 0:
            return math.exp(exp_rate * t_star + poly_rate * math.log1p(t_star))
    return 1.0


def _sensitivity_envelope(
    mu1: KFunc, mu2: KFunc, phi1: LFunc, phi2: LFunc, pi: KFunc, s: np.ndarray
) -> np.ndarray:
    """pi'(s) = 4**a1 * c1 * c2**(-a1/a2) * pi(s)**(a1/a2) * sup_t profile"""
    ratio = mu1.a / mu2.a
    scale = 4.0 ** mu1.a * mu1.c * mu2.c ** (-ratio) * _sup_profile(phi1, phi2, ratio)
    return scale * np.power(np.asarray(eval_k(pi, s)), ratio)


def check_sensitivity_condition(
    mu1: KFunc,
    mu2: KFunc,
    phi1: LFunc,
    phi2: LFunc,
    pi: KFunc,
    grid: Optional[SensitivityGrid] = None,
) -> CertificateVerdict:
    """
    General sensitivity condition of the cost against the system's K·L bound

    g(s, t) = mu1(4 * mu2^-1(pi(s) / phi2(t))) * phi1(t) must be bounded by a
    K-function pi'(s) uniformly in t. The verdict comes from the closed-form
    decay rates; the grid evaluation is a numerical cross-check of the
    closed-form envelope.
    """
    for fn in (mu1, mu2, pi):
        if not isinstance(fn, KFunc) or fn.family is not KFamily.POWER:
            raise UnsupportedFamilyError(f"Sensitivity check needs Power K-functions, got {fn!r}")
    for fn in (phi1, phi2):
        if not isinstance(fn, LFunc):
            raise UnsupportedFamilyError(f"Sensitivity check needs L-functions, got {fn!r}")

    ratio = mu1.a / mu2.a
    margin = sensitivity_margin(phi1, phi2.family, phi2.b, ratio)
    if margin < 0:
        return CertificateVerdict(
            passed=False,
            margin=margin,
            condition=ConditionId.GENERAL_SENSITIVITY,
            detail="g(s, t) grows without bound in t",
        )

    grid = grid or SensitivityGrid()
    s = grid.s[:, None]
    t = grid.t[None, :]
    mu2_inv = invert_k(mu2)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        inner = np.asarray(eval_k(pi, s)) / np.asarray(eval_l(phi2, t))
        g = np.asarray(eval_k(mu1, 4.0 * np.asarray(eval_k(mu2_inv, inner)))) * np.asarray(
            eval_l(phi1, t)
        )
        envelope = _sensitivity_envelope(mu1, mu2, phi1, phi2, pi, s)
        ratio_to_envelope = g / envelope

    finite = np.isfinite(ratio_to_envelope)
    if not np.all(finite):
        logger.debug("Skipping %d grid points that under/overflow", int((~finite).sum()))
    excess = float(np.max(ratio_to_envelope[finite], initial=0.0)) - 1.0
    if excess > ENVELOPE_RTOL:
        logger.warning("Sensitivity grid exceeds its closed-form envelope by %.3g", excess)
        return CertificateVerdict(
            passed=False,
            margin=-excess,
            condition=ConditionId.GENERAL_SENSITIVITY,
            detail="grid values exceed the closed-form envelope",
        )
    return CertificateVerdict(
        passed=True,
        margin=margin,
        condition=ConditionId.GENERAL_SENSITIVITY,
        detail=f"bounded in t; envelope max ratio {excess + 1.0:.6g}",
    )
