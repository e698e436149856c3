"""
FIE Benchmark - System Model
Discrete-time system x+ = f(x, w), y = h(x) + v, trajectory simulation and
the i-IOSS certificate the estimator's cost is checked against.

Maps must accept arrays whose last axis is the state / disturbance dimension
and broadcast over any leading axes; the brute-force oracle relies on that to
evaluate a whole grid of candidates at once. All built-in maps are
module-level functions (or partials of them) so models pickle into worker
processes.
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional, Tuple

import numpy as np

from core.comparison_functions import KFunc, KLFunc, LFamily, LFunc
from core.errors import DomainError, UnsupportedModelError

logger = logging.getLogger(__name__)

Transition = Callable[[np.ndarray, np.ndarray], np.ndarray]
Output = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemModel:
    """
    Deterministic discrete-time system

    Jacobian hooks are optional; simulation works without them, gradient-based
    estimation and the EKF need them.
    """

    name: str
    n: int
    g: int
    p: int
    f: Transition
    h: Output
    df_dx: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    df_dw: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    dh_dx: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        for dim_name in ("n", "g", "p"):
            value = getattr(self, dim_name)
            if int(value) != value or value < 1:
                raise DomainError(f"Model dimension {dim_name} must be a positive integer, got {value!r}")

    @property
    def differentiable(self) -> bool:
        return None not in (self.df_dx, self.df_dw, self.dh_dx)

    def transition(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(x, w), dtype=float).reshape(self.n)

    def output(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.h(x), dtype=float).reshape(self.p)

    def transition_jacobians(self, x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(df/dx, df/dw) with shapes (n, n) and (n, g)"""
        if self.df_dx is None or self.df_dw is None:
            raise UnsupportedModelError(f"Model '{self.name}' has no transition Jacobian hooks")
        a = np.asarray(self.df_dx(x, w), dtype=float).reshape(self.n, self.n)
        b = np.asarray(self.df_dw(x, w), dtype=float).reshape(self.n, self.g)
        return a, b

    def output_jacobian(self, x: np.ndarray) -> np.ndarray:
        """dh/dx with shape (p, n)"""
        if self.dh_dx is None:
            raise UnsupportedModelError(f"Model '{self.name}' has no output Jacobian hook")
        return np.asarray(self.dh_dx(x), dtype=float).reshape(self.p, self.n)


@dataclass(frozen=True)
class IossCertificate:
    """
    i-IOSS bound |x1(t) - x2(t)| <= beta(|x01 - x02|, t) + alpha1(|dw|) + alpha2(|dy|)

    Taken as input data; nothing here proves it for the model it accompanies.
    """

    beta: KLFunc
    alpha1: KFunc
    alpha2: KFunc

    @property
    def exp_ioss(self) -> bool:
        return self.beta.l.family is LFamily.EXP_DECAY


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States x(0..T) and the disturbances w(0..T-1) that produced them"""

    states: np.ndarray
    disturbances: np.ndarray

    def __post_init__(self):
        if self.states.ndim != 2 or self.disturbances.ndim != 2:
            raise DomainError("Trajectory arrays must be 2-D (time, dimension)")
        if self.states.shape[0] != self.disturbances.shape[0] + 1:
            raise DomainError(
                f"Trajectory has {self.states.shape[0]} states for "
                f"{self.disturbances.shape[0]} disturbances"
            )

    @property
    def horizon(self) -> int:
        return self.disturbances.shape[0]


# ---------------------------------------------------------------------------
# Argument normalisation
# ---------------------------------------------------------------------------

def as_state(model: SystemModel, x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (model.n,):
        raise DomainError(f"State must have dimension {model.n}, got shape {arr.shape}")
    return arr


def as_sequence(x, dim: int, length: Optional[int], what: str) -> np.ndarray:
    """Coerce a sequence to shape (length, dim); 1-D input is allowed when dim == 1"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1 and dim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.size == 0:
        arr = arr.reshape(0, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"{what} must have shape (length, {dim}), got {np.shape(x)}")
    if length is not None and arr.shape[0] != length:
        raise DomainError(f"{what} must have length {length}, got {arr.shape[0]}")
    return arr


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def simulate(model: SystemModel, x0, w) -> Trajectory:
    """Unique trajectory with x(0) = x0 recursing through f"""
    x0 = as_state(model, x0)
    w = as_sequence(w, model.g, None, "Disturbance sequence")
    states = np.empty((w.shape[0] + 1, model.n))
    states[0] = x0
    for k in range(w.shape[0]):
        states[k + 1] = model.transition(states[k], w[k])
    return Trajectory(states=states, disturbances=w)


def observe(model: SystemModel, traj: Trajectory, v) -> np.ndarray:
    """y(k) = h(x(k)) + v(k) for k = 0..T"""
    v = as_sequence(v, model.p, traj.horizon + 1, "Noise sequence")
    y = np.empty_like(v)
    for k in range(v.shape[0]):
        y[k] = model.output(traj.states[k]) + v[k]
    return y


def trajectory_is_consistent(model: SystemModel, traj: Trajectory) -> bool:
    return all(
        np.array_equal(model.transition(traj.states[k], traj.disturbances[k]), traj.states[k + 1])
        for k in range(traj.horizon)
    )


def make_model(
    f: Transition,
    h: Output,
    n: int,
    g: int,
    p: int,
    df_dx=None,
    df_dw=None,
    dh_dx=None,
    name: str = "custom",
) -> SystemModel:
    """Build a model from user-provided maps and optional Jacobian hooks"""
    return SystemModel(name=name, n=n, g=g, p=p, f=f, h=h, df_dx=df_dx, df_dw=df_dw, dh_dx=dh_dx)


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

EXAMPLE_DECAY = 0.9


def _linear_f(x, w, a: float = EXAMPLE_DECAY):
    return a * np.asarray(x) + np.asarray(w)


def _batch_shape(x) -> Tuple[int, ...]:
    return np.shape(x)[:-1]


def _linear_df_dx(x, w, a: float = EXAMPLE_DECAY):
    return np.full(_batch_shape(x) + (1, 1), a)


def _unit_df_dw(x, w):
    return np.ones(_batch_shape(x) + (1, 1))


def _cubic_h(x):
    return np.asarray(x) ** 3


def _cubic_dh_dx(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return 3.0 * x[..., np.newaxis, :] ** 2


def _linear_h(x, c: float = 1.0):
    return c * np.asarray(x)


def _linear_dh_dx(x, c: float = 1.0):
    return np.full(_batch_shape(x) + (1, 1), c)


def example_system(polynomial_certificate: bool = False) -> Tuple[SystemModel, IossCertificate]:
    """
    Scalar example x+ = 0.9 x + w, y = x**3 + v

    The default certificate is exponential, beta(s, t) = s * 0.9**t. The looser
    polynomial bound beta(s, t) = s * (t + 1)**(ln 0.9) is returned on request.
    alpha1(s) = 10 s bounds the disturbance gain (sum of 0.9**k), and
    alpha2(s) = (4 s)**(1/3) follows from |a - b|**3 <= 4 |a**3 - b**3|.
    """
    model = SystemModel(
        name="cubic-output",
        n=1,
        g=1,
        p=1,
        f=_linear_f,
        h=_cubic_h,
        df_dx=_linear_df_dx,
        df_dw=_unit_df_dw,
        dh_dx=_cubic_dh_dx,
    )
    if polynomial_certificate:
        decay = LFunc.poly_decay(-math.log(EXAMPLE_DECAY))
    else:
        decay = LFunc.exp_decay(EXAMPLE_DECAY)
    certificate = IossCertificate(
        beta=KLFunc(k=KFunc(1.0, 1.0), l=decay),
        alpha1=KFunc(1.0 / (1.0 - EXAMPLE_DECAY), 1.0),
        alpha2=KFunc(4.0 ** (1.0 / 3.0), 1.0 / 3.0),
    )
    return model, certificate


def linear_output_system(a: float = EXAMPLE_DECAY, c: float = 1.0) -> SystemModel:
    """Scalar x+ = a x + w, y = c x + v; the EKF reduces to the Kalman filter here"""
    return SystemModel(
        name="linear-output",
        n=1,
        g=1,
        p=1,
        f=partial(_linear_f, a=a),
        h=partial(_linear_h, c=c),
        df_dx=partial(_linear_df_dx, a=a),
        df_dw=_unit_df_dw,
        dh_dx=partial(_linear_dh_dx, c=c),
    )
