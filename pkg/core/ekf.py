"""
FIE Benchmark - Extended Kalman Filter
Baseline estimator: linearise f and h about the current estimate, propagate
the Gaussian mean and covariance.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from core.errors import DomainError, NumericalError, UnsupportedModelError
from core.scenario import Scenario
from core.system_model import SystemModel, as_sequence, as_state, example_system

logger = logging.getLogger(__name__)

SYMMETRY_ATOL = 1e-12
PSD_ATOL = 1e-12
# noise-free runs would give R = 0, which makes S singular whenever C P C^T vanishes
MEASUREMENT_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class EkfState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DomainError(f"Covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_ATOL):
            raise NumericalError("EKF covariance lost symmetry")
        if np.min(np.linalg.eigvalsh(cov)) < -PSD_ATOL:
            raise NumericalError("EKF covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def _as_matrix(value, dim: int, what: str) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.shape != (dim, dim):
        raise DomainError(f"{what} must be {dim}x{dim}, got {mat.shape}")
    if np.min(np.linalg.eigvalsh(0.5 * (mat + mat.T))) < -PSD_ATOL:
        raise DomainError(f"{what} must be positive semidefinite")
    return mat


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def ekf_init(xbar0, p0) -> EkfState:
    return EkfState(mean=np.atleast_1d(np.asarray(xbar0, dtype=float)), cov=p0)


def ekf_predict(model: SystemModel, state: EkfState, q) -> EkfState:
    """Time update with zero-mean disturbance: x- = f(x, 0), P- = A P A^T + B Q B^T"""
    if not model.differentiable:
        raise UnsupportedModelError(f"Model '{model.name}' has no Jacobian hooks")
    q = _as_matrix(q, model.g, "Q")
    w0 = np.zeros(model.g)
    a, b = model.transition_jacobians(state.mean, w0)
    mean = model.transition(state.mean, w0)
    cov = _symmetrize(a @ state.cov @ a.T + b @ q @ b.T)
    return EkfState(mean=mean, cov=cov)


def ekf_update(model: SystemModel, state: EkfState, y, r) -> EkfState:
    """Measurement update with gain K = P C^T S^-1 and P+ = (I - K C) P"""
    if not model.differentiable:
        raise UnsupportedModelError(f"Model '{model.name}' has no Jacobian hooks")
    r = _as_matrix(r, model.p, "R")
    if np.min(np.linalg.eigvalsh(r)) <= 0:
        raise DomainError("R must be positive definite")
    y = np.atleast_1d(np.asarray(y, dtype=float)).reshape(model.p)

    c = model.output_jacobian(state.mean)
    innovation = y - model.output(state.mean)
    s = _symmetrize(c @ state.cov @ c.T + r)
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Innovation covariance is not positive definite") from exc
    # K = P C^T S^-1 via the Cholesky factor
    gain = np.linalg.solve(chol.T, np.linalg.solve(chol, c @ state.cov)).T
    mean = state.mean + gain @ innovation
    cov = _symmetrize((np.eye(model.n) - gain @ c) @ state.cov)
    if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
        raise NumericalError("EKF update produced non-finite values")
    return EkfState(mean=mean, cov=cov)


def ekf_step(model: SystemModel, state: EkfState, y, q, r) -> EkfState:
    """Predict to the next time, then correct with its measurement"""
    return ekf_update(model, ekf_predict(model, state, q), y, r)


def run_ekf(
    scenario: Scenario,
    model: Optional[SystemModel] = None,
    q: Optional[np.ndarray] = None,
    r: Optional[np.ndarray] = None,
    p0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[EkfState]]:
    """
    Filter a scenario: update with y(0), then predict/update for t = 1..T

    Default tuning matches the generating noise: Q = sigma_w**2,
    R = sigma_v**2 (floored), P0 = x0_std**2. Returns the errors
    x(t) - x_hat(t|t) with shape (T+1, n) and the filter states.
    """
    if model is None:
        model, _ = example_system()
    config = scenario.config
    q = np.eye(model.g) * config.sigma_w**2 if q is None else q
    r = np.eye(model.p) * max(config.sigma_v**2, MEASUREMENT_VARIANCE_FLOOR) if r is None else r
    p0 = np.eye(model.n) * config.x0_std**2 if p0 is None else p0

    y = as_sequence(scenario.y, model.p, scenario.horizon + 1, "Measurements")
    state = ekf_update(model, ekf_init(as_state(model, scenario.prior), p0), y[0], r)
    states = [state]
    for t in range(1, scenario.horizon + 1):
        state = ekf_step(model, state, y[t], q, r)
        states.append(state)
    errors = scenario.states - np.array([s.mean for s in states])
    return errors, states
