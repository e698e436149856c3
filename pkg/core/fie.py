"""
FIE Benchmark - Full Information Estimator
Solves the FIE program at each time t:

    min over (chi(0), omega)  V_t(chi(0) - xbar0, omega)
    s.t. chi+ = f(chi, omega),  y = h(chi) + nu,  |omega| <= w_bound,  |nu| <= v_bound

Single shooting: the states are eliminated by recursing the dynamics from
(chi(0), omega), so the decision vector is just those two. The omega box is
handled exactly by L-BFGS-B's projection; the nu box is nonlinear in the
decision and is enforced by a quadratic penalty whose weight is ramped, then
checked as a hard constraint on the final point.
"""

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize

from core.cost import CostBreakdown, CostSpec, cost_and_gradient, evaluate_cost, evaluate_cost_batch
from core.errors import DomainError, OracleGridTooLargeError, SolverFailureError, UnsupportedModelError
from core.scenario import Scenario
from core.system_model import SystemModel, as_sequence, as_state, example_system

logger = logging.getLogger(__name__)

# L-BFGS-B's relative-reduction test is kept tight so the gradient tolerance decides
LBFGSB_FTOL = 1e-15
DEFAULT_SIGMA_X0 = 2.0


class SolverOptions(BaseModel):
    """Knobs of the multi-start penalty solver"""

    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(200, ge=1)
    grad_tol: float = Field(1e-8, gt=0)
    restarts: int = Field(5, ge=1)
    penalty_initial: float = Field(1e3, gt=0)
    penalty_growth: float = Field(10.0, gt=1)
    penalty_stages: int = Field(3, ge=1)
    refine_tau: float = Field(1e-4, gt=0)
    perturbation_std: float = Field(2.0, ge=0)
    feasibility_tol: float = Field(1e-6, ge=0)
    seed: int = Field(0, ge=0)
    warm_start: bool = True


@dataclass(frozen=True, eq=False)
class EstimationProblem:
    """Measurements y(0..t), the prior, the disturbance/noise boxes and the prior spread"""

    model: SystemModel
    y: np.ndarray
    prior: np.ndarray
    w_bound: float
    v_bound: float
    x0_std: Optional[float] = None

    def __post_init__(self):
        y = as_sequence(self.y, self.model.p, None, "Measurements")
        if y.shape[0] < 1:
            raise DomainError("An estimation problem needs at least one measurement")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "prior", as_state(self.model, self.prior))
        if self.w_bound < 0 or self.v_bound < 0:
            raise DomainError("Disturbance and noise bounds must be nonnegative")
        if self.x0_std is not None and self.x0_std < 0:
            raise DomainError("The prior spread must be nonnegative")

    @property
    def horizon(self) -> int:
        return self.y.shape[0] - 1

    @classmethod
    def from_scenario(
        cls, scenario: Scenario, model: SystemModel, t: Optional[int] = None
    ) -> "EstimationProblem":
        t = scenario.horizon if t is None else t
        return cls(
            model=model,
            y=scenario.y[: t + 1],
            prior=scenario.prior,
            w_bound=scenario.config.w_bound,
            v_bound=scenario.config.v_bound,
            x0_std=scenario.config.x0_std,
        )

    def truncated(self, t: int) -> "EstimationProblem":
        if not 0 <= t <= self.horizon:
            raise DomainError(f"Cannot truncate horizon {self.horizon} to {t}")
        return replace(self, y=self.y[: t + 1])


@dataclass(frozen=True, eq=False)
class DecisionVector:
    """chi(0) and omega(0..t-1)"""

    chi0: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        chi0 = np.atleast_1d(np.asarray(self.chi0, dtype=float))
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim <= 1:
            omega = omega.reshape(-1, 1)
        object.__setattr__(self, "chi0", chi0)
        object.__setattr__(self, "omega", omega)

    @property
    def horizon(self) -> int:
        return self.omega.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.chi0, self.omega.ravel()])

    @classmethod
    def unflatten(cls, z: np.ndarray, n: int, g: int) -> "DecisionVector":
        return cls(chi0=z[:n].copy(), omega=z[n:].reshape(-1, g).copy())

    def projected(self, w_bound: float) -> "DecisionVector":
        return DecisionVector(self.chi0.copy(), np.clip(self.omega, -w_bound, w_bound))

    def extended(self, t: int) -> "DecisionVector":
        """Warm start for horizon t: pad omega with zeros (or cut it)"""
        g = self.omega.shape[1]
        omega = np.zeros((t, g))
        keep = min(t, self.horizon)
        omega[:keep] = self.omega[:keep]
        return DecisionVector(self.chi0.copy(), omega)


@dataclass(frozen=True)
class SolverDiagnostics:
    iterations: int
    grad_norm: float
    restarts_used: int
    nu_violation: float
    feasible: bool
    message: str = ""


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """
    FIE solution at horizon t

    states[k] = x_hat(k|t); the trajectory and nu are recomputed from the
    decision, so x_hat(k+1|t) = f(x_hat(k|t), w_hat(k)) and
    nu_hat(k) = y(k) - h(x_hat(k|t)) hold exactly.
    """

    t: int
    chi0: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    states: np.ndarray
    cost: float
    breakdown: CostBreakdown
    diagnostics: SolverDiagnostics
    error: Optional[np.ndarray] = None

    @property
    def current_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def feasible(self) -> bool:
        return self.diagnostics.feasible

    @property
    def decision(self) -> DecisionVector:
        return DecisionVector(self.chi0.copy(), self.omega.copy())


@dataclass(frozen=True)
class OracleGrid:
    """
    Uniform grid of the brute-force oracle

    chi(0) spans prior +/- chi_halfwidth * sigma_x0. sigma_x0 defaults to the
    problem's x0_std, or to DEFAULT_SIGMA_X0 when that is unknown or zero.
    """

    sigma_x0: Optional[float] = None
    chi_halfwidth: float = 4.0
    chi_points: int = 401
    omega_points: int = 61
    max_points: int = 10**7

    def size(self, t: int) -> int:
        return self.chi_points * self.omega_points**t

    def chi_spread(self, problem: EstimationProblem) -> float:
        if self.sigma_x0 is not None:
            return self.sigma_x0
        return problem.x0_std or DEFAULT_SIGMA_X0


# ---------------------------------------------------------------------------
# Shooting recursion and gradient
# ---------------------------------------------------------------------------

def rollout(problem: EstimationProblem, decision: DecisionVector) -> Tuple[np.ndarray, np.ndarray]:
    """Single-shooting reconstruction: states chi(0..t) and nu(k) = y(k) - h(chi(k))"""
    model = problem.model
    t = problem.horizon
    chi0 = as_state(model, decision.chi0)
    omega = as_sequence(decision.omega, model.g, t, "omega")
    states = np.empty((t + 1, model.n))
    states[0] = chi0
    for k in range(t):
        states[k + 1] = model.transition(states[k], omega[k])
    nu = np.empty_like(problem.y)
    for k in range(t + 1):
        nu[k] = problem.y[k] - model.output(states[k])
    return states, nu


def nu_violation(nu: np.ndarray, v_bound: float) -> float:
    return float(max(0.0, np.max(np.abs(nu)) - v_bound))


def _nu_penalty(nu: np.ndarray, v_bound: float, weight: float) -> Tuple[float, np.ndarray]:
    excess = np.maximum(np.abs(nu) - v_bound, 0.0)
    return float(weight * np.sum(excess**2)), 2.0 * weight * excess * np.sign(nu)


def objective_and_gradient(
    problem: EstimationProblem,
    cost: CostSpec,
    decision: DecisionVector,
    penalty_weight: float = 0.0,
    smooth: Optional[bool] = None,
) -> Tuple[float, np.ndarray]:
    """
    Objective and its exact gradient with respect to (chi(0), omega)

    Reverse accumulation through the recursion: with dJ/dnu(k) = G(k),
    lam(t) = -C(t)^T G(t), lam(k) = -C(k)^T G(k) + A(k)^T lam(k+1),
    dJ/domega(k) += B(k)^T lam(k+1) and dJ/dchi(0) += lam(0).
    """
    model = problem.model
    if not model.differentiable:
        raise UnsupportedModelError(f"Model '{model.name}' has no Jacobian hooks")
    smooth = cost.smoothing_active if smooth is None else smooth
    t = problem.horizon

    states, nu = rollout(problem, decision)
    omega = as_sequence(decision.omega, model.g, t, "omega")
    value, d_chi0, d_omega, d_nu = cost_and_gradient(
        cost, states[0], problem.prior, omega, nu, t, smooth=smooth
    )
    if penalty_weight > 0:
        penalty, d_penalty = _nu_penalty(nu, problem.v_bound, penalty_weight)
        value += penalty
        d_nu = d_nu + d_penalty

    lam = -model.output_jacobian(states[t]).T @ d_nu[t]
    grad_omega = d_omega.copy()
    for k in range(t - 1, -1, -1):
        a, b = model.transition_jacobians(states[k], omega[k])
        grad_omega[k] += b.T @ lam
        lam = -model.output_jacobian(states[k]).T @ d_nu[k] + a.T @ lam
    grad_chi0 = lam + d_chi0
    return value, np.concatenate([grad_chi0, grad_omega.ravel()])


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

def _flat_objective(z, problem, cost, penalty_weight, smooth):
    decision = DecisionVector.unflatten(z, problem.model.n, problem.model.g)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            value, grad = objective_and_gradient(problem, cost, decision, penalty_weight, smooth)
    except DomainError:
        # overflowed trajectories surface as NaN arguments
        return math.inf, np.zeros_like(z)
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        return math.inf, np.zeros_like(z)
    return value, grad


def _box(problem: EstimationProblem) -> Tuple[np.ndarray, np.ndarray]:
    n, g, t = problem.model.n, problem.model.g, problem.horizon
    lower = np.concatenate([np.full(n, -np.inf), np.full(t * g, -problem.w_bound)])
    upper = np.concatenate([np.full(n, np.inf), np.full(t * g, problem.w_bound)])
    return lower, upper


def _projected_gradient_norm(z, grad, lower, upper) -> float:
    return float(np.max(np.abs(z - np.clip(z - grad, lower, upper)), initial=0.0))


def _starting_points(
    problem: EstimationProblem, options: SolverOptions, warm_start: Optional[DecisionVector]
) -> List[DecisionVector]:
    """Warm start (if any), the prior with zero disturbances, then perturbed priors"""
    n, g, t = problem.model.n, problem.model.g, problem.horizon
    starts = []
    if warm_start is not None and options.warm_start:
        starts.append(warm_start.extended(t).projected(problem.w_bound))
    starts.append(DecisionVector(problem.prior.copy(), np.zeros((t, g))))
    rng = np.random.default_rng([options.seed, t])
    for _ in range(options.restarts - 1):
        chi0 = problem.prior + options.perturbation_std * rng.standard_normal(n)
        starts.append(DecisionVector(chi0, np.zeros((t, g))))
    return starts


def _minimize(z0, problem, cost, penalty_weight, smooth, options, lower, upper):
    return minimize(
        _flat_objective,
        z0,
        args=(problem, cost, penalty_weight, smooth),
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lower, upper)),
        options={"maxiter": options.max_iter, "gtol": options.grad_tol, "ftol": LBFGSB_FTOL},
    )


def _solve_from(
    problem: EstimationProblem, cost: CostSpec, start: DecisionVector, options: SolverOptions
) -> Optional[Tuple[DecisionVector, int, float]]:
    """One start through the penalty ramp (and the tau refinement); None if it diverged"""
    n, g = problem.model.n, problem.model.g
    lower, upper = _box(problem)
    smooth = cost.smoothing_active
    z = np.clip(start.flatten(), lower, upper)
    if not math.isfinite(_flat_objective(z, problem, cost, options.penalty_initial, smooth)[0]):
        return None

    iterations = 0
    weight = options.penalty_initial
    for stage in range(options.penalty_stages):
        res = _minimize(z, problem, cost, weight, smooth, options, lower, upper)
        if not math.isfinite(res.fun):
            return None
        z, iterations = res.x, iterations + int(res.nit)
        _, nu = rollout(problem, DecisionVector.unflatten(z, n, g))
        violation = nu_violation(nu, problem.v_bound)
        logger.debug("t=%d stage %d: V=%.6g violation=%.3g", problem.horizon, stage, res.fun, violation)
        if violation <= options.feasibility_tol:
            break
        if stage + 1 < options.penalty_stages:
            weight *= options.penalty_growth

    final_cost = cost
    if smooth:
        final_cost = cost.with_tau(options.refine_tau)
        res = _minimize(z, problem, final_cost, weight, smooth, options, lower, upper)
        if math.isfinite(res.fun):
            z, iterations = res.x, iterations + int(res.nit)

    _, grad = _flat_objective(z, problem, final_cost, weight, smooth)
    return DecisionVector.unflatten(z, n, g), iterations, _projected_gradient_norm(z, grad, lower, upper)


def _finalize(
    problem: EstimationProblem,
    cost: CostSpec,
    decision: DecisionVector,
    iterations: int,
    grad_norm: float,
    restarts_used: int,
    feasibility_tol: float,
) -> EstimateResult:
    states, nu = rollout(problem, decision)
    breakdown = evaluate_cost(cost, states[0], problem.prior, decision.omega, nu, problem.horizon)
    violation = nu_violation(nu, problem.v_bound)
    diagnostics = SolverDiagnostics(
        iterations=iterations,
        grad_norm=grad_norm,
        restarts_used=restarts_used,
        nu_violation=violation,
        feasible=violation <= feasibility_tol,
    )
    return EstimateResult(
        t=problem.horizon,
        chi0=states[0].copy(),
        omega=decision.omega.copy(),
        nu=nu,
        states=states,
        cost=breakdown.total,
        breakdown=breakdown,
        diagnostics=diagnostics,
    )


def _rank(result: EstimateResult) -> Tuple[int, float, float]:
    if result.feasible:
        return 0, 0.0, result.cost
    return 1, result.diagnostics.nu_violation, result.cost


def solve_fie(
    problem: EstimationProblem,
    cost: CostSpec,
    options: Optional[SolverOptions] = None,
    warm_start: Optional[DecisionVector] = None,
) -> EstimateResult:
    """
    Multi-start projected quasi-Newton solve of the FIE program

    Returns the cheapest feasible result, or the least infeasible one flagged
    as such. Raises SolverFailureError when every start diverges.
    """
    options = options or SolverOptions()
    starts = _starting_points(problem, options, warm_start)
    best: Optional[EstimateResult] = None
    for index, start in enumerate(starts):
        outcome = _solve_from(problem, cost, start, options)
        if outcome is None:
            logger.debug("t=%d start %d diverged", problem.horizon, index)
            continue
        decision, iterations, grad_norm = outcome
        candidate = _finalize(
            problem, cost, decision, iterations, grad_norm, len(starts), options.feasibility_tol
        )
        if best is None or _rank(candidate) < _rank(best):
            best = candidate

    if best is None:
        diagnostics = SolverDiagnostics(
            iterations=0,
            grad_norm=math.nan,
            restarts_used=len(starts),
            nu_violation=math.nan,
            feasible=False,
            message="all starts produced a non-finite objective",
        )
        raise SolverFailureError(
            f"All {len(starts)} starts diverged at horizon {problem.horizon}", diagnostics, t=problem.horizon
        )
    if not best.feasible:
        logger.warning(
            "t=%d: best estimate violates the noise bound by %.3g",
            problem.horizon,
            best.diagnostics.nu_violation,
        )
    return best


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def brute_force_oracle(
    problem: EstimationProblem, cost: CostSpec, grid: Optional[OracleGrid] = None
) -> Tuple[DecisionVector, float]:
    """
    Exhaustive search of the exact cost over a uniform (chi(0), omega) grid

    Candidates violating the noise bound are rejected outright. Scalar-state,
    scalar-disturbance models with t <= 3 only.
    """
    grid = grid or OracleGrid()
    model, t = problem.model, problem.horizon
    if model.n != 1 or model.g != 1:
        raise DomainError("The brute-force oracle handles scalar state and disturbance only")
    if t > 3:
        raise DomainError(f"The brute-force oracle handles t <= 3, got t={t}")
    if grid.size(t) > grid.max_points:
        raise OracleGridTooLargeError(
            f"Oracle grid of {grid.size(t)} points exceeds the limit of {grid.max_points}"
        )

    halfwidth = grid.chi_halfwidth * grid.chi_spread(problem)
    chi_values = problem.prior[0] + np.linspace(-halfwidth, halfwidth, grid.chi_points)
    omega_values = np.linspace(-problem.w_bound, problem.w_bound, grid.omega_points)
    combos = np.array(list(itertools.product(omega_values, repeat=t)), dtype=float)
    combos = combos.reshape(omega_values.size**t, t)
    chunk = max(1, 2_000_000 // combos.shape[0])

    best_cost, best_decision = math.inf, None
    for begin in range(0, chi_values.size, chunk):
        chi = np.repeat(chi_values[begin : begin + chunk], combos.shape[0])
        omega = np.tile(combos, (chi.size // combos.shape[0], 1))
        x = chi[:, None]
        nu_norms = np.empty((chi.size, t + 1))
        feasible = np.ones(chi.size, dtype=bool)
        for k in range(t + 1):
            nu = problem.y[k][None, :] - np.asarray(model.h(x), dtype=float).reshape(chi.size, -1)
            nu_norms[:, k] = np.linalg.norm(nu, axis=1)
            feasible &= np.all(np.abs(nu) <= problem.v_bound, axis=1)
            if k < t:
                x = np.asarray(model.f(x, omega[:, k : k + 1]), dtype=float).reshape(chi.size, 1)
        parts = evaluate_cost_batch(cost, np.abs(chi - problem.prior[0]), np.abs(omega), nu_norms, t)
        total = np.where(feasible, sum(parts), np.inf)
        j = int(np.argmin(total))
        if total[j] < best_cost:
            best_cost = float(total[j])
            best_decision = DecisionVector(chi0=np.array([chi[j]]), omega=omega[j].reshape(t, 1))

    if best_decision is None:
        logger.warning("Oracle found no candidate satisfying the noise bound at t=%d", t)
        best_decision = DecisionVector(problem.prior.copy(), np.zeros((t, 1)))
    return best_decision, best_cost


# ---------------------------------------------------------------------------
# Growing-horizon runs
# ---------------------------------------------------------------------------

def run_fie_sequence(
    scenario: Scenario,
    cost: CostSpec,
    options: Optional[SolverOptions] = None,
    model: Optional[SystemModel] = None,
) -> List[EstimateResult]:
    """
    Solve the FIE at every t = 0..T, warm-starting from the previous solution

    Each result carries e(t|t) = x(t) - x_hat(t|t) in its error field.
    """
    options = options or SolverOptions()
    if model is None:
        model, _ = example_system()
    full = EstimationProblem.from_scenario(scenario, model)
    results: List[EstimateResult] = []
    warm: Optional[DecisionVector] = None
    for t in range(scenario.horizon + 1):
        try:
            result = solve_fie(full.truncated(t), cost, options, warm_start=warm)
        except SolverFailureError as exc:
            raise SolverFailureError(
                f"Instance {scenario.instance} failed at t={t}: {exc}", exc.diagnostics, t=t
            ) from exc
        result = replace(result, error=scenario.states[t] - result.current_state)
        results.append(result)
        warm = result.decision
    return results


def estimation_errors(scenario: Scenario, results: List[EstimateResult]) -> np.ndarray:
    """e(t|t) for each result, shape (len(results), n)"""
    return np.array([scenario.states[r.t] - r.current_state for r in results])


def truth_cost(scenario: Scenario, cost: CostSpec, t: int) -> float:
    """V_t at the true (x0, w) with the true noise as nu"""
    return evaluate_cost(cost, scenario.x0, scenario.prior, scenario.w[:t], scenario.v[: t + 1], t).total


def optimality_gap_tolerance(cost: CostSpec, t: int) -> float:
    """Relative slack allowed in V_t° <= V_t(truth) for the smoothed solve"""
    if not cost.smoothing_active:
        return 1e-6
    return cost.tau * (math.log(max(t, 1)) + math.log(t + 1)) + 1e-6


def sandwich_holds(result: EstimateResult, truth: float, cost: CostSpec) -> bool:
    return result.cost <= truth + optimality_gap_tolerance(cost, result.t) * max(1.0, truth)
