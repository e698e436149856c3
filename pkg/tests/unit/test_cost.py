"""
Tests for cost evaluation, smoothing and RGAS validation
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.comparison_functions import ConditionId
from core.cost import (
    CostSpec,
    DiscountFamily,
    assumption_bounds,
    cost_and_gradient,
    evaluate_cost,
    evaluate_cost_batch,
    evaluate_smoothed_cost,
    smooth_max,
    validate_rgas,
)
from core.errors import DomainError
from core.system_model import example_system


def random_decision(rng, t):
    return rng.normal(2.0, 2.0, 1), rng.normal(0, 0.1, (t, 1)), rng.normal(0, 0.2, (t + 1, 1))


class TestEvaluate:
    def test_zero_at_truth_without_noise(self, exp_cost):
        breakdown = evaluate_cost(exp_cost, [2.0], [2.0], np.zeros(4), np.zeros(5), 4)
        assert breakdown.total == 0.0

    def test_t_zero_exp(self, exp_cost):
        # c2 * 1**2 + 25 * 0.04 / 1
        breakdown = evaluate_cost(exp_cost, [3.0], [2.0], [], [0.2], 0)
        assert breakdown.initial == pytest.approx(0.25)
        assert breakdown.averaged_sum == pytest.approx(1.0)
        assert breakdown.total == pytest.approx(1.25)

    def test_t_zero_poly_lambda_zero(self):
        spec = CostSpec.paper_poly(lambda_w=0.0, lambda_v=0.0)
        breakdown = evaluate_cost(spec, [2.0], [2.0], [], [0.2], 0)
        assert breakdown.max_v == pytest.approx(1.0)
        assert breakdown.max_w == 0.0
        assert breakdown.total == pytest.approx(1.0)

    def test_initial_term_is_discounted(self, exp_cost):
        breakdown = evaluate_cost(exp_cost, [4.0], [2.0], np.zeros(2), np.zeros(3), 2)
        assert breakdown.initial == pytest.approx(0.25 * 4.0 * 0.81**2)

    def test_poly_discount(self):
        spec = CostSpec.paper_poly()
        assert spec.discount(3) == pytest.approx(4.0**-0.21)

    def test_length_mismatch_rejected(self, exp_cost):
        with pytest.raises(DomainError):
            evaluate_cost(exp_cost, [2.0], [2.0], np.zeros(3), np.zeros(3), 3)

    def test_parts_nonnegative_and_sum(self, smoothed_cost):
        rng = np.random.default_rng(3)
        for t in range(0, 6):
            chi0, omega, nu = random_decision(rng, t)
            b = evaluate_cost(smoothed_cost, chi0, [2.0], omega, nu, t)
            assert min(b.initial, b.averaged_sum, b.max_w, b.max_v) >= 0
            assert b.total == pytest.approx(b.initial + b.averaged_sum + b.max_w + b.max_v)

    def test_batch_matches_single(self, smoothed_cost):
        rng = np.random.default_rng(4)
        t = 3
        dx = np.abs(rng.normal(size=8))
        w = np.abs(rng.normal(0, 0.1, (8, t)))
        v = np.abs(rng.normal(0, 0.2, (8, t + 1)))
        totals = sum(evaluate_cost_batch(smoothed_cost, dx, w, v, t))
        for i in range(8):
            single = evaluate_cost(smoothed_cost, [2.0 + dx[i]], [2.0], w[i], v[i], t).total
            assert totals[i] == pytest.approx(single, rel=1e-12)


class TestSmoothing:
    def test_single_element_is_exact(self):
        assert smooth_max(np.array([0.37]), 1e-3) == 0.37

    def test_empty_is_zero(self):
        assert smooth_max(np.array([]), 1e-3) == 0.0

    def test_bracketing(self):
        values = np.array([0.1, 0.5, 0.49, 0.2])
        tau = 1e-2
        smoothed = smooth_max(values, tau)
        assert values.max() <= smoothed <= values.max() + tau * math.log(values.size)

    def test_lambda_one_smoothed_equals_exact(self, exp_cost):
        rng = np.random.default_rng(5)
        chi0, omega, nu = random_decision(rng, 4)
        exact = evaluate_cost(exp_cost, chi0, [2.0], omega, nu, 4).total
        assert evaluate_smoothed_cost(exp_cost, chi0, [2.0], omega, nu, 4) == pytest.approx(exact, rel=1e-14)

    def test_smoothed_over_estimate_bounded(self, smoothed_cost):
        rng = np.random.default_rng(6)
        t = 5
        chi0, omega, nu = random_decision(rng, t)
        exact = evaluate_cost(smoothed_cost, chi0, [2.0], omega, nu, t).total
        smoothed = evaluate_smoothed_cost(smoothed_cost, chi0, [2.0], omega, nu, t)
        slack = smoothed_cost.tau * (math.log(t) + math.log(t + 1))
        assert exact <= smoothed <= exact + slack + 1e-12


class TestGradient:
    @pytest.mark.parametrize("family", [DiscountFamily.EXP, DiscountFamily.POLY])
    def test_matches_central_differences(self, family):
        spec = CostSpec.paper_exp(lambda_w=0.3, lambda_v=0.6).model_copy(update={"family": family, "tau": 0.05})
        rng = np.random.default_rng(7)
        t = 4
        chi0, omega, nu = random_decision(rng, t)
        _, d_chi0, d_omega, d_nu = cost_and_gradient(spec, chi0, [2.0], omega, nu, t)

        def f(c, o, n):
            return cost_and_gradient(spec, c, [2.0], o, n, t)[0]

        h = 1e-6
        fd = (f(chi0 + h, omega, nu) - f(chi0 - h, omega, nu)) / (2 * h)
        assert d_chi0[0] == pytest.approx(fd, rel=1e-5)
        for k in range(t):
            e = np.zeros_like(omega)
            e[k] = h
            fd = (f(chi0, omega + e, nu) - f(chi0, omega - e, nu)) / (2 * h)
            assert d_omega[k, 0] == pytest.approx(fd, rel=1e-5, abs=1e-8)
        for k in range(t + 1):
            e = np.zeros_like(nu)
            e[k] = h
            fd = (f(chi0, omega, nu + e) - f(chi0, omega, nu - e)) / (2 * h)
            assert d_nu[k, 0] == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestCostSpec:
    def test_example_weights(self):
        spec = CostSpec.paper_exp()
        assert spec.c2 == pytest.approx(0.25)
        assert spec.weight_w == pytest.approx(100.0)
        assert spec.weight_v == pytest.approx(25.0)
        assert not spec.smoothing_active
        assert CostSpec.paper_poly(lambda_w=0.0).smoothing_active

    def test_lambda_range_validated(self):
        with pytest.raises(ValidationError):
            CostSpec(lambda_w=1.5)

    def test_frozen(self, exp_cost):
        with pytest.raises(ValidationError):
            exp_cost.b2 = 0.5


class TestValidateRgas:
    def test_exp_cost_boundary(self):
        _, cert = example_system()
        verdict = validate_rgas(CostSpec.paper_exp(b2=0.81), cert)
        assert verdict.passed and verdict.condition is ConditionId.EXP_ROOT
        assert not validate_rgas(CostSpec.paper_exp(b2=0.80), cert).passed
        assert not validate_rgas(CostSpec.paper_exp(b2=0.5), cert).passed

    def test_growing_weight_certified(self):
        _, cert = example_system()
        assert validate_rgas(CostSpec.paper_exp(b2=2.0), cert).passed

    def test_poly_cost_against_poly_certificate(self):
        _, cert = example_system(polynomial_certificate=True)
        verdict = validate_rgas(CostSpec.paper_poly(b2=0.21), cert)
        assert verdict.passed and verdict.condition is ConditionId.POLY_RATIO
        assert not validate_rgas(CostSpec.paper_poly(b2=0.25), cert).passed

    def test_cross_family_pairings(self):
        _, exp_cert = example_system()
        _, poly_cert = example_system(polynomial_certificate=True)
        poly_on_exp = validate_rgas(CostSpec.paper_poly(b2=0.21), exp_cert)
        assert poly_on_exp.passed
        assert poly_on_exp.condition is ConditionId.GENERAL_SENSITIVITY
        assert not validate_rgas(CostSpec.paper_exp(b2=0.81), poly_cert).passed
        growing = validate_rgas(CostSpec.paper_exp(b2=2.0), poly_cert)
        assert growing.passed
        assert growing.condition is ConditionId.GENERAL_SENSITIVITY


class TestAssumptionBounds:
    def test_sandwich_brackets_cost(self, smoothed_cost):
        bounds = assumption_bounds(smoothed_cost)
        assert bounds.strict
        rng = np.random.default_rng(8)
        for t in range(1, 8):
            chi0, omega, nu = random_decision(rng, t)
            value = evaluate_cost(smoothed_cost, chi0, [2.0], omega, nu, t).total
            args = (abs(chi0[0] - 2.0), np.abs(omega).max(), np.abs(nu).max(), t)
            assert bounds.lower(*args) <= value + 1e-12
            assert value <= bounds.upper(*args) + 1e-12

    def test_lambda_one_has_no_lower_gammas(self, exp_cost):
        bounds = assumption_bounds(exp_cost)
        assert bounds.gamma_w_lower is None and bounds.gamma_v_lower is None
        assert not bounds.strict


class TestMonotonicity:
    @pytest.mark.parametrize("lam", [1.0, 0.5, 0.0])
    def test_nondecreasing_in_each_magnitude(self, lam):
        spec = CostSpec.paper_exp(lambda_w=lam, lambda_v=lam)
        rng = np.random.default_rng(8)
        t = 4
        for _ in range(50):
            chi0, omega, nu = random_decision(rng, t)
            base = evaluate_cost(spec, chi0, [2.0], omega, nu, t).total
            grow = rng.uniform(1.0, 3.0)

            wider = evaluate_cost(spec, 2.0 + grow * (chi0 - 2.0), [2.0], omega, nu, t).total
            assert wider >= base

            i = rng.integers(t)
            bumped = omega.copy()
            bumped[i] *= grow
            assert evaluate_cost(spec, chi0, [2.0], bumped, nu, t).total >= base

            j = rng.integers(t + 1)
            bumped = nu.copy()
            bumped[j] *= grow
            assert evaluate_cost(spec, chi0, [2.0], omega, bumped, t).total >= base
