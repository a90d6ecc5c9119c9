import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from config import default_numerics
from conftest import free_m
from errors import InsufficientLengthError, MFunctionConvergenceError, PreconditionError
from graph_model import HalfLineCoefficients, TailRule, free_halfline
from halfline import (DIRICHLET, NO_SUBORDINATE, SUBORDINATE_EXISTS, BoundaryCondition, HalfLineSolution,
                      MFunctionEvaluator, combine_pair, decaying_continuation, detect_subordinate,
                      iterate_fundamental_pair, iterate_solution, jl_theta_from_m, l2_evidence, m_function,
                      minimal_solution, rank_one_m, recurrence_residuals, resolvent_entry, truncated_norm,
                      wronskian)
from random_graphs import generator_data


def _solution(values):
    values = np.asarray(values, dtype=float)
    return HalfLineSolution(0.0, DIRICHLET, (0.0, 1.0), values, np.zeros(len(values)))


class TestTruncatedNorm:
    def test_fractional_term(self):
        assert truncated_norm(_solution(np.ones(5)), 2.5) == pytest.approx(math.sqrt(2.5))

    def test_integer_length(self):
        assert truncated_norm(_solution([1.0, 0.0, -1.0, 0.0, 1.0]), 4) == pytest.approx(math.sqrt(2))

    def test_too_short(self):
        with pytest.raises(InsufficientLengthError):
            truncated_norm(_solution([1.0, 1.0]), 3.5)

    def test_rescaled_storage(self):
        u = HalfLineSolution(0.0, DIRICHLET, (0.0, 1.0), np.array([1.0, 1.0]), np.array([0.0, math.log(3.0)]))
        assert truncated_norm(u, 2) == pytest.approx(math.sqrt(10))


class TestBoundaryCondition:
    def test_seed(self):
        assert DIRICHLET.seed() == (-0.0, 1.0)
        u0, u1 = BoundaryCondition(math.pi / 2).seed()
        assert u0 == pytest.approx(-1.0)
        assert u1 == pytest.approx(0.0, abs=1e-15)

    def test_wrap(self):
        assert BoundaryCondition.wrap(math.pi + 0.25).theta == pytest.approx(0.25)
        assert BoundaryCondition.wrap(-0.25).theta == pytest.approx(math.pi - 0.25)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            BoundaryCondition(math.pi)


class TestSolutions:
    def test_free_dirichlet_solution(self):
        u = iterate_solution(free_halfline(), 0.0, DIRICHLET, 6)
        assert np.allclose(u.actual(), [1.0, 0.0, -1.0, 0.0, 1.0, 0.0])

    def test_wronskian_is_constant(self):
        line = HalfLineCoefficients(b=(0.3, -0.2), a=(1.5,), tail=TailRule("constant", (0.1,), (0.8,)))
        u = iterate_solution(line, 0.4, BoundaryCondition(0.3), 200)
        v = iterate_solution(line, 0.4, BoundaryCondition(1.9), 200)
        w = wronskian(line, u, v)
        assert np.allclose(w, w[0], rtol=1e-9)

    def test_residuals_after_renormalisation(self):
        numerics = default_numerics().with_overrides(renorm_threshold=1e8)
        u = iterate_solution(free_halfline(), 5.0, BoundaryCondition(0.7), 300, numerics)
        assert np.any(u.log_scales > 0)
        assert np.max(recurrence_residuals(free_halfline(), u)) < 1e-12

    def test_combine_pair_matches_direct(self):
        boundary = BoundaryCondition(1.1)
        d, n = iterate_fundamental_pair(free_halfline(), 0.5, 50)
        combined = combine_pair(d, n, boundary)
        direct = iterate_solution(free_halfline(), 0.5, boundary, 50)
        assert np.allclose(combined.actual(), direct.actual())


class TestDetectSubordinate:
    def test_no_subordinate_in_band(self):
        verdict = detect_subordinate(free_halfline(), 0.0, L_max=10000)
        assert verdict.verdict == NO_SUBORDINATE
        assert verdict.theta is None

    def test_subordinate_outside_band(self):
        verdict = detect_subordinate(free_halfline(), 3.0, L_max=10000)
        assert verdict.verdict == SUBORDINATE_EXISTS
        expected = jl_theta_from_m(free_m(3.0).real).theta
        assert verdict.theta == pytest.approx(expected, abs=1e-3)

    def test_subordinate_at_band_edge(self):
        verdict = detect_subordinate(free_halfline(), 2.0, L_max=10000)
        assert verdict.verdict == SUBORDINATE_EXISTS

    def test_complement_choice_does_not_matter(self):
        theta = jl_theta_from_m(free_m(3.0).real).theta
        u = iterate_solution(free_halfline(), 3.0, BoundaryCondition(theta), 20)
        ratios = {}
        for shift in (math.pi / 2, math.pi / 3):
            v = iterate_solution(free_halfline(), 3.0, BoundaryCondition.wrap(theta + shift), 20)
            ratios[shift] = [truncated_norm(u, L) / truncated_norm(v, L) for L in (10, 15)]
        for values in ratios.values():
            assert values[1] < values[0] < 1e-2
        quotient = [a / b for a, b in zip(ratios[math.pi / 2], ratios[math.pi / 3])]
        assert quotient[0] == pytest.approx(quotient[1], rel=1e-2)

    def test_short_lines_rejected(self):
        with pytest.raises(PreconditionError):
            detect_subordinate(free_halfline(), 0.0, L_max=50)


class TestMFunction:
    def test_free_value_at_i(self):
        m = MFunctionEvaluator(free_halfline())(1j)
        assert m == pytest.approx(0.6180339887498949j, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-4.0, 4.0), st.floats(1e-3, 5.0))
    def test_free_closed_form(self, x, y):
        z = complex(x, y)
        assert abs(MFunctionEvaluator(free_halfline())(z) - free_m(z)) <= 1e-8

    def test_finite_line(self):
        line = HalfLineCoefficients(b=(0.5,), tail=TailRule("finite", (), ()))
        assert MFunctionEvaluator(line)(1j) == pytest.approx(1 / (0.5 - 1j))

    def test_periodic_tail_matches_section(self):
        line = HalfLineCoefficients(b=(1.0,), a=(0.5,), tail=TailRule("periodic", (0.3, -0.4), (1.0, 0.6)))
        z = 0.5 + 1j
        m = MFunctionEvaluator(line)(z)
        assert m.imag > 0
        assert abs(m - resolvent_entry(line, z, 2000)) < 1e-8

    def test_generator_tail_matches_section(self):
        line = generator_data("almost_mathieu", (2.0, (math.sqrt(5) - 1) / 2, 0.1)).line
        m = MFunctionEvaluator(line)(1j)
        assert m.imag > 0
        assert abs(m - resolvent_entry(line, 1j, 4000)) < 1e-8

    def test_depth_limit(self):
        numerics = default_numerics().with_overrides(m_initial_depth=32, m_max_depth=64, m_tolerance=1e-300)
        line = generator_data("anderson", (7, 3.0)).line
        with pytest.raises(MFunctionConvergenceError):
            MFunctionEvaluator(line, numerics)(0.3 + 1e-5j)

    def test_depth_limit_above_floor_returns_last_iterate(self):
        numerics = default_numerics().with_overrides(m_initial_depth=32, m_max_depth=64, m_tolerance=1e-300)
        line = generator_data("anderson", (7, 3.0)).line
        value = MFunctionEvaluator(line, numerics)(1j)
        assert np.isfinite(value)
        assert value.imag > 0
        assert abs(value - resolvent_entry(line, 1j, 4000)) <= 1e-6

    def test_floor_is_configurable(self):
        numerics = default_numerics().with_overrides(m_initial_depth=32, m_max_depth=64, m_tolerance=1e-300,
                                                     im_floor=2.0)
        line = generator_data("anderson", (7, 3.0)).line
        with pytest.raises(MFunctionConvergenceError):
            MFunctionEvaluator(line, numerics)(1j)

    def test_lower_half_plane_rejected(self):
        with pytest.raises(PreconditionError):
            m_function(MFunctionEvaluator(free_halfline()), 0.5 - 1j)

    def test_rank_one_shift(self):
        t = 0.8
        z = 0.3 + 0.7j
        shifted = HalfLineCoefficients(b=(-math.tan(t),), tail=TailRule("constant", (0.0,), (1.0,)))
        expected = MFunctionEvaluator(shifted)(z)
        assert rank_one_m(free_m(z), t) == pytest.approx(expected, abs=1e-12)


class TestBoundaryAngle:
    def test_divergent_limit_is_dirichlet(self):
        assert jl_theta_from_m(math.inf) == DIRICHLET

    def test_zero_limit(self):
        assert jl_theta_from_m(0.0).theta == pytest.approx(math.pi / 2)

    def test_nonreal_limit(self):
        assert jl_theta_from_m(complex(0.0, 1.0)) is None

    def test_cotangent(self):
        theta = jl_theta_from_m(-0.5).theta
        assert 1 / math.tan(theta) == pytest.approx(-0.5)


class TestL2Evidence:
    def test_decaying_solution(self):
        assert l2_evidence(minimal_solution(free_halfline(), 3.0, 4096)).is_l2

    def test_growing_solution(self):
        u = iterate_solution(free_halfline(), 3.0, DIRICHLET, 400)
        assert not l2_evidence(u).is_l2

    def test_oscillating_solution(self):
        u = iterate_solution(free_halfline(), 0.0, DIRICHLET, 4096)
        assert not l2_evidence(u).is_l2

    def test_power_decay(self):
        n = np.arange(1, 4097, dtype=float)
        assert l2_evidence(_solution(n ** -2.0)).is_l2
        assert not l2_evidence(_solution(n ** -0.5)).is_l2


class TestMinimalSolution:
    def test_free_gap_ratio(self):
        w = minimal_solution(free_halfline(), 3.0, 60)
        u = w.actual()
        r = (3 - math.sqrt(5)) / 2
        assert np.allclose(u[1:] / u[:-1], r, rtol=1e-10)
        assert w.seed[0] / w.seed[1] == pytest.approx(1 / r)

    def test_deep_decay_is_kept(self):
        w = minimal_solution(free_halfline(), 5.0, 2000)
        assert np.isfinite(w.log_abs()[-1])
        assert w.log_abs()[-1] < -2000
        assert np.max(recurrence_residuals(free_halfline(), w)) < 1e-10

    def test_continuation_matches_parallel_seed(self):
        theta = jl_theta_from_m(free_m(3.0).real).theta
        seed = tuple(2.0 * x for x in BoundaryCondition(theta).seed())
        u = decaying_continuation(free_halfline(), 3.0, seed, 100)
        assert u is not None
        assert u.actual()[0] == pytest.approx(seed[1])

    def test_continuation_rejects_other_seeds(self):
        assert decaying_continuation(free_halfline(), 3.0, (0.0, 1.0), 100) is None
