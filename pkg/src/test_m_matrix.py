import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import free_m
from errors import PreconditionError
from extrapolation import eps_ladder
from graph_model import build_graph, enlarge_compact, free_n_graph, triangle_graph
from halfline import MFunctionEvaluator
from m_matrix import (HALFLINE, SINGLETON, HalfLineSlice, assemble, boundary_value, build_slices, direct_oracle,
                      im_trace, m_k, schur_matrix, slice_boundary_values)
from random_graphs import random_halfline, random_star_like, random_upper_points, random_z_graph


@st.composite
def upper_half_plane(draw):
    return complex(draw(st.floats(-5.0, 5.0)), draw(st.floats(1e-2, 5.0)))


def test_singleton_slice():
    assert m_k(HalfLineSlice("v", SINGLETON, 0.0), 1j) == pytest.approx(1j)
    with pytest.raises(PreconditionError):
        m_k(HalfLineSlice("v", SINGLETON, 0.0), 0.5)


def test_slices_follow_compact_order(free_star):
    slices = build_slices(*free_star)
    assert [s.root for s in slices] == ["c", "l1", "l2", "l3"]
    assert [s.kind for s in slices] == [SINGLETON, HALFLINE, HALFLINE, HALFLINE]


class TestAssemble:
    def test_free_n(self, free_n):
        M = assemble(*free_n, 1j)
        assert M.entries.shape == (1, 1)
        assert M.entries[0, 0] == pytest.approx(0.6180339887498949j, abs=1e-12)

    def test_free_z(self, free_z):
        z = 0.4 + 0.8j
        slice_m = 1 / (-z - free_m(z))
        expected = np.linalg.inv(np.array([[1 / slice_m, 1.0], [1.0, 1 / slice_m]]))
        assert np.allclose(assemble(*free_z, z).entries, expected, atol=1e-12)

    def test_free_z_diagonal_is_whole_line_green_function(self, free_z):
        z = 0.4 + 0.8j
        expected = -1 / (np.sqrt(z - 2) * np.sqrt(z + 2))
        assert assemble(*free_z, z).entries[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_schur_matrix(self, free_star):
        K = schur_matrix(*free_star, 1j)
        assert K[0, 0] == pytest.approx(-1j)
        assert K[0, 1] == 1.0
        assert K[1, 1] == pytest.approx(-1j - free_m(1j))

    def test_lower_half_plane(self, free_n):
        with pytest.raises(PreconditionError):
            assemble(*free_n, 0.3)

    def test_symmetric_and_herglotz(self, triangle):
        M = assemble(*triangle, 0.3 + 0.01j)
        assert M.symmetry_error() <= 1e-12
        assert M.min_im_eigenvalue() >= -1e-12

    @settings(max_examples=50, deadline=None)
    @given(upper_half_plane())
    def test_herglotz_everywhere(self, z):
        M = assemble(*triangle_graph(), z)
        assert M.min_im_eigenvalue() >= -1e-10
        assert np.allclose(M.entries, M.entries.T, atol=1e-12)

    def test_enlarging_keeps_compact_block(self, free_star):
        z = 0.5 + 1j
        bigger = enlarge_compact(*free_star, 2)
        small = assemble(*free_star, z).entries
        large = assemble(*bigger, z).entries
        assert np.allclose(large[:4, :4], small, atol=1e-12)

    def test_im_trace_positive(self, free_star):
        assert im_trace(*free_star, 0.1 + 0.1j) > 0


class TestOracle:
    def test_free_z(self, free_z):
        assert np.allclose(assemble(*free_z, 1j).entries, direct_oracle(*free_z, 1j), atol=1e-8)

    def test_triangle(self, triangle):
        z = -0.7 + 2j
        assert np.allclose(assemble(*triangle, z).entries, direct_oracle(*triangle, z), atol=1e-8)

    def test_rejects_points_near_axis(self, free_n):
        with pytest.raises(PreconditionError):
            direct_oracle(*free_n, 0.5 + 0.01j)

    def test_rejects_invalid_graph(self):
        graph, coeffs = build_graph({"v": 0.0}, [], {})
        with pytest.raises(PreconditionError):
            direct_oracle(graph, coeffs, 1j)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_random_graphs(self, seed):
        rng = np.random.default_rng(seed)
        graph, coeffs = random_star_like(rng)
        slices = build_slices(graph, coeffs)
        for z in random_upper_points(rng, 3):
            M = assemble(graph, coeffs, z, slices)
            assert np.max(np.abs(M.entries - direct_oracle(graph, coeffs, z))) <= 1e-6
            assert M.symmetry_error() <= 1e-12
            assert M.min_im_eigenvalue() >= -1e-10

    @pytest.mark.slow
    def test_fifty_graphs_ten_points(self, rng):
        worst = 0.0
        for _ in range(50):
            graph, coeffs = random_star_like(rng)
            slices = build_slices(graph, coeffs)
            for z in random_upper_points(rng, 10):
                M = assemble(graph, coeffs, z, slices)
                worst = max(worst, float(np.max(np.abs(M.entries - direct_oracle(graph, coeffs, z)))))
        assert worst <= 1e-6

    @pytest.mark.slow
    def test_herglotz_on_thousand_draws(self, rng):
        for _ in range(1000):
            graph, coeffs = random_star_like(rng)
            (z,) = random_upper_points(rng, 1, im_range=(1e-2, 2.0))
            slices = build_slices(graph, coeffs)
            for slc in slices:
                if slc.kind == HALFLINE:
                    assert m_k(slc, z).imag > 0
            M = assemble(graph, coeffs, z, slices)
            assert M.min_im_eigenvalue() >= -1e-10 * max(1.0, float(np.max(np.abs(M.entries))))
            line = random_halfline(rng).line
            assert MFunctionEvaluator(line)(z).imag > 0

    def test_random_z_graphs(self, rng):
        for _ in range(5):
            graph, coeffs = random_z_graph(rng)
            assert np.allclose(assemble(graph, coeffs, 0.2 + 0.5j).entries,
                               direct_oracle(graph, coeffs, 0.2 + 0.5j), atol=1e-8)


class TestBoundaryValue:
    def test_band_energy(self, free_n):
        bv = boundary_value(*free_n, 0.0)
        assert bv.im_trace.converged
        assert bv.im_trace.value == pytest.approx(1.0, abs=1e-6)
        assert bv.flags == []

    def test_gap_energy_is_real(self, free_n):
        bv = boundary_value(*free_n, 3.0)
        limit = bv.limit_matrix()
        assert limit is not None
        assert limit[0, 0].real == pytest.approx(-0.3819660112501051, abs=1e-8)
        assert abs(limit[0, 0].imag) < 1e-8

    def test_eigenvalue_diverges(self):
        graph, coeffs = free_n_graph(5.0)
        bv = boundary_value(graph, coeffs, 5.2)
        assert "divergent" in bv.flags
        assert bv.divergent_entries() == [(0, 0)]
        assert bv.im_trace.slope == pytest.approx(1.0, abs=0.05)

    def test_ladder_must_decrease(self, free_n):
        with pytest.raises(PreconditionError):
            boundary_value(*free_n, 0.0, ladder=[0.1, 0.2, 0.05, 0.01])

    def test_slice_limits(self, free_star):
        limits = slice_boundary_values(build_slices(*free_star), 0.5, eps_ladder())
        assert set(limits) == {"l1", "l2", "l3"}
        assert all(est.converged and est.value.imag > 0 for est in limits.values())

    def test_to_dict(self, free_n):
        data = boundary_value(*free_n, 0.0, ladder=eps_ladder(3, 12)).to_dict()
        assert data["E"] == 0.0
        assert len(data["ladder"]) == 10
        assert data["im_trace"]["status"] == "converged"
