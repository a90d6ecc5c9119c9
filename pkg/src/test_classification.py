import math

import numpy as np
import pytest

from classification import (DIVERGENT, FINITE_POSITIVE, REAL_LIMIT, classify_energy, extend_compact_solution,
                            extension_residual, locate_eigenvalues, make_candidate, sample_ladder, scan,
                            stieltjes_invert, subordinate_constraints)
from conftest import STAR_EIGENVALUE
from errors import PreconditionError
from extrapolation import eps_ladder
from graph_model import enlarge_compact, free_n_graph
from halfline import MFunctionEvaluator
from measure_tools import mu2, spec_prefix


class TestClassifyEnergy:
    def test_free_halfline_grid(self, free_n):
        result = scan(*free_n, [-3.0, -1.0, 0.0, 1.0, 3.0])
        assert [c.verdict for c in result.classifications] == ["none", "ac", "ac", "ac", "none"]
        assert result.summary == {"ac": 3, "none": 2}
        assert result.errors == []

    def test_whole_line_band(self, free_z):
        c = classify_energy(*free_z, 0.0)
        assert c.verdict == "ac"
        assert all(r.status == FINITE_POSITIVE for r in c.records.values())

    def test_empty_grid(self, free_n):
        result = scan(*free_n, [])
        assert result.classifications == []
        assert result.summary == {}

    def test_star_band(self, free_star):
        c = classify_energy(*free_star, 0.7)
        assert c.verdict == "ac"
        assert c.ac_support_member
        assert not c.singular_candidate

    def test_star_gap_without_eigenvalue(self, free_star):
        c = classify_energy(*free_star, 3.0)
        assert c.verdict == "none"
        assert c.kernel_dim == 0
        assert all(r.status == REAL_LIMIT for r in c.records.values())

    @pytest.mark.parametrize("E", [STAR_EIGENVALUE, -STAR_EIGENVALUE])
    def test_star_eigenvalue(self, free_star, E):
        c = classify_energy(*free_star, E)
        assert c.verdict == "sing"
        assert c.kernel_dim == 1
        assert len(c.candidates) == 1
        alpha = c.candidates[0].alpha
        assert np.allclose(np.abs(alpha[1:]), abs(alpha[0]) / math.sqrt(2), atol=1e-8)

    def test_eigenvalue_of_root_potential(self):
        c = classify_energy(*free_n_graph(5.0), 5.2)
        assert c.records["v"].status == DIVERGENT
        assert c.verdict == "sing"
        assert c.kernel_dim == 1

    def test_to_dict(self, free_star):
        data = classify_energy(*free_star, STAR_EIGENVALUE).to_dict()
        assert data["verdict"] == "sing"
        assert set(data["records"]) == {"l1", "l2", "l3"}
        assert data["candidates"][0]["name"] == "kernel_0"

    def test_records_keep_ladder_samples(self, free_n):
        ladder = eps_ladder(3, 12)
        record = classify_energy(*free_n, 0.0, ladder=ladder, check_evidence=False).records["v"]
        assert [eps for eps, _ in record.ladder] == list(ladder)
        assert all(value.imag > 0 for _, value in record.ladder)
        assert record.ladder[-1][1] == pytest.approx(1j, abs=1e-3)
        assert record.limit.converged
        data = record.to_dict()
        assert len(data["ladder"]) == len(ladder)
        assert data["limit"]["status"] == "converged"

    def test_parallel_scan_keeps_order(self, free_star):
        grid = [-3.0, -STAR_EIGENVALUE, 0.0, 0.7, STAR_EIGENVALUE, 3.0]
        serial = scan(*free_star, grid)
        parallel = scan(*free_star, grid, jobs=2)
        assert [c.energy for c in parallel.classifications] == grid
        assert [c.verdict for c in parallel.classifications] == [c.verdict for c in serial.classifications]

    def test_enlarging_keeps_verdicts(self, free_star):
        grid = [-3.0, -1.0, 0.7, STAR_EIGENVALUE, 2.5]
        small = scan(*free_star, grid)
        large = scan(*enlarge_compact(*free_star, 2), grid)
        assert [c.verdict for c in large.classifications] == [c.verdict for c in small.classifications]
        assert [c.kernel_dim for c in large.classifications] == [c.kernel_dim for c in small.classifications]

    @pytest.mark.slow
    def test_star_grid(self, free_star):
        grid = np.linspace(-3.0, 3.0, 601)
        result = scan(*free_star, grid, jobs=2)
        for c in result.classifications:
            if abs(c.energy) < 2.0 - 1e-9:
                assert c.ac_support_member
            if abs(c.energy) > 2.0 + 1e-9:
                assert not c.ac_support_member
        sing = [c.energy for c in result.classifications if c.singular_candidate]
        assert all(abs(abs(E) - STAR_EIGENVALUE) < 0.01 or abs(abs(E) - 2.0) < 1e-9 for E in sing)


def test_constraints_at_star_eigenvalue(free_star):
    c = classify_energy(*free_star, STAR_EIGENVALUE, check_evidence=False)
    rows = subordinate_constraints(*free_star, STAR_EIGENVALUE, c.records)
    assert rows.shape == (4, 4)
    assert np.linalg.matrix_rank(rows, tol=1e-8) == 3


class TestLocateEigenvalues:
    def test_star(self, free_star):
        assert locate_eigenvalues(*free_star, (2.05, 4.0)) == pytest.approx([STAR_EIGENVALUE], abs=1e-8)
        assert locate_eigenvalues(*free_star, (-4.0, -2.05)) == pytest.approx([-STAR_EIGENVALUE], abs=1e-8)

    def test_root_potential(self):
        assert locate_eigenvalues(*free_n_graph(5.0), (2.05, 8.0)) == pytest.approx([5.2], abs=1e-8)

    def test_nothing_in_gap(self, free_n):
        assert locate_eigenvalues(*free_n, (2.05, 6.0)) == []


class TestExtension:
    def test_eigenvector_residual(self, free_star):
        c = classify_energy(*free_star, STAR_EIGENVALUE)
        candidate = c.candidates[0]
        solutions = extend_compact_solution(*free_star, candidate, STAR_EIGENVALUE, 200)
        assert set(solutions) == {"l1", "l2", "l3"}
        assert extension_residual(*free_star, candidate, solutions, STAR_EIGENVALUE, 150) <= 1e-6

    def test_forward_continuation_residual(self, free_n):
        candidate = make_candidate(*free_n, 3.0, [1.0])
        solutions = extend_compact_solution(*free_n, candidate, 3.0, 40)
        assert extension_residual(*free_n, candidate, solutions, 3.0, 30) <= 1e-10

    def test_zero_candidate(self, free_star):
        candidate = make_candidate(*free_star, 0.0, [0.0, 0.0, 0.0, 0.0])
        solutions = extend_compact_solution(*free_star, candidate, 0.0, 20)
        assert all(not np.any(u.actual()) for u in solutions.values())

    def test_candidate_must_solve_free_equation(self, free_star):
        candidate = make_candidate(*free_star, 0.0, [0.0, 1.0, 0.0, 0.0])
        with pytest.raises(PreconditionError):
            extend_compact_solution(*free_star, candidate, 0.0, 20)


class TestStieltjes:
    def test_free_density(self, free_n):
        energies = np.linspace(-1.9, 1.9, 39)
        ladder = eps_ladder(3, 15)
        line = MFunctionEvaluator(free_n[1].halfline_data["v"].line)
        result = stieltjes_invert(energies, ladder, sample_ladder(line, energies, ladder))
        expected = np.sqrt(4 - energies ** 2) / (2 * math.pi)
        assert np.allclose(result.density, expected, atol=1e-3)
        assert result.point_masses == []

    def test_atom(self):
        energies = np.linspace(0.0, 1.0, 11)
        ladder = eps_ladder(3, 20)
        result = stieltjes_invert(energies, ladder, sample_ladder(lambda z: 1 / (0.5 - z), energies, ladder))
        assert len(result.point_masses) == 1
        E, w = result.point_masses[0]
        assert E == pytest.approx(0.5)
        assert w == pytest.approx(1.0, abs=1e-6)
        assert math.isinf(result.density[5])

    def test_inverse_square_root_density(self):
        line = MFunctionEvaluator(spec_prefix(mu2(), 512).as_halfline())
        energies = np.linspace(0.2, 0.8, 7)
        ladder = eps_ladder(3, 16)
        result = stieltjes_invert(energies, ladder, sample_ladder(line, energies, ladder))
        expected = 1 / (2 * np.sqrt(energies))
        assert np.allclose(result.density, expected, rtol=2e-2)
