"""Energy classification into the singular support S and the ac support N."""
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.optimize import brentq

from config import NumericsConfig, default_numerics
from errors import PreconditionError, SubordinacyError
from extrapolation import LimitEstimate, limit_of
from graph_model import (HalfLineCoefficients, JacobiCoefficients, StarLikeGraph, Vector, apply_operator,
                         compact_adjacency, halfline_slice_coefficients, neighbors)
from halfline import (SUBORDINATE_EXISTS, HalfLineSolution, decaying_continuation, iterate_seeded,
                      jl_theta_from_m, ratio_evidence, seed_boundary)
from m_matrix import (HALFLINE, HalfLineSlice, build_slices, default_ladder, m_k, slice_boundary_values,
                      slice_ladder_samples)

FINITE_POSITIVE = "finite-positive"
REAL_LIMIT = "real-limit"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"

FREE_EQUATION_TOL = 1e-8


@dataclass
class HalfLineStatus:
    root: str
    status: str
    m_value: Optional[complex] = None
    theta: Optional[float] = None
    slope: float = float("nan")
    ladder: Tuple[Tuple[float, complex], ...] = ()
    limit: Optional[LimitEstimate] = None

    @property
    def conclusive(self) -> bool:
        return self.status != INCONCLUSIVE

    def to_dict(self) -> dict:
        m = self.m_value
        return {
            "root": self.root,
            "status": self.status,
            "m": None if m is None else [m.real, m.imag],
            "theta": self.theta,
            "slope": self.slope,
            "ladder": [[eps, value.real, value.imag] for eps, value in self.ladder],
            "limit": None if self.limit is None else self.limit.to_dict(),
        }


def status_from_limit(root: str, estimate: LimitEstimate, numerics: NumericsConfig) -> HalfLineStatus:
    """Map the limit of m_k(E + i eps) onto the four boundary statuses"""
    if estimate.divergent:
        return HalfLineStatus(root, DIVERGENT, None, 0.0, estimate.slope)
    if not estimate.converged:
        return HalfLineStatus(root, INCONCLUSIVE, None, None, estimate.slope)
    m = complex(estimate.value)
    if m.imag > numerics.im_positive_tol * max(1.0, abs(m)):
        return HalfLineStatus(root, FINITE_POSITIVE, m, None, estimate.slope)
    boundary = jl_theta_from_m(m.real)
    return HalfLineStatus(root, REAL_LIMIT, complex(m.real, 0.0), boundary.theta, estimate.slope)


@dataclass
class CompactSolutionCandidate:
    """Values on the compact vertices of a solution, with its half-line seeds"""
    energy: float
    alpha: np.ndarray
    vertices: Tuple[str, ...]
    seeds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    name: str = ""

    def value(self, vertex: str) -> float:
        return float(self.alpha[self.vertices.index(vertex)])

    def vanishes_on(self, root: str) -> bool:
        return self.seeds.get(root, (0.0, 0.0)) == (0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "alpha": dict(zip(self.vertices, [float(x) for x in self.alpha])),
            "seeds": {r: list(s) for r, s in self.seeds.items()},
        }


def make_candidate(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float, alpha: Sequence[float],
                   name: str = "", zero_tol: float = 1e-12) -> CompactSolutionCandidate:
    """Candidate from compact values; the seed at root v_j is ((A alpha)_j, alpha_j)"""
    alpha = np.asarray(alpha, dtype=float)
    pushed = compact_adjacency(graph, coeffs) @ alpha
    scale = max(float(np.max(np.abs(alpha))) if alpha.size else 0.0, 1.0)
    seeds = {}
    for root in graph.halfline_roots:
        i = graph.index(root)
        u0 = 0.0 if abs(pushed[i]) <= zero_tol * scale else float(pushed[i])
        u1 = 0.0 if abs(alpha[i]) <= zero_tol * scale else float(alpha[i])
        seeds[root] = (u0, u1)
    return CompactSolutionCandidate(E, alpha, tuple(graph.compact_vertices), seeds, name)


@dataclass
class EnergyClassification:
    energy: float
    records: Dict[str, HalfLineStatus]
    ac_support_member: bool
    singular_candidate: bool
    verdict: str
    kernel_dim: Optional[int] = None
    kernel_range: Tuple[int, int] = (0, 0)
    candidates: List[CompactSolutionCandidate] = field(default_factory=list)
    singular_values: List[float] = field(default_factory=list)
    evidence: Dict[str, dict] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def conclusive(self) -> bool:
        return self.verdict not in (INCONCLUSIVE, "error")

    def to_dict(self) -> dict:
        return {
            "E": self.energy,
            "verdict": self.verdict,
            "ac_support_member": self.ac_support_member,
            "singular_candidate": self.singular_candidate,
            "kernel_dim": self.kernel_dim,
            "kernel_range": list(self.kernel_range),
            "records": {r: s.to_dict() for r, s in self.records.items()},
            "candidates": [c.to_dict() for c in self.candidates],
            "singular_values": self.singular_values,
            "evidence": self.evidence,
            "flags": self.flags,
        }


def subordinate_constraints(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                            records: Dict[str, HalfLineStatus], strict: bool = True) -> np.ndarray:
    """Linear conditions on the compact values of a subordinate solution.

    A root with boundary angle theta gives cos(theta) (A alpha)_j + sin(theta) alpha_j = 0;
    a root without a subordinate direction forces alpha_j = 0 and (A alpha)_j = 0;
    a vertex without a half-line carries the free equation. Inconclusive roots
    are treated as having no subordinate direction when ``strict`` and are left
    unconstrained otherwise.
    """
    A = compact_adjacency(graph, coeffs)
    n = graph.n
    rows = []
    for i, v in enumerate(graph.compact_vertices):
        unit = np.zeros(n)
        unit[i] = 1.0
        record = records.get(v)
        if record is None:
            rows.append(A[i] + (coeffs.b_compact[v] - E) * unit)
        elif record.status in (REAL_LIMIT, DIVERGENT):
            rows.append(math.cos(record.theta) * A[i] + math.sin(record.theta) * unit)
        elif record.status == FINITE_POSITIVE or strict:
            rows.append(unit)
            rows.append(A[i].copy())
    return np.array(rows).reshape(len(rows), n)


def kernel_basis(rows: np.ndarray, n: int, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal kernel columns of ``rows`` and its singular values"""
    if rows.shape[0] == 0:
        return np.eye(n), np.zeros(0)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    padded = np.zeros(n)
    padded[:len(s)] = s[:n]
    cutoff = threshold * max(1.0, float(s[0]) if len(s) else 0.0)
    null = padded <= cutoff
    return vt[null].T, s


def boundary_statuses(slices: List[HalfLineSlice], E: float, numerics: NumericsConfig,
                      ladder: Optional[Sequence[float]] = None) -> Dict[str, HalfLineStatus]:
    ladder = default_ladder(numerics) if ladder is None else np.asarray(ladder, dtype=float)
    samples = slice_ladder_samples(slices, E, ladder)
    limits = slice_boundary_values(slices, E, ladder, numerics, samples)
    return {root: replace(status_from_limit(root, est, numerics),
                          ladder=tuple((float(eps), complex(v)) for eps, v in zip(ladder, samples[root])),
                          limit=est)
            for root, est in limits.items()}


def evidence_length(coeffs: HalfLineCoefficients, numerics: NumericsConfig) -> int:
    """Solutions of measure-derived lines are only trusted on their computed prefix"""
    if coeffs.measure is not None:
        return min(numerics.evidence_length, coeffs.prefix_length())
    return numerics.evidence_length


def classify_energy(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                    numerics: Optional[NumericsConfig] = None, ladder: Optional[Sequence[float]] = None,
                    slices: Optional[List[HalfLineSlice]] = None,
                    check_evidence: bool = True) -> EnergyClassification:
    numerics = numerics or default_numerics()
    slices = slices or build_slices(graph, coeffs, numerics)
    records = boundary_statuses(slices, E, numerics, ladder)
    ac = any(r.status == FINITE_POSITIVE for r in records.values())
    inconclusive = [r.root for r in records.values() if not r.conclusive]

    n = graph.n
    strict_basis, s = kernel_basis(subordinate_constraints(graph, coeffs, E, records, True), n,
                                   numerics.kernel_sv_threshold)
    lower = strict_basis.shape[1]
    upper = lower
    if inconclusive:
        loose_basis, _ = kernel_basis(subordinate_constraints(graph, coeffs, E, records, False), n,
                                      numerics.kernel_sv_threshold)
        upper = loose_basis.shape[1]
    singular = lower > 0
    candidates = [make_candidate(graph, coeffs, E, strict_basis[:, j], f"kernel_{j}") for j in range(lower)]

    flags = []
    if inconclusive:
        verdict = INCONCLUSIVE
        flags.append("inconclusive:" + ",".join(inconclusive))
        logger.warning(f"E={E}: inconclusive boundary values at {inconclusive}")
    elif ac and singular:
        verdict = "ac+sing"
    elif ac:
        verdict = "ac"
    elif singular:
        verdict = "sing"
    else:
        verdict = "none"

    result = EnergyClassification(E, records, ac, singular, verdict, lower if not inconclusive else None,
                                  (lower, upper), candidates, [float(x) for x in s], flags=flags)
    if singular and check_evidence:
        _check_candidates(graph, coeffs, result, slices, numerics)
    logger.debug(f"classify E={E}: {verdict}, kernel {result.kernel_range}, sv={np.round(s, 12).tolist()}")
    return result


def _check_candidates(graph: StarLikeGraph, coeffs: JacobiCoefficients, result: EnergyClassification,
                      slices: List[HalfLineSlice], numerics: NumericsConfig) -> None:
    """Ratio evidence that each candidate's nonzero continuations are subordinate"""
    by_root = {s.root: s for s in slices if s.kind == HALFLINE}
    for candidate in result.candidates:
        report = {}
        for root, seed in candidate.seeds.items():
            if seed == (0.0, 0.0):
                report[root] = "zero"
                continue
            line = by_root[root].coeffs
            theta = seed_boundary(seed).theta
            verdict = ratio_evidence(line, result.energy, theta, evidence_length(line, numerics) - 1, numerics)
            report[root] = verdict.verdict
            if verdict.verdict != SUBORDINATE_EXISTS:
                result.flags.append(f"weak_evidence:{candidate.name}:{root}")
        result.evidence[candidate.name] = report


def _classify_safe(graph: StarLikeGraph, coeffs: JacobiCoefficients, numerics: NumericsConfig,
                   E: float) -> EnergyClassification:
    try:
        return classify_energy(graph, coeffs, E, numerics)
    except SubordinacyError as e:
        logger.error(f"Classification failed at E={E}: {str(e)}")
        return EnergyClassification(E, {}, False, False, "error", flags=[f"error:{type(e).__name__}:{str(e)}"])


@dataclass
class ScanResult:
    classifications: List[EnergyClassification]
    summary: Dict[str, int]

    @property
    def errors(self) -> List[EnergyClassification]:
        return [c for c in self.classifications if c.verdict == "error"]


def scan(graph: StarLikeGraph, coeffs: JacobiCoefficients, grid: Sequence[float],
         numerics: Optional[NumericsConfig] = None, jobs: int = 1) -> ScanResult:
    """classify_energy over a grid; results keep grid order for any ``jobs``"""
    numerics = numerics or default_numerics()
    grid = [float(E) for E in grid]
    if not grid:
        return ScanResult([], {})
    logger.info(f"Scanning {len(grid)} energies in [{min(grid)}, {max(grid)}] with {jobs} job(s)")
    work = partial(_classify_safe, graph, coeffs, numerics)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(work, grid, chunksize=max(1, len(grid) // (4 * jobs))))
    else:
        results = [work(E) for E in grid]
    summary = dict(sorted(Counter(r.verdict for r in results).items()))
    logger.info(f"Scan finished: {summary}")
    return ScanResult(results, summary)


def extend_compact_solution(graph: StarLikeGraph, coeffs: JacobiCoefficients,
                            candidate: CompactSolutionCandidate, E: float, length: int,
                            numerics: Optional[NumericsConfig] = None) -> Dict[str, HalfLineSolution]:
    """Continue compact values along every half-line by the difference equation"""
    numerics = numerics or default_numerics()
    A = compact_adjacency(graph, coeffs)
    alpha = np.asarray(candidate.alpha, dtype=float)
    scale = max(1.0, float(np.max(np.abs(alpha)))) * max(1.0, coeffs.bound)
    pushed = A @ alpha
    for i, v in enumerate(graph.compact_vertices):
        if v in coeffs.halfline_data:
            continue
        residual = abs(pushed[i] + (coeffs.b_compact[v] - E) * alpha[i])
        if residual > FREE_EQUATION_TOL * scale:
            raise PreconditionError(f"candidate violates the eigenvalue equation at {v} (residual {residual:.3e})")
    out = {}
    for root in graph.halfline_roots:
        seed = candidate.seeds.get(root, (float(pushed[graph.index(root)]), float(alpha[graph.index(root)])))
        line = halfline_slice_coefficients(graph, coeffs, root)
        decaying = decaying_continuation(line, E, seed, length, numerics=numerics) if seed != (0.0, 0.0) else None
        out[root] = decaying if decaying is not None else iterate_seeded(line, E, seed, length, numerics)
    return out


def assembled_vector(graph: StarLikeGraph, candidate: CompactSolutionCandidate,
                     solutions: Dict[str, HalfLineSolution], depth: int) -> Vector:
    """phi on the compact component and the first ``depth`` sites of each half-line"""
    values = dict(zip(candidate.vertices, [float(x) for x in candidate.alpha]))
    for root, u in solutions.items():
        if u.length < depth + 1:
            raise PreconditionError(f"continuation at {root} is shorter than the window")
        actual = u.actual(depth + 1)
        for i in range(1, depth + 1):
            values[(root, i)] = float(actual[i])
    domain = set(candidate.vertices) | {(r, i) for r in solutions for i in range(1, depth + 1)}
    return Vector(values, frozenset(domain))


def extension_residual(graph: StarLikeGraph, coeffs: JacobiCoefficients, candidate: CompactSolutionCandidate,
                       solutions: Dict[str, HalfLineSolution], E: float, depth: int) -> float:
    """Largest |(J phi - E phi)(u)| relative to the local size of phi"""
    phi = assembled_vector(graph, candidate, solutions, depth)
    window = list(graph.compact_vertices) + [(r, i) for r in solutions for i in range(1, depth)]
    applied = apply_operator(graph, coeffs, phi, window)
    bound = max(1.0, coeffs.bound)
    worst = 0.0
    for u in window:
        local = abs(phi[u])
        for w, _ in neighbors(graph, coeffs, u):
            local = max(local, abs(phi[w]))
        residual = abs(applied[u] - E * phi[u])
        if local > 0:
            worst = max(worst, residual / (bound * local))
        elif residual > 0:
            return float("inf")
    return worst


@dataclass
class StieltjesResult:
    energies: np.ndarray
    density: np.ndarray
    point_masses: List[Tuple[float, float]]
    flags: List[str] = field(default_factory=list)


def sample_ladder(fn, energies: Sequence[float], ladder: Sequence[float]) -> np.ndarray:
    """fn(E + i eps) with the ladder along axis 0"""
    return np.array([[fn(E + 1j * eps) for E in energies] for eps in ladder], dtype=complex)


def stieltjes_invert(energies: Sequence[float], ladder: Sequence[float], samples: np.ndarray,
                     mass_floor: float = 1e-6,
                     numerics: Optional[NumericsConfig] = None) -> StieltjesResult:
    """Density Im m(E + i0)/pi and atoms where eps Im m(E + i eps) has a positive limit"""
    numerics = numerics or default_numerics()
    energies = np.asarray(energies, dtype=float)
    ladder = np.asarray(ladder, dtype=float)
    samples = np.asarray(samples)
    density = np.empty(len(energies))
    flags = []
    hits = []
    for i, E in enumerate(energies):
        im = samples[:, i].imag
        est = limit_of(ladder, im, numerics.divergence_slope)
        if est.converged:
            density[i] = est.value / math.pi
        elif est.divergent:
            density[i] = math.inf
        else:
            density[i] = im[-1] / math.pi
            flags.append(f"unsettled:{E}")
        mass = limit_of(ladder, ladder * im, numerics.divergence_slope)
        if mass.converged and mass.value > mass_floor:
            hits.append((i, float(mass.value)))

    point_masses = []
    run = []
    for i, w in hits:
        if run and i != run[-1][0] + 1:
            point_masses.append(_best_of(run, energies))
            run = []
        run.append((i, w))
    if run:
        point_masses.append(_best_of(run, energies))
    return StieltjesResult(energies, density, point_masses, flags)


def _best_of(run, energies) -> Tuple[float, float]:
    i, w = max(run, key=lambda item: item[1])
    return float(energies[i]), w


def _theta_near(slc: HalfLineSlice, E: float, eta: float, reference: Optional[float]) -> Optional[float]:
    m = m_k(slc, E + 1j * eta)
    if abs(m.imag) > 1e-6 * max(1.0, abs(m) ** 2):
        return None
    theta = math.atan2(1.0, m.real)
    if reference is not None:
        theta += math.pi * round((reference - theta) / math.pi)
    return theta


def _gap_matrix(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float, thetas: Dict[str, float]) -> np.ndarray:
    records = {root: HalfLineStatus(root, REAL_LIMIT, None, theta) for root, theta in thetas.items()}
    return subordinate_constraints(graph, coeffs, E, records)


def locate_eigenvalues(graph: StarLikeGraph, coeffs: JacobiCoefficients, interval: Tuple[float, float],
                       samples: int = 400, numerics: Optional[NumericsConfig] = None,
                       eta: float = 1e-12) -> List[float]:
    """Energies in a spectral gap where the boundary system has a kernel"""
    numerics = numerics or default_numerics()
    slices = [s for s in build_slices(graph, coeffs, numerics) if s.kind == HALFLINE]
    grid = np.linspace(interval[0], interval[1], samples)
    thetas = []
    for E in grid:
        row = {}
        for slc in slices:
            theta = _theta_near(slc, E, eta, None)
            if theta is None:
                row = None
                break
            row[slc.root] = theta
        thetas.append(row)

    def unwrapped(i):
        if thetas[i] is None or i == 0 or thetas[i - 1] is None:
            return thetas[i]
        prev = thetas[i - 1]
        return {r: t + math.pi * round((prev[r] - t) / math.pi) for r, t in thetas[i].items()}

    for i in range(1, len(thetas)):
        thetas[i] = unwrapped(i)

    def det_at(E, reference):
        row = {}
        for slc in slices:
            theta = _theta_near(slc, E, eta, reference[slc.root])
            if theta is None:
                return math.nan
            row[slc.root] = theta
        return float(np.linalg.det(_gap_matrix(graph, coeffs, E, row)))

    values = [det_at(E, t) if t is not None else math.nan for E, t in zip(grid, thetas)]
    found = []
    for i in range(len(grid) - 1):
        left, right = values[i], values[i + 1]
        if not (math.isfinite(left) and math.isfinite(right)):
            continue
        if left == 0.0:
            found.append(float(grid[i]))
        elif left * right < 0:
            reference = thetas[i]
            try:
                found.append(float(brentq(det_at, grid[i], grid[i + 1], args=(reference,), xtol=1e-14)))
            except ValueError as e:
                logger.warning(f"Root refinement failed in [{grid[i]}, {grid[i + 1]}]: {str(e)}")
    if any(t is None for t in thetas):
        logger.warning(f"Part of {interval} is not in a spectral gap of every half-line; skipped there")
    logger.debug(f"locate_eigenvalues on {interval}: {found}")
    return sorted(found)
