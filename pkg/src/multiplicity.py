"""Multiplicity bounds at singular energies."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.sparse.linalg import eigsh

from config import NumericsConfig, default_numerics
from errors import PreconditionError
from extrapolation import limits_of_array
from graph_model import JacobiCoefficients, StarLikeGraph, compact_adjacency, truncate_sparse, window_vertices
from halfline import SUBORDINATE_EXISTS, HalfLineSolution, l2_evidence, ratio_evidence, seed_boundary
from classification import (DIVERGENT, INCONCLUSIVE, CompactSolutionCandidate,
                            EnergyClassification, boundary_statuses, classify_energy, evidence_length,
                            extend_compact_solution, extension_residual, kernel_basis, make_candidate,
                            subordinate_constraints)
from m_matrix import HALFLINE, assemble, build_slices, default_ladder

GRAM_CONDITION_LIMIT = 1e12
RESIDUAL_WINDOW = 64


@dataclass
class OmegaMatrix:
    pivot: int
    matrix: Optional[np.ndarray]
    errors: np.ndarray
    flagged: List[Tuple[int, int]] = field(default_factory=list)


def omega_matrix(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                 ladder: Optional[Sequence[float]] = None,
                 numerics: Optional[NumericsConfig] = None,
                 pivot: Optional[Union[int, str]] = None) -> OmegaMatrix:
    """Limits of M_lj(E + i eps) / M_kk(E + i eps) up to the positive factor d mu_k / d mu.

    The pivot k defaults to the largest |M_kk| at the smallest eps. Any pivot whose
    diagonal ratio stays bounded away from zero gives the same matrix up to a positive scale.
    """
    numerics = numerics or default_numerics()
    ladder = default_ladder(numerics) if ladder is None else np.asarray(ladder, dtype=float)
    slices = build_slices(graph, coeffs, numerics)
    stack = np.array([assemble(graph, coeffs, E + 1j * eps, slices, numerics).entries for eps in ladder])
    diagonal = np.abs(np.diagonal(stack[-1]))
    if pivot is None:
        pivot = int(np.argmax(diagonal))
    elif isinstance(pivot, str):
        if pivot not in graph.compact_vertices:
            raise PreconditionError(f"pivot {pivot} is not a compact vertex")
        pivot = graph.compact_vertices.index(pivot)
    elif not 0 <= pivot < graph.n:
        raise PreconditionError(f"pivot index {pivot} out of range for {graph.n} vertices")
    if diagonal[pivot] <= np.finfo(float).tiny:
        raise PreconditionError(f"no valid pivot at E={E}: M_kk vanishes for k={graph.compact_vertices[pivot]}")
    ratios = stack / stack[:, pivot, pivot][:, None, None]
    limits = limits_of_array(ladder, ratios, numerics.divergence_slope)
    n = graph.n
    flagged = [(l, j) for l in range(n) for j in range(n) if not limits[l, j].converged]
    errors = np.array([[limits[l, j].error for j in range(n)] for l in range(n)])
    if flagged:
        logger.warning(f"omega at E={E}: {len(flagged)} ratios did not settle")
        return OmegaMatrix(pivot, None, errors, flagged)
    matrix = np.array([[complex(limits[l, j].value).real for j in range(n)] for l in range(n)])
    logger.debug(f"omega at E={E}: pivot {graph.compact_vertices[pivot]}")
    return OmegaMatrix(pivot, matrix, errors)


def rank_of(matrix: np.ndarray, sv_threshold: float) -> int:
    """Number of singular values above sv_threshold * sigma_max"""
    matrix = np.asarray(matrix)
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > sv_threshold * s[0]))


def omega_rank(omega: OmegaMatrix, numerics: NumericsConfig) -> Optional[int]:
    """Rank with a relative threshold floored by the extrapolation error"""
    if omega.matrix is None:
        return None
    s_max = np.linalg.norm(omega.matrix, 2)
    if s_max == 0:
        return 0
    err = float(np.max(omega.errors)) if omega.errors.size else 0.0
    return rank_of(omega.matrix, max(numerics.omega_sv_threshold, 10 * err / s_max))


@dataclass
class SubordinateElement:
    candidate: CompactSolutionCandidate
    is_l2: bool
    l2: Dict[str, dict]
    subordinacy: Dict[str, str]
    residual: float

    @property
    def name(self) -> str:
        return self.candidate.name

    def to_dict(self) -> dict:
        out = self.candidate.to_dict()
        out.update({"is_l2": self.is_l2, "l2": self.l2, "subordinacy": self.subordinacy, "residual": self.residual})
        return out


@dataclass
class SubordinateSpaceBasis:
    energy: float
    elements: List[SubordinateElement]
    dim_range: Tuple[int, int]
    gram_condition: float = 1.0
    flags: List[str] = field(default_factory=list)

    @property
    def dimension(self) -> Optional[int]:
        lo, hi = self.dim_range
        return lo if lo == hi else None

    def element(self, name: str) -> SubordinateElement:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def has_l2(self) -> bool:
        return any(e.is_l2 for e in self.elements)


def _normalize(alpha: np.ndarray) -> np.ndarray:
    alpha = np.where(np.abs(alpha) < 1e-12 * np.max(np.abs(alpha)), 0.0, alpha)
    alpha = alpha / np.max(np.abs(alpha))
    first = alpha[np.flatnonzero(alpha)[0]]
    return alpha * np.sign(first)


def _vanishing_directions(graph: StarLikeGraph, coeffs: JacobiCoefficients, kernel: np.ndarray,
                          root: str, threshold: float) -> np.ndarray:
    """Kernel vectors whose continuation along ``root`` is zero"""
    i = graph.index(root)
    A = compact_adjacency(graph, coeffs)
    conditions = np.vstack([kernel[i], (A @ kernel)[i]])
    inner, _ = kernel_basis(conditions, kernel.shape[1], threshold)
    return kernel @ inner


def _prefix(u: HalfLineSolution, length: int) -> HalfLineSolution:
    return HalfLineSolution(u.energy, u.boundary, u.seed, u.values[:length], u.log_scales[:length])


def _assess(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float, candidate: CompactSolutionCandidate,
            numerics: NumericsConfig) -> SubordinateElement:
    slices = {s.root: s for s in build_slices(graph, coeffs, numerics) if s.kind == HALFLINE}
    lengths = {r: evidence_length(slices[r].coeffs, numerics) for r in graph.halfline_roots}
    solutions = extend_compact_solution(graph, coeffs, candidate, E, max(lengths.values()), numerics)
    depth = min(RESIDUAL_WINDOW, min(lengths.values()) - 1)
    residual = extension_residual(graph, coeffs, candidate, solutions, E, depth)
    l2 = {}
    subordinacy = {}
    is_l2 = True
    for root, u in solutions.items():
        if u.is_zero():
            subordinacy[root] = "zero"
            continue
        length = lengths[root]
        evidence = l2_evidence(_prefix(u, length), numerics=numerics)
        l2[root] = evidence.to_dict()
        is_l2 = is_l2 and evidence.is_l2
        verdict = ratio_evidence(slices[root].coeffs, E, seed_boundary(u.seed).theta, length - 1, numerics)
        subordinacy[root] = verdict.verdict
    return SubordinateElement(candidate, is_l2, l2, subordinacy, residual)


def _window_gram(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                 elements: List[SubordinateElement], numerics: NumericsConfig) -> float:
    if len(elements) < 2:
        return 1.0
    vectors = []
    for e in elements:
        solutions = extend_compact_solution(graph, coeffs, e.candidate, E, RESIDUAL_WINDOW + 1, numerics)
        parts = [np.asarray(e.candidate.alpha, dtype=float)]
        parts += [solutions[r].actual(RESIDUAL_WINDOW + 1)[1:] for r in graph.halfline_roots]
        vectors.append(np.concatenate(parts))
    V = np.array(vectors)
    return float(np.linalg.cond(V @ V.T))


def subordinate_space(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                      numerics: Optional[NumericsConfig] = None,
                      classification: Optional[EnergyClassification] = None) -> SubordinateSpaceBasis:
    """Basis of the subordinate solutions at E.

    Elements vanishing on single half-lines are preferred: square-summable
    ones first in root order, then the rest in reverse root order, then any
    kernel direction still missing. With one element they are named ``psi``
    (and ``psi_tilde`` for a second).
    """
    numerics = numerics or default_numerics()
    if classification is None:
        classification = classify_energy(graph, coeffs, E, numerics, check_evidence=False)
    records = classification.records
    strict = subordinate_constraints(graph, coeffs, E, records, True)
    kernel, _ = kernel_basis(strict, graph.n, numerics.kernel_sv_threshold)
    lower = kernel.shape[1]
    upper = classification.kernel_range[1]
    flags = []
    if lower != upper:
        flags.append("inconclusive_dimension")
    if lower == 0:
        return SubordinateSpaceBasis(E, [], (lower, upper), 1.0, flags)

    roots = list(graph.halfline_roots)
    proposals = []
    for root in roots:
        directions = _vanishing_directions(graph, coeffs, kernel, root, numerics.kernel_sv_threshold)
        if 0 < directions.shape[1] < lower:
            proposals.extend((root, directions[:, j]) for j in range(directions.shape[1]))

    assessed = []
    for root, alpha in proposals:
        candidate = make_candidate(graph, coeffs, E, _normalize(alpha), f"vanish_{root}")
        assessed.append((root, _assess(graph, coeffs, E, candidate, numerics)))

    chosen: List[SubordinateElement] = []

    def independent(alpha) -> bool:
        stack = np.array([c.candidate.alpha for c in chosen] + [alpha])
        return rank_of(stack, 1e-8) == len(stack)

    for root, element in assessed:
        if element.is_l2 and len(chosen) < lower and independent(element.candidate.alpha):
            chosen.append(element)
    for root, element in reversed(assessed):
        if not element.is_l2 and len(chosen) < lower and independent(element.candidate.alpha):
            chosen.append(element)
    for j in range(lower):
        if len(chosen) >= lower:
            break
        alpha = _normalize(kernel[:, j])
        if independent(alpha):
            chosen.append(_assess(graph, coeffs, E, make_candidate(graph, coeffs, E, alpha, f"kernel_{j}"), numerics))

    names = ["psi", "psi_tilde"]
    for i, element in enumerate(chosen):
        element.candidate.name = names[i] if i < len(names) else f"psi_{i}"
        for root, verdict in element.subordinacy.items():
            if verdict not in ("zero", SUBORDINATE_EXISTS):
                flags.append(f"weak_evidence:{element.name}:{root}")
    cond = _window_gram(graph, coeffs, E, chosen, numerics)
    if cond > GRAM_CONDITION_LIMIT:
        flags.append("ill_conditioned_basis")
    logger.info(f"Subordinate space at E={E}: dim {lower}..{upper}, "
                f"l2 elements {[e.name for e in chosen if e.is_l2]}")
    return SubordinateSpaceBasis(E, chosen, (lower, upper), cond, flags)


@dataclass
class MultiplicityReport:
    energy: float
    pivot: Optional[str]
    omega: Optional[np.ndarray]
    omega_rank: Optional[int]
    dim_subordinate_space: Tuple[int, int]
    bound: Optional[int]
    eigenvalue_flag: bool
    sc_bound_applicable: bool
    k_halflines: int
    conjectured_cap: int
    fired: List[str] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    basis: Optional[SubordinateSpaceBasis] = None

    def to_dict(self) -> dict:
        return {
            "E": self.energy,
            "pivot": self.pivot,
            "omega": None if self.omega is None else self.omega.tolist(),
            "omega_rank": self.omega_rank,
            "dim_subordinate_space": list(self.dim_subordinate_space),
            "bound": self.bound,
            "eigenvalue_flag": self.eigenvalue_flag,
            "sc_bound_applicable": self.sc_bound_applicable,
            "k_halflines": self.k_halflines,
            "conjectured_cap": self.conjectured_cap,
            "fired": self.fired,
            "flags": self.flags,
            "basis": [] if self.basis is None else [e.to_dict() for e in self.basis.elements],
        }


def multiplicity_bound(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                       numerics: Optional[NumericsConfig] = None,
                       ladder: Optional[Sequence[float]] = None) -> MultiplicityReport:
    numerics = numerics or default_numerics()
    classification = classify_energy(graph, coeffs, E, numerics, ladder, check_evidence=False)
    if not classification.singular_candidate:
        raise PreconditionError(f"E={E} is not a singular candidate ({classification.verdict})")
    basis = subordinate_space(graph, coeffs, E, numerics, classification)
    flags = list(basis.flags)
    try:
        omega = omega_matrix(graph, coeffs, E, ladder, numerics)
        rank = omega_rank(omega, numerics)
        pivot = graph.compact_vertices[omega.pivot]
        matrix = omega.matrix
    except PreconditionError as e:
        logger.warning(str(e))
        rank, pivot, matrix = None, None, None
        flags.append("no_pivot")
    if rank is None:
        flags.append("omega_inconclusive")

    k = graph.k
    lo, hi = basis.dim_range
    fired = ["dim_subordinate_space"]
    bound = hi
    eigenvalue = basis.has_l2
    sc = not eigenvalue
    if sc and k < bound:
        bound = k
        fired.append("halfline_cap")
    if rank is not None and lo == hi and rank > lo:
        flags.append("rank_exceeds_dimension")
        logger.warning(f"E={E}: omega rank {rank} exceeds dim S {lo}")
    return MultiplicityReport(E, pivot, matrix, rank, (lo, hi), bound, eigenvalue, sc, k, max(k - 1, 0),
                              fired, flags, basis)


@dataclass
class StarOverlap:
    energy: float
    kind: str
    memberships: Dict[str, bool]
    bound: Optional[int]
    dim_subordinate_space: Optional[int] = None

    def to_dict(self) -> dict:
        return {"E": self.energy, "kind": self.kind, "memberships": self.memberships,
                "bound": self.bound, "dim_subordinate_space": self.dim_subordinate_space}


def star_centre(graph: StarLikeGraph) -> str:
    """The centre of a star: one vertex without a half-line, joined to every leaf, leaves carrying half-lines"""
    free = [v for v in graph.compact_vertices if v not in graph.halfline_roots]
    if len(free) != 1:
        raise PreconditionError("a star has exactly one vertex without a half-line")
    centre = free[0]
    leaves = [v for v in graph.compact_vertices if v != centre]
    if not leaves or sorted(graph.compact_neighbors(centre)) != sorted(leaves):
        raise PreconditionError("the centre must be joined to every leaf")
    if any(graph.compact_neighbors(v) != [centre] for v in leaves):
        raise PreconditionError("leaves of a star are joined to the centre only")
    return centre


def star_overlap_classify(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                          numerics: Optional[NumericsConfig] = None) -> StarOverlap:
    """Overlap of branch Dirichlet singular sets at E"""
    numerics = numerics or default_numerics()
    star_centre(graph)
    n = graph.k
    slices = build_slices(graph, coeffs, numerics)
    records = boundary_statuses(slices, E, numerics)
    memberships = {r: s.status == DIVERGENT for r, s in records.items()}
    if any(s.status == INCONCLUSIVE for s in records.values()):
        return StarOverlap(E, INCONCLUSIVE, memberships, None)
    if sum(memberships.values()) >= 2:
        kernel, _ = kernel_basis(subordinate_constraints(graph, coeffs, E, records), graph.n,
                                 numerics.kernel_sv_threshold)
        return StarOverlap(E, "S1", memberships, n - 1, kernel.shape[1])
    classification = classify_energy(graph, coeffs, E, numerics, slices=slices, check_evidence=False)
    if classification.singular_candidate:
        return StarOverlap(E, "S2∩S", memberships, 1, classification.kernel_dim)
    return StarOverlap(E, "neither", memberships, None, classification.kernel_dim)


@dataclass
class EigenCheck:
    eigenvalue: float
    window_mass: float
    depth: int


def dense_eigen_check(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float, depth: int = 2000,
                      window: int = 200) -> EigenCheck:
    """Eigenvalue of a finite section nearest E and the eigenvector mass near the compact component"""
    matrix, order = truncate_sparse(graph, coeffs, depth)
    values, vectors = eigsh(matrix.astype(float), k=1, sigma=E, which="LM")
    vector = vectors[:, 0]
    inside = set(window_vertices(graph, window))
    mask = np.array([v in inside for v in order])
    mass = float(np.sum(np.abs(vector[mask]) ** 2) / np.sum(np.abs(vector) ** 2))
    return EigenCheck(float(values[0]), mass, depth)
