"""The compact-component matrix M(z) = P_C (J - z)^-1 P_C.

M(z) is never built from large truncations in production: each compact
vertex contributes one scalar m-function of its slice, and

    M(z)^-1 = A + diag(1/m_1(z), ..., 1/m_n(z))

with A the compact adjacency. ``direct_oracle`` solves a finite section
directly and exists to check this identity.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import splu

from config import NumericsConfig, default_numerics
from errors import OracleConvergenceError, PreconditionError, SingularSchurError
from extrapolation import LimitEstimate, eps_ladder, limit_of, limits_of_array
from graph_model import (JacobiCoefficients, StarLikeGraph, compact_adjacency, halfline_slice_coefficients,
                         truncate_sparse, validate)
from halfline import MFunctionEvaluator, m_function

HALFLINE = "halfline"
SINGLETON = "singleton"


@dataclass
class HalfLineSlice:
    """J_k = P_k J P_k on the compact vertex v_k and its half-line, if any"""
    root: str
    kind: str
    b: float
    evaluator: Optional[MFunctionEvaluator] = None

    @property
    def coeffs(self):
        return self.evaluator.coeffs if self.evaluator is not None else None


def build_slices(graph: StarLikeGraph, coeffs: JacobiCoefficients,
                 numerics: Optional[NumericsConfig] = None) -> List[HalfLineSlice]:
    """One slice per compact vertex, in compact order"""
    numerics = numerics or default_numerics()
    slices = []
    for v in graph.compact_vertices:
        b = coeffs.b_compact[v]
        if v in coeffs.halfline_data:
            evaluator = MFunctionEvaluator(halfline_slice_coefficients(graph, coeffs, v), numerics)
            slices.append(HalfLineSlice(v, HALFLINE, b, evaluator))
        else:
            slices.append(HalfLineSlice(v, SINGLETON, b))
    return slices


def m_k(slc: HalfLineSlice, z: complex) -> complex:
    z = complex(z)
    if slc.kind == SINGLETON:
        if z.imag <= 0:
            raise PreconditionError(f"m_k needs Im z > 0, got {z}")
        return 1.0 / (slc.b - z)
    return m_function(slc.evaluator, z)


@dataclass
class MMatrix:
    z: complex
    entries: np.ndarray
    vertices: Sequence[str] = ()

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T)))

    def im_part(self) -> np.ndarray:
        """(M - M*) / 2i"""
        return (self.entries - self.entries.conj().T) / 2j

    def min_im_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.im_part())))

    def trace(self) -> complex:
        return complex(np.trace(self.entries))


def schur_matrix(graph: StarLikeGraph, coeffs: JacobiCoefficients, z: complex,
                 slices: Optional[List[HalfLineSlice]] = None) -> np.ndarray:
    """K(z) = A + diag(1/m_k(z))"""
    slices = slices or build_slices(graph, coeffs)
    K = compact_adjacency(graph, coeffs).astype(complex)
    for i, slc in enumerate(slices):
        K[i, i] += 1.0 / m_k(slc, z)
    return K


def assemble(graph: StarLikeGraph, coeffs: JacobiCoefficients, z: complex,
             slices: Optional[List[HalfLineSlice]] = None,
             numerics: Optional[NumericsConfig] = None) -> MMatrix:
    numerics = numerics or default_numerics()
    z = complex(z)
    if z.imag <= 0:
        raise PreconditionError(f"assemble needs Im z > 0, got {z}")
    slices = slices or build_slices(graph, coeffs, numerics)
    K = schur_matrix(graph, coeffs, z, slices)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > numerics.cond_limit:
        raise SingularSchurError(f"K(z) is numerically singular at z={z} (condition {cond:.3e})")
    entries = lu_solve(lu_factor(K), np.eye(K.shape[0], dtype=complex))
    return MMatrix(z, entries, tuple(graph.compact_vertices))


def im_trace(graph: StarLikeGraph, coeffs: JacobiCoefficients, z: complex,
             slices: Optional[List[HalfLineSlice]] = None) -> float:
    return assemble(graph, coeffs, z, slices).trace().imag


def direct_oracle(graph: StarLikeGraph, coeffs: JacobiCoefficients, z: complex, depth: int = 256,
                  tolerance: float = 1e-10, max_depth: int = 65536) -> np.ndarray:
    """Compact block of (J_N - z)^-1 on growing finite sections"""
    z = complex(z)
    if z.imag < 0.05:
        raise PreconditionError(f"direct_oracle needs Im z >= 0.05, got {z}")
    report = validate(graph, coeffs)
    if not report.ok:
        raise PreconditionError("direct_oracle needs a valid graph: " + "; ".join(report.messages()))
    n = graph.n
    previous = None
    while depth <= max_depth:
        matrix, _ = truncate_sparse(graph, coeffs, depth)
        shifted = (matrix - z * sparse.identity(matrix.shape[0], format="csc")).astype(complex).tocsc()
        rhs = np.zeros((matrix.shape[0], n), dtype=complex)
        rhs[np.arange(n), np.arange(n)] = 1.0
        block = splu(shifted).solve(rhs)[:n, :]
        if previous is not None:
            gap = np.max(np.abs(block - previous))
            if gap < tolerance * (1 + np.max(np.abs(block))):
                logger.debug(f"direct_oracle converged at depth {depth} (gap {gap:.2e})")
                return block
        previous = block
        depth *= 2
    raise OracleConvergenceError(f"finite sections did not settle at z={z} by depth {max_depth}")


@dataclass
class BoundaryValue:
    """M(E + i eps) along a ladder and its per-entry limits"""
    energy: float
    ladder: np.ndarray
    samples: np.ndarray
    entries: np.ndarray
    im_trace: LimitEstimate
    flags: List[str] = field(default_factory=list)

    def limit_matrix(self) -> Optional[np.ndarray]:
        """Matrix of limits, or None when some entry is not converged"""
        if not all(e.converged for e in self.entries.flat):
            return None
        return np.array([[e.value for e in row] for row in self.entries], dtype=complex)

    def divergent_entries(self) -> List[tuple]:
        n = self.entries.shape[0]
        return [(i, j) for i in range(n) for j in range(n) if self.entries[i, j].divergent]

    def to_dict(self) -> dict:
        return {
            "E": self.energy,
            "ladder": self.ladder.tolist(),
            "im_trace": self.im_trace.to_dict(),
            "entries": [[e.to_dict() for e in row] for row in self.entries],
            "flags": list(self.flags),
        }


def default_ladder(numerics: Optional[NumericsConfig] = None) -> np.ndarray:
    numerics = numerics or default_numerics()
    return eps_ladder(numerics.eps_min_exp, numerics.eps_max_exp)


def boundary_value(graph: StarLikeGraph, coeffs: JacobiCoefficients, E: float,
                   ladder: Optional[Sequence[float]] = None,
                   numerics: Optional[NumericsConfig] = None,
                   slices: Optional[List[HalfLineSlice]] = None) -> BoundaryValue:
    """Extrapolated M(E + i0) with divergence and inconclusive flags"""
    numerics = numerics or default_numerics()
    ladder = default_ladder(numerics) if ladder is None else np.asarray(ladder, dtype=float)
    if np.any(np.diff(ladder) >= 0):
        raise PreconditionError("eps ladder must be strictly decreasing")
    slices = slices or build_slices(graph, coeffs, numerics)
    samples = []
    for eps in ladder:
        try:
            samples.append(assemble(graph, coeffs, E + 1j * eps, slices, numerics).entries)
        except SingularSchurError as e:
            logger.warning(f"Ladder stopped at eps={eps:.3e}: {str(e)}")
            break
    flags = []
    if len(samples) < len(ladder):
        flags.append("ladder_truncated")
    if len(samples) < 4:
        n = graph.n
        empty = np.empty((n, n), dtype=object)
        for idx in np.ndindex(n, n):
            empty[idx] = LimitEstimate("inconclusive", None, np.inf, np.nan)
        return BoundaryValue(E, ladder, np.array(samples), empty,
                             LimitEstimate("inconclusive", None, np.inf, np.nan), flags + ["inconclusive"])
    used = ladder[:len(samples)]
    stack = np.array(samples)
    entries = limits_of_array(used, stack, numerics.divergence_slope)
    trace = limit_of(used, np.trace(stack, axis1=1, axis2=2).imag, numerics.divergence_slope)
    if any(e.divergent for e in entries.flat) or trace.divergent:
        flags.append("divergent")
    if any(e.status == "inconclusive" for e in entries.flat):
        flags.append("inconclusive")
    logger.debug(f"boundary_value E={E}: Im tr {trace.status} (slope {trace.slope:.3f}), flags={flags}")
    return BoundaryValue(E, used, stack, entries, trace, flags)


def slice_ladder_samples(slices: List[HalfLineSlice], E: float, ladder: Sequence[float]) -> Dict[str, np.ndarray]:
    """m_k(E + i eps) along the ladder, one array per half-line slice"""
    return {slc.root: np.array([m_k(slc, E + 1j * eps) for eps in ladder])
            for slc in slices if slc.kind == HALFLINE}


def slice_boundary_values(slices: List[HalfLineSlice], E: float, ladder: Sequence[float],
                          numerics: Optional[NumericsConfig] = None,
                          samples: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, LimitEstimate]:
    """m_k(E + i0) for every half-line slice"""
    numerics = numerics or default_numerics()
    samples = slice_ladder_samples(slices, E, ladder) if samples is None else samples
    return {root: limit_of(ladder, values, numerics.divergence_slope) for root, values in samples.items()}
