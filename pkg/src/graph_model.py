"""Star-like graphs carrying Jacobi coefficients.

A graph is a finite connected compact component with at most one copy of the
half-line attached at selected roots. Compact vertices are named by strings,
half-line sites by ``(root, i)`` with ``i >= 1``.
"""
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import sparse

from errors import UndefinedVectorError

Vertex = Union[str, Tuple[str, int]]

TAIL_RULES = ("constant", "periodic", "generator", "finite")


def edge_key(u: str, v: str) -> FrozenSet[str]:
    return frozenset((u, v))


@dataclass(frozen=True)
class TailRule:
    """How a coefficient sequence continues past its explicit prefix.

    ``constant`` repeats ``(b[0], a[0])``; ``periodic`` cycles through the
    patterns ``b`` and ``a`` starting right after each prefix; ``generator``
    calls ``generator(key, offset + n)`` returning ``(b_n, a_n)``, with ``name``
    the registry entry it came from; ``finite``
    terminates the sequence (finite Jacobi matrices only, never a valid
    half-line of a graph).
    """
    rule: str = "constant"
    b: Tuple[float, ...] = (0.0,)
    a: Tuple[float, ...] = (1.0,)
    generator: Optional[Callable[[Any, int], Tuple[float, float]]] = None
    key: Any = None
    name: Optional[str] = None
    offset: int = 0
    bound: Optional[float] = None
    depth_limit: int = 4096

    def shifted(self, k: int) -> "TailRule":
        if self.rule == "generator":
            return replace(self, offset=self.offset + k)
        return self

    def value_bound(self) -> float:
        if self.rule == "generator":
            return float(self.bound) if self.bound is not None else math.inf
        if self.rule == "finite":
            return 0.0
        return max([abs(x) for x in self.b + self.a] or [0.0])


@dataclass(frozen=True)
class BranchMeasure:
    """Exact spectral data of a measure-derived half-line.

    The line is the Jacobi matrix of ``spec`` with ``tan(theta)`` added at
    the origin, so ``1/m(z) = 1/m_spec(z) + tan(theta)``.
    """
    spec: Any
    theta: float = 0.0

    @property
    def shift(self) -> float:
        return math.tan(self.theta)


@dataclass(frozen=True)
class HalfLineCoefficients:
    """Origin-indexed half-line: ``b(n)`` for ``n >= 1``, ``a(n)`` couples ``n`` and ``n + 1``."""
    b: Tuple[float, ...] = ()
    a: Tuple[float, ...] = ()
    tail: TailRule = field(default_factory=TailRule)
    measure: Optional[BranchMeasure] = None

    def b_at(self, n: int) -> float:
        if n <= len(self.b):
            return self.b[n - 1]
        return self._tail_value(n, len(self.b), 0)

    def a_at(self, n: int) -> float:
        if n <= len(self.a):
            return self.a[n - 1]
        return self._tail_value(n, len(self.a), 1)

    def _tail_value(self, n: int, prefix: int, which: int) -> float:
        tail = self.tail
        if tail.rule == "constant":
            return (tail.b, tail.a)[which][0]
        if tail.rule == "periodic":
            pattern = (tail.b, tail.a)[which]
            return pattern[(n - prefix - 1) % len(pattern)]
        if tail.rule == "generator":
            return float(tail.generator(tail.key, tail.offset + n)[which])
        raise IndexError(f"finite half-line has no coefficient at index {n}")

    @property
    def length(self) -> Optional[int]:
        """Number of sites of a finite line, None for an infinite one"""
        if self.tail.rule == "finite":
            return len(self.b)
        return None

    def b_array(self, count: int) -> np.ndarray:
        return np.array([self.b_at(n) for n in range(1, count + 1)], dtype=float)

    def a_array(self, count: int) -> np.ndarray:
        return np.array([self.a_at(n) for n in range(1, count + 1)], dtype=float)

    def prefix_length(self) -> int:
        return max(len(self.b), len(self.a))

    def shifted(self, k: int) -> "HalfLineCoefficients":
        """Drop the first ``k`` sites"""
        if k <= 0:
            return self
        b_len = self._shifted_prefix(len(self.b), k, len(self.tail.b))
        a_len = self._shifted_prefix(len(self.a), k, len(self.tail.a))
        b = tuple(self.b_at(n) for n in range(k + 1, k + 1 + b_len))
        a = tuple(self.a_at(n) for n in range(k + 1, k + 1 + a_len))
        return HalfLineCoefficients(b=b, a=a, tail=self.tail.shifted(k), measure=None)

    def _shifted_prefix(self, prefix: int, k: int, period: int) -> int:
        if prefix >= k:
            return prefix - k
        if self.tail.rule == "periodic":
            # periodic phase is counted from the end of the prefix
            return (prefix - k) % period
        return 0

    def bound(self, sample: int = 0) -> float:
        values = [abs(x) for x in self.b + self.a]
        values.append(self.tail.value_bound())
        if self.tail.rule == "generator" and sample:
            for n in range(self.prefix_length() + 1, self.prefix_length() + sample + 1):
                values.append(abs(self.b_at(n)))
                values.append(abs(self.a_at(n)))
        return max(values)


def free_halfline(b: float = 0.0, a: float = 1.0) -> HalfLineCoefficients:
    return HalfLineCoefficients(tail=TailRule("constant", (float(b),), (float(a),)))


@dataclass(frozen=True)
class HalfLineData:
    """Half-line hanging at a root: ``lead = a_u(0)``, ``line.b(i) = b_u(i)``, ``line.a(i) = a_u(i)``"""
    lead: float
    line: HalfLineCoefficients
    measure: Optional[BranchMeasure] = None

    def as_slice(self, root_b: float) -> HalfLineCoefficients:
        """The half-line operator J_k with the root as origin"""
        return HalfLineCoefficients(
            b=(float(root_b),) + tuple(self.line.b),
            a=(float(self.lead),) + tuple(self.line.a),
            tail=self.line.tail.shifted(-1),
            measure=self.measure,
        )


@dataclass(frozen=True)
class StarLikeGraph:
    compact_vertices: Tuple[str, ...]
    compact_edges: Tuple[Tuple[str, str], ...] = ()
    halfline_roots: Tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.compact_vertices)

    @property
    def k(self) -> int:
        return len(self.halfline_roots)

    def index(self, vertex: str) -> int:
        return self.compact_vertices.index(vertex)

    def ordered_roots(self) -> List[str]:
        """Roots in compact-vertex order"""
        roots = set(self.halfline_roots)
        return [v for v in self.compact_vertices if v in roots]

    def compact_neighbors(self, vertex: str) -> List[str]:
        out = []
        for u, v in self.compact_edges:
            if u == vertex:
                out.append(v)
            elif v == vertex:
                out.append(u)
        return out

    def degree(self, vertex: Vertex) -> int:
        if isinstance(vertex, tuple):
            return 2
        return len(self.compact_neighbors(vertex)) + (1 if vertex in self.halfline_roots else 0)


@dataclass(frozen=True)
class JacobiCoefficients:
    b_compact: Dict[str, float]
    a_compact: Dict[FrozenSet[str], float] = field(default_factory=dict)
    halfline_data: Dict[str, HalfLineData] = field(default_factory=dict)

    def edge_weight(self, u: str, v: str) -> float:
        return self.a_compact[edge_key(u, v)]

    def diagonal(self, vertex: Vertex) -> float:
        if isinstance(vertex, tuple):
            root, i = vertex
            return self.halfline_data[root].line.b_at(i)
        return self.b_compact[vertex]

    @property
    def bound(self) -> float:
        values = [abs(x) for x in self.b_compact.values()]
        values += [abs(x) for x in self.a_compact.values()]
        for data in self.halfline_data.values():
            values.append(abs(data.lead))
            values.append(data.line.bound())
        return max(values or [0.0])


@dataclass(frozen=True)
class Vector:
    """Complex function on vertices.

    Without ``domain`` the vector is finitely supported (zero off its keys);
    with ``domain`` it is only defined on that finite window.
    """
    values: Mapping[Vertex, complex]
    domain: Optional[FrozenSet[Vertex]] = None

    def is_defined(self, vertex: Vertex) -> bool:
        return self.domain is None or vertex in self.domain

    def __getitem__(self, vertex: Vertex) -> complex:
        if not self.is_defined(vertex):
            raise UndefinedVectorError(f"vector undefined at {vertex!r}")
        return self.values.get(vertex, 0.0)

    def support(self) -> List[Vertex]:
        return [v for v, x in self.values.items() if x != 0]

    @staticmethod
    def delta(vertex: Vertex) -> "Vector":
        return Vector({vertex: 1.0})

    def combine(self, alpha: complex, other: "Vector") -> "Vector":
        """alpha * self + other"""
        keys = set(self.values) | set(other.values)
        if self.domain is None:
            domain = other.domain
        elif other.domain is None:
            domain = self.domain
        else:
            domain = self.domain & other.domain
        return Vector({k: alpha * self.values.get(k, 0.0) + other.values.get(k, 0.0) for k in keys}, domain)


@dataclass
class ValidationFailure:
    code: str
    subject: Any
    message: str


@dataclass
class ValidationReport:
    failures: List[ValidationFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add(self, code: str, subject: Any, message: str) -> None:
        self.failures.append(ValidationFailure(code, subject, message))

    def messages(self) -> List[str]:
        return [f"{f.code}: {f.message}" for f in self.failures]

    def codes(self) -> List[str]:
        return [f.code for f in self.failures]


def _finite(x: Any) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def _check_line(report: ValidationReport, root: str, data: HalfLineData) -> None:
    line = data.line
    if not _finite(data.lead) or data.lead == 0:
        report.add("zero_weight", (root, (root, 1)), f"edge ({root}, ({root}, 1)) has weight {data.lead}")
    for i, x in enumerate(line.b, start=1):
        if not _finite(x):
            report.add("nonfinite_b", (root, i), f"b at ({root}, {i}) is not a finite real")
    for i, x in enumerate(line.a, start=1):
        if not _finite(x) or x == 0:
            report.add("zero_weight", ((root, i), (root, i + 1)),
                       f"edge (({root}, {i}), ({root}, {i + 1})) has weight {x}")
    tail = line.tail
    if tail.rule not in TAIL_RULES:
        report.add("bad_tail", root, f"unknown tail rule {tail.rule!r} on half-line {root}")
    elif tail.rule == "finite":
        report.add("finite_halfline", root, f"half-line {root} terminates; half-lines must be infinite")
    elif tail.rule in ("constant", "periodic"):
        if not tail.b or not tail.a:
            report.add("bad_tail", root, f"empty tail pattern on half-line {root}")
        if any(x == 0 or not _finite(x) for x in tail.a):
            report.add("zero_weight", root, f"tail of half-line {root} has a zero or non-finite weight")
        if any(not _finite(x) for x in tail.b):
            report.add("nonfinite_b", root, f"tail of half-line {root} has a non-finite potential")
    else:
        if tail.generator is None:
            report.add("bad_tail", root, f"generator tail of half-line {root} has no callable")
            return
        if tail.bound is None or not _finite(tail.bound):
            report.add("unbounded", root, f"generator tail of half-line {root} declares no finite bound")
        start = line.prefix_length() + 1
        for n in range(start, start + tail.depth_limit):
            bn, an = line.b_at(n), line.a_at(n)
            if an == 0 or not _finite(an) or not _finite(bn):
                report.add("zero_weight", (root, n), f"generator on half-line {root} gives a={an}, b={bn} at {n}")
                break
            if tail.bound is not None and max(abs(bn), abs(an)) > tail.bound:
                report.add("unbounded", (root, n), f"generator on half-line {root} exceeds its bound at {n}")
                break


def validate(graph: StarLikeGraph, coeffs: JacobiCoefficients) -> ValidationReport:
    """Check every structural and coefficient invariant, collecting all failures"""
    report = ValidationReport()
    vertices = list(graph.compact_vertices)
    vset = set(vertices)
    if not vertices:
        report.add("empty_compact", None, "compact component has no vertices")
    if len(vset) != len(vertices):
        report.add("duplicate_vertex", None, "compact vertex names are not unique")
    for v in vertices:
        if not isinstance(v, str):
            report.add("bad_vertex", v, f"compact vertex {v!r} is not a string")

    seen = set()
    for u, v in graph.compact_edges:
        if u not in vset or v not in vset:
            report.add("unknown_vertex", (u, v), f"edge ({u}, {v}) leaves the compact component")
            continue
        if u == v:
            report.add("self_loop", (u, v), f"self-loop at {u}")
            continue
        key = edge_key(u, v)
        if key in seen:
            report.add("duplicate_edge", (u, v), f"duplicate edge ({u}, {v})")
        seen.add(key)

    if vertices and not _connected(graph):
        report.add("disconnected", None, "compact component is not connected")

    roots = list(graph.halfline_roots)
    if not roots:
        report.add("no_halfline", None, "no half-line attached (k >= 1 required)")
    if len(set(roots)) != len(roots):
        report.add("duplicate_halfline", None, "a compact vertex carries more than one half-line")
    for r in roots:
        if r not in vset:
            report.add("unknown_root", r, f"half-line root {r} is not a compact vertex")

    for v in vertices:
        if v not in coeffs.b_compact:
            report.add("missing_b", v, f"no diagonal entry for {v}")
        elif not _finite(coeffs.b_compact[v]):
            report.add("nonfinite_b", v, f"b at {v} is not a finite real")
    for u, v in graph.compact_edges:
        key = edge_key(u, v)
        if key not in coeffs.a_compact:
            report.add("missing_a", (u, v), f"no weight for edge ({u}, {v})")
            continue
        weight = coeffs.a_compact[key]
        if not _finite(weight) or weight == 0:
            report.add("zero_weight", (u, v), f"edge ({u}, {v}) has weight {weight}")
    extra = set(coeffs.a_compact) - seen
    for key in extra:
        report.add("unknown_edge", tuple(sorted(key)), f"weight given for non-edge {tuple(sorted(key))}")

    for r in roots:
        if r not in coeffs.halfline_data:
            report.add("missing_halfline", r, f"no coefficients for the half-line at {r}")
        else:
            _check_line(report, r, coeffs.halfline_data[r])
    for r in set(coeffs.halfline_data) - set(roots):
        report.add("unknown_halfline", r, f"coefficients given for {r}, which carries no half-line")

    if report.ok and not math.isfinite(coeffs.bound):
        report.add("unbounded", None, "coefficients are not bounded")
    if not report.ok:
        logger.debug(f"Validation found {len(report.failures)} problems: {report.codes()}")
    return report


def _connected(graph: StarLikeGraph) -> bool:
    start = graph.compact_vertices[0]
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in graph.compact_neighbors(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen == set(graph.compact_vertices)


def neighbors(graph: StarLikeGraph, coeffs: JacobiCoefficients, vertex: Vertex) -> List[Tuple[Vertex, float]]:
    """Adjacent vertices with their edge weights"""
    if isinstance(vertex, tuple):
        root, i = vertex
        data = coeffs.halfline_data[root]
        prev = root if i == 1 else (root, i - 1)
        prev_weight = data.lead if i == 1 else data.line.a_at(i - 1)
        return [(prev, prev_weight), ((root, i + 1), data.line.a_at(i))]
    out = [(w, coeffs.edge_weight(vertex, w)) for w in graph.compact_neighbors(vertex)]
    if vertex in graph.halfline_roots:
        out.append(((vertex, 1), coeffs.halfline_data[vertex].lead))
    return out


def apply_operator(graph: StarLikeGraph, coeffs: JacobiCoefficients, phi: Vector,
                   window: Iterable[Vertex]) -> Vector:
    """(J phi)(u) on every u of the window"""
    window = list(window)
    out = {}
    for u in window:
        total = coeffs.diagonal(u) * phi[u]
        for w, weight in neighbors(graph, coeffs, u):
            total += weight * phi[w]
        out[u] = total
    return Vector(out, frozenset(window))


def window_vertices(graph: StarLikeGraph, depth: int) -> List[Vertex]:
    """Compact vertices in graph order, then the first ``depth`` sites of each half-line"""
    order: List[Vertex] = list(graph.compact_vertices)
    for root in graph.ordered_roots():
        order.extend((root, i) for i in range(1, depth + 1))
    return order


def _truncation_entries(graph: StarLikeGraph, coeffs: JacobiCoefficients, depth: int):
    order = window_vertices(graph, depth)
    position = {v: i for i, v in enumerate(order)}
    rows, cols, vals = [], [], []
    for v, i in position.items():
        rows.append(i)
        cols.append(i)
        vals.append(coeffs.diagonal(v))
        for w, weight in neighbors(graph, coeffs, v):
            j = position.get(w)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(weight)
    return order, rows, cols, vals


def truncate(graph: StarLikeGraph, coeffs: JacobiCoefficients, depth: int) -> Tuple[np.ndarray, List[Vertex]]:
    """Dense matrix of P J P on the compact component plus ``depth`` sites per half-line"""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    order, rows, cols, vals = _truncation_entries(graph, coeffs, depth)
    matrix = np.zeros((len(order), len(order)))
    matrix[rows, cols] = vals
    return matrix, order


def truncate_sparse(graph: StarLikeGraph, coeffs: JacobiCoefficients, depth: int):
    """CSC form of ``truncate`` for large depths"""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    order, rows, cols, vals = _truncation_entries(graph, coeffs, depth)
    matrix = sparse.csc_matrix((vals, (rows, cols)), shape=(len(order), len(order)))
    return matrix, order


def compact_adjacency(graph: StarLikeGraph, coeffs: JacobiCoefficients) -> np.ndarray:
    """A_ij = a_(v_i, v_j) for adjacent compact vertices, else 0"""
    n = graph.n
    adjacency = np.zeros((n, n))
    for u, v in graph.compact_edges:
        i, j = graph.index(u), graph.index(v)
        adjacency[i, j] = adjacency[j, i] = coeffs.edge_weight(u, v)
    return adjacency


def halfline_slice_coefficients(graph: StarLikeGraph, coeffs: JacobiCoefficients, root: str) -> HalfLineCoefficients:
    return coeffs.halfline_data[root].as_slice(coeffs.b_compact[root])


def enlarge_compact(graph: StarLikeGraph, coeffs: JacobiCoefficients, p: int) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Absorb the first ``p`` sites of every half-line into the compact component"""
    if p <= 0:
        return graph, coeffs
    vertices = list(graph.compact_vertices)
    edges = list(graph.compact_edges)
    b_compact = dict(coeffs.b_compact)
    a_compact = dict(coeffs.a_compact)
    roots = []
    data_out = {}
    for root in graph.halfline_roots:
        data = coeffs.halfline_data[root]
        prev = root
        weight = data.lead
        for i in range(1, p + 1):
            name = f"{root}#{i}"
            vertices.append(name)
            edges.append((prev, name))
            a_compact[edge_key(prev, name)] = weight
            b_compact[name] = data.line.b_at(i)
            weight = data.line.a_at(i)
            prev = name
        roots.append(prev)
        data_out[prev] = HalfLineData(lead=weight, line=data.line.shifted(p))
    bigger = StarLikeGraph(tuple(vertices), tuple(edges), tuple(roots))
    return bigger, JacobiCoefficients(b_compact, a_compact, data_out)


def build_graph(compact: Mapping[str, float], edges: Sequence[Tuple[str, str, float]],
                halflines: Mapping[str, HalfLineData]) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Convenience constructor from plain mappings"""
    graph = StarLikeGraph(
        compact_vertices=tuple(compact),
        compact_edges=tuple((u, v) for u, v, _ in edges),
        halfline_roots=tuple(r for r in compact if r in halflines),
    )
    coeffs = JacobiCoefficients(
        b_compact={v: float(b) for v, b in compact.items()},
        a_compact={edge_key(u, v): float(a) for u, v, a in edges},
        halfline_data=dict(halflines),
    )
    return graph, coeffs


def free_data(b: float = 0.0, a: float = 1.0, lead: float = 1.0) -> HalfLineData:
    return HalfLineData(lead=float(lead), line=free_halfline(b, a))


def free_n_graph(b_root: float = 0.0) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """The graph isomorphic to N: one compact vertex and a free half-line"""
    return build_graph({"v": b_root}, [], {"v": free_data()})


def free_z_graph(b1: float = 0.0, b2: float = 0.0, weight: float = 1.0) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """The graph isomorphic to Z: two joined compact vertices, each with a free half-line"""
    return build_graph({"v1": b1, "v2": b2}, [("v1", "v2", weight)], {"v1": free_data(), "v2": free_data()})


def free_star_graph(branches: int = 3, leaf_b: float = 0.0) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Centre plus ``branches`` leaves, a free half-line at every leaf (C = K_{1,n})"""
    compact = {"c": 0.0}
    edges = []
    lines = {}
    for j in range(1, branches + 1):
        leaf = f"l{j}"
        compact[leaf] = leaf_b
        edges.append(("c", leaf, 1.0))
        lines[leaf] = free_data()
    return build_graph(compact, edges, lines)


def triangle_graph() -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Triangle with a free half-line at every vertex"""
    compact = {"v1": 0.0, "v2": 0.0, "v3": 0.0}
    edges = [("v1", "v2", 1.0), ("v2", "v3", 1.0), ("v1", "v3", 1.0)]
    return build_graph(compact, edges, {v: free_data() for v in compact})
