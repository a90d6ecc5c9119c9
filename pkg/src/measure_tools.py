"""Probability measures and their Jacobi matrices."""
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import integrate
from scipy.linalg import cholesky, eig_banded, LinAlgError
from scipy.special import roots_chebyu, roots_jacobi, roots_legendre

from config import MEASURE_DEPTH
from errors import ConfigError, PreconditionError, QuadratureError
from graph_model import (BranchMeasure, HalfLineCoefficients, HalfLineData, TailRule, build_graph,
                         edge_key)

DENSITY_KINDS = ("uniform", "power", "semicircle", "table")
MASS_TOLERANCE = 1e-12
NODE_MARGIN = 32
BREAKDOWN_TOL = 1e-12


@dataclass(frozen=True)
class DensityPart:
    """A normalized density on a bounded interval carrying mass ``weight``.

    ``uniform`` on [lo, hi]; ``power`` proportional to (x - lo)^exponent on
    (lo, hi); ``semicircle`` with ``center`` and ``radius``; ``table``
    interpolates ``(xs, ys)`` linearly and is normalized numerically.
    """
    kind: str
    weight: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    exponent: float = 0.0
    center: float = 0.0
    radius: float = 2.0
    xs: Tuple[float, ...] = ()
    ys: Tuple[float, ...] = ()

    def interval(self) -> Tuple[float, float]:
        if self.kind == "semicircle":
            return self.center - self.radius, self.center + self.radius
        if self.kind == "table":
            return self.xs[0], self.xs[-1]
        return self.lo, self.hi

    def table_norm(self) -> float:
        return float(integrate.trapezoid(self.ys, self.xs))

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.interval()
        inside = (x > lo) & (x < hi)
        out = np.zeros_like(x)
        if self.kind == "uniform":
            out[inside] = 1.0 / (hi - lo)
        elif self.kind == "power":
            p = self.exponent
            out[inside] = (p + 1) * (x[inside] - lo) ** p / (hi - lo) ** (p + 1)
        elif self.kind == "semicircle":
            r = self.radius
            out[inside] = 2.0 * np.sqrt(r * r - (x[inside] - self.center) ** 2) / (math.pi * r * r)
        else:
            out[inside] = np.interp(x[inside], self.xs, self.ys) / self.table_norm()
        return self.weight * out

    def nodes(self, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """Gauss rule of ``count`` points per piece, weights summing to ``weight``"""
        lo, hi = self.interval()
        if self.kind == "uniform":
            t, w = roots_legendre(count)
            return lo + (hi - lo) * (t + 1) / 2, self.weight * w / 2
        if self.kind == "power":
            p = self.exponent
            t, w = roots_jacobi(count, 0.0, p)
            return lo + (hi - lo) * (t + 1) / 2, self.weight * (p + 1) * w / 2 ** (p + 1)
        if self.kind == "semicircle":
            t, w = roots_chebyu(count)
            return self.center + self.radius * t, self.weight * 2 * w / math.pi
        t, w = roots_legendre(count)
        xs, ws = [], []
        norm = self.table_norm()
        for left, right in zip(self.xs[:-1], self.xs[1:]):
            x = left + (right - left) * (t + 1) / 2
            xs.append(x)
            ws.append(w * (right - left) / 2 * np.interp(x, self.xs, self.ys) / norm)
        return np.concatenate(xs), self.weight * np.concatenate(ws)

    def borel_transform(self, z: complex) -> complex:
        lo, hi = self.interval()
        if self.kind == "uniform":
            return self.weight * (np.log(hi - z) - np.log(lo - z)) / (hi - lo)
        if self.kind == "semicircle":
            s = self.radius / 2
            zeta = (z - self.center) / s
            return self.weight * (-zeta + np.sqrt(zeta - 2) * np.sqrt(zeta + 2)) / (2 * s)
        if self.kind == "power" and self.exponent == -0.5:
            zeta = (z - lo) / (hi - lo)
            w = np.sqrt(zeta)
            value = (np.log(1 - w) - np.log(-w) - np.log(1 + w) + np.log(w)) / (2 * w)
            return self.weight * value / (hi - lo)
        return self.weight * _quad_transform(self, z)


def _quad_transform(part: DensityPart, z: complex) -> complex:
    lo, hi = part.interval()
    if part.kind == "power":
        p = part.exponent
        scale = (p + 1) / (hi - lo) ** (p + 1)
        re = integrate.quad(lambda x: (1 / (x - z)).real, lo, hi, weight="alg", wvar=(p, 0), limit=200)
        im = integrate.quad(lambda x: (1 / (x - z)).imag, lo, hi, weight="alg", wvar=(p, 0), limit=200)
        return scale * complex(re[0], im[0])
    f = lambda x: part.density(np.array([x]))[0] / part.weight
    points = list(part.xs[1:-1]) if part.kind == "table" else None
    re = integrate.quad(lambda x: f(x) * (1 / (x - z)).real, lo, hi, points=points, limit=400)
    im = integrate.quad(lambda x: f(x) * (1 / (x - z)).imag, lo, hi, points=points, limit=400)
    if max(re[1], im[1]) > 1e-9:
        raise QuadratureError(f"Borel transform quadrature error {max(re[1], im[1]):.2e} at z={z}")
    return complex(re[0], im[0])


@dataclass(frozen=True)
class MeasureSpec:
    atoms: Tuple[Tuple[float, float], ...] = ()
    densities: Tuple[DensityPart, ...] = ()
    name: str = ""
    finite: bool = False

    @property
    def kind(self) -> str:
        if self.atoms and self.densities:
            return "mixture"
        return "atomic" if self.atoms else "density"

    def total_mass(self) -> float:
        return sum(w for _, w in self.atoms) + sum(p.weight for p in self.densities)

    def support_radius(self) -> float:
        ends = [abs(x) for x, _ in self.atoms]
        for part in self.densities:
            ends.extend(abs(e) for e in part.interval())
        return max(ends or [0.0])

    def validate(self) -> None:
        if abs(self.total_mass() - 1.0) > MASS_TOLERANCE:
            raise ConfigError(f"measure {self.name!r} has total mass {self.total_mass()!r}")
        if any(w <= 0 for _, w in self.atoms) or any(p.weight <= 0 for p in self.densities):
            raise ConfigError(f"measure {self.name!r} has a non-positive weight")
        for part in self.densities:
            if part.kind not in DENSITY_KINDS:
                raise ConfigError(f"unknown density kind {part.kind!r}")
            if part.kind == "power" and part.exponent <= -1:
                raise ConfigError("power-law exponent must exceed -1")
            if part.kind == "table" and (len(part.xs) < 2 or any(y < 0 for y in part.ys)
                                         or list(part.xs) != sorted(part.xs)):
                raise ConfigError("table density needs sorted xs and nonnegative ys")
            lo, hi = part.interval()
            if not hi > lo:
                raise ConfigError(f"empty support interval [{lo}, {hi}]")
        if not self.densities and not self.finite:
            raise ConfigError(f"atoms-only measure {self.name!r} must declare finite=true")

    def borel_transform(self, z: complex) -> complex:
        """Integral of dmu(x) / (x - z)"""
        z = complex(z)
        total = sum(w / (x - z) for x, w in self.atoms)
        for part in self.densities:
            total += part.borel_transform(z)
        return complex(total)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for part in self.densities:
            out = out + part.density(x)
        return out


def measure_from_dict(data: Dict[str, Any]) -> MeasureSpec:
    try:
        atoms = tuple((float(x), float(w)) for x, w in data.get("atoms", []))
        parts = []
        for entry in data.get("densities", []):
            entry = dict(entry)
            kind = entry.pop("kind")
            if "xs" in entry:
                entry["xs"] = tuple(float(v) for v in entry["xs"])
                entry["ys"] = tuple(float(v) for v in entry["ys"])
            parts.append(DensityPart(kind=kind, **entry))
        spec = MeasureSpec(atoms, tuple(parts), str(data.get("name", "")), bool(data.get("finite", False)))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad measure specification: {str(e)}")
    spec.validate()
    return spec


def measure_to_dict(spec: MeasureSpec) -> Dict[str, Any]:
    defaults = DensityPart(kind="uniform")
    parts = []
    for part in spec.densities:
        entry = {"kind": part.kind, "weight": part.weight}
        for name in ("lo", "hi", "exponent", "center", "radius"):
            value = getattr(part, name)
            if value != getattr(defaults, name):
                entry[name] = value
        if part.kind == "table":
            entry["xs"] = list(part.xs)
            entry["ys"] = list(part.ys)
        parts.append(entry)
    out = {"name": spec.name, "atoms": [[x, w] for x, w in spec.atoms], "densities": parts}
    if spec.finite:
        out["finite"] = True
    return out


def mu1() -> MeasureSpec:
    """Half an atom at 0 plus half of Uniform[0, 1]"""
    return MeasureSpec(atoms=((0.0, 0.5),), densities=(DensityPart("uniform", 0.5, 0.0, 1.0),), name="mu1")


def mu2() -> MeasureSpec:
    """Density 1/(2 sqrt(x)) on (0, 1)"""
    return MeasureSpec(densities=(DensityPart("power", 1.0, 0.0, 1.0, exponent=-0.5),), name="mu2")


def semicircle() -> MeasureSpec:
    return MeasureSpec(densities=(DensityPart("semicircle", 1.0),), name="semicircle")


def uniform(lo: float = -1.0, hi: float = 1.0) -> MeasureSpec:
    return MeasureSpec(densities=(DensityPart("uniform", 1.0, lo, hi),), name=f"uniform[{lo},{hi}]")


def discretize(spec: MeasureSpec, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted point masses reproducing polynomial integrals of degree < 2 * nodes"""
    xs = [np.array([x for x, _ in spec.atoms], dtype=float)]
    ws = [np.array([w for _, w in spec.atoms], dtype=float)]
    for part in spec.densities:
        x, w = part.nodes(nodes)
        xs.append(np.asarray(x, dtype=float))
        ws.append(np.asarray(w, dtype=float))
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    order = np.argsort(x, kind="stable")
    return x[order], w[order]


@dataclass
class MomentSequence:
    values: np.ndarray
    spec: Optional[MeasureSpec] = None
    errors: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def hankel_positive(self, order: int) -> bool:
        hankel = np.array([[self.values[i + j] for j in range(order)] for i in range(order)])
        try:
            cholesky(hankel, lower=True)
        except LinAlgError:
            return False
        return True


def moments(spec: MeasureSpec, count: int) -> MomentSequence:
    """m_k, k < count, from Gauss rules exact at that degree, with a doubled-rule error estimate"""
    spec.validate()
    nodes = count // 2 + 8
    powers = np.arange(count)
    x, w = discretize(spec, nodes)
    values = np.array([np.sum(w * x ** k) for k in powers])
    x2, w2 = discretize(spec, 2 * nodes)
    check = np.array([np.sum(w2 * x2 ** k) for k in powers])
    errors = np.abs(values - check)
    worst = np.max(errors / np.maximum(1.0, np.abs(values)))
    if worst > MASS_TOLERANCE:
        raise QuadratureError(f"moment quadrature for {spec.name!r} did not converge (error {worst:.2e})")
    return MomentSequence(values, spec, errors)


@dataclass
class JacobiPrefix:
    """b_1..b_N and a_1..a_(N-1) of a measure's Jacobi matrix"""
    b: np.ndarray
    a: np.ndarray
    breakdown: bool = False

    @property
    def depth(self) -> int:
        return len(self.b)

    def as_halfline(self) -> HalfLineCoefficients:
        """Finite line after a breakdown, else continued by the last (b, a) pair"""
        b = tuple(float(x) for x in self.b)
        a = tuple(float(x) for x in self.a)
        if self.breakdown:
            return HalfLineCoefficients(b=b, a=a, tail=TailRule("finite", (), ()))
        return HalfLineCoefficients(b=b, a=a, tail=TailRule("constant", (b[-1],), (a[-1],)))


def lanczos(x: np.ndarray, w: np.ndarray, depth: int) -> JacobiPrefix:
    """Lanczos on diag(x) started from sqrt(w), with double Gram-Schmidt"""
    n = len(x)
    depth = min(depth, n)
    alpha = np.zeros(depth)
    beta = np.zeros(depth)
    Q = np.zeros((n, depth))
    q = np.sqrt(w) / math.sqrt(np.sum(w))
    q_prev = np.zeros(n)
    scale = max(np.max(np.abs(x)), 1.0)
    for i in range(depth):
        Q[:, i] = q
        v = x * q - (beta[i - 1] * q_prev if i > 0 else 0.0)
        alpha[i] = q @ v
        v -= alpha[i] * q
        v -= Q[:, :i + 1] @ (Q[:, :i + 1].T @ v)
        v -= Q[:, :i + 1] @ (Q[:, :i + 1].T @ v)
        beta[i] = math.sqrt(v @ v)
        if i + 1 < depth and beta[i] <= 1e-13 * scale:
            logger.debug(f"Lanczos breakdown after {i + 1} steps")
            return JacobiPrefix(alpha[:i + 1], beta[:i], breakdown=True)
        q_prev = q
        q = v / beta[i] if beta[i] > 0 else v
    return JacobiPrefix(alpha, beta[:depth - 1], breakdown=depth == n)


@lru_cache(maxsize=32)
def spec_prefix(spec: MeasureSpec, depth: int) -> JacobiPrefix:
    spec.validate()
    x, w = discretize(spec, depth + NODE_MARGIN)
    prefix = lanczos(x, w, depth)
    _check_bounds(prefix, spec)
    return prefix


def _check_bounds(prefix: JacobiPrefix, spec: MeasureSpec) -> None:
    limit = 2 * max(spec.support_radius(), 1e-12)
    if np.any(np.abs(prefix.b) > limit) or np.any(np.abs(prefix.a) > limit) or np.any(prefix.a <= 0):
        logger.warning(f"Recurrence coefficients of {spec.name!r} leave the expected range; "
                       f"moment computation may be unstable")


def chebyshev_from_moments(values: Sequence[float]) -> JacobiPrefix:
    """Classical Chebyshev algorithm on raw moments m_0..m_(2N-1)"""
    mu = np.asarray(values, dtype=float)
    N = len(mu) // 2
    if N < 1:
        raise ValueError("need at least two moments")
    alpha = np.zeros(N)
    beta = np.zeros(N)
    sigma_prev = np.zeros(2 * N)
    sigma = mu[:2 * N].copy()
    alpha[0] = mu[1] / mu[0]
    beta[0] = mu[0]
    scale = max(1.0, abs(mu[2] / mu[0])) if len(mu) > 2 else 1.0
    for k in range(1, N):
        nxt = np.zeros(2 * N)
        for l in range(k, 2 * N - k):
            nxt[l] = sigma[l + 1] - alpha[k - 1] * sigma[l] - beta[k - 1] * sigma_prev[l]
        if sigma[k - 1] <= 0 or nxt[k] <= BREAKDOWN_TOL * scale * sigma[k - 1]:
            logger.debug(f"Hankel breakdown at depth {k}")
            return JacobiPrefix(alpha[:k], np.sqrt(beta[1:k]), breakdown=True)
        alpha[k] = nxt[k + 1] / nxt[k] - sigma[k] / sigma[k - 1]
        beta[k] = nxt[k] / sigma[k - 1]
        sigma_prev, sigma = sigma, nxt
    return JacobiPrefix(alpha, np.sqrt(beta[1:N]))


def jacobi_from_moments(ms: MomentSequence, depth: Optional[int] = None) -> JacobiPrefix:
    """Recurrence coefficients of the orthonormal polynomials of the measure behind ``ms``"""
    N = len(ms) // 2 if depth is None else depth
    if ms.spec is not None:
        return spec_prefix(ms.spec, N)
    if not ms.hankel_positive(min(N, len(ms) // 2)):
        logger.warning("Hankel matrix is not numerically positive definite; prefix will be truncated")
    return chebyshev_from_moments(ms.values[:2 * N])


def gauss_rule(prefix: JacobiPrefix) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the N-point Gauss rule of a prefix"""
    n = prefix.depth
    band = np.zeros((2, n))
    band[0, 1:] = prefix.a[:n - 1]
    band[1, :] = prefix.b
    nodes, vectors = eig_banded(band, lower=False)
    return nodes, vectors[0, :] ** 2


def roundtrip_check(prefix: JacobiPrefix, spec: MeasureSpec, zs: Sequence[complex]) -> float:
    """Largest gap between the prefix continued fraction and the measure's Borel transform"""
    from halfline import MFunctionEvaluator

    if prefix.depth < 20 and not prefix.breakdown:
        raise PreconditionError("roundtrip needs a prefix of length >= 20")
    evaluator = MFunctionEvaluator(prefix.as_halfline())
    worst = 0.0
    for z in zs:
        z = complex(z)
        if z.imag < 0.2:
            raise PreconditionError(f"roundtrip points need Im z >= 0.2, got {z}")
        worst = max(worst, abs(evaluator.continued_fraction(z) - spec.borel_transform(z)))
    return worst


def measure_halfline(spec: MeasureSpec, depth: int = MEASURE_DEPTH, theta: float = 0.0) -> Tuple[float, HalfLineData]:
    """Root potential and hanging half-line of the branch J_mu + tan(theta) at the origin"""
    prefix = spec_prefix(spec, depth)
    if prefix.breakdown or prefix.depth < 2:
        raise PreconditionError(f"measure {spec.name!r} has finite support; a branch needs an infinite line")
    b = [float(x) for x in prefix.b]
    a = [float(x) for x in prefix.a]
    line = HalfLineCoefficients(b=tuple(b[1:]), a=tuple(a[1:]), tail=TailRule("constant", (b[-1],), (a[-1],)))
    root_b = b[0] + math.tan(theta)
    return root_b, HalfLineData(lead=a[0], line=line, measure=BranchMeasure(spec, theta))


def build_example_5_2(first: Optional[MeasureSpec] = None, second: Optional[MeasureSpec] = None,
                      depth: int = MEASURE_DEPTH, theta: float = math.pi / 4):
    """Triangle with branches from mu1, mu2, mu1, each shifted by tan(theta) at its origin"""
    first = first or mu1()
    second = second or mu2()
    compact = {}
    lines = {}
    for vertex, spec in (("v1", first), ("v2", second), ("v3", first)):
        compact[vertex], lines[vertex] = measure_halfline(spec, depth, theta)
    edges = [("v1", "v2", 1.0), ("v2", "v3", 1.0), ("v1", "v3", 1.0)]
    logger.info(f"Built triangle example from {first.name} / {second.name} at depth {depth}")
    return build_graph(compact, edges, lines)
