"""Half-line Jacobi operators: solutions, truncated norms, subordinacy and m-functions."""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from config import NumericsConfig, default_numerics
from errors import InsufficientLengthError, MFunctionConvergenceError, PreconditionError
from graph_model import HalfLineCoefficients

SUBORDINATE_EXISTS = "subordinate_exists"
NO_SUBORDINATE = "no_subordinate"
INCONCLUSIVE = "inconclusive"

RATIO_FLOOR = 1e-6
STEP_SLACK = 1e-3
CHECKPOINTS_PER_DECADE = 8


@dataclass(frozen=True)
class BoundaryCondition:
    theta: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta < math.pi):
            raise ValueError(f"theta must lie in [0, pi), got {self.theta}")

    @classmethod
    def wrap(cls, theta: float) -> "BoundaryCondition":
        value = math.fmod(theta, math.pi)
        if value < 0:
            value += math.pi
        if value >= math.pi:
            value = 0.0
        return cls(value)

    def seed(self) -> Tuple[float, float]:
        """(u_0, u_1) with s = 1"""
        return -math.sin(self.theta), math.cos(self.theta)

    def orthogonal(self) -> "BoundaryCondition":
        return BoundaryCondition.wrap(self.theta + math.pi / 2)


DIRICHLET = BoundaryCondition(0.0)


@dataclass
class HalfLineSolution:
    """u_1..u_length stored as ``values * exp(log_scales)``"""
    energy: float
    boundary: BoundaryCondition
    seed: Tuple[float, float]
    values: np.ndarray
    log_scales: np.ndarray

    @property
    def length(self) -> int:
        return len(self.values)

    def actual(self, count: Optional[int] = None) -> np.ndarray:
        count = self.length if count is None else count
        with np.errstate(over="ignore"):
            return self.values[:count] * np.exp(self.log_scales[:count])

    def log_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.values)) + self.log_scales

    def is_zero(self) -> bool:
        return self.seed == (0.0, 0.0)


@dataclass
class SubordinacyVerdict:
    energy: float
    verdict: str
    theta: Optional[float]
    evidence: List[Tuple[float, float]] = field(default_factory=list)
    log_ratios: List[float] = field(default_factory=list)
    decay_exponent: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "verdict": self.verdict,
            "theta": self.theta,
            "evidence": [[L, r] for L, r in self.evidence],
            "decay_exponent": self.decay_exponent,
        }


@dataclass
class L2Evidence:
    windows: List[Tuple[int, float]]
    decay_exponent: float
    tail_fraction: float
    is_l2: bool
    heuristic: bool = True

    def to_dict(self) -> dict:
        return {
            "windows": [[s, m] for s, m in self.windows],
            "decay_exponent": self.decay_exponent,
            "tail_fraction": self.tail_fraction,
            "is_l2": self.is_l2,
            "heuristic": self.heuristic,
        }


def _iterate(coeffs: HalfLineCoefficients, E: float, seeds: np.ndarray, length: int,
             threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Run the three-term recurrence for several seeds sharing one scale"""
    if length < 1:
        raise ValueError("length must be >= 1")
    finite = coeffs.length
    if finite is not None and length > finite:
        raise InsufficientLengthError(f"finite half-line has only {finite} sites")
    b = coeffs.b_array(length)
    a = coeffs.a_array(length - 1)
    k = seeds.shape[0]
    out = np.zeros((k, length))
    scales = np.zeros(length)
    prev = seeds[:, 0].astype(float).copy()
    cur = seeds[:, 1].astype(float).copy()
    a_prev = 1.0
    log_scale = 0.0
    out[:, 0] = cur
    for n in range(1, length):
        if a[n - 1] == 0:
            raise PreconditionError(f"zero off-diagonal coefficient at {n}")
        nxt = ((E - b[n - 1]) * cur - a_prev * prev) / a[n - 1]
        prev, cur = cur, nxt
        a_prev = a[n - 1]
        peak = max(np.max(np.abs(cur)), np.max(np.abs(prev)))
        if peak > threshold:
            prev = prev / peak
            cur = cur / peak
            log_scale += math.log(peak)
        out[:, n] = cur
        scales[n] = log_scale
    return out, scales


def iterate_solution(coeffs: HalfLineCoefficients, E: float, boundary: BoundaryCondition, length: int,
                     numerics: Optional[NumericsConfig] = None) -> HalfLineSolution:
    if length < 2:
        raise ValueError("length must be >= 2")
    return iterate_seeded(coeffs, E, boundary.seed(), length, numerics, boundary)


def iterate_seeded(coeffs: HalfLineCoefficients, E: float, seed: Tuple[float, float], length: int,
                   numerics: Optional[NumericsConfig] = None,
                   boundary: Optional[BoundaryCondition] = None) -> HalfLineSolution:
    """Solution with an arbitrary (u_0, u_1) seed and a virtual a_0 = 1"""
    numerics = numerics or default_numerics()
    seed = (float(seed[0]), float(seed[1]))
    if boundary is None:
        boundary = seed_boundary(seed)
    values, scales = _iterate(coeffs, E, np.array([seed]), length, numerics.renorm_threshold)
    return HalfLineSolution(E, boundary, seed, values[0], scales)


def seed_boundary(seed: Tuple[float, float]) -> BoundaryCondition:
    if seed == (0.0, 0.0):
        return DIRICHLET
    return BoundaryCondition.wrap(math.atan2(-seed[0], seed[1]))


def iterate_fundamental_pair(coeffs: HalfLineCoefficients, E: float, length: int,
                             numerics: Optional[NumericsConfig] = None) -> Tuple[HalfLineSolution, HalfLineSolution]:
    """Dirichlet (theta = 0) and theta = pi/2 solutions on a common scale"""
    numerics = numerics or default_numerics()
    seeds = np.array([[0.0, 1.0], [-1.0, 0.0]])
    values, scales = _iterate(coeffs, E, seeds, length, numerics.renorm_threshold)
    d = HalfLineSolution(E, DIRICHLET, (0.0, 1.0), values[0], scales)
    n = HalfLineSolution(E, BoundaryCondition(math.pi / 2), (-1.0, 0.0), values[1], scales)
    return d, n


def minimal_solution(coeffs: HalfLineCoefficients, E: float, length: int, pad: Optional[int] = None,
                     numerics: Optional[NumericsConfig] = None) -> HalfLineSolution:
    """Fastest-decaying solution, by backward recurrence from a zero far end.

    Forward iteration of this solution is unstable in a gap.
    """
    numerics = numerics or default_numerics()
    N = length + (length if pad is None else pad)
    if coeffs.length is not None:
        N = min(N, coeffs.length)
        if N < length:
            raise InsufficientLengthError(f"finite half-line has only {coeffs.length} sites")
    b = coeffs.b_array(N)
    a = np.concatenate(([1.0], coeffs.a_array(N)))
    values = np.zeros(N + 1)
    stored = np.zeros(N + 1)
    nxt, cur = 0.0, 1.0
    shift = 0.0
    values[N] = cur
    stored[N] = shift
    for n in range(N, 0, -1):
        prev = ((E - b[n - 1]) * cur - a[n] * nxt) / a[n - 1]
        nxt, cur = cur, prev
        peak = max(abs(cur), abs(nxt))
        if peak > numerics.renorm_threshold:
            nxt /= peak
            cur /= peak
            shift += math.log(peak)
        values[n - 1] = cur
        stored[n - 1] = shift
    # the stored pair is u_n * exp(-shift_n); rebase on u_1
    scales = stored - stored[1]
    seed_scale = math.exp(scales[0])
    seed = (float(values[0] * seed_scale), float(values[1]))
    return HalfLineSolution(E, seed_boundary(seed), seed, values[1:length + 1], scales[1:length + 1])


def decaying_continuation(coeffs: HalfLineCoefficients, E: float, seed: Tuple[float, float], length: int,
                          tolerance: float = 1e-8,
                          numerics: Optional[NumericsConfig] = None) -> Optional[HalfLineSolution]:
    """The minimal solution rescaled to ``seed``, or None when the seed points elsewhere"""
    w = minimal_solution(coeffs, E, length, numerics=numerics)
    w0, w1 = w.seed
    u0, u1 = seed
    size = math.hypot(u0, u1) * math.hypot(w0, w1)
    if size == 0 or abs(u0 * w1 - u1 * w0) > tolerance * size:
        return None
    c = (u0 * w0 + u1 * w1) / (w0 * w0 + w1 * w1)
    sign = 1.0 if c > 0 else -1.0
    return HalfLineSolution(E, seed_boundary(seed), (float(seed[0]), float(seed[1])),
                            sign * w.values, w.log_scales + math.log(abs(c)))


def combine_pair(d: HalfLineSolution, n: HalfLineSolution, boundary: BoundaryCondition) -> HalfLineSolution:
    c, s = math.cos(boundary.theta), math.sin(boundary.theta)
    return HalfLineSolution(d.energy, boundary, boundary.seed(), c * d.values + s * n.values, d.log_scales)


def _norm_terms(u: HalfLineSolution, L: float) -> Tuple[int, float]:
    if L <= 0:
        raise ValueError("L must be positive")
    whole = int(math.floor(L))
    frac = L - whole
    need = whole + (1 if frac > 0 else 0)
    if need > u.length:
        raise InsufficientLengthError(f"truncated norm at L={L} needs {need} entries, have {u.length}")
    return whole, frac


def log_truncated_norm(u: HalfLineSolution, L: float) -> float:
    whole, frac = _norm_terms(u, L)
    mags = np.abs(u.values[:whole]) ** 2
    logs = 2 * u.log_scales[:whole]
    if frac > 0:
        mags = np.append(mags, frac * abs(u.values[whole]) ** 2)
        logs = np.append(logs, 2 * u.log_scales[whole])
    if not np.any(mags > 0):
        return -np.inf
    return 0.5 * float(logsumexp(logs, b=mags))


def truncated_norm(u: HalfLineSolution, L: float) -> float:
    """[sum_{n<=[L]} |u_n|^2 + (L - [L]) |u_{[L]+1}|^2]^(1/2)"""
    log_norm = log_truncated_norm(u, L)
    if log_norm == -np.inf:
        return 0.0
    with np.errstate(over="ignore"):
        return float(np.exp(log_norm))


def wronskian(coeffs: HalfLineCoefficients, u: HalfLineSolution, v: HalfLineSolution) -> np.ndarray:
    """a_n (u_{n+1} v_n - u_n v_{n+1}) for n = 0..length-1, with a_0 = 1 and the seeds as index 0"""
    uu = np.concatenate(([u.seed[0]], u.actual()))
    vv = np.concatenate(([v.seed[0]], v.actual()))
    count = min(len(uu), len(vv))
    a = np.concatenate(([1.0], coeffs.a_array(count - 2)))
    return a * (uu[1:count] * vv[:count - 1] - uu[:count - 1] * vv[1:count])


def recurrence_residuals(coeffs: HalfLineCoefficients, u: HalfLineSolution) -> np.ndarray:
    """Relative residual of the recurrence at n = 1..length-1"""
    full = np.concatenate(([u.seed[0]], u.values))
    scales = np.concatenate(([0.0], u.log_scales))
    b = coeffs.b_array(u.length)
    a = np.concatenate(([1.0], coeffs.a_array(u.length - 1)))
    out = np.zeros(u.length - 1)
    size = max(np.max(np.abs(b)), np.max(np.abs(a)), abs(u.energy), 1e-300)
    for n in range(1, u.length):
        ref = scales[n + 1]
        um1 = full[n - 1] * math.exp(scales[n - 1] - ref)
        u0 = full[n] * math.exp(scales[n] - ref)
        up1 = full[n + 1]
        res = a[n] * up1 - (u.energy - b[n - 1]) * u0 + a[n - 1] * um1
        mag = (abs(um1) + abs(u0) + abs(up1)) * size
        out[n - 1] = abs(res) / mag if mag > 0 else 0.0
    return out


def checkpoints(L_max: float, start: float = 10.0) -> np.ndarray:
    decades = math.log10(L_max / start)
    count = max(int(round(decades * CHECKPOINTS_PER_DECADE)) + 1, 2)
    return np.geomspace(start, L_max, count)


class _PairGram:
    """Prefix Gram matrices of the fundamental pair, each relative to its checkpoint scale"""

    def __init__(self, d: HalfLineSolution, n: HalfLineSolution, points: Sequence[float]):
        self.points = list(points)
        self.grams = []
        pair = np.vstack([d.values, n.values])
        for L in self.points:
            whole = int(math.floor(L))
            frac = L - whole
            ref = d.log_scales[min(whole, d.length - 1)]
            w = np.exp(2 * (d.log_scales[:whole] - ref))
            block = pair[:, :whole]
            gram = (block * w) @ block.T
            if frac > 0:
                col = pair[:, whole] * math.exp(d.log_scales[whole] - ref)
                gram = gram + frac * np.outer(col, col)
            self.grams.append(gram)

    def log_ratio(self, theta: float, index: int = -1) -> float:
        c, s = math.cos(theta), math.sin(theta)
        x = np.array([c, s])
        y = np.array([-s, c])
        gram = self.grams[index]
        num = float(x @ gram @ x)
        den = float(y @ gram @ y)
        if den <= 0:
            return np.inf
        if num <= 0:
            return -np.inf
        return 0.5 * (math.log(num) - math.log(den))

    def log_ratios(self, theta: float) -> List[float]:
        return [self.log_ratio(theta, i) for i in range(len(self.points))]


def _direct_log_ratio(d: HalfLineSolution, n: HalfLineSolution, theta: float, L: float) -> float:
    """log(||u_theta||_L / ||u_theta+pi/2||_L) from the combined sequences"""
    c, s = math.cos(theta), math.sin(theta)
    u = HalfLineSolution(d.energy, DIRICHLET, (0.0, 0.0), c * d.values + s * n.values, d.log_scales)
    v = HalfLineSolution(d.energy, DIRICHLET, (0.0, 0.0), -s * d.values + c * n.values, d.log_scales)
    num = log_truncated_norm(u, L)
    den = log_truncated_norm(v, L)
    if den == -np.inf:
        return np.inf
    return num - den


def _refine_theta(gram: _PairGram, d: HalfLineSolution, n: HalfLineSolution, grid: np.ndarray,
                  L: float) -> float:
    values = np.array([gram.log_ratio(t) for t in grid])
    i = int(np.argmin(values))
    h = grid[1] - grid[0]
    center = float(grid[i])
    objective = lambda t: _direct_log_ratio(d, n, t, L)
    best = objective(center)
    try:
        res = minimize_scalar(objective, bracket=(center - h, center, center + h),
                              method="golden", options={"xtol": 1e-14})
        if res.fun <= best:
            center = float(res.x)
    except (ValueError, RuntimeError):
        # no bracketed minimum near the grid optimum
        pass
    return BoundaryCondition.wrap(center).theta


def _decay_exponent(points: Sequence[float], log_ratios: Sequence[float]) -> float:
    logs = np.asarray(log_ratios, dtype=float)
    ok = np.isfinite(logs)
    if ok.sum() < 2:
        return float("nan")
    return float(-np.polyfit(np.log(np.asarray(points)[ok]), logs[ok], 1)[0])


def _decreasing(log_ratios: Sequence[float]) -> bool:
    floor = math.log(RATIO_FLOOR)
    slack = math.log1p(STEP_SLACK)
    for prev, cur in zip(log_ratios[:-1], log_ratios[1:]):
        if cur < floor:
            continue
        if cur > prev + slack:
            return False
    return True


def _verdict(E: float, theta: float, points, log_ratios, band_ratios, numerics: NumericsConfig,
             threshold: Optional[float] = None, window: Optional[int] = None) -> SubordinacyVerdict:
    threshold = numerics.ratio_threshold if threshold is None else threshold
    window = numerics.evidence_window if window is None else window
    evidence = [(float(L), float(math.exp(r)) if r > -700 else 0.0) for L, r in zip(points, log_ratios)]
    exponent = _decay_exponent(points, log_ratios)
    if log_ratios[-1] < math.log(threshold) and _decreasing(log_ratios[-window:]):
        verdict = SUBORDINATE_EXISTS
    elif all(abs(r) <= math.log(numerics.ratio_band) for r in band_ratios):
        verdict = NO_SUBORDINATE
    else:
        verdict = INCONCLUSIVE
    return SubordinacyVerdict(E, verdict, theta if verdict == SUBORDINATE_EXISTS else None,
                              evidence, list(log_ratios), exponent)


def ratio_evidence(coeffs: HalfLineCoefficients, E: float, theta: float, L_max: float,
                   numerics: Optional[NumericsConfig] = None) -> SubordinacyVerdict:
    """Evidence that the theta solution is subordinate, without searching over theta"""
    numerics = numerics or default_numerics()
    points = checkpoints(L_max)
    d, n = iterate_fundamental_pair(coeffs, E, int(math.ceil(L_max)) + 1, numerics)
    log_ratios = [_direct_log_ratio(d, n, theta, L) for L in points]
    return _verdict(E, theta, points, log_ratios, log_ratios, numerics)


def detect_subordinate(coeffs: HalfLineCoefficients, E: float, L_max: Optional[float] = None,
                       threshold: Optional[float] = None, window: Optional[int] = None,
                       theta_hint: Optional[float] = None,
                       numerics: Optional[NumericsConfig] = None) -> SubordinacyVerdict:
    """Search theta for a solution whose norm ratio against its complement vanishes"""
    numerics = numerics or default_numerics()
    L_max = float(numerics.l_max if L_max is None else L_max)
    if L_max < 100:
        raise PreconditionError("L_max must be >= 100")
    points = checkpoints(L_max)
    d, n = iterate_fundamental_pair(coeffs, E, int(math.ceil(L_max)) + 1, numerics)
    gram = _PairGram(d, n, points)

    grid = np.arange(numerics.theta_grid) * (math.pi / numerics.theta_grid)
    candidates = [_refine_theta(gram, d, n, grid, L_max)]
    if theta_hint is not None:
        candidates.append(BoundaryCondition.wrap(theta_hint).theta)
    theta = min(candidates, key=lambda t: _direct_log_ratio(d, n, t, L_max))
    log_ratios = [_direct_log_ratio(d, n, theta, L) for L in points]

    # the no-subordinate band applies to the best grid theta at every checkpoint
    best_per_point = [min(gram.log_ratio(t, i) for t in grid) for i in range(len(points))]
    verdict = _verdict(E, theta, points, log_ratios, best_per_point, numerics, threshold, window)
    logger.debug(f"detect_subordinate E={E}: {verdict.verdict}, theta={theta:.6f}, "
                 f"final ratio={verdict.evidence[-1][1]:.3e}")
    return verdict


def jl_theta_from_m(m_boundary) -> Optional[BoundaryCondition]:
    """theta with cot(theta) = m(E+i0); None for a nonreal limit"""
    if m_boundary is None:
        return None
    if isinstance(m_boundary, complex):
        if m_boundary.imag != 0:
            return None
        m_boundary = m_boundary.real
    m_boundary = float(m_boundary)
    if math.isinf(m_boundary):
        return DIRICHLET
    if math.isnan(m_boundary):
        return None
    return BoundaryCondition.wrap(math.atan2(1.0, m_boundary))


def rank_one_m(m: complex, theta: float) -> complex:
    """m_theta for J_theta = J - tan(theta) <delta_1, .> delta_1"""
    t = math.tan(theta)
    return m / (1.0 - t * m)


def _herglotz_root(p21: complex, p22_minus_p11: complex, p12: complex) -> complex:
    """Root of p21 m^2 + (p22 - p11) m - p12 = 0 in the upper half-plane"""
    if p21 == 0:
        return p12 / p22_minus_p11
    bq = p22_minus_p11
    disc = np.sqrt(complex(bq * bq + 4 * p21 * p12))
    q = -0.5 * (bq + disc) if (bq.conjugate() * disc).real >= 0 else -0.5 * (bq - disc)
    r1 = q / p21
    r2 = -p12 / q if q != 0 else -bq / p21 - r1
    if abs(r1.imag - r2.imag) > 0 and (r1.imag > 0) != (r2.imag > 0):
        return r1 if r1.imag > 0 else r2
    return r1 if abs(r1) <= abs(r2) else r2


def periodic_tail_seed(coeffs: HalfLineCoefficients, z: complex, start: int) -> complex:
    """Exact m of the periodic tail beginning at site ``start``"""
    tail = coeffs.tail
    period = math.lcm(len(tail.b), len(tail.a)) if tail.rule == "periodic" else 1
    product = np.eye(2, dtype=complex)
    for j in range(start, start + period):
        step = np.array([[0.0, 1.0], [-coeffs.a_at(j) ** 2, coeffs.b_at(j) - z]], dtype=complex)
        product = product @ step
    return _herglotz_root(product[1, 0], product[1, 1] - product[0, 0], product[0, 1])


def _backward(b: np.ndarray, a: np.ndarray, z: complex, seed: complex) -> complex:
    """m^(0) from m^(N) = seed by m^(j-1) = 1/(b_j - z - a_j^2 m^(j))"""
    m = seed
    a2 = a * a
    for j in range(len(b) - 1, -1, -1):
        m = 1.0 / (b[j] - z - a2[j] * m)
    return m


class MFunctionEvaluator:
    """m(z) = <delta_1, (J - z)^-1 delta_1> of one half-line"""

    def __init__(self, coeffs: HalfLineCoefficients, numerics: Optional[NumericsConfig] = None):
        self.coeffs = coeffs
        self.numerics = numerics or default_numerics()
        self._cache = {}

    def __call__(self, z: complex) -> complex:
        return m_function(self, z)

    def continued_fraction(self, z: complex) -> complex:
        """m(z) from the coefficients alone, ignoring any exact measure data"""
        coeffs = self.coeffs
        rule = coeffs.tail.rule
        if rule == "finite":
            n = coeffs.length
            return _backward(coeffs.b_array(n), np.append(coeffs.a_array(n - 1), 0.0), z, 0.0)
        if rule in ("constant", "periodic"):
            n = coeffs.prefix_length()
            seed = periodic_tail_seed(coeffs, z, n + 1)
            if n == 0:
                return seed
            return _backward(coeffs.b_array(n), coeffs.a_array(n), z, seed)
        return self._doubling(z)

    def _doubling(self, z: complex) -> complex:
        cfg = self.numerics
        depth = max(cfg.m_initial_depth, self.coeffs.prefix_length())
        previous = None
        while depth <= cfg.m_max_depth:
            current = _backward(self.coeffs.b_array(depth), self.coeffs.a_array(depth), z, 0.0)
            if previous is not None and abs(current - previous) < cfg.m_tolerance * (1 + abs(current)):
                return current
            previous = current
            depth *= cfg.m_growth
        if z.imag >= cfg.im_floor:
            logger.warning(f"m-function at z={z} unconverged at depth {depth // cfg.m_growth}, "
                           f"last step {abs(current - previous):.3e}")
            return current
        raise MFunctionConvergenceError(z, depth // cfg.m_growth, current, previous)


def m_function(evaluator: MFunctionEvaluator, z: complex) -> complex:
    z = complex(z)
    if z.imag <= 0:
        raise PreconditionError(f"m_function needs Im z > 0, got {z}")
    cached = evaluator._cache.get(z)
    if cached is not None:
        return cached
    measure = evaluator.coeffs.measure
    if measure is not None:
        inverse = 1.0 / measure.spec.borel_transform(z) + measure.shift
        value = 1.0 / inverse
    else:
        value = evaluator.continued_fraction(z)
    evaluator._cache[z] = value
    return value


def resolvent_entry(coeffs: HalfLineCoefficients, z: complex, depth: int) -> complex:
    """e_1^T (J_N - z)^-1 e_1 for the N x N finite section"""
    if coeffs.length is not None:
        depth = min(depth, coeffs.length)
    b = coeffs.b_array(depth)
    a = coeffs.a_array(depth - 1) if depth > 1 else np.zeros(0)
    ab = np.zeros((3, depth), dtype=complex)
    ab[0, 1:] = a
    ab[1, :] = b - z
    ab[2, :-1] = a
    rhs = np.zeros(depth, dtype=complex)
    rhs[0] = 1.0
    return complex(solve_banded((1, 1), ab, rhs)[0])


def l2_evidence(u: HalfLineSolution, window: Optional[int] = None,
                numerics: Optional[NumericsConfig] = None) -> L2Evidence:
    """Tail-sum evidence that u is square summable, from masses on [2^j, 2^(j+1))"""
    numerics = numerics or default_numerics()
    window = numerics.evidence_window if window is None else window
    logs = 2 * u.log_abs()
    windows = []
    log_masses = []
    start = 1
    while start <= u.length:
        stop = min(2 * start, u.length + 1)
        chunk = logs[start - 1:stop - 1]
        finite = chunk[np.isfinite(chunk)]
        log_mass = float(logsumexp(finite)) if finite.size else -np.inf
        log_masses.append(log_mass)
        windows.append((start, float(np.exp(log_mass)) if log_mass < 700 else float("inf")))
        if stop == u.length + 1:
            break
        start = stop
    finite_total = [m for m in log_masses if np.isfinite(m)]
    if not finite_total:
        return L2Evidence(windows, float("inf"), 0.0, True)
    log_total = float(logsumexp(finite_total))
    # only full dyadic windows enter the fit
    full = log_masses[:-1] if len(log_masses) > 1 else log_masses
    recent = np.array(full[-window:])
    starts = np.array([s for s, _ in windows][:len(full)][-window:], dtype=float)
    usable = np.isfinite(recent)
    exponent = float("nan")
    if usable.sum() >= 2:
        exponent = float(-np.polyfit(np.log(starts[usable]), recent[usable], 1)[0])
    last = full[-1]
    last_fraction = math.exp(last - log_total) if np.isfinite(last) else 0.0
    if last_fraction < 1e-8:
        return L2Evidence(windows, exponent, last_fraction, True)
    decreasing = bool(np.all(np.diff(recent[usable]) < 0)) if usable.sum() >= 2 else False
    tail_fraction = float("inf")
    if np.isfinite(exponent) and exponent > 0:
        r = 2.0 ** (-exponent)
        tail_fraction = last_fraction * r / (1 - r)
    is_l2 = decreasing and exponent >= numerics.l2_min_decay and tail_fraction < numerics.l2_tail_tolerance
    return L2Evidence(windows, exponent, tail_fraction, bool(is_l2))
