"""Random star-like graphs and coefficient generators for property checks."""
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import PreconditionError
from graph_model import (HalfLineCoefficients, HalfLineData, JacobiCoefficients, StarLikeGraph, TailRule,
                         build_graph, free_halfline)


def random_weight(rng: np.random.Generator, low: float = 0.1, high: float = 2.0) -> float:
    """Nonzero weight with |a| in [low, high]"""
    return float(rng.choice([-1.0, 1.0]) * rng.uniform(low, high))


def random_halfline(rng: np.random.Generator, coeff_range: float = 2.0, max_prefix: int = 5,
                    min_weight: float = 0.1) -> HalfLineData:
    prefix = int(rng.integers(0, max_prefix + 1))
    b = tuple(float(x) for x in rng.uniform(-coeff_range, coeff_range, prefix))
    a = tuple(random_weight(rng, min_weight, coeff_range) for _ in range(prefix))
    if rng.random() < 0.5:
        tail = TailRule("constant", (float(rng.uniform(-coeff_range, coeff_range)),),
                        (random_weight(rng, min_weight, coeff_range),))
    else:
        tail = TailRule("periodic", tuple(float(x) for x in rng.uniform(-coeff_range, coeff_range, 2)),
                        (random_weight(rng, min_weight, coeff_range), random_weight(rng, min_weight, coeff_range)))
    return HalfLineData(lead=random_weight(rng, min_weight, coeff_range),
                        line=HalfLineCoefficients(b=b, a=a, tail=tail))


def random_star_like(rng: np.random.Generator, max_n: int = 6, max_k: int = 4, coeff_range: float = 2.0,
                     min_weight: float = 0.1, max_prefix: int = 5) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Connected compact component (random tree plus extra edges) with 1..max_k half-lines"""
    n = int(rng.integers(1, max_n + 1))
    names = [f"v{i}" for i in range(n)]
    compact = {v: float(rng.uniform(-coeff_range, coeff_range)) for v in names}
    edges = []
    present = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append((names[j], names[i], random_weight(rng, min_weight, coeff_range)))
        present.add(frozenset((i, j)))
    for i in range(n):
        for j in range(i + 1, n):
            if frozenset((i, j)) not in present and rng.random() < 0.2:
                edges.append((names[i], names[j], random_weight(rng, min_weight, coeff_range)))
    k = int(rng.integers(1, min(n, max_k) + 1))
    roots = sorted(rng.choice(n, size=k, replace=False).tolist())
    lines = {names[r]: random_halfline(rng, coeff_range, max_prefix, min_weight) for r in roots}
    return build_graph(compact, edges, lines)


def random_z_graph(rng: np.random.Generator, coeff_range: float = 2.0, max_prefix: int = 3,
                   min_weight: float = 0.1) -> Tuple[StarLikeGraph, JacobiCoefficients]:
    """Two joined compact vertices, each with a perturbed free half-line (a copy of Z)"""
    compact = {"v1": float(rng.uniform(-coeff_range, coeff_range)),
               "v2": float(rng.uniform(-coeff_range, coeff_range))}
    lines = {}
    for root in compact:
        prefix = int(rng.integers(0, max_prefix + 1))
        b = tuple(float(x) for x in rng.uniform(-coeff_range, coeff_range, prefix))
        a = tuple(abs(random_weight(rng, min_weight, coeff_range)) for _ in range(prefix))
        line = HalfLineCoefficients(b=b, a=a, tail=free_halfline().tail)
        lines[root] = HalfLineData(lead=abs(random_weight(rng, min_weight, coeff_range)), line=line)
    edges = [("v1", "v2", abs(random_weight(rng, min_weight, coeff_range)))]
    return build_graph(compact, edges, lines)


def random_upper_points(rng: np.random.Generator, count: int, re_range: Tuple[float, float] = (-3.0, 3.0),
                        im_range: Tuple[float, float] = (0.1, 2.0)) -> List[complex]:
    re = rng.uniform(*re_range, count)
    im = rng.uniform(*im_range, count)
    return [complex(x, y) for x, y in zip(re, im)]


def almost_mathieu(key, n: int) -> Tuple[float, float]:
    """b_n = coupling cos(2 pi (frequency n + phase)), a_n = 1"""
    coupling, frequency, phase = key
    return coupling * math.cos(2 * math.pi * (frequency * n + phase)), 1.0


def anderson(key, n: int) -> Tuple[float, float]:
    """b_n uniform in [-disorder/2, disorder/2], reproducible per (seed, n)"""
    seed, disorder = key
    u = np.random.default_rng((int(seed), int(n))).random()
    return disorder * (u - 0.5), 1.0


@dataclass(frozen=True)
class Generator:
    """Registry entry: ``params`` names the key fields after the optional seed"""
    fn: Callable[[Any, int], Tuple[float, float]]
    params: Tuple[str, ...]
    seeded: bool
    default_bound: Callable[[Tuple[float, ...]], float]


GENERATORS: Dict[str, Generator] = {
    "almost_mathieu": Generator(almost_mathieu, ("coupling", "frequency", "phase"), False,
                                lambda p: max(abs(p[0]), 1.0)),
    "anderson": Generator(anderson, ("disorder",), True, lambda p: max(abs(p[0]) / 2, 1.0)),
}


def generator_tail(name: str, params: Sequence[float], seed: Optional[int] = None,
                   bound: Optional[float] = None, offset: int = 0) -> TailRule:
    """Tail rule for a registered generator"""
    entry = GENERATORS.get(name)
    if entry is None:
        raise PreconditionError(f"unknown generator {name!r}; known: {', '.join(sorted(GENERATORS))}")
    params = tuple(float(p) for p in params)
    if len(params) != len(entry.params):
        raise PreconditionError(f"generator {name} takes params {list(entry.params)}, got {len(params)} values")
    if entry.seeded:
        if seed is None:
            raise PreconditionError(f"generator {name} needs a seed")
        key = (int(seed),) + params
    else:
        if seed is not None:
            raise PreconditionError(f"generator {name} takes no seed")
        key = params
    bound = entry.default_bound(params) if bound is None else float(bound)
    return TailRule("generator", generator=entry.fn, key=key, name=name, offset=int(offset), bound=bound)


def generator_description(tail: TailRule) -> Dict[str, Any]:
    """Inverse of generator_tail, as plain JSON-ready values"""
    entry = GENERATORS.get(tail.name) if tail.name else None
    if entry is None or entry.fn is not tail.generator:
        raise PreconditionError("generator tail does not come from the registry")
    key = tuple(tail.key)
    out = {"rule": "generator", "name": tail.name, "params": list(key[1:] if entry.seeded else key),
           "bound": tail.bound}
    if entry.seeded:
        out["seed"] = key[0]
    if tail.offset:
        out["offset"] = tail.offset
    return out


def generator_data(name: str, key, lead: float = 1.0) -> HalfLineData:
    """Free-weight half-line whose potential comes from a named generator"""
    key = tuple(key)
    if name in GENERATORS and GENERATORS[name].seeded:
        tail = generator_tail(name, key[1:], seed=key[0])
    else:
        tail = generator_tail(name, key)
    return HalfLineData(lead=lead, line=HalfLineCoefficients(tail=tail))
