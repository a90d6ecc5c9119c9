"""Limits of sequences sampled along a decreasing epsilon ladder."""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from config import DIVERGENCE_SLOPE

CONVERGED = "converged"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"

SLOPE_RUNGS = 8
AITKEN_RUNGS = 10


@dataclass
class LimitEstimate:
    status: str
    value: Optional[complex]
    error: float
    slope: float

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def divergent(self) -> bool:
        return self.status == DIVERGENT

    def to_dict(self) -> dict:
        value = self.value
        if value is not None and isinstance(value, complex):
            value = [value.real, value.imag]
        return {"status": self.status, "value": value, "error": self.error, "slope": self.slope}


def eps_ladder(min_exp: int = 3, max_exp: int = 30) -> np.ndarray:
    """eps_j = 2^-j for j = min_exp..max_exp"""
    if max_exp <= min_exp:
        raise ValueError("ladder needs max_exp > min_exp")
    return 2.0 ** -np.arange(min_exp, max_exp + 1, dtype=float)


def growth_slope(ladder: Sequence[float], values: Sequence[complex], rungs: int = SLOPE_RUNGS) -> float:
    """Least-squares slope of log|f| against log(1/eps) over the last rungs"""
    eps = np.asarray(ladder, dtype=float)[-rungs:]
    mags = np.abs(np.asarray(values))[-rungs:]
    tiny = np.finfo(float).tiny
    if np.all(mags <= tiny):
        return -np.inf
    return float(np.polyfit(np.log(1.0 / eps), np.log(np.maximum(mags, tiny)), 1)[0])


def _aitken(seq: np.ndarray) -> np.ndarray:
    d1 = seq[1:-1] - seq[:-2]
    d2 = seq[2:] - seq[1:-1]
    den = d2 - d1
    scale = np.maximum(np.abs(seq[2:]), 1.0)
    # differences at rounding level carry no rate information
    flat = (np.abs(d2) <= 64 * np.finfo(float).eps * scale) | (np.abs(den) <= np.finfo(float).tiny)
    out = np.array(seq[2:], copy=True)
    ok = ~flat
    out[ok] = seq[2:][ok] - d2[ok] ** 2 / den[ok]
    return out


def limit_of(ladder: Sequence[float], values: Sequence[complex], divergence_slope: float = DIVERGENCE_SLOPE,
             rel_tol: float = 1e-4) -> LimitEstimate:
    """Extrapolate f(eps) to eps -> 0 or flag power-law divergence"""
    values = np.asarray(values)
    is_real = not np.iscomplexobj(values)
    seq = values.astype(complex)
    if len(seq) < 4:
        raise ValueError("ladder too short for extrapolation")
    if not np.all(np.isfinite(seq)):
        return LimitEstimate(INCONCLUSIVE, None, np.inf, np.nan)

    slope = growth_slope(ladder, seq)
    tail = np.abs(seq[-SLOPE_RUNGS:])
    if slope > divergence_slope and tail[-1] >= tail[0]:
        return LimitEstimate(DIVERGENT, None, np.inf, slope)

    current = seq[-AITKEN_RUNGS:]
    passes = []
    while len(current) >= 5 and len(passes) < 2:
        current = _aitken(current)
        passes.append(current)
    best = passes[-1] if passes else seq[-3:]
    value = best[-1]
    error = float(np.max(np.abs(best[-3:] - value)))
    if error > rel_tol * (1.0 + abs(value)):
        logger.debug(f"Ladder did not settle: value={value}, error={error:.3e}, slope={slope:.3f}")
        return LimitEstimate(INCONCLUSIVE, None, error, slope)
    return LimitEstimate(CONVERGED, value.real if is_real else complex(value), error, slope)


def limits_of_array(ladder: Sequence[float], stack: np.ndarray, divergence_slope: float = DIVERGENCE_SLOPE,
                    rel_tol: float = 1e-4) -> np.ndarray:
    """Elementwise ``limit_of`` over the trailing axes of ``stack`` (ladder axis first)"""
    stack = np.asarray(stack)
    shape = stack.shape[1:]
    flat = stack.reshape(stack.shape[0], -1)
    out = np.empty(flat.shape[1], dtype=object)
    for i in range(flat.shape[1]):
        out[i] = limit_of(ladder, flat[:, i], divergence_slope, rel_tol)
    return out.reshape(shape)
