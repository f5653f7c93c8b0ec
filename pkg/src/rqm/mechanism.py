"""Randomized Quantization Mechanism: grid, level subsampling, randomized rounding.

A scalar ``x`` in ``[-c, c]`` is released as an index ``z`` into ``m`` evenly
spaced levels over ``[-(c + delta), c + delta]``. Interior levels survive
independently with probability ``q``; ``x`` is then randomly rounded between
the two surviving levels that bracket it, so ``E[levels[z]] = x``.

RNG consumption is part of the contract: ``m - 2`` uniforms for the interior
inclusion draws (ascending index order, level ``i`` kept iff ``u < q``), then
one uniform for the rounding step (round up iff ``u < p_up``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rqm.errors import DomainError, ParameterError


@dataclass(frozen=True)
class RqmParams:
    """Parameters of the mechanism.

    Attributes:
        c: clipping bound on inputs.
        delta: range extension beyond ``c`` on both sides.
        m: number of quantization levels.
        q: inclusion probability of each interior level.
    """

    c: float
    delta: float
    m: int
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ParameterError(f"c must be a positive finite real, got {self.c!r}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ParameterError(f"delta must be a positive finite real, got {self.delta!r}")
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 2:
            raise ParameterError(f"m must be an integer >= 2, got {self.m!r}")
        if not 0.0 < self.q < 1.0:
            raise ParameterError(f"q must lie in the open interval (0, 1), got {self.q!r}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def x_max(self) -> float:
        return self.c + self.delta


@dataclass(frozen=True)
class QuantizationGrid:
    levels: np.ndarray
    x_max: float

    @property
    def m(self) -> int:
        return len(self.levels)


def build_grid(params: RqmParams) -> QuantizationGrid:
    m, x_max = params.m, params.x_max
    i = np.arange(m, dtype=np.float64)
    levels = -x_max + 2.0 * i * x_max / (m - 1)
    # endpoints are exact in real arithmetic; pin them against rounding
    levels[0] = -x_max
    levels[-1] = x_max
    levels.setflags(write=False)
    return QuantizationGrid(levels=levels, x_max=x_max)


def subsample_levels(params: RqmParams, rng: np.random.Generator) -> np.ndarray:
    """Draw the surviving level indices; always contains 0 and ``m - 1``."""
    m = params.m
    if m == 2:
        return np.array([0, 1])
    keep = rng.random(m - 2) < params.q
    interior = np.flatnonzero(keep) + 1
    return np.concatenate(([0], interior, [m - 1]))


def locate_bin(x: float, grid: QuantizationGrid) -> int:
    """Index ``j`` with ``levels[j] <= x < levels[j + 1]``.

    Formula then clamp, plus a single-step correction so the result is
    consistent with the stored level values when ``x`` sits within an ulp of
    a grid point.
    """
    x_max, levels = grid.x_max, grid.levels
    m = len(levels)
    if not (-x_max <= x < x_max):
        raise DomainError(f"x={x!r} outside [-{x_max}, {x_max})")
    j = math.floor((x + x_max) * (m - 1) / (2.0 * x_max))
    j = min(max(j, 0), m - 2)
    if x < levels[j] and j > 0:
        j -= 1
    elif x >= levels[j + 1] and j < m - 2:
        j += 1
    return j


def randomized_round(x: float, lo: int, hi: int, grid: QuantizationGrid, rng: np.random.Generator) -> int:
    levels = grid.levels
    if not (0 <= lo < hi < len(levels)):
        raise ValueError(f"need 0 <= lo < hi < m, got lo={lo}, hi={hi}")
    if not (levels[lo] <= x <= levels[hi]):
        raise ValueError(f"x={x!r} not within [levels[{lo}], levels[{hi}]]")
    p_up = (x - levels[lo]) / (levels[hi] - levels[lo])
    return hi if rng.random() < p_up else lo


def _check_input(x: float, params: RqmParams) -> float:
    x = float(x)
    if not abs(x) <= params.c:
        raise DomainError(f"|x| must be <= c={params.c}, got x={x!r}")
    return x


def rqm_sample(x: float, params: RqmParams, rng: np.random.Generator, grid: QuantizationGrid | None = None) -> int:
    """Run the mechanism once on a scalar and return the released level index."""
    x = _check_input(x, params)
    grid = grid or build_grid(params)
    subset = subsample_levels(params, rng)
    below = grid.levels[subset] <= x
    # subset is sorted, so the bracket is the last member at or below x and the next one
    pos = int(np.count_nonzero(below)) - 1
    lo, hi = int(subset[pos]), int(subset[pos + 1])
    return randomized_round(x, lo, hi, grid, rng)


def rqm_sample_array(xs, params: RqmParams, rng: np.random.Generator, grid: QuantizationGrid | None = None) -> np.ndarray:
    """Vectorised :func:`rqm_sample` over a 1-D array of inputs.

    Consumes ``len(xs) * (m - 1)`` uniforms in C order, which is exactly what
    calling :func:`rqm_sample` on each element in turn would consume, so both
    paths return identical indices for the same generator state.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1:
        raise ValueError("xs must be one-dimensional")
    if not np.all(np.abs(xs) <= params.c):
        raise DomainError(f"all inputs must satisfy |x| <= c={params.c}")
    grid = grid or build_grid(params)
    levels, m = grid.levels, params.m
    u = rng.random((len(xs), m - 1))

    kept = np.ones((len(xs), m), dtype=bool)
    kept[:, 1 : m - 1] = u[:, : m - 2] < params.q
    below = levels[None, :] <= xs[:, None]
    idx = np.arange(m)
    lo = np.where(kept & below, idx, -1).max(axis=1)
    hi = np.where(kept & ~below, idx, m).min(axis=1)

    p_up = (xs - levels[lo]) / (levels[hi] - levels[lo])
    return np.where(u[:, m - 2] < p_up, hi, lo)


def decode_level(z: int, params: RqmParams) -> float:
    m = params.m
    if not 0 <= z <= m - 1:
        raise DomainError(f"level index {z} outside 0..{m - 1}")
    x_max = params.x_max
    return -x_max + 2.0 * z * x_max / (m - 1)


def decode_aggregate(z_sum, n: int, params: RqmParams):
    """Server-side decode of a summed message; the mean of the n device levels.

    Accepts a scalar or an integer array of per-coordinate sums.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    top = n * (params.m - 1)
    z = np.asarray(z_sum)
    if np.any(z < 0) or np.any(z > top):
        raise DomainError(f"aggregate outside 0..{top}")
    x_max = params.x_max
    out = -x_max + 2.0 * z * x_max / top
    return float(out) if out.ndim == 0 else out


def clip_coordinatewise(v, c: float) -> np.ndarray:
    return np.clip(np.asarray(v, dtype=np.float64), -c, c)
