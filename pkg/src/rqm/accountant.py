"""Renyi-DP accounting for single devices and securely aggregated sums.

The accountant works on exact PMFs: per-device output distributions come
from :mod:`rqm.distribution` or :mod:`rqm.pbm`, sums are exact discrete
convolutions, and divergences are evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from rqm import rng as rngmod
from rqm.distribution import rqm_pmf
from rqm.errors import DomainError, ParameterError
from rqm.mechanism import RqmParams, build_grid
from rqm.pbm import PbmParams, pbm_pmf

MechanismParams = Union[RqmParams, PbmParams]

# below this, a linear-space convolution is considered to have lost its tails
UNDERFLOW_FLOOR = 1e-300


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DomainError(f"support mismatch: {p.shape} vs {q.shape}")
    return p, q


def renyi_divergence_log(log_p, log_q, alpha: float) -> float:
    """``D_alpha(P || Q)`` from log-probabilities (``-inf`` marks zero mass)."""
    log_p, log_q = _pair(log_p, log_q)
    if not (alpha > 1 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be a finite real > 1, got {alpha!r}")
    live = log_p > -np.inf
    if np.any(log_q[live] == -np.inf):
        return math.inf
    terms = alpha * log_p[live] - (alpha - 1.0) * log_q[live]
    return max(float(logsumexp(terms)) / (alpha - 1.0), 0.0)


def max_divergence_log(log_p, log_q) -> float:
    log_p, log_q = _pair(log_p, log_q)
    live = log_p > -np.inf
    if np.any(log_q[live] == -np.inf):
        return math.inf
    return max(float(np.max(log_p[live] - log_q[live])), 0.0)


def _logs(p, q):
    p, q = _pair(p, q)
    if np.any(p < 0) or np.any(q < 0):
        raise DomainError("probabilities must be nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(p), np.log(q)


def renyi_divergence(p, q, alpha: float) -> float:
    """Order-``alpha`` Renyi divergence of two PMFs on the same support.

    Computed as ``LSE_i(alpha*log p_i - (alpha-1)*log q_i) / (alpha-1)`` with a
    max shift, so very large orders stay finite. Returns ``inf`` when ``P``
    puts mass where ``Q`` has none. Tiny negative results from rounding are
    clamped to zero.
    """
    return renyi_divergence_log(*_logs(p, q), alpha)


def max_divergence(p, q) -> float:
    """``D_inf(P || Q) = max_i log(p_i / q_i)`` over the support of ``P``."""
    return max_divergence_log(*_logs(p, q))


def divergence(p, q, alpha: float) -> float:
    return max_divergence(p, q) if math.isinf(alpha) else renyi_divergence(p, q, alpha)


def _convolve_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    out = np.zeros(len(a) + len(b) - 1)
    comp = np.zeros_like(out)
    # one Kahan step per shifted copy of the longer vector
    for i, w in enumerate(short):
        seg = slice(i, i + len(long_))
        y = long_ * w - comp[seg]
        t = out[seg] + y
        comp[seg] = (t - out[seg]) - y
        out[seg] = t
    return out


def convolve_sum(pmfs: Sequence) -> np.ndarray:
    """PMF of the sum of independent variables with the given PMFs."""
    if len(pmfs) == 0:
        raise DomainError("convolve_sum needs at least one PMF")
    acc = np.asarray(pmfs[0], dtype=np.float64)
    for p in pmfs[1:]:
        acc = _convolve_pair(acc, np.asarray(p, dtype=np.float64))
    return acc


def log_convolve_sum(log_pmfs: Sequence) -> np.ndarray:
    """Log-space counterpart of :func:`convolve_sum` for tails below ~1e-300."""
    if len(log_pmfs) == 0:
        raise DomainError("log_convolve_sum needs at least one PMF")
    acc = np.asarray(log_pmfs[0], dtype=np.float64)
    for lp in log_pmfs[1:]:
        lp = np.asarray(lp, dtype=np.float64)
        size = len(acc) + len(lp) - 1
        stack = np.full((len(lp), size), -np.inf)
        for i, w in enumerate(lp):
            stack[i, i : i + len(acc)] = acc + w
        acc = logsumexp(stack, axis=0)
    return acc


def worst_case_neighbors(n: int, c: float, split_k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Neighbouring input vectors at the extremes of ``[-c, c]``.

    Device 0 holds ``c`` in ``x`` and ``-c`` in ``x'``; of the remaining
    ``n - 1`` devices, ``split_k`` hold ``c`` and the rest ``-c`` in both.
    The default split is ``(n - 1) // 2``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if split_k is None:
        split_k = (n - 1) // 2
    if not 0 <= split_k <= n - 1:
        raise DomainError(f"split_k must lie in 0..{n - 1}, got {split_k}")
    rest = np.array([c] * split_k + [-c] * (n - 1 - split_k), dtype=np.float64)
    x = np.concatenate(([c], rest))
    x_prime = np.concatenate(([-c], rest))
    return x, x_prime


def random_neighbors(n: int, c: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Devices 2..n get ``+c`` or ``-c`` by independent fair coin flips."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    split_k = int(np.count_nonzero(rng.random(n - 1) < 0.5))
    return worst_case_neighbors(n, c, split_k)


def device_pmf(x: float, mechanism: MechanismParams) -> np.ndarray:
    if isinstance(mechanism, RqmParams):
        return rqm_pmf(x, mechanism)
    if isinstance(mechanism, PbmParams):
        return pbm_pmf(x, mechanism)
    raise TypeError(f"unsupported mechanism {mechanism!r}")


@dataclass(frozen=True)
class DivergenceQuery:
    alpha: float
    mechanism: MechanismParams
    x: tuple
    x_prime: tuple
    allow_identical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "x_prime", tuple(float(v) for v in self.x_prime))
        if not (self.alpha > 1):
            raise DomainError(f"alpha must be > 1 (or inf), got {self.alpha!r}")
        if len(self.x) != len(self.x_prime) or len(self.x) == 0:
            raise DomainError("x and x_prime must be non-empty and of equal length")
        c = self.mechanism.c
        if any(abs(v) > c for v in self.x + self.x_prime):
            raise DomainError(f"all inputs must satisfy |x| <= c={c}")
        differing = [i for i, (a, b) in enumerate(zip(self.x, self.x_prime)) if a != b]
        if len(differing) > 1:
            raise DomainError(f"neighbours must differ in at most one device, got {len(differing)}")
        if not differing and not self.allow_identical:
            raise DomainError("x and x_prime are identical (set allow_identical for tests)")


def aggregate_divergence(query: DivergenceQuery) -> float:
    """``D_alpha`` between the laws of ``sum_i Z(x_i)`` and ``sum_i Z(x'_i)``."""
    cache: dict[float, np.ndarray] = {}

    def pmf(v: float) -> np.ndarray:
        if v not in cache:
            cache[v] = device_pmf(v, query.mechanism)
        return cache[v]

    p = convolve_sum([pmf(v) for v in query.x])
    q = convolve_sum([pmf(v) for v in query.x_prime])
    if min(p.min(), q.min()) < UNDERFLOW_FLOOR:
        with np.errstate(divide="ignore"):
            log_p = log_convolve_sum([np.log(pmf(v)) for v in query.x])
            log_q = log_convolve_sum([np.log(pmf(v)) for v in query.x_prime])
    else:
        log_p, log_q = np.log(p), np.log(q)
    if math.isinf(query.alpha):
        return max_divergence_log(log_p, log_q)
    return renyi_divergence_log(log_p, log_q, query.alpha)


def theorem1_bound(params: RqmParams) -> float:
    """Closed-form upper bound on the single-device ``D_inf`` of the mechanism.

    ``log(2 (1-q)^2 (1 + c/delta)) + m log(1/(1-q))``
    """
    q = params.q
    return (
        math.log(2.0) + 2.0 * math.log1p(-q) + math.log1p(params.c / params.delta) - params.m * math.log1p(-q)
    )


def extreme_pair_divergence(params: RqmParams, alpha: float = math.inf) -> float:
    """Numeric single-device divergence between inputs ``c`` and ``-c``."""
    grid = build_grid(params)
    return divergence(rqm_pmf(params.c, params, grid), rqm_pmf(-params.c, params, grid), alpha)


AXES = ("n", "alpha", "x")


@dataclass(frozen=True)
class SweepSpec:
    """One divergence sweep.

    ``axis`` selects what varies over ``values``: the device count ``n``, the
    order ``alpha``, or the differing device's input ``x`` (its neighbour
    value stays at ``-c``). Other devices follow ``split_k`` (balanced when
    ``None``), or fair coin flips keyed by ``neighbor_seed`` when that is set.
    """

    axis: str
    values: tuple
    rqm: RqmParams
    pbm: PbmParams
    alpha: float = 2.0
    n: int = 1
    split_k: int | None = None
    neighbor_seed: int | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"axis must be one of {AXES}, got {self.axis!r}")
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ParameterError("sweep range is empty")
        if self.axis == "n" and any(int(v) != v or v < 1 for v in self.values):
            raise ParameterError("device counts must be integers >= 1")
        if self.axis == "alpha" and any(not v > 1 for v in self.values):
            raise ParameterError("orders must be > 1")
        if self.axis != "alpha" and not self.alpha > 1:
            raise ParameterError(f"alpha must be > 1, got {self.alpha!r}")
        if self.axis != "n" and self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n!r}")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    n: int
    alpha: float
    eps_rqm: float
    eps_pbm: float


def _row_inputs(spec: SweepSpec, value, c: float) -> tuple[int, float, np.ndarray, np.ndarray]:
    n = int(value) if spec.axis == "n" else spec.n
    alpha = float(value) if spec.axis == "alpha" else spec.alpha
    if spec.neighbor_seed is not None:
        x, x_prime = random_neighbors(n, c, rngmod.stream(spec.neighbor_seed, rngmod.MISC, n))
    else:
        x, x_prime = worst_case_neighbors(n, c, spec.split_k)
    if spec.axis == "x":
        x = x.copy()
        x[0] = float(value)
    return n, alpha, x, x_prime


def sweep_row(spec: SweepSpec, value) -> SweepRow:
    eps = []
    for mech in (spec.rqm, spec.pbm):
        n, alpha, x, x_prime = _row_inputs(spec, value, mech.c)
        query = DivergenceQuery(alpha, mech, tuple(x), tuple(x_prime), allow_identical=spec.axis == "x")
        eps.append(aggregate_divergence(query))
    return SweepRow(spec.axis, float(value), n, alpha, eps[0], eps[1])


def divergence_sweep(spec: SweepSpec, map_fn=map) -> list[SweepRow]:
    """Evaluate every row of ``spec``. Rows are independent; pass e.g.
    ``executor.map`` as ``map_fn`` to run them concurrently."""
    return list(map_fn(sweep_row, [spec] * len(spec.values), spec.values))
