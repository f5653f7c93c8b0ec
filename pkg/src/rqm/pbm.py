"""Poisson Binomial Mechanism baseline.

Parameterization: a scalar ``x`` in ``[-c, c]`` sets the success probability
``p(x) = 1/2 + theta * x / c`` and the mechanism releases the number of
successes in ``m`` Bernoulli(``p(x)``) trials, so the output support is
``{0..m}``. For a comparison against an RQM with ``L`` levels at equal
support size use ``m = L - 1`` trials (see :func:`pbm_for_levels`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rqm.errors import ConsistencyError, DomainError, ParameterError


@dataclass(frozen=True)
class PbmParams:
    """``c``: clipping bound; ``theta``: in (0, 1/2); ``m``: number of trials."""

    c: float
    theta: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ParameterError(f"c must be a positive finite real, got {self.c!r}")
        # theta = 1/2 would put p(+-c) on {0, 1}
        if not 0.0 < self.theta < 0.5:
            raise ParameterError(f"theta must lie in (0, 1/2), got {self.theta!r}")
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 1:
            raise ParameterError(f"m (trials) must be an integer >= 1, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))

    def success_probability(self, x: float) -> float:
        x = float(x)
        if not abs(x) <= self.c:
            raise DomainError(f"|x| must be <= c={self.c}, got x={x!r}")
        return 0.5 + self.theta * x / self.c


def pbm_for_levels(c: float, theta: float, levels: int, match_support: bool = True) -> PbmParams:
    """PBM sized against an RQM with ``levels`` levels.

    With ``match_support`` the output support ``{0..levels-1}`` has the same
    cardinality as the RQM's; otherwise ``levels`` trials are used.
    """
    return PbmParams(c=c, theta=theta, m=levels - 1 if match_support else levels)


def pbm_pmf(x: float, params: PbmParams) -> np.ndarray:
    """Binomial(m, p(x)) probabilities over ``0..m`` from log-gamma terms."""
    p = params.success_probability(x)
    m = params.m
    log_p, log_1mp = math.log(p), math.log1p(-p)
    lg_m = math.lgamma(m + 1)
    probs = np.array(
        [math.exp(lg_m - math.lgamma(i + 1) - math.lgamma(m - i + 1) + i * log_p + (m - i) * log_1mp) for i in range(m + 1)]
    )
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ConsistencyError(f"pbm_pmf sums to {probs.sum()!r} at x={x!r}, {params}")
    return probs


def pbm_sample(x: float, params: PbmParams, rng: np.random.Generator) -> int:
    """Sum of ``m`` Bernoulli(p(x)) draws; consumes ``m`` uniforms."""
    p = params.success_probability(x)
    return int(np.count_nonzero(rng.random(params.m) < p))


def pbm_sample_array(xs, params: PbmParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`pbm_sample`; same C-order uniform consumption."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1:
        raise ValueError("xs must be one-dimensional")
    if not np.all(np.abs(xs) <= params.c):
        raise DomainError(f"all inputs must satisfy |x| <= c={params.c}")
    p = 0.5 + params.theta * xs / params.c
    u = rng.random((len(xs), params.m))
    return np.count_nonzero(u < p[:, None], axis=1)


def pbm_decode_aggregate(z_sum, n: int, params: PbmParams):
    """Unbiased estimate of the mean input from a sum of ``n`` PBM outputs."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    top = n * params.m
    z = np.asarray(z_sum)
    if np.any(z < 0) or np.any(z > top):
        raise DomainError(f"aggregate outside 0..{top}")
    out = params.c * (z / top - 0.5) / params.theta
    return float(out) if out.ndim == 0 else out
