"""Exact output distribution of the mechanism.

Two independent routes:

* :func:`rqm_pmf` evaluates the four-case closed form. With ``j`` the bin of
  ``x`` (``levels[j] <= x < levels[j+1]``) and ``r = 1 - q``, the probability
  that level ``k <= j`` is the lower rounding bracket is ``r**j`` for ``k = 0``
  and ``q * r**(j-k)`` otherwise; the probability that level ``k > j`` is the
  upper bracket is ``q * r**(k-j-1)`` for ``k < m-1`` and ``r**(m-j-2)`` for
  ``k = m-1``. The two events are independent, and rounding splits each
  bracket pair's mass linearly.
* :func:`rqm_pmf_bruteforce` enumerates all ``2**(m-2)`` interior subsets.

PMFs are plain 1-D float64 arrays indexed by level (or by sum for aggregates).
"""

from __future__ import annotations

import numpy as np

from rqm.errors import CapacityError, ConsistencyError, DomainError
from rqm.mechanism import QuantizationGrid, RqmParams, _check_input, build_grid, locate_bin

NORMALIZATION_TOL = 1e-10
BRUTEFORCE_MAX_M = 20


def _bracket_weights(j: int, m: int, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities of each level being the lower / upper rounding bracket.

    Geometric factors are accumulated by repeated multiplication, walking
    outward from the bin.
    """
    r = 1.0 - q
    lower = np.zeros(m)
    upper = np.zeros(m)

    run = 1.0  # r**(j-k)
    for k in range(j, 0, -1):
        lower[k] = q * run
        run *= r
    lower[0] = run  # r**j

    run = 1.0  # r**(k-j-1)
    for k in range(j + 1, m - 1):
        upper[k] = q * run
        run *= r
    upper[m - 1] = run  # r**(m-j-2)
    return lower, upper


def _closed_form(x: float, params: RqmParams, grid: QuantizationGrid, fault: bool = False) -> np.ndarray:
    m = params.m
    levels = grid.levels
    j = locate_bin(x, grid)
    lower, upper = _bracket_weights(j, m, params.q)

    probs = np.empty(m)
    ks_up = np.arange(j + 1, m)
    ks_lo = np.arange(0, j + 1)
    for i in range(j + 1):
        # i is the lower bracket, partnered with every candidate upper level
        frac = (levels[ks_up] - x) / (levels[ks_up] - levels[i])
        if fault and i == 0:
            frac = -frac
        probs[i] = lower[i] * np.dot(upper[ks_up], frac)
    for i in range(j + 1, m):
        frac = (x - levels[ks_lo]) / (levels[i] - levels[ks_lo])
        probs[i] = upper[i] * np.dot(lower[ks_lo], frac)
    return probs


def rqm_pmf(x: float, params: RqmParams, grid: QuantizationGrid | None = None) -> np.ndarray:
    """Exact ``Pr(z = i)`` for ``i = 0..m-1`` via the closed form.

    No renormalization is applied: a total mass off by more than 1e-10 raises
    :class:`ConsistencyError`.
    """
    x = _check_input(x, params)
    grid = grid or build_grid(params)
    probs = _closed_form(x, params, grid)
    total = probs.sum()
    if not abs(total - 1.0) <= NORMALIZATION_TOL or np.any(probs < 0):
        raise ConsistencyError(f"rqm_pmf not a distribution at x={x!r}, {params}: sum={total!r}")
    return probs


def rqm_pmf_bruteforce(x: float, params: RqmParams, grid: QuantizationGrid | None = None) -> np.ndarray:
    """Exact PMF by enumerating every subset of interior levels.

    Each subset ``S`` carries weight ``q**|S| * (1-q)**(m-2-|S|)``; its
    bracketing pair around ``x`` receives that weight split by randomized
    rounding. Cost is ``O(2**(m-2))``.
    """
    x = _check_input(x, params)
    m, q = params.m, params.q
    if m > BRUTEFORCE_MAX_M:
        raise CapacityError(f"brute force limited to m <= {BRUTEFORCE_MAX_M}, got m={m}")
    levels = (grid or build_grid(params)).levels

    at_or_below = 0
    for i in range(m):
        if levels[i] <= x:
            at_or_below |= 1 << i
    above = ((1 << m) - 1) & ~at_or_below
    powers = [q**s * (1.0 - q) ** (m - 2 - s) for s in range(m - 1)]

    probs = np.zeros(m)
    ends = 1 | (1 << (m - 1))
    for interior in range(1 << (m - 2)):
        members = ends | (interior << 1)
        weight = powers[bin(interior).count("1")]
        lo = (members & at_or_below).bit_length() - 1
        hi_bits = members & above
        hi = (hi_bits & -hi_bits).bit_length() - 1
        p_up = (x - levels[lo]) / (levels[hi] - levels[lo])
        probs[lo] += weight * (1.0 - p_up)
        probs[hi] += weight * p_up
    return probs


def pmf_mean(p, grid: QuantizationGrid) -> float:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != grid.levels.shape:
        raise DomainError(f"PMF has {p.size} entries, grid has {grid.m} levels")
    return float(np.dot(p, grid.levels))


def check_pmf(p, tol: float = 1e-12) -> np.ndarray:
    """Validate nonnegativity and normalization; return ``p`` as an array."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DomainError("a PMF must be a non-empty 1-D vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise DomainError("PMF entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > tol:
        raise DomainError(f"PMF sums to {p.sum()!r}, not 1")
    return p
