"""Reduced-scale invariant suites run by ``rqm selftest``.

Each suite returns ``None`` on success or a string describing the first
counterexample found.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from rqm import distribution
from rqm.accountant import divergence, theorem1_bound
from rqm.mechanism import RqmParams, build_grid
from rqm.pbm import PbmParams, pbm_pmf

QS = (0.1, 0.42, 0.5, 0.9)
DELTA_RATIOS = (0.25, 0.66, 1.0, 2.0)
ALPHAS = (1.5, 2.0, 10.0, 100.0, 1000.0, math.inf)


@dataclass
class SuiteResult:
    name: str
    counterexample: str | None
    seconds: float

    @property
    def passed(self) -> bool:
        return self.counterexample is None


def _configs(max_m: int, n_inputs: int):
    for m, q, ratio in itertools.product(range(2, max_m + 1), QS, DELTA_RATIOS):
        params = RqmParams(c=1.0, delta=ratio, m=m, q=q)
        yield params, build_grid(params), np.linspace(-1.0, 1.0, n_inputs).tolist()


def oracle_equivalence(max_m: int = 10, n_inputs: int = 11, fault: bool = False):
    for params, grid, xs in _configs(max_m, n_inputs):
        for x in xs:
            closed = distribution._closed_form(x, params, grid, fault=fault)
            brute = distribution.rqm_pmf_bruteforce(x, params, grid)
            err = np.max(np.abs(closed - brute))
            if not err < 1e-12:
                return f"{params}, x={x!r}: max |closed - brute| = {err:.3e}"
    return None


def unbiasedness(max_m: int = 10, n_inputs: int = 11, fault: bool = False):
    for params, grid, xs in _configs(max_m, n_inputs):
        for x in xs:
            p = distribution._closed_form(x, params, grid, fault=fault)
            mean = float(np.dot(p, grid.levels))
            if not abs(mean - x) <= 1e-10:
                return f"{params}, x={x!r}: mean {mean!r}"
    return None


def monotonicity(pairs: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    for k in range(pairs):
        if k % 2 == 0:
            params = RqmParams(c=1.0, delta=float(rng.choice(DELTA_RATIOS)), m=int(rng.integers(2, 17)), q=float(rng.choice(QS)))
            pmf = lambda x: distribution.rqm_pmf(x, params)
        else:
            params = PbmParams(c=1.0, theta=float(rng.uniform(0.05, 0.45)), m=int(rng.integers(1, 17)))
            pmf = lambda x: pbm_pmf(x, params)
        x, y = rng.uniform(-1, 1, size=2).tolist()
        p, q = pmf(x), pmf(y)
        values = [divergence(p, q, a) for a in ALPHAS]
        for (a0, v0), (a1, v1) in zip(zip(ALPHAS, values), zip(ALPHAS[1:], values[1:])):
            if v1 < v0 - 1e-10:
                return f"{params}, x={x!r}, x'={y!r}: D_{a0}={v0!r} > D_{a1}={v1!r}"
    return None


def bound_domination(max_m: int = 8, n_inputs: int = 7):
    for params, grid, xs in _configs(max_m, n_inputs):
        bound = theorem1_bound(params)
        pmfs = [distribution.rqm_pmf(x, params, grid) for x in xs]
        for (x, p), (y, q) in itertools.product(zip(xs, pmfs), repeat=2):
            d = divergence(p, q, math.inf)
            if d > bound + 1e-9:
                return f"{params}, x={x!r}, x'={y!r}: D_inf={d!r} > bound {bound!r}"
    return None


def run_selftest(inject_fault: bool = False) -> list[SuiteResult]:
    suites = [
        ("oracle-equivalence", lambda: oracle_equivalence(fault=inject_fault)),
        ("unbiasedness", lambda: unbiasedness(fault=inject_fault)),
        ("monotonicity", monotonicity),
        ("bound-domination", bound_domination),
    ]
    results = []
    for name, fn in suites:
        start = time.perf_counter()
        counterexample = fn()
        results.append(SuiteResult(name, counterexample, time.perf_counter() - start))
    return results
