"""Named experiment presets: the divergence sweeps and the pinned simulation."""

from __future__ import annotations

import numpy as np

from rqm.accountant import SweepSpec
from rqm.mechanism import RqmParams
from rqm.pbm import pbm_for_levels
from rqm.simulator import SimConfig

LEVELS = 16
DEFAULT_C = 1.5
DEVICE_COUNTS = tuple(range(1, 41))
ALPHA_GRID = tuple(float(a) for a in np.unique(np.round(np.geomspace(2.0, 1000.0, 60), 6)))

# name -> (rqm delta / c, rqm q, pbm theta)
PAIRS = {
    "fig3": (1.0, 0.42, 0.25),
    "appd15": (2.33, 0.42, 0.15),
    "appd35": (0.429, 0.49, 0.35),
}

# three-mechanism comparison on the synthetic task; seed 0 is the pinned run
PINNED_SIM = SimConfig(rounds=500, master_seed=0)


def preset_sweeps(name: str, c: float = DEFAULT_C, full_trials: bool = False) -> list[SweepSpec]:
    """Device-count sweep at alpha=2 plus order sweeps at n=1 and n=40."""
    if name not in PAIRS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PAIRS)}")
    ratio, q, theta = PAIRS[name]
    rqm = RqmParams(c=c, delta=ratio * c, m=LEVELS, q=q)
    pbm = pbm_for_levels(c, theta, LEVELS, match_support=not full_trials)
    return [
        SweepSpec("n", DEVICE_COUNTS, rqm, pbm, alpha=2.0, label=f"{name}-n"),
        SweepSpec("alpha", ALPHA_GRID, rqm, pbm, n=1, label=f"{name}-alpha-n1"),
        SweepSpec("alpha", ALPHA_GRID, rqm, pbm, n=40, label=f"{name}-alpha-n40"),
    ]
