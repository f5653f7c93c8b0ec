"""Deterministic random streams keyed by (master_seed, domain, ...).

Key-derivation rule
-------------------
A stream for key ``(master_seed, domain, a, b, ...)`` is::

    Generator(Philox(SeedSequence(entropy=master_seed, spawn_key=(domain, a, b, ...))))

``domain`` is one of the integer tags below so that, e.g., the device-sampling
stream of round 3 never collides with the encoding stream of device 3.

Per-coordinate streams are *blocks* of the per-(device, round) stream: the
encoder draws a ``(f, k)`` array of uniforms in C order, so coordinate ``j``
owns doubles ``j*k .. j*k + k - 1`` of the ``DEVICE`` stream for that
(device, round). ``k`` is ``m - 1`` for RQM (``m - 2`` inclusion draws then one
rounding draw) and the trial count for PBM. Calling the scalar samplers
coordinate by coordinate on the same generator reproduces the vectorised
encoders exactly.
"""

from __future__ import annotations

import numpy as np

DATA = 0
SAMPLING = 1
DEVICE = 2
INIT = 3
MISC = 4


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    if master_seed < 0 or any(k < 0 for k in key):
        raise ValueError("seeds and key components must be non-negative integers")
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``key`` under ``master_seed`` (see module docstring)."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, *key)))


def device_stream(master_seed: int, device_id: int, round_index: int) -> np.random.Generator:
    return stream(master_seed, DEVICE, device_id, round_index)
