"""Deterministic random-number plumbing.

Every stochastic operation in the package takes an explicit integer seed and
derives its stream from the counter-based Philox generator, keyed by a hash of
(seed, *labels).  Identical (seed, labels) always reproduce identical streams,
independently of call order, which is what makes quenched environments and
trajectories exactly re-runnable.
"""

from __future__ import annotations

import hashlib

import numpy as np


def philox(seed: int, *labels) -> np.random.Generator:
    """Return a Generator keyed by (seed, *labels).

    The labels name the derivation path (e.g. ("replica", 3, "init")) so that
    independent sub-streams never collide and never depend on draw order.
    """
    msg = ":".join(str(p) for p in (int(seed), *labels))
    digest = hashlib.sha256(msg.encode("utf8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def seed_label(seed: int, *labels) -> str:
    """Human-readable derivation-path label, recorded in run manifests."""
    return ":".join(str(p) for p in (int(seed), *labels))
