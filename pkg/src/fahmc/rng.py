"""Reproducible random-stream derivation.

Every run derives all of its randomness from a single integer master seed
through ``numpy``'s splittable ``SeedSequence`` mechanism.  A stream is
identified by a ``(role, node)`` pair, so the shared momentum stream, each
node's private momentum stream and each node's gradient-noise stream are
mutually independent and can be consumed concurrently without coordination.
Within a stream, draws are consumed sequentially in iteration order with a
fixed per-iteration consumption, which keeps runs bit-reproducible
regardless of how node work is scheduled.
"""

from __future__ import annotations

import numpy as np

# Stream roles.
SHARED_MOMENTUM = 0
NODE_MOMENTUM = 1
GRADIENT_NOISE = 2


def derive_stream(master_seed: int, role: int, node: int = 0) -> np.random.Generator:
    """Return the generator for stream ``(role, node)`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(role, node)))


def derive_seed(master_seed: int, *key: int) -> int:
    """Derive a child master seed (e.g. one per replicate or sweep point)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


class StreamLayout:
    """The fixed set of streams used by the samplers.

    One shared momentum stream, plus one private momentum stream and one
    gradient-noise stream per node.
    """

    def __init__(self, master_seed: int, n_nodes: int):
        self.master_seed = int(master_seed)
        self.n_nodes = int(n_nodes)
        self.shared_momentum = derive_stream(master_seed, SHARED_MOMENTUM, 0)
        self.node_momentum = [derive_stream(master_seed, NODE_MOMENTUM, c)
                              for c in range(n_nodes)]
        self.gradient_noise = [derive_stream(master_seed, GRADIENT_NOISE, c)
                               for c in range(n_nodes)]
