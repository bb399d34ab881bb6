"""Seeded random streams.

All randomness goes through :func:`stream`, which derives an independent
Philox (counter-based, 64-bit) generator from a root seed plus a purpose tag
and integer indices.  Because a replicate's stream depends only on its own
key, results do not depend on evaluation order or worker count.
"""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag(purpose):
    return zlib.crc32(purpose.encode("utf-8"))


def _key(seed, purpose, indices):
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=(_tag(purpose),) + tuple(int(i) for i in indices),
    )


def stream(seed, purpose, *indices):
    """Return the generator for ``(seed, purpose, *indices)``."""
    return np.random.Generator(np.random.Philox(_key(seed, purpose, indices)))


def derive_seed(seed, purpose, *indices):
    """Derive a child 64-bit integer seed, e.g. one per simulation trial."""
    state = _key(seed, purpose, indices).generate_state(1, dtype=np.uint64)
    return int(state[0])
