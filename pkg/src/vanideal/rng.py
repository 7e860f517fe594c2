"""Named random streams derived from one integer seed.

``stream(seed, "class", 3)`` always yields the same generator, independent
of how many other streams were drawn before it, so per-class work can run
in any order or in parallel.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_for(seed: int, *names) -> int:
    """A 63-bit integer seed for the named stream."""
    ss = np.random.SeedSequence([int(seed)] + [_key(p) for p in names])
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def stream(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [_key(p) for p in names]))
