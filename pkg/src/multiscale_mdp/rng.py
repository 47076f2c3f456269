"""Counter-based random streams with stable channel splitting.

Every draw in the package comes from a Philox generator keyed by
``(seed, domain_tag, index)``.  Domain tags keep the Brownian, jump-count,
jump-mark and thinning channels apart, so adding draws to one channel never
shifts another channel's sequence.  That property is what makes the
common-random-number comparisons across epsilon and across auxiliary
processes meaningful.
"""
from __future__ import annotations

import numpy as np

# Stable numeric ids; never renumber an existing tag.
DOMAIN_TAGS = {
    "bm_slow": 1,
    "bm_fast": 2,
    "jump_count": 3,
    "jump_mark": 4,
    "thinning": 5,
    "invariant": 6,
    "probe": 7,
    "pilot": 8,
}


def stream(seed: int, domain_tag: str, index: int = 0) -> np.random.Generator:
    """Return the generator for one ``(seed, domain_tag, index)`` triple."""
    try:
        tag = DOMAIN_TAGS[domain_tag]
    except KeyError:
        raise ValueError(f"unknown domain tag {domain_tag!r}") from None
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, int(index)))
    return np.random.Generator(np.random.Philox(ss))


class Streams:
    """Channel factory for a single simulated path (or replica).

    ``Streams(seed, index).channel("bm_slow")`` always yields the same
    sequence; channels are created lazily and cached so repeated calls within
    one path continue the same stream.
    """

    def __init__(self, seed: int, index: int = 0):
        self.seed = int(seed)
        self.index = int(index)
        self._cache: dict[str, np.random.Generator] = {}

    def channel(self, tag: str) -> np.random.Generator:
        gen = self._cache.get(tag)
        if gen is None:
            gen = stream(self.seed, tag, self.index)
            self._cache[tag] = gen
        return gen

    def child(self, index: int) -> "Streams":
        return Streams(self.seed, index)

    def __repr__(self) -> str:
        return f"Streams(seed={self.seed}, index={self.index})"
