"""Named random substreams derived from one master seed.

Every stochastic consumer (weight init, shuffling, mask draws, Bernoulli
realizations, corruption noise) pulls from its own substream so that adding
or removing draws in one place can never shift the values seen elsewhere.
"""

import hashlib

import numpy as np


def substream(seed: int, *tags) -> np.random.Generator:
    """Derive an independent generator from ``seed`` and a tuple of tags.

    The tags (strings or ints, e.g. ``("mask",)`` or ``("member", 3)``) are
    hashed into the seed material, so distinct tag tuples give statistically
    independent streams and identical inputs always reproduce the same stream.
    """
    label = "/".join(str(t) for t in tags)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *words]))
