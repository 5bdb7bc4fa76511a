import hashlib

import numpy as np


def substream(seed, *keys):
    """Return a Generator derived from ``seed`` and a tuple of labels.

    Labels are hashed with SHA-256 so the derived stream is stable across
    processes and Python versions (``hash`` is salted).
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        digest = hashlib.sha256(str(key).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    return np.random.default_rng(np.random.SeedSequence(words))
