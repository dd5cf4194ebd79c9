"""Deterministic random-stream fanout.

A run owns a single master seed.  Every component derives its own stream
from (master seed, label, ...), so results never depend on the order in
which components happen to execute or on the degree of parallelism.
"""

import hashlib

import numpy as np


def _label_entropy(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_seed(master_seed: int, *labels: str) -> int:
    """Stable integer seed for the sub-stream named by ``labels``."""
    material = str(int(master_seed)) + "".join("|" + lab for lab in labels)
    return _label_entropy(material)


def substream(master_seed: int, *labels: str) -> np.random.Generator:
    """Generator for the sub-stream named by ``labels``."""
    entropy = [int(master_seed)] + [_label_entropy(lab) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
