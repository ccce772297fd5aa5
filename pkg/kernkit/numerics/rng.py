"""
Seeded random streams.

All randomness in kernkit comes from numpy's Philox counter-based generator,
keyed by the run seed plus a tuple of stream identifiers, so independent
consumers (fonts, weight initialisation, shuffling) never share a stream.
"""
import zlib
from typing import Union

import numpy as np

StreamKey = Union[int, str]


def _key_words(key: StreamKey) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


def make_rng(seed: int, *stream: StreamKey) -> np.random.Generator:
    """
    Build a Philox generator for ``seed`` and the given stream identifiers.

    Args:
        seed: 64-bit run seed
        *stream: Extra integers or strings selecting an independent stream

    Returns:
        A numpy Generator; identical arguments give identical sequences
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    entropy = [seed & 0xFFFFFFFF, seed >> 32] + [_key_words(k) for k in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
