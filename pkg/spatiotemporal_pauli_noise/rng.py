"""Counter-based random streams.

Every stochastic routine draws from a Philox generator keyed by the run seed
and a tuple of integers or strings naming the purpose and index of the stream,
so that any subset of streams can be regenerated independently.
"""

import zlib

import numpy as np


def _key_part(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"Stream key parts must be non-negative, got {part}")
    return part


def stream(seed, *key):
    """Return an independent ``numpy.random.Generator`` for ``(seed, *key)``."""
    if seed is None:
        raise ValueError("A seed is required")
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(p) for p in key))
    return np.random.Generator(np.random.Philox(sequence))


def draw_categorical(cumulative, uniforms):
    """Vectorised inverse-CDF draw.

    ``cumulative`` has the category axis last; its final entry is the total mass.
    """
    cumulative = np.asarray(cumulative)
    scaled = uniforms * cumulative[..., -1]
    return (scaled[..., None] >= cumulative).sum(axis=-1).clip(max=cumulative.shape[-1] - 1)
