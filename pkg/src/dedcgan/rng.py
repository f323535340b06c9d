"""Named, seedable random streams.

Every stochastic operation takes an explicit ``numpy.random.Generator``.
Streams are built on the counter-based Philox bit generator and keyed by a
base seed plus any number of integer or string keys, so a sample's stream
depends only on *its own* coordinates, e.g. ``stream(seed, "sample", cls, i)``.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError(f"stream keys must be non-negative, got {k}")
        return int(k)
    if isinstance(k, float):
        return zlib.crc32(repr(k).encode())
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    raise TypeError(f"unsupported stream key type {type(k).__name__}")


def stream(seed: int, *keys) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys) -> int:
    """A u64 seed derived deterministically from ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator_state(rng: np.random.Generator) -> dict:
    """JSON-serialisable snapshot of a Philox generator state."""
    st = rng.bit_generator.state

    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, np.ndarray):
            return [int(x) for x in v]
        if isinstance(v, np.integer):
            return int(v)
        return v

    return conv(st)


def restore_generator(state: dict) -> np.random.Generator:
    bg = np.random.Philox()
    st = dict(state)
    st["state"] = {k: np.asarray(v, dtype=np.uint64) for k, v in st["state"].items()}
    st["buffer"] = np.asarray(st["buffer"], dtype=np.uint64)
    bg.state = st
    return np.random.Generator(bg)
