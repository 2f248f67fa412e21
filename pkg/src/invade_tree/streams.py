"""Reproducible random streams.

Every stream is keyed by a master seed plus a tuple of labels (experiment
tag, replica index, ...).  Labels are folded into the ``spawn_key`` of a
:class:`numpy.random.SeedSequence`, which hashes them together with the
master entropy, so distinct keys give statistically independent PCG64
streams and the result never depends on scheduling order.
"""
from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _label(x) -> int:
    if isinstance(x, (int, np.integer)):
        if x < 0:
            raise ValueError("stream labels must be non-negative")
        return int(x)
    # strings: a stable 32-bit digest, offset so it can't collide with small ints
    return (1 << 40) + zlib.crc32(str(x).encode())


def parse_seed(text) -> int:
    """Accept ints or hex/decimal strings ("0x1f", "31")."""
    if isinstance(text, (int, np.integer)):
        value = int(text)
    else:
        s = str(text).strip().lower()
        value = int(s, 16) if s.startswith("0x") else int(s)
    if not 0 <= value <= MASK64:
        raise ValueError(f"seed must fit in 64 bits: {text!r}")
    return value


def seed_sequence(seed: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=parse_seed(seed), spawn_key=tuple(_label(k) for k in key))


def stream(seed: int, *key) -> np.random.Generator:
    """Generator for the stream ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def derive_seed(seed: int, *key) -> int:
    """64-bit child seed; lets per-replica samplers take a plain integer seed."""
    return int(seed_sequence(seed, *key).generate_state(1, np.uint64)[0])


def stream_id(seed: int, *key) -> tuple[int, int]:
    """128-bit fingerprint of a stream, used for collision scans."""
    a, b = seed_sequence(seed, *key).generate_state(2, np.uint64)
    return int(a), int(b)


def open_uniform(rng: np.random.Generator, size=None):
    """Uniforms on the open interval (0, 1) with 53 random bits."""
    k = rng.integers(0, 1 << 53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53
