"""Deterministic seeded hashing primitives shared by the whole engine.

Two functions carry every bit of randomness in the system:

``murmur3_32``      32-bit MurmurHash3 (the x86_32 variant) over arbitrary
                    bytes.  Bit-compatible with the classic C implementation
                    (and with scikit-learn's ``murmurhash3_32``), verified by
                    frozen test vectors.  Label ids and token ids are hashed
                    as little-endian 8-byte integers.
``derive_seed``     splittable 64-bit seed derivation built on the splitmix64
                    finalizer.  Derives per-chunk (and per-epoch) seeds from a
                    single base seed without the correlation pitfalls of
                    ``base + k`` arithmetic.

Both are pure and endian-pinned, so any two processes (or machines) given the
same base seed reproduce identical bucket assignments, feature maps, and
shuffle orders.
"""
from __future__ import annotations

import numpy as np

_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF

# murmur3 x86_32 round constants
_C1 = 0xCC9E2D51
_C2 = 0x1B873593

# splitmix64 constants
_GOLDEN64 = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def murmur3_32(data: bytes, seed: int = 0) -> int:
    """32-bit MurmurHash3 of *data* with a 32-bit *seed*, as unsigned int."""
    h = seed & _MASK32
    length = len(data)
    nblocks = length // 4

    for i in range(0, nblocks * 4, 4):
        k = int.from_bytes(data[i : i + 4], "little")
        k = (k * _C1) & _MASK32
        k = ((k << 15) | (k >> 17)) & _MASK32  # ROTL32(k, 15)
        k = (k * _C2) & _MASK32
        h ^= k
        h = ((h << 13) | (h >> 19)) & _MASK32  # ROTL32(h, 13)
        h = (h * 5 + 0xE6546B64) & _MASK32

    k = 0
    tail = data[nblocks * 4 :]
    if len(tail) >= 3:
        k ^= tail[2] << 16
    if len(tail) >= 2:
        k ^= tail[1] << 8
    if len(tail) >= 1:
        k ^= tail[0]
        k = (k * _C1) & _MASK32
        k = ((k << 15) | (k >> 17)) & _MASK32
        k = (k * _C2) & _MASK32
        h ^= k

    h ^= length
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & _MASK32
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & _MASK32
    h ^= h >> 16
    return h


def murmur3_32_u64(keys: np.ndarray, seed: int) -> np.ndarray:
    """Vectorized ``murmur3_32`` over an array of uint64 keys.

    Each key is hashed as its little-endian 8-byte encoding, exactly matching
    ``murmur3_32(key.to_bytes(8, "little"), seed)``.  Returns uint32.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    lo = (keys & np.uint64(_MASK32)).astype(np.uint32)
    hi = (keys >> np.uint64(32)).astype(np.uint32)

    h = np.full(keys.shape, seed & _MASK32, dtype=np.uint32)
    for block in (lo, hi):
        k = block * np.uint32(_C1)
        k = (k << np.uint32(15)) | (k >> np.uint32(17))
        k = k * np.uint32(_C2)
        h = h ^ k
        h = (h << np.uint32(13)) | (h >> np.uint32(19))
        h = h * np.uint32(5) + np.uint32(0xE6546B64)

    # empty tail; finalize with length 8
    h = h ^ np.uint32(8)
    h = h ^ (h >> np.uint32(16))
    h = h * np.uint32(0x85EBCA6B)
    h = h ^ (h >> np.uint32(13))
    h = h * np.uint32(0xC2B2AE35)
    h = h ^ (h >> np.uint32(16))
    return h


def _splitmix64(z: int) -> int:
    """splitmix64 finalizer: a bijective 64-bit mix."""
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *parts: int) -> int:
    """Derive a 64-bit seed from *base_seed* and integer *parts*.

    Advances a splitmix64 stream once per part and absorbs the part by XOR
    before mixing, so ``derive_seed(s, 0)`` and ``derive_seed(s, 1)`` share no
    structure.  Deterministic; test vectors are frozen in the test suite.
    """
    h = base_seed & _MASK64
    for p in parts:
        h = (h + _GOLDEN64) & _MASK64
        h = _splitmix64(h ^ (p & _MASK64))
    return h


def u64_key(value: int) -> bytes:
    """Little-endian 8-byte encoding used for label-id and token-id hashing."""
    return (value & _MASK64).to_bytes(8, "little")


def hash_u64(value: int, seed: int) -> int:
    """Hash one 64-bit id with a (possibly 64-bit) seed; low 32 seed bits used."""
    return murmur3_32(u64_key(value), seed & _MASK32)
