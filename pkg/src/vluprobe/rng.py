"""Seeded determinism primitives.

Everything random in this package flows through the two functions below so that
any implementation, in any language, can reproduce identical bits:

- fnv1a64: the 64-bit FNV-1a hash over raw bytes (offset basis
  0xcbf29ce484222325, prime 0x100000001b3, wrapping 64-bit multiply).
- SplitMix64: Steele et al.'s splitmix64 generator. Floats are the top 53 bits
  of the next output divided by 2**53, i.e. uniform on [0, 1).

Derived streams are seeded by XOR-ing a base seed with an FNV-1a-64 digest of
the identifying bytes; counter-derived streams hash the little-endian 64-bit
seed and counter together.
"""

from __future__ import annotations

from typing import Iterable

_MASK = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


class SplitMix64:
    """splitmix64 stream; state advances by the golden-gamma constant."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform on [0, 1) with 53-bit resolution."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n). floor(u53 * n); n must be positive."""
        return int(self.next_float() * n)


def stream_for(seed: int, *parts: bytes) -> SplitMix64:
    """Stream seeded with seed XOR fnv1a64(parts joined by 0x1F)."""
    return SplitMix64(seed ^ fnv1a64(b"\x1f".join(parts)))


def counter_stream(seed: int, counter: int) -> SplitMix64:
    """Stream for the counter-th parallel substream of a seeded process.

    Seeded with fnv1a64(le64(seed) || le64(counter)) so substreams never share
    state and may run in any order or in parallel.
    """
    payload = (seed & _MASK).to_bytes(8, "little") + (counter & _MASK).to_bytes(8, "little")
    return SplitMix64(fnv1a64(payload))


def shuffled(n: int, seed: int) -> list[int]:
    """Fisher-Yates permutation of range(n) driven by SplitMix64(seed)."""
    rng = SplitMix64(seed)
    idx = list(range(n))
    for i in range(n):
        j = i + rng.next_below(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def sample_prefix(items, n: int, seed: int) -> list:
    """First n elements of a seeded Fisher-Yates shuffle, without materializing
    the full permutation's worth of swaps beyond the prefix.

    Equivalent to shuffled(len(items), seed)[:n] mapped through items.
    """
    total = len(items)
    if n > total:
        raise ValueError(f"cannot sample {n} from {total}")
    rng = SplitMix64(seed)
    # Sparse Fisher-Yates: only displaced positions are stored.
    displaced: dict[int, int] = {}
    picked: list[int] = []
    for i in range(n):
        j = i + rng.next_below(total - i)
        picked.append(displaced.get(j, j))
        displaced[j] = displaced.get(i, i)
    return [items[k] for k in picked]


def choose_index(n: int, seed: int, key: bytes) -> int:
    """Deterministic pick of one index in [0, n) keyed by (seed, key)."""
    return stream_for(seed, key).next_below(n)
