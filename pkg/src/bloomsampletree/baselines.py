"""Reference sampling/reconstruction algorithms over a raw Bloom filter.

The dictionary attack scans the whole namespace with membership queries
and is the ground-truth oracle: its reconstruction is exactly the set of
membership-positive elements.  HashInvert exploits the weakly invertible
linear hash family to enumerate preimages of set (or unset) bits instead
of scanning everything.
"""
from __future__ import annotations

import enum
from typing import Optional

import numpy as np

from .bloom import BloomFilter
from .bst import OpCounters, SampleOutcome
from .hashing import preimage

__all__ = [
    "ReconstructionMode",
    "da_sample",
    "da_reconstruct",
    "hi_sample",
    "hi_reconstruct",
]

_CHUNK = 1 << 16


class ReconstructionMode(enum.Enum):
    SET_BITS = "set"
    UNSET_BITS = "unset"
    AUTO = "auto"


def _positive_scan(query: BloomFilter, namespace_size: int) -> np.ndarray:
    parts = []
    for lo in range(0, namespace_size, _CHUNK):
        xs = np.arange(lo, min(lo + _CHUNK, namespace_size), dtype=np.int64)
        parts.append(xs[query.contains_many(xs)])
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts)


def da_sample(namespace_size: int, query: BloomFilter, rng=None) -> SampleOutcome:
    """Uniform sample of the positives via an exhaustive reservoir scan.

    Every namespace element is membership-tested; the i-th positive
    replaces the reservoir with probability 1/i, so the survivor is
    uniform over all positives.
    """
    rng = np.random.default_rng() if rng is None else rng
    counters = OpCounters(membership_queries=namespace_size)
    hits = _positive_scan(query, namespace_size)
    reservoir: Optional[int] = None
    for i, x in enumerate(hits):
        if rng.random() < 1.0 / (i + 1):
            reservoir = int(x)
    return SampleOutcome(reservoir, counters)


def da_reconstruct(namespace_size: int, query: BloomFilter) -> tuple[np.ndarray, OpCounters]:
    """Exactly {x in [0, M) : contains(query, x)}; the correctness oracle."""
    counters = OpCounters(membership_queries=namespace_size)
    return _positive_scan(query, namespace_size), counters


def hi_sample(query: BloomFilter, namespace_size: int, rng=None) -> SampleOutcome:
    """Sample by inverting one randomly chosen set bit.

    The preimages of the bit under each of the k hash functions are
    pruned by membership queries; the result is a uniform draw from
    their union.  Cost is O(m + k * M / m) probes; no uniformity
    guarantee over the whole positive set is implied.
    """
    if not query.family.invertible:
        raise NotImplementedError("hi_sample needs a weakly invertible hash family")
    rng = np.random.default_rng() if rng is None else rng
    counters = OpCounters()
    set_bits = query.set_bit_indices()
    if set_bits.size == 0:
        return SampleOutcome(None, counters)
    s = int(set_bits[rng.integers(set_bits.size)])
    # reservoir over the concatenated pruned preimages, first occurrence wins
    seen: set = set()
    reservoir: Optional[int] = None
    n_kept = 0
    for i in range(query.family.k):
        cand = preimage(query.family, i, s, namespace_size)
        counters.membership_queries += int(cand.size)
        kept = cand[query.contains_many(cand)]
        for x in kept:
            x = int(x)
            if x in seen:
                continue
            seen.add(x)
            n_kept += 1
            if rng.random() < 1.0 / n_kept:
                reservoir = x
    return SampleOutcome(reservoir, counters)


def hi_reconstruct(query: BloomFilter, namespace_size: int,
                   mode: ReconstructionMode = ReconstructionMode.AUTO,
                   ) -> tuple[np.ndarray, OpCounters]:
    """Reconstruct by inverting every set bit, or every unset bit.

    Set-bit mode unions the membership-pruned preimages of all set bits.
    Unset-bit mode (cheaper for dense filters) removes every element
    that hashes to some unset bit; what survives has all k bits set, so
    both modes agree with the dictionary-attack oracle exactly.
    """
    if not query.family.invertible:
        raise NotImplementedError("hi_reconstruct needs a weakly invertible hash family")
    if mode == ReconstructionMode.AUTO:
        mode = (ReconstructionMode.UNSET_BITS if query.popcount() > query.m / 2
                else ReconstructionMode.SET_BITS)
    counters = OpCounters()
    m, k = query.m, query.family.k
    bits = np.unpackbits(query.words.view(np.uint8), bitorder="little")[:m].astype(bool)
    # Residues r with h_i(x) = s for some selected bit s correspond to
    # x mod m in a fixed set per hash function; evaluate chunk-wise.
    parts = []
    for lo in range(0, namespace_size, _CHUNK):
        xs = np.arange(lo, min(lo + _CHUNK, namespace_size), dtype=np.int64)
        if mode == ReconstructionMode.SET_BITS:
            candidate = np.zeros(xs.shape, dtype=bool)
            pruned = np.ones(xs.shape, dtype=bool)
            for i in range(k):
                hit = bits[_hash_positions(query, i, xs)]
                candidate |= hit
                pruned &= hit
            counters.membership_queries += int(candidate.sum())
            parts.append(xs[candidate & pruned])
        else:
            excluded = np.zeros(xs.shape, dtype=bool)
            for i in range(k):
                unset = ~bits[_hash_positions(query, i, xs)]
                excluded |= unset
            counters.membership_queries += int(xs.size)
            parts.append(xs[~excluded])
    if not parts:
        return np.empty(0, dtype=np.int64), counters
    return np.concatenate(parts), counters


def _hash_positions(query: BloomFilter, i: int, xs: np.ndarray) -> np.ndarray:
    from .hashing import hash_many
    return hash_many(query.family, i, xs)
