"""Exact inclusion probabilities for tiny graphs by full enumeration.

The enumerable design is the repeated-resample design without a size cap:
Bernoulli(``p_seed``) seeding followed by ``waves`` waves in which every
member traces each link to a non-member with probability ``p_trace`` and
every absent node is re-seeded with probability ``p_reseed``. Given the
members at the start of a wave, a non-member with ``k`` member neighbors
joins with probability ``1 - (1 - p_reseed) (1 - p_trace)^k``,
independently of the other non-members, so the distribution over member
sets can be propagated wave by wave.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_OUTCOMES = 2**24


class OutcomeSpaceTooLarge(ValueError):
    def __init__(self, size, limit=MAX_OUTCOMES):
        self.size = size
        super().__init__(f"outcome space of about {size:.3g} transitions exceeds the limit {limit}")


@dataclass(frozen=True)
class OracleResult:
    """Exact per-node inclusion probabilities.

    ``outcomes`` counts the (state, addition set) transitions summed over.
    ``distribution[s]`` is the probability that the final member set has
    bitmask ``s``.
    """

    phi: np.ndarray
    outcomes: int
    distribution: np.ndarray

    def joint(self, i: int, j: int) -> float:
        s = np.arange(len(self.distribution))
        both = ((s >> i) & 1).astype(bool) & ((s >> j) & 1).astype(bool)
        return float(self.distribution[both].sum())


def outcome_space(n: int, waves: int) -> int:
    # seeding enumerates 2^n sets; a wave from a set of size m has 2^(n-m)
    # addition sets, which sums to 3^n over all sets
    return 2**n + waves * 3**n


def _neighbor_masks(indptr, indices):
    n = len(indptr) - 1
    masks = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in indices[indptr[i] : indptr[i + 1]]:
            masks[i] |= 1 << int(j)
    return masks


def _popcount(x):
    x = x.astype(np.int64)
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x >>= 1
    return c


def enumerate_exact_inclusion(net, p_seed: float, p_trace: float, waves: int = 1, p_reseed: float = 0.0, limit: int = MAX_OUTCOMES) -> OracleResult:
    """Exact inclusion probabilities under the enumerable design.

    ``net`` is a PopulationGraph (first-stage probabilities) or a
    SampleNetwork (second-stage probabilities over its resampling network).
    Refuses when the outcome space exceeds ``limit``.
    """
    from ..resampler import _adjacency

    for name, v in (("p_seed", p_seed), ("p_trace", p_trace), ("p_reseed", p_reseed)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    if waves < 0:
        raise ValueError("waves must be >= 0")
    indptr, indices = _adjacency(net)
    n = len(indptr) - 1
    size = outcome_space(n, waves)
    if n > 62 or size > limit:
        raise OutcomeSpaceTooLarge(size, limit)

    states = np.arange(2**n, dtype=np.int64)
    k = _popcount(states)
    dist = p_seed**k * (1.0 - p_seed) ** (n - k)
    nbr = _neighbor_masks(indptr, indices)
    bits = 1 << np.arange(n, dtype=np.int64)
    for _ in range(waves):
        new = np.zeros_like(dist)
        for s in np.flatnonzero(dist > 0).tolist():
            out = [j for j in range(n) if not (s >> j) & 1]
            masks = np.zeros(1, dtype=np.int64)
            probs = np.ones(1)
            for j in out:
                hits = bin(s & int(nbr[j])).count("1")
                a = 1.0 - (1.0 - p_reseed) * (1.0 - p_trace) ** hits
                masks = np.concatenate([masks, masks | bits[j]])
                probs = np.concatenate([probs * (1.0 - a), probs * a])
            np.add.at(new, s | masks, dist[s] * probs)
        dist = new
    phi = np.array([dist[(states >> i) & 1 == 1].sum() for i in range(n)])
    return OracleResult(phi=np.clip(phi, 0.0, 1.0), outcomes=size, distribution=dist)
