"""Compiled inner loops for the resampling designs.

All kernels seed numba's generator from an explicit integer so that a run
is a pure function of its arguments.
"""

import numpy as np
from numba import njit

BIG = 2**62


@njit(cache=True)
def _add(i, in_s, members, pos, m):
    in_s[i] = True
    pos[i] = m
    members[m] = i
    return m + 1


@njit(cache=True)
def _drop(k, in_s, members, pos, m):
    # swap-remove the member at slot k
    i = members[k]
    in_s[i] = False
    pos[i] = -1
    m -= 1
    if k != m:
        j = members[m]
        members[k] = j
        pos[j] = k
    return m


@njit(cache=True)
def _gap(p, cap):
    # geometric number of trials up to the first success, by inversion;
    # capped so vanishing rates cannot overflow
    lp = np.log1p(-p)
    if lp == 0.0:
        return cap
    g = np.ceil(np.log(1.0 - np.random.random()) / lp)
    if g >= cap:
        return cap
    return max(1, int(g))


@njit(cache=True)
def _trace(indptr, indices, p, in_s, members, pos, m):
    # follow each edge from the first m members independently with
    # probability p; geometric gaps over the concatenated neighbor lists,
    # hits on edges to current members are ignored
    m0 = m
    if p <= 0.0:
        return m
    if p >= 1.0:
        for a in range(m0):
            i = members[a]
            for e in range(indptr[i], indptr[i + 1]):
                if not in_s[indices[e]]:
                    m = _add(indices[e], in_s, members, pos, m)
        return m
    gap = _gap(p, BIG) - 1
    for a in range(m0):
        i = members[a]
        hi = indptr[i + 1]
        e = indptr[i] + gap
        while e < hi:
            j = indices[e]
            if not in_s[j]:
                m = _add(j, in_s, members, pos, m)
            e += _gap(p, BIG)
        gap = e - hi
    return m


@njit(cache=True)
def _reseed(n, p_r, in_s, members, pos, m):
    if p_r <= 0.0:
        return m
    if p_r >= 1.0:
        for i in range(n):
            if not in_s[i]:
                m = _add(i, in_s, members, pos, m)
        return m
    i = _gap(p_r, n + 1) - 1
    while i < n:
        if not in_s[i]:
            m = _add(i, in_s, members, pos, m)
        i += _gap(p_r, n + 1)
    return m


@njit(cache=True)
def _thin(q, in_s, members, pos, m):
    # remove each member independently with probability q
    if q <= 0.0:
        return m
    if q >= 1.0:
        while m > 0:
            m = _drop(m - 1, in_s, members, pos, m)
        return m
    k = m - _gap(q, m + 1)
    while k >= 0:
        m = _drop(k, in_s, members, pos, m)
        k -= _gap(q, m + 1)
    return m


@njit(cache=True)
def removal_rate(n_t, n_target):
    if n_t > n_target and n_t > 0:
        return (n_t - n_target) / n_t
    return 0.0


@njit(cache=True)
def process_chain(indptr, indices, n_target, p, p_r, burn_in, steps, seed, init, pair_u, pair_v):
    """Run the set-valued Markov chain; return (counts, pair_counts, sizes)."""
    np.random.seed(seed)
    n = len(indptr) - 1
    in_s = np.zeros(n, dtype=np.bool_)
    members = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    m = 0
    for i in init:
        if not in_s[i]:
            m = _add(i, in_s, members, pos, m)
    counts = np.zeros(n, dtype=np.int64)
    npairs = len(pair_u)
    pair_counts = np.zeros(npairs, dtype=np.int64)
    sizes = np.zeros(steps, dtype=np.int64)
    for t in range(burn_in + steps):
        m = _trace(indptr, indices, p, in_s, members, pos, m)
        m = _reseed(n, p_r, in_s, members, pos, m)
        m = _thin(removal_rate(m, n_target), in_s, members, pos, m)
        if t >= burn_in:
            for a in range(m):
                counts[members[a]] += 1
            for e in range(npairs):
                if in_s[pair_u[e]] and in_s[pair_v[e]]:
                    pair_counts[e] += 1
            sizes[t - burn_in] = m
    return counts, pair_counts, sizes


@njit(cache=True)
def repeated_samples(indptr, indices, n_target, p_s, p, p_r, waves, iterations, seed, pair_u, pair_v):
    """Independent resamples grown from Bernoulli seeds.

    ``n_target < 0`` means no size cap and ``waves < 0`` means no wave
    limit. Returns (counts, pair_counts, sizes).
    """
    np.random.seed(seed)
    n = len(indptr) - 1
    cap = n if n_target < 0 else min(n_target, n)
    in_s = np.zeros(n, dtype=np.bool_)
    members = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    npairs = len(pair_u)
    pair_counts = np.zeros(npairs, dtype=np.int64)
    sizes = np.zeros(iterations, dtype=np.int64)
    for t in range(iterations):
        m = 0
        m = _reseed(n, p_s, in_s, members, pos, m)
        m = _truncate(0, cap, in_s, members, pos, m)
        w = 0
        while m < cap and (waves < 0 or w < waves):
            m0 = m
            m = _trace(indptr, indices, p, in_s, members, pos, m)
            m = _reseed(n, p_r, in_s, members, pos, m)
            m = _truncate(m0, cap, in_s, members, pos, m)
            w += 1
            if m == m0 and p_r <= 0.0 and not _can_grow(indptr, indices, p, in_s, members, m):
                break
        for a in range(m):
            counts[members[a]] += 1
        for e in range(npairs):
            if in_s[pair_u[e]] and in_s[pair_v[e]]:
                pair_counts[e] += 1
        sizes[t] = m
        while m > 0:
            m = _drop(m - 1, in_s, members, pos, m)
    return counts, pair_counts, sizes


@njit(cache=True)
def _truncate(m0, cap, in_s, members, pos, m):
    # keep a uniform random subset of the entrants members[m0:m] so m <= cap
    if m <= cap:
        return m
    keep = cap - m0
    for a in range(keep):
        b = m0 + a + np.random.randint(0, m - m0 - a)
        i, j = members[m0 + a], members[b]
        members[m0 + a], members[b] = j, i
        pos[j], pos[i] = m0 + a, b
    while m > cap:
        m = _drop(m - 1, in_s, members, pos, m)
    return m


@njit(cache=True)
def _can_grow(indptr, indices, p, in_s, members, m):
    if p <= 0.0:
        return False
    for a in range(m):
        i = members[a]
        for e in range(indptr[i], indptr[i + 1]):
            if not in_s[indices[e]]:
                return True
    return False


@njit(cache=True)
def process_chain_wr(indptr, indices, n_target, p, p_r, burn_in, steps, seed):
    """With-replacement chain on copy counts; return (count sums, sizes)."""
    np.random.seed(seed)
    n = len(indptr) - 1
    c = np.zeros(n, dtype=np.int64)
    new = np.zeros(n, dtype=np.int64)
    sums = np.zeros(n, dtype=np.int64)
    sizes = np.zeros(steps, dtype=np.int64)
    for t in range(burn_in + steps):
        for i in range(n):
            new[i] = 0
        if p > 0.0:
            for i in range(n):
                if c[i] == 0:
                    continue
                for e in range(indptr[i], indptr[i + 1]):
                    new[indices[e]] += np.random.binomial(c[i], p)
        if p_r > 0.0:
            if p_r >= 1.0:
                for i in range(n):
                    new[i] += 1
            else:
                i = _gap(p_r, n + 1) - 1
                while i < n:
                    new[i] += 1
                    i += _gap(p_r, n + 1)
        total = 0
        for i in range(n):
            c[i] += new[i]
            total += c[i]
        q = removal_rate(total, n_target)
        if q > 0.0:
            total = 0
            for i in range(n):
                if c[i] > 0:
                    c[i] -= np.random.binomial(c[i], q)
                total += c[i]
        if t >= burn_in:
            for i in range(n):
                sums[i] += c[i]
            sizes[t - burn_in] = total
    return sums, sizes
