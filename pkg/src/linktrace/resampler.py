"""Inclusion frequencies from resampling the sample network.

A without-replacement, branching link-tracing design is re-run many times
on the sample network; the fraction of resamples containing each node is
its inclusion frequency. Two drivers are provided: independent repeated
resamples grown from Bernoulli seeds, and a Markov process on sets that
traces a few links, re-seeds, and thins back toward the target size at
every step. A with-replacement variant of the process tracks copy counts.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)

MODES = ("process", "repeated", "process-with-replacement")
PAIR_MODES = ("none", "edges", "all")


class ZeroFrequencyError(ValueError):
    """A sampled node never appeared in any resample."""

    def __init__(self, nodes, what="f"):
        self.nodes = np.asarray(nodes)
        shown = ", ".join(str(int(x)) for x in self.nodes[:10])
        more = "" if len(self.nodes) <= 10 else f" (+{len(self.nodes) - 10} more)"
        super().__init__(
            f"zero inclusion frequency {what}_i for {len(self.nodes)} node(s): {shown}{more}; "
            "raise the re-seeding rate or the number of iterations"
        )


@dataclass(frozen=True)
class ResampleConfig:
    mode: str = "process"
    iterations: int = 10_000
    n_target: int | None = 400
    p_seed: float = 0.0167
    p_trace: float = 0.05
    p_reseed: float | None = None
    burn_in: int = 1000
    waves: int | None = None
    chains: int = 1
    pairs: str = "none"
    network: str = "ties"

    @property
    def reseed_rate(self) -> float:
        if self.p_reseed is not None:
            return self.p_reseed
        return 0.001 if self.mode == "repeated" else 0.01

    def validate(self, sample_size: int | None = None):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.network not in ("forest", "ties"):
            raise ValueError(f"network must be 'forest' or 'ties', got {self.network!r}")
        if self.pairs not in PAIR_MODES:
            raise ValueError(f"pairs must be one of {PAIR_MODES}, got {self.pairs!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.chains < 1 or self.chains > self.iterations:
            raise ValueError("chains must be in 1..iterations")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        for name in ("p_seed", "p_trace", "reseed_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n_target is None:
            if self.mode != "repeated":
                raise ValueError(f"mode {self.mode!r} needs n_target")
        elif self.n_target < 1 or (sample_size is not None and self.n_target > sample_size):
            raise ValueError(f"n_target {self.n_target} outside 1..{sample_size}")
        if self.waves is not None and self.waves < 0:
            raise ValueError("waves must be >= 0")


@dataclass
class InclusionFrequencies:
    """Per-node inclusion frequencies from ``iterations`` resamples.

    ``counts[i]`` is the number of resamples containing node ``i`` (for the
    with-replacement process, the summed copy counts), so
    ``f = counts / iterations``. ``pairs``/``pair_counts`` hold joint
    counts for the accumulated node pairs.
    """

    counts: np.ndarray
    iterations: int
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    pair_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sizes: np.ndarray | None = None
    with_replacement: bool = False

    @property
    def f(self) -> np.ndarray:
        return self.counts / self.iterations

    @property
    def g(self) -> np.ndarray:
        if not self.with_replacement:
            raise AttributeError("selection counts are only kept by the with-replacement process")
        return self.counts / self.iterations

    @property
    def fij(self) -> np.ndarray:
        return self.pair_counts / self.iterations

    @property
    def zero_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.counts == 0)

    @property
    def mean_size(self) -> float:
        return float(np.mean(self.sizes)) if self.sizes is not None and len(self.sizes) else float("nan")

    def require_positive(self) -> "InclusionFrequencies":
        zero = self.zero_nodes
        if len(zero):
            raise ZeroFrequencyError(zero, "g" if self.with_replacement else "f")
        return self

    def joint(self) -> dict:
        """``{(i, j): f_ij}`` with ``i < j``."""
        return {(int(a), int(b)): c / self.iterations for (a, b), c in zip(self.pairs, self.pair_counts)}


@dataclass
class ProcessState:
    members: set
    step: int = 0

    @property
    def size(self) -> int:
        return len(self.members)


def adaptive_removal_rate(n_t: int, n_target: int) -> float:
    """Thinning probability that brings the expected size back to ``n_target``."""
    if n_t > n_target and n_t > 0:
        return (n_t - n_target) / n_t
    return 0.0


def _adjacency(net, network="ties"):
    # sample networks choose forest or forest+ties; plain graphs use all edges
    indptr, indices = net.csr(network) if hasattr(net, "recruiter") else net.csr()
    return np.ascontiguousarray(indptr, dtype=np.int64), np.ascontiguousarray(indices, dtype=np.int64)


def _pair_list(net, how, network="ties"):
    is_sample = hasattr(net, "recruiter")
    n = len(net) if is_sample else net.n
    if how == "none":
        return np.zeros((0, 2), dtype=np.int64)
    if how == "edges":
        e = net.edges(network) if is_sample else net.edges()
        return np.asarray(e, dtype=np.int64).reshape(-1, 2)
    if n > 5000:
        log.warning("accumulating all %d node pairs", n * (n - 1) // 2)
    iu = np.triu_indices(n, k=1)
    return np.column_stack(iu).astype(np.int64)


def _seed_ints(rng, k):
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return [int(s) for s in rng.integers(0, 2**32 - 1, size=k)]


def step_process(state: ProcessState, net, config: ResampleConfig, rng: np.random.Generator) -> ProcessState:
    """One transition of the resampling process (reference implementation).

    Tracing uses the members at the start of the step; each edge to a
    non-member is followed with probability ``p_trace``. Then every absent
    node is re-seeded with probability ``reseed_rate``, and finally each
    member is removed with the adaptive rate computed on the enlarged set.
    """
    indptr, indices = _adjacency(net, config.network)
    n = len(indptr) - 1
    members = set(state.members)
    start = sorted(members)
    for i in start:
        for j in indices[indptr[i] : indptr[i + 1]].tolist():
            if j not in members and rng.random() < config.p_trace:
                members.add(j)
    if config.reseed_rate > 0:
        hits = np.flatnonzero(rng.random(n) < config.reseed_rate)
        members.update(int(i) for i in hits)
    q = adaptive_removal_rate(len(members), config.n_target)
    if q > 0:
        ordered = sorted(members)
        drop = rng.random(len(ordered)) < q
        members = {i for i, d in zip(ordered, drop) if not d}
    return ProcessState(members=members, step=state.step + 1)


def _split(total, parts):
    base, extra = divmod(total, parts)
    return [base + (1 if c < extra else 0) for c in range(parts)]


def process_resamples(net, config: ResampleConfig, rng) -> InclusionFrequencies:
    """Inclusion frequencies from the Markov resampling process.

    Each chain starts from the empty set, discards ``burn_in`` steps and
    then records membership for its share of ``iterations`` steps; chains
    are independent and their counts are pooled.
    """
    indptr, indices = _adjacency(net, config.network)
    config.validate(len(indptr) - 1)
    pairs = _pair_list(net, config.pairs, config.network)
    seeds = _seed_ints(rng, config.chains)
    counts = np.zeros(len(indptr) - 1, dtype=np.int64)
    pc = np.zeros(len(pairs), dtype=np.int64)
    sizes = []
    empty = np.zeros(0, dtype=np.int64)
    for steps, seed in zip(_split(config.iterations, config.chains), seeds):
        c, p, s = _kernels.process_chain(
            indptr, indices, config.n_target, config.p_trace, config.reseed_rate,
            config.burn_in, steps, seed, empty, pairs[:, 0].copy(), pairs[:, 1].copy(),
        )
        counts += c
        pc += p
        sizes.append(s)
    out = InclusionFrequencies(counts, config.iterations, pairs, pc, np.concatenate(sizes))
    _warn_zero(out)
    return out


def repeated_resamples(net, config: ResampleConfig, rng) -> InclusionFrequencies:
    """Inclusion frequencies from independent resamples.

    Each resample starts from Bernoulli(``p_seed``) seeds and grows wave by
    wave: every member traces each link to a non-member with probability
    ``p_trace`` and absent nodes are re-seeded with ``reseed_rate``. Growth
    stops at ``n_target`` (entrants of the last wave are subsampled to hit
    it exactly) or after ``waves`` waves.
    """
    indptr, indices = _adjacency(net, config.network)
    config.validate(len(indptr) - 1)
    pairs = _pair_list(net, config.pairs, config.network)
    seeds = _seed_ints(rng, config.chains)
    counts = np.zeros(len(indptr) - 1, dtype=np.int64)
    pc = np.zeros(len(pairs), dtype=np.int64)
    sizes = []
    cap = -1 if config.n_target is None else config.n_target
    waves = -1 if config.waves is None else config.waves
    for it, seed in zip(_split(config.iterations, config.chains), seeds):
        c, p, s = _kernels.repeated_samples(
            indptr, indices, cap, config.p_seed, config.p_trace, config.reseed_rate,
            waves, it, seed, pairs[:, 0].copy(), pairs[:, 1].copy(),
        )
        counts += c
        pc += p
        sizes.append(s)
    out = InclusionFrequencies(counts, config.iterations, pairs, pc, np.concatenate(sizes))
    _warn_zero(out)
    return out


def with_replacement_counts(net, config: ResampleConfig, rng) -> InclusionFrequencies:
    """Mean selection counts g_i from the with-replacement process.

    Nodes hold copy counts: every copy traces each incident link with
    probability ``p_trace`` (adding a copy of the neighbor whether or not
    it is present), every node gains a re-seeded copy with probability
    ``reseed_rate``, and every copy is removed with the adaptive rate.
    """
    indptr, indices = _adjacency(net, config.network)
    config.validate(len(indptr) - 1)
    seeds = _seed_ints(rng, config.chains)
    sums = np.zeros(len(indptr) - 1, dtype=np.int64)
    sizes = []
    for steps, seed in zip(_split(config.iterations, config.chains), seeds):
        c, s = _kernels.process_chain_wr(
            indptr, indices, config.n_target, config.p_trace, config.reseed_rate,
            config.burn_in, steps, seed,
        )
        sums += c
        sizes.append(s)
    out = InclusionFrequencies(sums, config.iterations, sizes=np.concatenate(sizes), with_replacement=True)
    _warn_zero(out)
    return out


def resample(net, config: ResampleConfig, rng) -> InclusionFrequencies:
    if config.mode == "process":
        return process_resamples(net, config, rng)
    if config.mode == "repeated":
        return repeated_resamples(net, config, rng)
    if config.mode == "process-with-replacement":
        return with_replacement_counts(net, config, rng)
    raise ValueError(f"unknown mode {config.mode!r}")


def _warn_zero(freqs):
    zero = freqs.zero_nodes
    if len(zero):
        log.warning("%d node(s) with zero inclusion frequency", len(zero))


def write_frequencies(freqs: InclusionFrequencies, path, ids=None, pairs_path=None) -> None:
    """``id,f`` (or ``id,g``) rows; joint frequencies go to ``i,j,fij``."""
    ids = np.arange(len(freqs.counts)) if ids is None else np.asarray(ids)
    col = "g" if freqs.with_replacement else "f"
    vals = freqs.counts / freqs.iterations
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", col])
        for i, v in zip(ids.tolist(), vals.tolist()):
            w.writerow([i, repr(v)])
    if pairs_path is not None:
        with open(pairs_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "fij"])
            for (a, b), v in zip(freqs.pairs.tolist(), (freqs.pair_counts / freqs.iterations).tolist()):
                w.writerow([ids[a], ids[b], repr(v)])


def read_frequencies(path, ids=None) -> np.ndarray:
    """Frequencies from an ``id,f`` file, reordered to ``ids`` if given."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [(int(r[0]), float(r[1])) for r in reader if r]
    if ids is None:
        return np.asarray([v for _, v in rows])
    lookup = dict(rows)
    missing = [i for i in ids if int(i) not in lookup]
    if missing:
        raise ValueError(f"{path}: no frequency for node(s) {missing[:5]}")
    return np.asarray([lookup[int(i)] for i in ids])
