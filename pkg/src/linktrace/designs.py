"""Link-tracing survey designs (RDS and snowball) simulated on a population."""

from __future__ import annotations

import csv
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from .netgraph import AttributeTable, PopulationGraph

log = logging.getLogger(__name__)

RECRUIT, SEED, RESEED = 0, 1, 2


@dataclass(frozen=True)
class DesignConfig:
    """One link-tracing design.

    ``coupons`` is the per-respondent coupon limit (3 for RDS, 15 for
    snowball). Each coupon is redeemed on any given day with probability
    ``p_use`` and expires ``expiry_days`` after issue. Seeds are either a
    fixed count drawn without replacement or, if ``seed_rate`` is set,
    a Bernoulli draw over the whole population.
    """

    coupons: int = 3
    n: int = 1200
    seeds: int = 240
    seed_rate: float | None = None
    expiry_days: int = 28
    p_use: float = 0.15
    name: str = "RDS"

    def validate(self, population_size: int | None = None):
        if self.coupons < 1:
            raise ValueError("coupons must be >= 1")
        if self.n < 1 or (population_size is not None and self.n > population_size):
            raise ValueError(f"target sample size {self.n} outside 1..N")
        if self.expiry_days < 1:
            raise ValueError("expiry_days must be >= 1")
        if not 0.0 < self.p_use <= 1.0:
            raise ValueError("p_use must be in (0, 1]")
        if self.seed_rate is None and self.seeds < 0:
            raise ValueError("seeds must be >= 0")
        if self.seed_rate is not None and not 0.0 <= self.seed_rate <= 1.0:
            raise ValueError("seed_rate must be in [0, 1]")


RDS = DesignConfig(coupons=3, name="RDS")
SNOWBALL = DesignConfig(coupons=15, name="SB")


@dataclass(eq=False)
class SampleNetwork:
    """Recruitment forest produced by a without-replacement design.

    Arrays are indexed by sample position (entry order). ``recruiter[k]``
    is the sample position of the node that recruited node ``k``, or -1
    for seeds and re-seeds.
    """

    node: np.ndarray
    recruiter: np.ndarray
    seed_flag: np.ndarray
    day: np.ndarray
    degree: np.ndarray
    attrs: dict = field(default_factory=dict)
    target: int | None = None
    ties: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.node)

    @property
    def n_reseeds(self) -> int:
        return int(np.sum(self.seed_flag == RESEED))

    def recruitment_edges(self) -> np.ndarray:
        """``(recruiter, recruit)`` sample positions, one row per recruit."""
        k = np.flatnonzero(self.recruiter >= 0)
        return np.column_stack([self.recruiter[k], k])

    def edges(self, network: str = "ties") -> np.ndarray:
        """Undirected sample edges, ``u < v``.

        ``network="forest"`` gives the recruitment edges only; ``"ties"``
        adds the other known links among sampled nodes when recorded.
        """
        if network not in ("forest", "ties"):
            raise ValueError(f"network must be 'forest' or 'ties', got {network!r}")
        e = self.recruitment_edges()
        if network == "ties" and self.ties is not None and len(self.ties):
            e = np.vstack([e, self.ties])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0) if len(e) else e.reshape(0, 2)

    def csr(self, network: str = "ties") -> tuple[np.ndarray, np.ndarray]:
        n = len(self)
        e = self.edges(network)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((cols, rows))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return np.cumsum(indptr), cols[order].astype(np.int64)

    def n_components(self) -> int:
        # forest: each root (recruiter == -1) starts one tree
        return int(np.sum(self.recruiter < 0))

    def recruit_counts(self) -> np.ndarray:
        r = self.recruiter[self.recruiter >= 0]
        return np.bincount(r, minlength=len(self))

    def tree_labels(self) -> np.ndarray:
        """Index of the root each node descends from."""
        root = np.empty(len(self), dtype=np.int64)
        for k in range(len(self)):
            r = self.recruiter[k]
            root[k] = k if r < 0 else root[r]
        return root

    def check(self) -> None:
        """Raise AssertionError unless the forest invariants hold."""
        n = len(self)
        assert len(np.unique(self.node)) == n, "node recruited twice"
        assert np.all(self.recruiter < np.arange(n)), "recruiter entered after recruit"
        assert np.all((self.recruiter >= 0) == (self.seed_flag == RECRUIT))
        assert len(self.recruitment_edges()) == n - self.n_components()


def select_seeds(graph: PopulationGraph, rng: np.random.Generator, count: int | None = None, rate: float | None = None) -> np.ndarray:
    """Uniform seeds: ``count`` without replacement, or Bernoulli(``rate``) per node."""
    if (count is None) == (rate is None):
        raise ValueError("give exactly one of count or rate")
    if count is not None:
        if count < 0 or count > graph.n:
            raise ValueError(f"seed count {count} outside 0..{graph.n}")
        return rng.choice(graph.n, size=count, replace=False)
    if not 0.0 <= rate <= 1.0:
        raise ValueError("seed rate must be in [0, 1]")
    return np.flatnonzero(rng.random(graph.n) < rate)


def run_design(graph: PopulationGraph, attrs: AttributeTable | None, config: DesignConfig, rng: np.random.Generator, seeds=None) -> SampleNetwork:
    """Simulate one coupon-based link-tracing sample.

    Days are discrete. Every entrant gets ``min(coupons, degree)`` coupons;
    a coupon's redemption day is geometric with daily probability
    ``p_use``, and a coupon not redeemed within ``expiry_days`` expires.
    On redemption the coupon goes to a uniformly chosen neighbor of the
    holder who is not yet in the sample; with no such neighbor it is
    wasted. Same-day redemptions run in coupon issue order. When no live
    coupons remain short of the target, one extra seed is drawn uniformly
    from the unsampled nodes.
    """
    config.validate(graph.n)
    adj = graph.adjacency_lists()
    deg = graph.degree
    if seeds is None:
        if config.seed_rate is not None:
            seeds = select_seeds(graph, rng, rate=config.seed_rate)
        else:
            seeds = select_seeds(graph, rng, count=min(config.seeds, config.n))
    seeds = [int(s) for s in seeds][: config.n]

    sampled = bytearray(graph.n)
    pos_of = {}
    nodes, recruiter, flags, days = [], [], [], []
    heap: list = []
    seq = 0

    def enter(node, rec, flag, day):
        nonlocal seq
        sampled[node] = 1
        pos_of[node] = len(nodes)
        nodes.append(node)
        recruiter.append(rec)
        flags.append(flag)
        days.append(day)
        c = min(config.coupons, int(deg[node]))
        if c:
            waits = rng.geometric(config.p_use, size=c)
            for w in waits.tolist():
                if w <= config.expiry_days:
                    heapq.heappush(heap, (day + w, seq, node))
                seq += 1

    for s in seeds:
        if not sampled[s]:
            enter(s, -1, SEED, 0)

    today = 0
    while len(nodes) < config.n:
        if not heap:
            if len(nodes) >= graph.n:
                break
            free = np.flatnonzero(np.frombuffer(bytes(sampled), dtype=np.uint8) == 0)
            pick = int(free[rng.integers(len(free))])
            log.debug("re-seed on day %d: node %d (sample size %d)", today, pick, len(nodes))
            enter(pick, -1, RESEED, today)
            continue
        today, _, holder = heapq.heappop(heap)
        cand = [j for j in adj[holder] if not sampled[j]]
        if not cand:
            continue
        recruit = cand[rng.integers(len(cand))] if len(cand) > 1 else cand[0]
        enter(recruit, pos_of[holder], RECRUIT, today)

    node = np.asarray(nodes, dtype=np.int64)
    rec = np.asarray(recruiter, dtype=np.int64)
    net = SampleNetwork(
        node=node,
        recruiter=rec,
        seed_flag=np.asarray(flags, dtype=np.int64),
        day=np.asarray(days, dtype=np.int64),
        degree=deg[node].astype(np.int64),
        attrs={} if attrs is None else {k: attrs.values[k][node].copy() for k in attrs.names},
        target=config.n,
        ties=known_ties(graph, node, rec),
    )
    if len(net) < config.n:
        log.info("sample stopped at %d of target %d", len(net), config.n)
    if net.n_reseeds:
        log.info("%d re-seed(s) needed to reach sample size %d", net.n_reseeds, len(net))
    return net


def known_ties(graph: PopulationGraph, node: np.ndarray, recruiter: np.ndarray) -> np.ndarray:
    """Population links between sampled nodes that are not recruitment links,
    as sample-position pairs ``u < v``."""
    pos = np.full(graph.n, -1, dtype=np.int64)
    pos[node] = np.arange(len(node))
    starts, stops = graph.indptr[node], graph.indptr[node + 1]
    src = np.repeat(np.arange(len(node)), stops - starts)
    nbr = graph.indices[np.concatenate([np.arange(a, b) for a, b in zip(starts, stops)])] if len(node) else np.zeros(0, dtype=np.int64)
    dst = pos[nbr]
    keep = (dst >= 0) & (src < dst)
    e = np.column_stack([src[keep], dst[keep]])
    k = np.flatnonzero(recruiter >= 0)
    rec = np.sort(np.column_stack([recruiter[k], k]), axis=1)
    n = max(len(node), 1)
    is_rec = np.isin(e[:, 0] * n + e[:, 1], rec[:, 0] * n + rec[:, 1])
    return e[~is_rec]


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def write_sample(net: SampleNetwork, nodes_path, edges_path, ties_path=None) -> None:
    """Write the nodes file (``id,seed_flag,day,degree,attr...``) and the
    recruitment edges file (``recruiter,recruit``); ids are population ids.
    Known non-recruitment ties go to ``ties_path`` (``u,v``) if given."""
    names = list(net.attrs)
    with open(nodes_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "seed_flag", "day", "degree", *names])
        for k in range(len(net)):
            w.writerow([int(net.node[k]), int(net.seed_flag[k]), int(net.day[k]), int(net.degree[k]),
                        *(_fmt(net.attrs[a][k]) for a in names)])
    with open(edges_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recruiter", "recruit"])
        for r, k in net.recruitment_edges():
            w.writerow([int(net.node[r]), int(net.node[k])])
    if ties_path is not None:
        ties = net.ties if net.ties is not None else np.zeros((0, 2), dtype=np.int64)
        with open(ties_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "v"])
            for a, b in ties:
                w.writerow([int(net.node[a]), int(net.node[b])])


def read_sample(nodes_path, edges_path, ties_path=None) -> SampleNetwork:
    with open(nodes_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["id", "seed_flag", "day", "degree"]:
            raise ValueError(f"{nodes_path}: unexpected header {header[:4]}")
        names = header[4:]
        rows = [r for r in reader if r]
    node = np.asarray([int(r[0]) for r in rows], dtype=np.int64)
    pos = {int(v): k for k, v in enumerate(node)}
    recruiter = np.full(len(node), -1, dtype=np.int64)
    with open(edges_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, r in enumerate(reader, start=2):
            if not r:
                continue
            try:
                a, b = pos[int(r[0])], pos[int(r[1])]
            except (KeyError, ValueError):
                raise ValueError(f"{edges_path}:{lineno}: edge refers to unknown node") from None
            if recruiter[b] >= 0:
                raise ValueError(f"{edges_path}:{lineno}: node {r[1]} recruited twice")
            recruiter[b] = a
    ties = None
    if ties_path is not None:
        with open(ties_path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            try:
                ties = np.asarray([sorted((pos[int(r[0])], pos[int(r[1])])) for r in reader if r], dtype=np.int64).reshape(-1, 2)
            except (KeyError, ValueError):
                raise ValueError(f"{ties_path}: tie refers to unknown node") from None
    return SampleNetwork(
        node=node,
        recruiter=recruiter,
        seed_flag=np.asarray([int(r[1]) for r in rows], dtype=np.int64),
        day=np.asarray([int(r[2]) for r in rows], dtype=np.int64),
        degree=np.asarray([int(r[3]) for r in rows], dtype=np.int64),
        attrs={a: np.asarray([float(r[4 + c]) for r in rows]) for c, a in enumerate(names)},
        ties=ties,
    )
