"""Population graphs: loading, validation, synthetic generation, components."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed edge list or graph data."""


class AttributeFormatError(ValueError):
    """Malformed or invalid attribute table."""


class DuplicateEdgeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class PopulationGraph:
    """Undirected simple graph on dense node ids ``0..n-1``.

    Adjacency is stored in CSR form (``indptr``, ``indices``) with each
    neighbor list sorted. ``labels`` maps dense ids back to the ids used in
    the source files.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray
    duplicates_dropped: int = 0
    _adjlist: list = field(default=None, repr=False, compare=False)

    @classmethod
    def from_edges(cls, n, edges, labels=None, duplicates_dropped=0):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise GraphFormatError("edge endpoint outside 0..n-1")
        if np.any(edges[:, 0] == edges[:, 1]):
            bad = edges[edges[:, 0] == edges[:, 1]][0]
            raise GraphFormatError(f"self-loop at node {bad[0]}")
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        uniq = np.unique(lo * n + hi)
        dups = len(edges) - len(uniq)
        lo, hi = uniq // n, uniq % n
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        if labels is None:
            labels = np.arange(n, dtype=np.int64)
        return cls(
            n=int(n),
            indptr=indptr,
            indices=cols.astype(np.int64),
            labels=np.asarray(labels, dtype=np.int64),
            duplicates_dropped=duplicates_dropped + dups,
        )

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` with ``u < v``."""
        src = np.repeat(np.arange(self.n), self.degree)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    def adjacency_lists(self) -> list:
        # cached python lists for the per-event loops in the design simulator
        if self._adjlist is None:
            lists = [self.indices[a:b].tolist() for a, b in zip(self.indptr[:-1], self.indptr[1:])]
            object.__setattr__(self, "_adjlist", lists)
        return self._adjlist

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        return self.indptr, self.indices

    def index_of(self, label: int) -> int:
        pos = int(np.searchsorted(self.labels, label))
        if pos >= self.n or self.labels[pos] != label:
            raise KeyError(label)
        return pos


@dataclass(frozen=True, eq=False)
class AttributeTable:
    """Per-node variables aligned with a graph's dense ids.

    ``mask[name]`` is True where the source value was missing and was
    imputed as 0.
    """

    names: tuple[str, ...]
    values: dict[str, np.ndarray]
    mask: dict[str, np.ndarray]
    binary: frozenset[str]

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    @classmethod
    def from_columns(cls, columns: dict, binary: Iterable[str] | None = None) -> "AttributeTable":
        values = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        if binary is None:
            binary = [k for k, v in values.items() if np.all((v == 0) | (v == 1))]
        binary = frozenset(binary)
        for name in binary:
            _check_binary(name, values[name])
        return cls(
            names=tuple(values),
            values=values,
            mask={k: np.zeros(len(v), dtype=bool) for k, v in values.items()},
            binary=binary,
        )


def _check_binary(name, col):
    bad = np.flatnonzero((col != 0) & (col != 1))
    if len(bad):
        raise AttributeFormatError(
            f"variable {name!r} declared binary but row {bad[0]} has value {col[bad[0]]:g}"
        )


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def load_edge_list(path, node_ids: Sequence[int] | str | Path | None = None) -> PopulationGraph:
    """Read a ``u,v`` edge list into a :class:`PopulationGraph`.

    Ids are remapped to ``0..n-1`` in ascending label order. ``node_ids``
    (a sequence, or a file with one id per line) adds nodes that have no
    edges. Repeated and reversed pairs are collapsed with a
    :class:`DuplicateEdgeWarning`.
    """
    pairs = []
    for lineno, line in _read_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'u,v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer id in {line!r}") from None
        if u < 0 or v < 0:
            raise GraphFormatError(f"{path}:{lineno}: negative id in {line!r}")
        if u == v:
            raise GraphFormatError(f"{path}:{lineno}: self-loop on node {u}")
        pairs.append((u, v))

    extra = []
    if isinstance(node_ids, (str, Path)):
        for lineno, line in _read_lines(node_ids):
            try:
                extra.append(int(line.split(",")[0]))
            except ValueError:
                raise GraphFormatError(f"{node_ids}:{lineno}: non-integer id {line!r}") from None
    elif node_ids is not None:
        extra = [int(x) for x in node_ids]

    raw = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    labels = np.unique(np.concatenate([raw.ravel(), np.asarray(extra, dtype=np.int64)]))
    dense = np.searchsorted(labels, raw)
    graph = PopulationGraph.from_edges(len(labels), dense, labels=labels)
    if graph.duplicates_dropped:
        warnings.warn(
            f"{path}: {graph.duplicates_dropped} duplicate edge(s) dropped",
            DuplicateEdgeWarning,
            stacklevel=2,
        )
    return graph


def load_attributes(path, graph: PopulationGraph, binary: Iterable[str] | None = None) -> AttributeTable:
    """Read ``id,var1,var2,...`` rows aligned to ``graph``.

    Empty cells are imputed as 0 and flagged in the mask. Columns listed in
    ``binary`` must hold only 0/1; when ``binary`` is None, every column
    whose observed values are all 0/1 is treated as binary.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise AttributeFormatError(f"{path}: empty attribute file") from None
        if len(header) < 1 or header[0] != "id":
            raise AttributeFormatError(f"{path}: header must start with 'id'")
        names = header[1:]
        if len(set(names)) != len(names):
            raise AttributeFormatError(f"{path}: duplicate variable names in header")
        vals = np.zeros((graph.n, len(names)))
        miss = np.zeros((graph.n, len(names)), dtype=bool)
        seen = np.zeros(graph.n, dtype=bool)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise AttributeFormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                node = graph.index_of(int(row[0]))
            except (ValueError, KeyError):
                raise AttributeFormatError(f"{path}:{lineno}: unknown node id {row[0]!r}") from None
            if seen[node]:
                raise AttributeFormatError(f"{path}:{lineno}: duplicate row for node {row[0]}")
            seen[node] = True
            for c, cell in enumerate(row[1:]):
                cell = cell.strip()
                if cell == "":
                    miss[node, c] = True
                    continue
                try:
                    x = float(cell)
                except ValueError:
                    raise AttributeFormatError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {names[c]!r}"
                    ) from None
                if not math.isfinite(x) or x < 0:
                    raise AttributeFormatError(
                        f"{path}:{lineno}: value {cell!r} in column {names[c]!r} must be finite and nonnegative"
                    )
                vals[node, c] = x
    if not seen.all():
        missing = graph.labels[~seen]
        raise AttributeFormatError(f"{path}: {len(missing)} node(s) have no row, e.g. id {missing[0]}")

    values = {name: vals[:, c].copy() for c, name in enumerate(names)}
    mask = {name: miss[:, c].copy() for c, name in enumerate(names)}
    if binary is None:
        binary = [n for n in names if np.all((values[n] == 0) | (values[n] == 1))]
    binary = frozenset(binary)
    unknown = binary - set(names)
    if unknown:
        raise AttributeFormatError(f"{path}: binary variable(s) not in header: {sorted(unknown)}")
    for name in binary:
        _check_binary(name, values[name])
    if any(m.any() for m in mask.values()):
        log.info("%s: imputed %d missing cell(s) as 0", path, int(miss.sum()))
    return AttributeTable(names=tuple(names), values=values, mask=mask, binary=binary)


def component_labels(graph: PopulationGraph) -> np.ndarray:
    """Component id per node; id 0 is the largest component.

    Ties in size are broken by the smallest member node id.
    """
    if graph.n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = sparse.csr_matrix(
        (np.ones(len(graph.indices), dtype=np.int8), graph.indices, graph.indptr),
        shape=(graph.n, graph.n),
    )
    _, raw = csgraph.connected_components(adj, directed=False)
    sizes = np.bincount(raw)
    first = np.full(len(sizes), graph.n, dtype=np.int64)
    np.minimum.at(first, raw, np.arange(graph.n))
    order = np.lexsort((first, -sizes))
    relabel = np.empty(len(sizes), dtype=np.int64)
    relabel[order] = np.arange(len(sizes))
    return relabel[raw]


def components(graph: PopulationGraph) -> list[tuple[int, int]]:
    """``(component id, size)`` pairs, largest first."""
    labels = component_labels(graph)
    sizes = np.bincount(labels) if len(labels) else np.zeros(0, dtype=np.int64)
    return [(int(c), int(s)) for c, s in enumerate(sizes)]


@dataclass
class SyntheticPopulationConfig:
    """Settings for :func:`generate_synthetic`.

    Either ``degrees`` (an explicit sequence of length ``nodes``) or
    ``mean_degree`` must be given. With ``mean_degree``, degrees are drawn
    from a discretized lognormal with log-scale spread ``degree_dispersion``
    and floored at 1.
    """

    nodes: int
    mean_degree: float | None = None
    degrees: Sequence[int] | None = None
    component_fractions: Sequence[float] = (1.0,)
    degree_dispersion: float = 1.0
    attributes: int = 0
    seed: int = 0

    def validate(self):
        if self.nodes < 1:
            raise ValueError("nodes must be >= 1")
        if (self.mean_degree is None) == (self.degrees is None):
            raise ValueError("give exactly one of mean_degree or degrees")
        fr = np.asarray(self.component_fractions, dtype=float)
        if len(fr) == 0 or np.any(fr <= 0) or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("component_fractions must be positive and sum to 1")
        if self.degrees is not None and len(self.degrees) != self.nodes:
            raise ValueError("degrees must have one entry per node")
        if self.mean_degree is not None and self.mean_degree <= 0:
            raise ValueError("mean_degree must be positive")


def _block_sizes(n, fractions):
    raw = np.asarray(fractions, dtype=float) * n
    sizes = np.floor(raw).astype(np.int64)
    # largest remainders get the leftover nodes
    short = n - sizes.sum()
    if short:
        sizes[np.argsort(-(raw - sizes), kind="stable")[:short]] += 1
    return sizes


def _draw_degrees(rng, size, mean, dispersion, cap):
    z = rng.standard_normal(size)

    def realized(scale):
        d = np.maximum(1, np.rint(scale * np.exp(dispersion * z)))
        return np.minimum(d, cap)

    lo, hi = 1e-6, 10.0 * mean + 10.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if realized(mid).mean() < mean:
            lo = mid
        else:
            hi = mid
    return realized(0.5 * (lo + hi)).astype(np.int64)


def _wire_block(rng, nodes, degrees, max_rounds=50):
    """Configuration-model pairing; bad stubs are re-paired by edge swaps."""
    stubs = np.repeat(nodes, degrees)
    rng.shuffle(stubs)
    edges: set[tuple[int, int]] = set()
    pending = []
    for a, b in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
        key = (a, b) if a < b else (b, a)
        if a == b or key in edges:
            pending.append((a, b))
        else:
            edges.add(key)

    for _ in range(max_rounds):
        if not pending:
            break
        retry = []
        edge_list = list(edges)
        for a, b in pending:
            done = False
            for _try in range(20):
                if not edge_list:
                    break
                c, d = edge_list[rng.integers(len(edge_list))]
                if rng.random() < 0.5:
                    c, d = d, c
                e1 = (min(a, c), max(a, c))
                e2 = (min(b, d), max(b, d))
                if a == c or b == d or e1 == e2 or e1 in edges or e2 in edges:
                    continue
                edges.discard((min(c, d), max(c, d)))
                edges.add(e1)
                edges.add(e2)
                edge_list = list(edges)
                done = True
                break
            if not done:
                retry.append((a, b))
        pending = retry
    if pending:
        log.warning("configuration model: %d stub pair(s) could not be placed", len(pending))
    return edges


def generate_synthetic(config: SyntheticPopulationConfig, rng: np.random.Generator | None = None) -> PopulationGraph:
    """Configuration-model population with one block per component fraction.

    Each block is wired separately, so no edges cross blocks; a block can
    still split into several components if its wiring is disconnected.
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    sizes = _block_sizes(config.nodes, config.component_fractions)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    all_edges = []
    for b, size in enumerate(sizes):
        nodes = np.arange(starts[b], starts[b + 1])
        if config.degrees is not None:
            deg = np.asarray(config.degrees, dtype=np.int64)[nodes]
        else:
            deg = _draw_degrees(rng, size, config.mean_degree, config.degree_dispersion, max(size - 1, 0))
            if deg.sum() % 2:
                cand = np.flatnonzero(deg < size - 1)
                if len(cand):
                    deg[cand[rng.integers(len(cand))]] += 1
                else:
                    deg[rng.integers(size)] -= 1
        if np.any(deg < 0) or np.any(deg > size - 1) or deg.sum() % 2:
            raise ValueError(f"degree sequence of block {b} is not graphical")
        if not _erdos_gallai(deg):
            raise ValueError(f"degree sequence of block {b} is not graphical")
        all_edges.extend(_wire_block(rng, nodes, deg))
    return PopulationGraph.from_edges(config.nodes, np.asarray(sorted(all_edges), dtype=np.int64))


def _erdos_gallai(deg) -> bool:
    d = np.sort(np.asarray(deg, dtype=np.int64))[::-1]
    if d.sum() % 2:
        return False
    n = len(d)
    csum = np.cumsum(d)
    for k in range(1, n + 1):
        rhs = k * (k - 1) + np.minimum(d[k:], k).sum()
        if csum[k - 1] > rhs:
            return False
    return True


def synthetic_attributes(graph: PopulationGraph, rng: np.random.Generator, prevalences: Sequence[float], degree_effects: Sequence[float] | None = None) -> AttributeTable:
    """Binary attributes whose log-odds shift with log degree.

    ``prevalences`` sets the target population proportion of each variable;
    the intercept is solved so the expected proportion matches it exactly.
    """
    logd = np.log(np.maximum(graph.degree, 1))
    logd = logd - logd.mean()
    if degree_effects is None:
        degree_effects = rng.uniform(-0.6, 0.6, size=len(prevalences))
    cols = {}
    for k, (prev, beta) in enumerate(zip(prevalences, degree_effects)):
        lo, hi = -30.0, 30.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if (1.0 / (1.0 + np.exp(-(mid + beta * logd)))).mean() < prev:
                lo = mid
            else:
                hi = mid
        prob = 1.0 / (1.0 + np.exp(-(0.5 * (lo + hi) + beta * logd)))
        cols[f"attr{k + 1:02d}"] = (rng.random(graph.n) < prob).astype(float)
    return AttributeTable.from_columns(cols, binary=cols.keys())


def write_edge_list(graph: PopulationGraph, path) -> None:
    e = graph.edges()
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in zip(graph.labels[e[:, 0]], graph.labels[e[:, 1]]):
            fh.write(f"{u},{v}\n")


def write_attributes(graph: PopulationGraph, attrs: AttributeTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *attrs.names])
        for i in range(graph.n):
            row = [int(graph.labels[i])]
            for name in attrs.names:
                if attrs.mask[name][i]:
                    row.append("")
                else:
                    x = attrs.values[name][i]
                    row.append(int(x) if x == int(x) else repr(float(x)))
            w.writerow(row)
