"""Frequency-annotated sample network for external plotting."""

from __future__ import annotations

import csv

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


def sample_components(net, network: str = "ties") -> np.ndarray:
    """Connected-component label of every sampled node in the resampling network."""
    indptr, indices = net.csr(network)
    n = len(net)
    adj = sparse.csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr), shape=(n, n))
    _, labels = csgraph.connected_components(adj, directed=False)
    # renumber by first appearance in sample order
    _, first = np.unique(labels, return_index=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[labels]


def export_annotated(net, f, path, network: str = "ties", edges_path=None) -> None:
    """Write ``id,f,degree,component`` rows, and optionally the edges as ``u,v``."""
    f = np.asarray(f, dtype=float)
    if len(f) != len(net):
        raise ValueError("one frequency per sampled node is needed")
    comp = sample_components(net, network)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "f", "degree", "component"])
        for k in range(len(net)):
            w.writerow([int(net.node[k]), repr(float(f[k])), int(net.degree[k]), int(comp[k])])
    if edges_path is not None:
        with open(edges_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "v"])
            for a, b in net.edges(network):
                w.writerow([int(net.node[a]), int(net.node[b])])
