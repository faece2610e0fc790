"""Proximity graphs over nets.

Nodes are nets; an undirected edge joins two nets whose Manhattan distance is
at most ``threshold`` (µm, measured on raw layout coordinates). The distance is
kept per edge, both raw and divided by the threshold (the scale-free edge
feature the GAT/GIN layers consume).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .exceptions import ValidationError
from .preprocess import ScalerParams

DEFAULT_THRESHOLD_UM = 5.0


def manhattan(a, b) -> float:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class CircuitGraph:
    n_nodes: int
    edges: np.ndarray  # (E, 2) int64, u < v, lexicographically sorted
    edge_dist: np.ndarray  # (E,) µm
    threshold: float
    coords: np.ndarray  # (n, 2) µm
    node_ids: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    scaler: Optional[ScalerParams] = None

    def __post_init__(self):
        if self.features is not None and self.features.shape[0] != self.n_nodes:
            raise ValidationError(
                f"feature matrix has {self.features.shape[0]} rows for {self.n_nodes} nodes"
            )
        if self.labels is not None and self.labels.shape != (self.n_nodes,):
            raise ValidationError("label vector length differs from node count")

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def edge_feature(self) -> np.ndarray:
        return self.edge_dist / self.threshold

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges}

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)

    def message_edges(self, self_loops: bool = True):
        """Directed (src, dst, edge feature) arrays, both directions of every edge.

        Self loops come first (one per node, feature 0), then the edges in
        sorted order, then their reverses.
        """
        u, v = self.edges[:, 0], self.edges[:, 1]
        feat = self.edge_feature
        src = [u, v]
        dst = [v, u]
        ef = [feat, feat]
        if self_loops:
            loop = np.arange(self.n_nodes, dtype=np.int64)
            src.insert(0, loop)
            dst.insert(0, loop)
            ef.insert(0, np.zeros(self.n_nodes))
        return np.concatenate(src), np.concatenate(dst), np.concatenate(ef)

    def with_features(self, features, scaler: Optional[ScalerParams] = None) -> "CircuitGraph":
        return replace(self, features=np.asarray(features, dtype=float), scaler=scaler)

    def with_labels(self, labels) -> "CircuitGraph":
        return replace(self, labels=None if labels is None else np.asarray(labels, dtype=float))

    def permuted(self, perm) -> "CircuitGraph":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        e = inv[self.edges]
        e = np.sort(e, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        return CircuitGraph(
            n_nodes=self.n_nodes,
            edges=e[order],
            edge_dist=self.edge_dist[order],
            threshold=self.threshold,
            coords=self.coords[perm],
            node_ids=self.node_ids[perm],
            features=None if self.features is None else self.features[perm],
            labels=None if self.labels is None else self.labels[perm],
            scaler=self.scaler,
        )


def _pairs_within(coords: np.ndarray, threshold: float, chunk: int = 1024):
    n = coords.shape[0]
    us, vs, ds = [], [], []
    x, y = coords[:, 0], coords[:, 1]
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d = np.abs(x[start:stop, None] - x[None, :]) + np.abs(y[start:stop, None] - y[None, :])
        rows, cols = np.nonzero(d <= threshold)
        keep = cols > rows + start
        us.append(rows[keep] + start)
        vs.append(cols[keep])
        ds.append(d[rows[keep], cols[keep]])
    if not us:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    edges = np.stack([np.concatenate(us), np.concatenate(vs)], axis=1).astype(np.int64)
    return edges, np.concatenate(ds)


def build_graph(
    source: Union[Dataset, np.ndarray],
    threshold: float = DEFAULT_THRESHOLD_UM,
    features=None,
    labels=None,
    node_ids=None,
    scaler: Optional[ScalerParams] = None,
) -> CircuitGraph:
    """Connect every pair of nodes within ``threshold`` Manhattan distance.

    ``source`` is a :class:`Dataset` (coordinates, ids and labels are taken
    from it) or an ``(n, 2)`` coordinate array in µm.
    """
    if not threshold > 0:
        raise ValidationError(f"threshold must be > 0, got {threshold}")
    if isinstance(source, Dataset):
        coords = source.coordinates
        if node_ids is None:
            node_ids = source.net_ids
        if labels is None and any(r.has_label for r in source.records):
            labels = source.labels()
    else:
        coords = np.asarray(source, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(coords)):
        raise ValidationError("coordinates must be finite")
    n = coords.shape[0]
    if node_ids is None:
        node_ids = np.arange(n, dtype=np.int64)
    edges, dist = _pairs_within(coords, float(threshold))
    # _pairs_within already yields row-major (u, v) order; keep it explicit.
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return CircuitGraph(
        n_nodes=n,
        edges=edges[order],
        edge_dist=dist[order],
        threshold=float(threshold),
        coords=coords,
        node_ids=np.asarray(node_ids, dtype=np.int64),
        features=None if features is None else np.asarray(features, dtype=float),
        labels=None if labels is None else np.asarray(labels, dtype=float),
        scaler=scaler,
    )


@dataclass(frozen=True)
class DegreeRank:
    degrees: np.ndarray
    threshold: float

    def to_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "degree"])
            for rank, deg in enumerate(self.degrees, start=1):
                w.writerow([rank, int(deg)])


def degree_rank(graph: CircuitGraph) -> DegreeRank:
    return DegreeRank(degrees=np.sort(graph.degrees())[::-1].copy(), threshold=graph.threshold)


def normalized_adjacency(graph: CircuitGraph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 as a CSR matrix."""
    n = graph.n_nodes
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    a = sp.coo_matrix((np.ones(2 * len(u)), (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(n, n))
    a_hat = (a + sp.identity(n, format="coo")).tocsr()
    d_inv_sqrt = 1.0 / np.sqrt(np.asarray(a_hat.sum(axis=1)).ravel())
    return (sp.diags(d_inv_sqrt) @ a_hat @ sp.diags(d_inv_sqrt)).tocsr()


def gcn_edge_weights(graph: CircuitGraph):
    """(src, dst, weight) for the symmetric-normalised aggregation incl. self loops."""
    src, dst, _ = graph.message_edges(self_loops=True)
    deg = graph.degrees() + 1.0
    w = 1.0 / np.sqrt(deg[src] * deg[dst])
    return src, dst, w


def graph_to_dict(graph: CircuitGraph) -> dict:
    return {
        "threshold_um": graph.threshold,
        "node_ids": graph.node_ids.tolist(),
        "edges": graph.edges.tolist(),
        "edge_dist_um": graph.edge_dist.tolist(),
    }


def save_graph_json(graph: CircuitGraph, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=1))
