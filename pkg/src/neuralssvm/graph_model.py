"""Samples, labelings and joint feature maps for pairwise factor graphs.

A sample holds one feature vector per node and one per undirected edge
``(i, j)`` with ``i < j``.  Labels are the integers ``0 .. n_labels - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Raised when arrays handed to a model operation have inconsistent shapes."""


class EdgeStateIndex:
    """Maps a label pair ``(m, n)`` on an edge to a factor output unit.

    ``mode='full'`` uses all ``n_labels ** 2`` ordered pairs.  ``mode='symmetric'``
    identifies ``(m, n)`` with ``(n, m)`` and needs ``n_labels * (n_labels + 1) / 2``
    units, which suits undirected edges with symmetric edge features.
    """

    MODES = ("full", "symmetric")

    def __init__(self, n_labels: int, mode: str = "symmetric"):
        if mode not in self.MODES:
            raise ValueError(f"unknown edge index mode {mode!r}")
        if n_labels < 2:
            raise ValueError("need at least two labels")
        self.n_labels = int(n_labels)
        self.mode = mode
        table = np.empty((n_labels, n_labels), dtype=np.intp)
        if mode == "full":
            table[:] = np.arange(n_labels * n_labels).reshape(n_labels, n_labels)
        else:
            k = 0
            for m in range(n_labels):
                for n in range(m, n_labels):
                    table[m, n] = table[n, m] = k
                    k += 1
        table.setflags(write=False)
        self.table = table

    @property
    def dim(self) -> int:
        L = self.n_labels
        return L * L if self.mode == "full" else L * (L + 1) // 2

    def index(self, m: int, n: int) -> int:
        return int(self.table[m, n])

    def __eq__(self, other):
        return (isinstance(other, EdgeStateIndex) and other.mode == self.mode
                and other.n_labels == self.n_labels)

    def __repr__(self):
        return f"EdgeStateIndex(n_labels={self.n_labels}, mode={self.mode!r})"


@dataclass(frozen=True)
class FactorGraphSample:
    """One structured instance.

    Parameters
    ----------
    node_features : ndarray, shape (n_nodes, d_u)
    edges : ndarray of int, shape (n_edges, 2)
        Undirected edges stored as ``(i, j)`` with ``i < j``.
    edge_features : ndarray, shape (n_edges, d_i)
    ground_truth : ndarray of int, shape (n_nodes,), optional
    """

    node_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray
    ground_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        nf = np.array(self.node_features, dtype=np.float64, ndmin=2)
        edges = np.array(self.edges, dtype=np.intp).reshape(-1, 2)
        ef = np.array(self.edge_features, dtype=np.float64)
        if ef.ndim == 1:
            ef = ef.reshape(len(edges), -1) if len(edges) else ef.reshape(0, 0)
        gt = self.ground_truth
        if gt is not None:
            gt = np.array(gt, dtype=np.intp).ravel()
        for arr in (nf, edges, ef) + ((gt,) if gt is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "node_features", nf)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_features", ef)
        object.__setattr__(self, "ground_truth", gt)

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def with_node_features(self, node_features) -> "FactorGraphSample":
        return FactorGraphSample(node_features, self.edges, self.edge_features,
                                 self.ground_truth)

    def with_ground_truth(self, ground_truth) -> "FactorGraphSample":
        return FactorGraphSample(self.node_features, self.edges, self.edge_features,
                                 ground_truth)


@dataclass
class Dataset:
    """A list of samples sharing label count and feature dimensions."""

    n_labels: int
    d_u: int
    d_i: int
    samples: list = field(default_factory=list)
    class_names: Optional[list] = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, k):
        return self.samples[k]

    @property
    def ground_truths(self) -> list:
        return [s.ground_truth for s in self.samples]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.n_labels, self.d_u, self.d_i,
                       [self.samples[k] for k in indices], self.class_names)


def check_labeling(sample: FactorGraphSample, y, n_labels: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != sample.n_nodes:
        raise InvalidInputError(
            f"labeling has shape {y.shape}, sample has {sample.n_nodes} nodes")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError("labeling must be integer valued")
    if y.size and (y.min() < 0 or y.max() >= n_labels):
        raise InvalidInputError(f"labels must lie in [0, {n_labels})")
    return y.astype(np.intp, copy=False)


def joint_feature_unary(sample: FactorGraphSample, y, n_labels: int) -> np.ndarray:
    """Sum over nodes of the node feature vector placed in the block of its label.

    Returns a vector of length ``d_u * n_labels``; block ``m`` occupies
    entries ``m * d_u .. (m + 1) * d_u``.
    """
    y = check_labeling(sample, y, n_labels)
    d_u = sample.node_features.shape[1]
    out = np.zeros((n_labels, d_u))
    np.add.at(out, y, sample.node_features)
    return out.ravel()


def joint_feature_interaction(sample: FactorGraphSample, y, n_labels: int,
                              idx: EdgeStateIndex) -> np.ndarray:
    """Sum over edges of the edge feature vector placed in block ``idx(y_i, y_j)``."""
    y = check_labeling(sample, y, n_labels)
    if idx.n_labels != n_labels:
        raise InvalidInputError("edge index built for a different label count")
    d_i = sample.edge_features.shape[1] if sample.edge_features.ndim == 2 else 0
    out = np.zeros((idx.dim, d_i))
    if sample.n_edges:
        states = idx.table[y[sample.edges[:, 0]], y[sample.edges[:, 1]]]
        np.add.at(out, states, sample.edge_features)
    return out.ravel()


def validate_sample(sample: FactorGraphSample, n_labels: Optional[int] = None,
                    d_u: Optional[int] = None, d_i: Optional[int] = None) -> list:
    """Return a list of human-readable invariant violations (empty when valid)."""
    problems = []
    nf, edges, ef = sample.node_features, sample.edges, sample.edge_features
    n = nf.shape[0]
    if nf.ndim != 2:
        problems.append("node features: not a matrix")
    elif d_u is not None and nf.shape[1] != d_u:
        problems.append(f"node features: dimension {nf.shape[1]} != {d_u}")
    if not np.all(np.isfinite(nf)):
        problems.append("node features: non-finite value")
    if ef.ndim != 2 or ef.shape[0] != edges.shape[0]:
        problems.append("edge features: row count differs from edge count")
    elif d_i is not None and edges.shape[0] and ef.shape[1] != d_i:
        problems.append(f"edge features: dimension {ef.shape[1]} != {d_i}")
    if ef.size and not np.all(np.isfinite(ef)):
        problems.append("edge features: non-finite value")
    seen = set()
    for k, (i, j) in enumerate(edges.tolist()):
        if i == j:
            problems.append(f"edge {k}: self-loop at node {i}")
            continue
        if not (0 <= i < n and 0 <= j < n):
            problems.append(f"edge {k}: endpoint out of range ({i}, {j})")
            continue
        if i > j:
            problems.append(f"edge {k}: endpoints not ordered i < j ({i}, {j})")
        key = (min(i, j), max(i, j))
        if key in seen:
            problems.append(f"edge {k}: duplicate edge {key}")
        seen.add(key)
    gt = sample.ground_truth
    if gt is not None:
        if gt.shape[0] != n:
            problems.append(f"labeling length {gt.shape[0]} != node count {n}")
        if n_labels is not None and gt.size and (gt.min() < 0 or gt.max() >= n_labels):
            problems.append(f"labeling: label out of range [0, {n_labels})")
    return problems


def validate_dataset(dataset: Dataset) -> list:
    problems = []
    if dataset.n_labels < 2:
        problems.append("label count must be at least 2")
    for k, s in enumerate(dataset.samples):
        for p in validate_sample(s, dataset.n_labels, dataset.d_u, dataset.d_i):
            problems.append(f"record {k}: {p}")
    return problems
