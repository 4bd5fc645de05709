"""MAP and loss-augmented inference on pairwise factor graphs.

Maximizing the compatibility ``g`` is done by minimizing the energy
``-g``.  Backends:

``'exact'``
    exhaustive enumeration, refused above ``enum_cap`` labelings;
``'expansion'``
    alpha-expansion with a Dinic max-flow core;
``'icm'``
    iterated conditional modes, a cheap coordinate-descent diagnostic;
``'auto'``
    exact when the state space fits under the cap, expansion otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .factors import FactorTables
from .graph_model import EdgeStateIndex, FactorGraphSample, InvalidInputError, check_labeling

ENUM_CAP = 2_000_000
BACKENDS = ("exact", "expansion", "icm", "auto")
DEFAULT_SWEEPS = 50


class EnumerationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyInstance:
    """Costs to minimize: ``unary`` (V, L) and per-edge ``pairwise`` (E, L, L)."""

    unary: np.ndarray
    pairwise: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.unary, dtype=np.float64)
        p = np.ascontiguousarray(self.pairwise, dtype=np.float64)
        e = np.ascontiguousarray(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        if u.ndim != 2:
            raise InvalidInputError("unary costs must be a (V, L) matrix")
        L = u.shape[1]
        if p.shape != (e.shape[0], L, L):
            raise InvalidInputError(
                f"pairwise costs have shape {p.shape}, expected {(e.shape[0], L, L)}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise InvalidInputError("costs must be finite")
        object.__setattr__(self, "unary", u)
        object.__setattr__(self, "pairwise", p)
        object.__setattr__(self, "edges", e)

    @property
    def n_nodes(self) -> int:
        return self.unary.shape[0]

    @property
    def n_labels(self) -> int:
        return self.unary.shape[1]

    @property
    def n_states(self) -> int:
        return self.n_labels ** self.n_nodes

    def energy(self, labels) -> float:
        return float(_kernels.energy(self.unary, self.pairwise, self.edges,
                                     self._labels(labels)))

    def _labels(self, labels) -> np.ndarray:
        y = np.asarray(labels, dtype=np.int64)
        if y.shape != (self.n_nodes,):
            raise InvalidInputError("labeling length does not match the instance")
        if y.size and (y.min() < 0 or y.max() >= self.n_labels):
            raise InvalidInputError("label out of range")
        return np.ascontiguousarray(y)

    def unary_argmin(self) -> np.ndarray:
        return np.argmin(self.unary, axis=1).astype(np.int64)

    @classmethod
    def from_tables(cls, sample: FactorGraphSample, tables: FactorTables,
                    idx: EdgeStateIndex, unary_bonus: Optional[np.ndarray] = None):
        """Negate factor values into costs; ``unary_bonus`` is added to the factors first."""
        unary = tables.unary if unary_bonus is None else tables.unary + unary_bonus
        pairwise = tables.pairwise[:, idx.table] if sample.n_edges else np.zeros(
            (0, idx.n_labels, idx.n_labels))
        return cls(-unary, -pairwise, sample.edges)


@dataclass
class FlowNetwork:
    """Directed network with nonnegative arc capacities."""

    n_nodes: int
    arcs: list  # (tail, head, capacity)
    source: int
    sink: int

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        for u, v, c in self.arcs:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise ValueError(f"arc ({u}, {v}) references a missing node")
            if c < 0:
                raise ValueError(f"arc ({u}, {v}) has negative capacity")


def max_flow(net: FlowNetwork):
    """Return ``(flow_value, source_side)``.

    ``source_side`` is a boolean array marking nodes reachable from the
    source in the final residual network; it is a minimum cut.
    """
    m = len(net.arcs)
    tails = np.empty(2 * m, np.int64)
    heads = np.empty(2 * m, np.int64)
    cap = np.zeros(2 * m)
    for k, (u, v, c) in enumerate(net.arcs):
        tails[2 * k], heads[2 * k], cap[2 * k] = u, v, c
        tails[2 * k + 1], heads[2 * k + 1] = v, u
    flow, side = _kernels.source_side(net.n_nodes, tails, heads, cap, net.source, net.sink)
    return float(flow), side


def cut_capacity(net: FlowNetwork, source_side) -> float:
    return float(sum(c for u, v, c in net.arcs if source_side[u] and not source_side[v]))


def infer_exact(instance: EnergyInstance, enum_cap: int = ENUM_CAP) -> np.ndarray:
    """Globally minimal labeling; ties go to the lexicographically smallest."""
    if instance.n_nodes and instance.n_states > enum_cap:
        raise EnumerationCapExceeded(
            f"{instance.n_labels}^{instance.n_nodes} labelings exceed the cap of {enum_cap}")
    if instance.n_nodes == 0:
        return np.zeros(0, np.int64)
    return _kernels.enumerate_min(instance.unary, instance.pairwise, instance.edges)


def alpha_expansion(instance: EnergyInstance, init=None, max_sweeps: int = DEFAULT_SWEEPS,
                    trace: Optional[list] = None) -> np.ndarray:
    """Alpha-expansion from ``init`` (per-node unary argmin by default).

    ``trace``, if given, is extended with the energy of the start labeling
    and after every accepted move.
    """
    y0 = instance.unary_argmin() if init is None else instance._labels(init)
    if instance.n_nodes == 0:
        return y0
    buf = np.empty(max(max_sweeps, 0) * instance.n_labels + 1)
    y, nt = _kernels.alpha_expansion(instance.unary, instance.pairwise, instance.edges,
                                     y0, max_sweeps, buf)
    if trace is not None:
        trace.extend(buf[:nt].tolist())
    return y


def expansion_move(instance: EnergyInstance, labels, alpha: int) -> np.ndarray:
    """The labeling proposed by a single expansion move (not checked for improvement)."""
    return _kernels.expansion_move(instance.unary, instance.pairwise, instance.edges,
                                   instance._labels(labels), int(alpha))


def infer_icm(instance: EnergyInstance, init=None, max_sweeps: int = DEFAULT_SWEEPS) -> np.ndarray:
    y0 = instance.unary_argmin() if init is None else instance._labels(init)
    return _kernels.icm(instance.unary, instance.pairwise, instance.edges, y0, max_sweeps)


def minimize(instance: EnergyInstance, backend: str = "auto", init=None,
             max_sweeps: int = DEFAULT_SWEEPS, enum_cap: int = ENUM_CAP) -> np.ndarray:
    if backend not in BACKENDS:
        raise ValueError(f"unknown inference backend {backend!r}")
    if backend == "auto":
        backend = "exact" if instance.n_states <= enum_cap else "expansion"
    if backend == "exact":
        return infer_exact(instance, enum_cap)
    if backend == "expansion":
        return alpha_expansion(instance, init, max_sweeps)
    return infer_icm(instance, init, max_sweeps)


def loss_bonus(ground_truth, class_weights, n_labels: int) -> np.ndarray:
    """Per-node loss term eta(y_i) added to every unary factor of a wrong label."""
    gt = np.asarray(ground_truth, dtype=np.intp)
    eta = np.asarray(class_weights, dtype=np.float64)
    bonus = np.repeat(eta[gt][:, None], n_labels, axis=1)
    bonus[np.arange(gt.size), gt] = 0.0
    return bonus


def predict_labeling(sample: FactorGraphSample, tables: FactorTables, idx: EdgeStateIndex,
                     backend: str = "auto", max_sweeps: int = DEFAULT_SWEEPS,
                     enum_cap: int = ENUM_CAP) -> np.ndarray:
    """``argmax_y g(x, y)``."""
    inst = EnergyInstance.from_tables(sample, tables, idx)
    return minimize(inst, backend, None, max_sweeps, enum_cap)


def loss_augmented_infer(sample: FactorGraphSample, tables: FactorTables, ground_truth,
                         class_weights, idx: EdgeStateIndex, backend: str = "auto",
                         max_sweeps: int = DEFAULT_SWEEPS,
                         enum_cap: int = ENUM_CAP) -> np.ndarray:
    """``argmax_y [Delta(ground_truth, y) + g(x, y)]``.

    The class-weighted Hamming loss decomposes over nodes, so it is folded
    into the unary factors before inference.  ``class_weights`` is the
    per-class weight vector.
    """
    gt = check_labeling(sample, ground_truth, idx.n_labels)
    weights = getattr(class_weights, "eta", class_weights)
    inst = EnergyInstance.from_tables(sample, tables, idx,
                                      loss_bonus(gt, weights, idx.n_labels))
    return minimize(inst, backend, None, max_sweeps, enum_cap)
