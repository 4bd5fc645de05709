"""Factor parameterizations: linear blocks and shared feed-forward nets.

Every factor maps an input matrix (one row per node or per edge) to a table
of factor values (one column per label or per edge label state) and can
back-propagate an output error matrix into a gradient over its flat
parameter vector.  Parameters live in a single contiguous float64 array so
trainers can update, copy and serialize them uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifier import UnaryClassifier
from .graph_model import (
    EdgeStateIndex,
    FactorGraphSample,
    InvalidInputError,
    check_labeling,
)

ACTIVATIONS = ("tanh", "relu", "identity")


def _activate(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    return a


def _activation_grad(name, a, h):
    # derivative expressed through pre-activation a and output h
    if name == "tanh":
        return 1.0 - h * h
    if name == "relu":
        return (a > 0).astype(np.float64)
    return np.ones_like(a)


class LinearFactor:
    """Factor values ``X @ W.T`` with ``W`` of shape ``(d_out, d_in)``.

    The flat layout is block-major (row ``m`` of ``W`` is block ``m``), which
    is exactly the layout of the joint feature vectors, so ``params`` is the
    SSVM weight vector ``w_U`` or ``w_I``.
    """

    kind = "linear"

    def __init__(self, d_in: int, d_out: int, params: Optional[np.ndarray] = None):
        self.d_in, self.d_out = int(d_in), int(d_out)
        if params is None:
            params = np.zeros(self.d_in * self.d_out)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.d_in * self.d_out,):
            raise InvalidInputError(
                f"linear factor expects {self.d_in * self.d_out} parameters, got {params.shape}")
        self.params = params

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def weight(self) -> np.ndarray:
        return self.params.reshape(self.d_out, self.d_in)

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = _check_input(X, self.d_in)
        return X @ self.weight.T

    def backward(self, X: np.ndarray, out_err: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(forward(X) * out_err)`` w.r.t. ``params``."""
        X = _check_input(X, self.d_in)
        return (out_err.T @ X).ravel()

    def copy(self) -> "LinearFactor":
        return LinearFactor(self.d_in, self.d_out, self.params.copy())

    def descriptor(self) -> dict:
        return {"kind": "linear", "d_in": self.d_in, "d_out": self.d_out}


class FactorNet:
    """Multilayer perceptron whose output units are factor values.

    There is no softmax on top; the last layer is affine.  ``sizes`` lists
    the widths from input to output and ``activations`` gives one activation
    per layer (the last must be ``'identity'``).
    """

    kind = "net"

    def __init__(self, sizes: Sequence[int], activations: Sequence[str],
                 params: Optional[np.ndarray] = None):
        sizes = [int(s) for s in sizes]
        activations = list(activations)
        if len(sizes) < 2:
            raise ValueError("a net needs at least an input and an output size")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer widths must be positive, got {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if activations[-1] != "identity":
            raise ValueError("the output layer must be affine (identity activation)")
        self.sizes = sizes
        self.activations = activations
        self._slices = []
        offset = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = slice(offset, offset + n_in * n_out)
            offset += n_in * n_out
            b = slice(offset, offset + n_out)
            offset += n_out
            self._slices.append((w, b, n_in, n_out))
        if params is None:
            params = np.zeros(offset)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (offset,):
            raise InvalidInputError(f"net expects {offset} parameters, got {params.shape}")
        self.params = params

    @property
    def d_in(self) -> int:
        return self.sizes[0]

    @property
    def d_out(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def layers(self):
        """Yield ``(W, b, activation)`` views into ``params``."""
        for (w, b, n_in, n_out), act in zip(self._slices, self.activations):
            yield self.params[w].reshape(n_in, n_out), self.params[b], act

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = _check_input(X, self.d_in)
        for W, b, act in self.layers():
            h = _activate(act, h @ W + b)
        return h

    def backward(self, X: np.ndarray, out_err: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(forward(X) * out_err)`` w.r.t. ``params``."""
        h = _check_input(X, self.d_in)
        cache = []
        for W, b, act in self.layers():
            a = h @ W + b
            out = _activate(act, a)
            cache.append((h, a, out))
            h = out
        grad = np.empty_like(self.params)
        delta = np.asarray(out_err, dtype=np.float64)
        layers = list(self.layers())
        for k in range(len(layers) - 1, -1, -1):
            W, _, act = layers[k]
            h_in, a, out = cache[k]
            delta = delta * _activation_grad(act, a, out)
            w_sl, b_sl, _, _ = self._slices[k]
            grad[w_sl] = (h_in.T @ delta).ravel()
            grad[b_sl] = delta.sum(axis=0)
            if k:
                delta = delta @ W.T
        return grad

    def copy(self) -> "FactorNet":
        return FactorNet(self.sizes, self.activations, self.params.copy())

    def descriptor(self) -> dict:
        return {"kind": "net", "sizes": list(self.sizes),
                "activations": list(self.activations)}


def _check_input(X, d_in):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != d_in:
        raise InvalidInputError(f"input dimension {X.shape[1]} != {d_in}")
    return X


def net_forward(net, x) -> np.ndarray:
    """Evaluate a factor on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("net_forward takes a single input vector")
    return net.forward(x.reshape(1, -1))[0]


def factor_from_descriptor(desc: dict, params=None):
    if desc["kind"] == "linear":
        return LinearFactor(desc["d_in"], desc["d_out"], params)
    if desc["kind"] == "net":
        return FactorNet(desc["sizes"], desc["activations"], params)
    raise ValueError(f"unknown factor kind {desc['kind']!r}")


@dataclass
class FactorTables:
    """Materialized factor values for one sample.

    ``unary`` has shape ``(n_nodes, n_labels)``; ``pairwise`` has shape
    ``(n_edges, idx.dim)``.
    """

    unary: np.ndarray
    pairwise: np.ndarray

    def zero_unary(self) -> "FactorTables":
        return FactorTables(np.zeros_like(self.unary), self.pairwise)

    def zero_pairwise(self) -> "FactorTables":
        return FactorTables(self.unary, np.zeros_like(self.pairwise))


@dataclass
class FactorModel:
    """Compatibility function ``g`` = sum of unary factors + sum of edge factors.

    ``unary`` and ``pairwise`` are ``LinearFactor`` or ``FactorNet`` (or
    ``None`` for an all-zero factor type).  When ``classifier`` is set, unary
    factors see the classifier's class probabilities instead of the raw node
    features (bifurcated training).
    """

    n_labels: int
    idx: EdgeStateIndex
    unary: Optional[object] = None
    pairwise: Optional[object] = None
    classifier: Optional[UnaryClassifier] = None
    regime: str = ""
    meta: dict = field(default_factory=dict)

    def factors(self) -> dict:
        """Trainable factor blocks by name."""
        out = {}
        if self.unary is not None:
            out["unary"] = self.unary
        if self.pairwise is not None:
            out["pairwise"] = self.pairwise
        return out

    def unary_inputs(self, node_features: np.ndarray) -> np.ndarray:
        if self.classifier is not None:
            return self.classifier.predict_proba(node_features)
        return node_features

    def regularizer(self) -> float:
        return 0.5 * sum(float(f.params @ f.params) for f in self.factors().values())

    def get_params(self) -> dict:
        return {k: f.params.copy() for k, f in self.factors().items()}

    def set_params(self, params: dict) -> None:
        for k, f in self.factors().items():
            f.params[...] = params[k]

    def copy(self) -> "FactorModel":
        return FactorModel(
            self.n_labels, self.idx,
            None if self.unary is None else self.unary.copy(),
            None if self.pairwise is None else self.pairwise.copy(),
            None if self.classifier is None else UnaryClassifier(self.classifier.weights.copy()),
            self.regime, dict(self.meta))


def _unary_table(model: FactorModel, node_features: np.ndarray) -> np.ndarray:
    if model.unary is None:
        if model.classifier is not None and model.pairwise is None:
            # classifier-only model scores with its own log-probabilities
            return np.log(model.classifier.predict_proba(node_features))
        return np.zeros((node_features.shape[0], model.n_labels))
    return model.unary.forward(model.unary_inputs(node_features))


def _pairwise_table(model: FactorModel, edge_features: np.ndarray, n_edges: int) -> np.ndarray:
    if model.pairwise is None or n_edges == 0:
        return np.zeros((n_edges, model.idx.dim))
    return model.pairwise.forward(edge_features)


def _check_model(model: FactorModel):
    if model.idx.n_labels != model.n_labels:
        raise InvalidInputError("edge index and model disagree on label count")
    if model.unary is not None and model.unary.d_out != model.n_labels:
        raise InvalidInputError("unary factor output size must equal the label count")
    if model.pairwise is not None and model.pairwise.d_out != model.idx.dim:
        raise InvalidInputError("pairwise factor output size must equal the edge state count")


def build_factor_tables(sample: FactorGraphSample, model: FactorModel) -> FactorTables:
    """Factor values such that ``g(x, y) = sum unary[i, y_i] + sum pairwise[e, idx(y_i, y_j)]``."""
    _check_model(model)
    return FactorTables(_unary_table(model, sample.node_features),
                        _pairwise_table(model, sample.edge_features, sample.n_edges))


class SampleBatch:
    """Concatenated features of many samples, for batched factor evaluation.

    Samples are immutable, so a batch can be built once and reused for every
    parameter setting.  Both training and objective evaluation go through
    :meth:`tables` so that their results agree bit for bit.
    """

    def __init__(self, samples: Sequence[FactorGraphSample]):
        self.samples = list(samples)
        n_nodes = [s.n_nodes for s in self.samples]
        n_edges = [s.n_edges for s in self.samples]
        self.node_offsets = np.concatenate([[0], np.cumsum(n_nodes)]).astype(np.intp)
        self.edge_offsets = np.concatenate([[0], np.cumsum(n_edges)]).astype(np.intp)
        self.node_features = np.concatenate([s.node_features for s in self.samples])
        with_edges = [s.edge_features for s in self.samples if s.n_edges]
        self.edge_features = (np.concatenate(with_edges) if with_edges
                              else np.zeros((0, 0)))

    def __len__(self):
        return len(self.samples)

    def node_slice(self, n) -> slice:
        return slice(self.node_offsets[n], self.node_offsets[n + 1])

    def edge_slice(self, n) -> slice:
        return slice(self.edge_offsets[n], self.edge_offsets[n + 1])

    def tables(self, model: FactorModel) -> list:
        _check_model(model)
        U = _unary_table(model, self.node_features)
        P = _pairwise_table(model, self.edge_features, int(self.edge_offsets[-1]))
        return [FactorTables(U[self.node_slice(n)], P[self.edge_slice(n)])
                for n in range(len(self.samples))]


def compatibility(sample: FactorGraphSample, y, tables: FactorTables,
                  idx: EdgeStateIndex) -> float:
    """``g(x, y)`` read off precomputed factor tables."""
    y = check_labeling(sample, y, idx.n_labels)
    if tables.unary.shape != (sample.n_nodes, idx.n_labels):
        raise InvalidInputError("unary table shape does not match the sample")
    if tables.pairwise.shape != (sample.n_edges, idx.dim):
        raise InvalidInputError("pairwise table shape does not match the sample")
    total = tables.unary[np.arange(sample.n_nodes), y].sum()
    if sample.n_edges:
        e = sample.edges
        total += tables.pairwise[np.arange(sample.n_edges), idx.table[y[e[:, 0]], y[e[:, 1]]]].sum()
    return float(total)


def selection_error(n_out: int, pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    """Output error matrix: +1 at each ``pos`` unit, -1 at each ``neg`` unit."""
    err = np.zeros((len(pos), n_out))
    rows = np.arange(len(pos))
    np.add.at(err, (rows, pos), 1.0)
    np.add.at(err, (rows, neg), -1.0)
    return err


def net_param_gradient(factor, sample: FactorGraphSample, y_pos, y_neg,
                       idx: Optional[EdgeStateIndex] = None,
                       inputs: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient of ``sum_k factor(x_k)[sel_pos(k)] - sum_k factor(x_k)[sel_neg(k)]``.

    With ``idx=None`` the factor is a unary factor evaluated on node
    features and units are selected by node label.  Otherwise it is an
    interaction factor on edge features selected by ``idx(y_i, y_j)``.
    ``inputs`` overrides the node features (e.g. classifier outputs).
    """
    if idx is None:
        n_labels = factor.d_out
        y_pos = check_labeling(sample, y_pos, n_labels)
        y_neg = check_labeling(sample, y_neg, n_labels)
        X = sample.node_features if inputs is None else inputs
        err = selection_error(n_labels, y_pos, y_neg)
    else:
        y_pos = check_labeling(sample, y_pos, idx.n_labels)
        y_neg = check_labeling(sample, y_neg, idx.n_labels)
        if factor.d_out != idx.dim:
            raise InvalidInputError("interaction factor output size != edge state count")
        if sample.n_edges == 0:
            return np.zeros(factor.n_params)
        e = sample.edges
        X = sample.edge_features if inputs is None else inputs
        err = selection_error(idx.dim, idx.table[y_pos[e[:, 0]], y_pos[e[:, 1]]],
                              idx.table[y_neg[e[:, 0]], y_neg[e[:, 1]]])
    return factor.backward(X, err)


@dataclass
class Architecture:
    """Which parameterization each factor type uses.

    ``unary`` / ``pairwise`` are ``'linear'``, ``'net'`` or ``None``.
    ``unary_in`` overrides the unary input width (the label count when a
    classifier feeds the unary factors).
    """

    n_labels: int
    d_u: int
    d_i: int
    unary: Optional[str] = "net"
    pairwise: Optional[str] = "net"
    unary_hidden: tuple = (32,)
    pairwise_hidden: tuple = (32,)
    activation: str = "tanh"
    edge_mode: str = "symmetric"
    unary_in: Optional[int] = None


def glorot_net(sizes, activation, rng) -> FactorNet:
    """Hidden layers uniform in +-sqrt(6 / (fan_in + fan_out)); biases and output layer zero."""
    acts = [activation] * (len(sizes) - 2) + ["identity"]
    net = FactorNet(sizes, acts)
    layers = list(net.layers())
    for W, _, _ in layers[:-1]:
        limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return net


def init_model(arch: Architecture, seed: int = 0) -> FactorModel:
    """Linear weights at zero; nets Glorot-initialized with a zero output layer."""
    for w in tuple(arch.unary_hidden) + tuple(arch.pairwise_hidden):
        if int(w) <= 0:
            raise ValueError(f"hidden layer widths must be positive, got {w}")
    if arch.activation not in ("tanh", "relu"):
        raise ValueError(f"hidden activation must be tanh or relu, got {arch.activation!r}")
    idx = EdgeStateIndex(arch.n_labels, arch.edge_mode)
    unary_rng, pair_rng = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(seed).spawn(2))
    d_unary = arch.unary_in if arch.unary_in is not None else arch.d_u

    def make(kind, d_in, d_out, hidden, rng):
        if kind is None:
            return None
        if kind == "linear":
            return LinearFactor(d_in, d_out)
        if kind == "net":
            return glorot_net([d_in, *hidden, d_out], arch.activation, rng)
        raise ValueError(f"unknown factor kind {kind!r}")

    return FactorModel(
        arch.n_labels, idx,
        make(arch.unary, d_unary, arch.n_labels, arch.unary_hidden, unary_rng),
        make(arch.pairwise, arch.d_i, idx.dim, arch.pairwise_hidden, pair_rng))
