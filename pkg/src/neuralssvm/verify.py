"""Self-checks behind the ``gradcheck`` and ``infercheck`` commands.

Gradients from back-propagation are compared with central finite
differences computed by an independent batched forward pass.  Inference
is compared with exhaustive enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .factors import FactorModel, FactorNet, glorot_net, net_param_gradient
from .graph_model import EdgeStateIndex, FactorGraphSample
from .inference import EnergyInstance, alpha_expansion, expansion_move, infer_exact
from .objective import gradient_neural

FD_STEP = 1e-5
GRAD_TOLERANCE = 1e-5
# relu pre-activations closer than this to 0 make the finite difference straddle a kink
KINK_MARGIN = 1e-3


def _batched_forward(net: FactorNet, param_rows: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Outputs for many parameter vectors at once: (P, n_params) -> (P, n, d_out)."""
    P = param_rows.shape[0]
    h = np.broadcast_to(X, (P,) + X.shape)
    for (w_sl, b_sl, n_in, n_out), act in zip(net._slices, net.activations):
        W = param_rows[:, w_sl].reshape(P, n_in, n_out)
        h = h @ W + param_rows[:, b_sl][:, None, :]
        if act == "tanh":
            h = np.tanh(h)
        elif act == "relu":
            h = np.maximum(h, 0.0)
    return h


def central_differences(fn_rows, theta: np.ndarray, step: float = FD_STEP,
                        chunk: int = 256) -> np.ndarray:
    """Central differences of a scalar function evaluated on stacked parameter rows."""
    n = theta.size
    grad = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        k = np.arange(lo, hi)
        rows = np.repeat(theta[None, :], 2 * (hi - lo), axis=0)
        rows[np.arange(hi - lo), k] += step
        rows[np.arange(hi - lo) + (hi - lo), k] -= step
        vals = fn_rows(rows)
        grad[lo:hi] = (vals[: hi - lo] - vals[hi - lo:]) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def _min_relu_margin(net: FactorNet, X: np.ndarray) -> float:
    h = X
    margin = np.inf
    for W, b, act in net.layers():
        a = h @ W + b
        if act == "relu" and a.size:
            margin = min(margin, float(np.abs(a).min()))
        h = np.tanh(a) if act == "tanh" else np.maximum(a, 0.0) if act == "relu" else a
    return margin


def random_sample(rng, n_nodes: int, d_u: int, d_i: int, n_labels: int,
                  edge_prob: float = 0.5) -> FactorGraphSample:
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)
             if rng.random() < edge_prob]
    return FactorGraphSample(rng.normal(size=(n_nodes, d_u)),
                             np.array(pairs, dtype=np.intp).reshape(-1, 2),
                             rng.normal(size=(len(pairs), d_i)),
                             rng.integers(n_labels, size=n_nodes))


def random_net(rng, d_in: int, d_out: int, hidden=None, activation=None,
               max_layers: int = 3, max_width: int = 64) -> FactorNet:
    """Random architecture with Glorot hidden layers and a random (nonzero) output layer."""
    if hidden is None:
        hidden = rng.integers(1, max_width + 1, size=rng.integers(1, max_layers + 1)).tolist()
    if activation is None:
        activation = ("tanh", "relu")[rng.integers(2)]
    net = glorot_net([d_in, *hidden, d_out], activation, rng)
    W, b, _ = list(net.layers())[-1]
    W[...] = rng.normal(scale=0.5, size=W.shape)
    b[...] = rng.normal(scale=0.5, size=b.shape)
    net.params += 0.05 * rng.normal(size=net.params.shape) * (net.params == 0)
    return net


@dataclass
class GradCheckReport:
    trials: int
    max_rel_error: float = 0.0
    errors: list = field(default_factory=list)
    resampled: int = 0
    tolerance: float = GRAD_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(trials: int = 100, seed: int = 0, hidden=None, activation=None,
                   max_layers: int = 3, max_width: int = 64, n_labels: int = 3,
                   lam: float = 1.0) -> GradCheckReport:
    """Back-propagated gradients vs central differences on random nets and samples.

    Each trial checks the factor-sum gradient of a unary net, of an
    interaction net, and the per-sample objective gradient with the
    loss-augmented labeling held fixed.  Samples whose relu pre-activations
    (or hinge value) lie within ``KINK_MARGIN`` of a kink are redrawn.
    """
    if hidden is not None and any(int(w) <= 0 for w in hidden):
        raise ValueError(f"hidden layer widths must be positive, got {list(hidden)}")
    rng = np.random.default_rng(seed)
    report = GradCheckReport(trials)
    for _ in range(trials):
        idx = EdgeStateIndex(n_labels, ("full", "symmetric")[rng.integers(2)])
        d_u, d_i = int(rng.integers(1, 8)), int(rng.integers(1, 6))
        unary = random_net(rng, d_u, n_labels, hidden, activation, max_layers, max_width)
        pair = random_net(rng, d_i, idx.dim, hidden, activation, max_layers, max_width)
        model = FactorModel(n_labels, idx, unary, pair)
        for _attempt in range(100):
            sample = random_sample(rng, int(rng.integers(2, 7)), d_u, d_i, n_labels)
            z = rng.integers(n_labels, size=sample.n_nodes)
            hinge = _frozen_hinge(model, sample, z, np.zeros_like(unary.params),
                                  np.zeros_like(pair.params))
            if (_min_relu_margin(unary, sample.node_features) > KINK_MARGIN
                    and _min_relu_margin(pair, sample.edge_features) > KINK_MARGIN
                    and abs(hinge) > KINK_MARGIN):
                break
            report.resampled += 1
        y = sample.ground_truth
        errs = []

        # factor sums
        e = sample.edges
        for net, X, pos, neg, kind in (
                (unary, sample.node_features, z, y, None),
                (pair, sample.edge_features, idx.table[z[e[:, 0]], z[e[:, 1]]],
                 idx.table[y[e[:, 0]], y[e[:, 1]]], idx)):
            analytic = net_param_gradient(net, sample, z, y, idx=kind)
            rows = np.arange(X.shape[0])

            def f(param_rows, net=net, X=X, pos=pos, neg=neg, rows=rows):
                out = _batched_forward(net, param_rows, X)
                return out[:, rows, pos].sum(axis=1) - out[:, rows, neg].sum(axis=1)

            errs.append(relative_error(analytic, central_differences(f, net.params)))

        # objective with z frozen
        analytic = gradient_neural(sample, z, y, model, lam)
        for name, net in (("unary", unary), ("pairwise", pair)):
            def obj(param_rows, name=name):
                du = param_rows if name == "unary" else None
                dp = param_rows if name == "pairwise" else None
                return _frozen_objective(model, sample, z, lam, du, dp)

            errs.append(relative_error(analytic[name], central_differences(obj, net.params)))
        report.errors.append(max(errs))
        report.max_rel_error = max(report.max_rel_error, max(errs))
    return report


def _frozen_hinge(model, sample, z, unary_rows, pair_rows):
    return _frozen_terms(model, sample, z, unary_rows[None] + model.unary.params,
                         pair_rows[None] + model.pairwise.params)[0][0]


def _frozen_terms(model, sample, z, unary_rows, pair_rows):
    """Hinge at fixed z and the squared-norm regularizer for stacked parameter rows."""
    idx = model.idx
    y = sample.ground_truth
    n = np.arange(sample.n_nodes)
    U = _batched_forward(model.unary, unary_rows, sample.node_features)
    g_diff = U[:, n, z].sum(axis=1) - U[:, n, y].sum(axis=1)
    e = sample.edges
    if sample.n_edges:
        P = _batched_forward(model.pairwise, pair_rows, sample.edge_features)
        m = np.arange(sample.n_edges)
        g_diff = g_diff + (P[:, m, idx.table[z[e[:, 0]], z[e[:, 1]]]].sum(axis=1)
                           - P[:, m, idx.table[y[e[:, 0]], y[e[:, 1]]]].sum(axis=1))
    delta = float(np.sum(y != z))
    reg = 0.5 * (np.sum(unary_rows ** 2, axis=1) + np.sum(pair_rows ** 2, axis=1))
    return delta + g_diff, reg


def _frozen_objective(model, sample, z, lam, unary_rows=None, pair_rows=None):
    P = (unary_rows if unary_rows is not None else pair_rows).shape[0]
    if unary_rows is None:
        unary_rows = np.repeat(model.unary.params[None], P, axis=0)
    if pair_rows is None:
        pair_rows = np.repeat(model.pairwise.params[None], P, axis=0)
    hinge, reg = _frozen_terms(model, sample, z, unary_rows, pair_rows)
    return reg + lam * np.maximum(hinge, 0.0)


# ---------------------------------------------------------------- inference


def random_graph(rng, n_nodes: int, edge_prob: float = 0.4) -> np.ndarray:
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)
             if rng.random() < edge_prob]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def random_submodular_binary(rng, n_nodes: int) -> EnergyInstance:
    edges = random_graph(rng, n_nodes)
    P = rng.uniform(-1, 1, size=(len(edges), 2, 2))
    excess = P[:, 0, 0] + P[:, 1, 1] - P[:, 0, 1] - P[:, 1, 0]
    fix = np.maximum(excess, 0.0) / 2 + rng.uniform(0, 0.5, size=len(edges))
    P[:, 0, 1] += fix
    P[:, 1, 0] += fix
    return EnergyInstance(rng.uniform(-1, 1, size=(n_nodes, 2)), P, edges)


def random_potts(rng, n_nodes: int, n_labels: int = 3) -> EnergyInstance:
    edges = random_graph(rng, n_nodes)
    w = rng.uniform(0, 1, size=len(edges))
    P = w[:, None, None] * (1.0 - np.eye(n_labels))[None]
    return EnergyInstance(rng.uniform(0, 1, size=(n_nodes, n_labels)), P, edges)


def random_separable(rng, n_nodes: int, n_labels: int) -> EnergyInstance:
    edges = random_graph(rng, n_nodes)
    return EnergyInstance(rng.normal(size=(n_nodes, n_labels)),
                          np.zeros((len(edges), n_labels, n_labels)), edges)


def improving_move(instance: EnergyInstance, labels) -> Optional[int]:
    """First label alpha whose expansion move strictly lowers the energy, else None."""
    cur = instance.energy(labels)
    for alpha in range(instance.n_labels):
        if instance.energy(expansion_move(instance, labels, alpha)) < cur:
            return alpha
    return None


@dataclass
class InferCheckReport:
    trials: int
    binary_exact: int = 0
    separable_exact: int = 0
    multilabel_local_optimal: int = 0
    monotone: int = 0
    gaps: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def mean_gap(self) -> float:
        return float(np.mean(self.gaps)) if self.gaps else 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def inference_check(trials: int = 200, seed: int = 0, max_nodes: int = 10) -> InferCheckReport:
    """Alpha-expansion against enumeration on three random batches of ``trials`` instances.

    * binary submodular: energies must be equal;
    * separable (zero pairwise, 3 labels): energies must be equal;
    * 3-label Potts: monotone energy trace, no improving expansion move at
      the result; the relative gap to the optimum is recorded.
    """
    rng = np.random.default_rng(seed)
    rep = InferCheckReport(trials)
    for t in range(trials):
        inst = random_submodular_binary(rng, int(rng.integers(2, max_nodes + 1)))
        init = rng.integers(2, size=inst.n_nodes)
        e_ae = inst.energy(alpha_expansion(inst, init))
        e_opt = inst.energy(infer_exact(inst))
        if e_ae == e_opt:
            rep.binary_exact += 1
        else:
            rep.failures.append(f"binary instance {t}: {e_ae!r} != optimum {e_opt!r}")

        inst = random_separable(rng, int(rng.integers(2, max_nodes + 1)), 3)
        if inst.energy(alpha_expansion(inst)) == inst.energy(infer_exact(inst)):
            rep.separable_exact += 1
        else:
            rep.failures.append(f"separable instance {t}: not optimal")

        inst = random_potts(rng, int(rng.integers(2, max_nodes + 1)))
        trace = []
        y = alpha_expansion(inst, rng.integers(3, size=inst.n_nodes), max_sweeps=100,
                            trace=trace)
        if all(b < a for a, b in zip(trace, trace[1:])) and trace[-1] == inst.energy(y):
            rep.monotone += 1
        else:
            rep.failures.append(f"potts instance {t}: energy trace not decreasing")
        alpha = improving_move(inst, y)
        if alpha is None:
            rep.multilabel_local_optimal += 1
        else:
            rep.failures.append(f"potts instance {t}: expansion on label {alpha} improves")
        e_opt = inst.energy(infer_exact(inst))
        rep.gaps.append((inst.energy(y) - e_opt) / max(abs(e_opt), 1e-12))
    return rep
