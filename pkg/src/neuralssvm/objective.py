"""Structured loss, hinge term, regularized SSVM objective and its (sub)gradients.

The objective over ``N`` labeled samples is::

    L = R + lam * mean_n max(hinge_n, 0)
    hinge_n = Delta(y^n, z^n) - g(x^n, y^n) + g(x^n, z^n)

with ``z^n`` the loss-augmented prediction and ``R`` half the squared norm
of every trainable parameter block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .factors import (
    FactorModel,
    FactorTables,
    SampleBatch,
    compatibility,
    net_param_gradient,
    selection_error,
)
from .graph_model import (
    EdgeStateIndex,
    FactorGraphSample,
    InvalidInputError,
    check_labeling,
    joint_feature_interaction,
    joint_feature_unary,
)
from .inference import DEFAULT_SWEEPS, ENUM_CAP, loss_augmented_infer

WEIGHT_MODES = ("uniform", "class_balanced", "explicit")


@dataclass(frozen=True)
class ClassWeights:
    """Per-class weights ``eta`` of the Hamming loss."""

    mode: str
    eta: np.ndarray

    def __post_init__(self):
        if self.mode not in WEIGHT_MODES:
            raise ValueError(f"unknown class weight mode {self.mode!r}")
        eta = np.array(self.eta, dtype=np.float64)
        if eta.ndim != 1 or np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise ValueError("class weights must be a finite nonnegative vector")
        if self.mode == "uniform" and not np.all(eta == 1.0):
            raise ValueError("uniform class weights must all be 1")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def uniform(cls, n_labels: int) -> "ClassWeights":
        return cls("uniform", np.ones(n_labels))

    @classmethod
    def explicit(cls, eta) -> "ClassWeights":
        return cls("explicit", eta)

    @classmethod
    def class_balanced(cls, ground_truths: Sequence[np.ndarray], n_labels: int) -> "ClassWeights":
        """Inverse class frequency, scaled so that ``sum_c eta_c * count_c`` is the node count.

        Classes absent from the ground truths get weight 0.
        """
        counts = np.zeros(n_labels)
        for y in ground_truths:
            counts += np.bincount(np.asarray(y, dtype=np.intp), minlength=n_labels)
        present = counts > 0
        eta = np.zeros(n_labels)
        eta[present] = counts.sum() / (present.sum() * counts[present])
        return cls("class_balanced", eta)

    @classmethod
    def from_mode(cls, mode: str, ground_truths, n_labels: int) -> "ClassWeights":
        if mode == "uniform":
            return cls.uniform(n_labels)
        if mode == "class_balanced":
            return cls.class_balanced(ground_truths, n_labels)
        raise ValueError(f"class weight mode {mode!r} needs explicit weights")


def _eta(weights) -> np.ndarray:
    return np.asarray(getattr(weights, "eta", weights), dtype=np.float64)


def structured_loss(y_true, y, weights) -> float:
    """Class-weighted Hamming distance ``sum_i eta(y_true_i) [y_true_i != y_i]``."""
    y_true = np.asarray(y_true, dtype=np.intp)
    y = np.asarray(y, dtype=np.intp)
    if y_true.shape != y.shape:
        raise InvalidInputError(f"labelings differ in length: {y_true.shape} vs {y.shape}")
    eta = _eta(weights)
    return float(np.sum(eta[y_true] * (y_true != y)))


def hinge_term(sample: FactorGraphSample, tables: FactorTables, ground_truth, weights,
               idx: EdgeStateIndex, backend: str = "auto", max_sweeps: int = DEFAULT_SWEEPS,
               enum_cap: int = ENUM_CAP):
    """Return ``(hinge, z)`` with ``z`` the loss-augmented prediction.

    The hinge is not clipped at zero; with approximate inference it is a
    lower bound on the true maximum and may be negative.
    """
    gt = check_labeling(sample, ground_truth, idx.n_labels)
    z = loss_augmented_infer(sample, tables, gt, _eta(weights), idx, backend,
                             max_sweeps, enum_cap)
    value = (structured_loss(gt, z, weights) - compatibility(sample, gt, tables, idx)
             + compatibility(sample, z, tables, idx))
    return value, z


@dataclass
class ObjectiveReport:
    total: float
    regularizer: float
    mean_hinge: float
    hinges: list
    active: list
    lam: float
    backend: str
    predictions: list = field(default_factory=list, repr=False)


def evaluate(batch: SampleBatch, model: FactorModel, lam: float, weights,
             backend: str = "auto", max_sweeps: int = DEFAULT_SWEEPS,
             enum_cap: int = ENUM_CAP):
    """Objective report plus the factor tables it was computed from."""
    tables = batch.tables(model)
    hinges, zs = [], []
    for sample, tab in zip(batch.samples, tables):
        if sample.ground_truth is None:
            raise InvalidInputError("objective needs labeled samples")
        h, z = hinge_term(sample, tab, sample.ground_truth, weights, model.idx,
                          backend, max_sweeps, enum_cap)
        hinges.append(h)
        zs.append(z)
    clipped = np.maximum(np.asarray(hinges, dtype=np.float64), 0.0)
    mean_hinge = float(np.mean(clipped)) if len(clipped) else 0.0
    reg = model.regularizer()
    report = ObjectiveReport(
        total=reg + lam * mean_hinge, regularizer=reg, mean_hinge=mean_hinge,
        hinges=hinges, active=[n for n, h in enumerate(hinges) if h > 0],
        lam=lam, backend=backend, predictions=zs)
    return report, tables


def objective_value(dataset, model: FactorModel, lam: float, weights,
                    backend: str = "auto", max_sweeps: int = DEFAULT_SWEEPS,
                    enum_cap: int = ENUM_CAP) -> ObjectiveReport:
    samples = dataset.samples if hasattr(dataset, "samples") else list(dataset)
    batch = dataset if isinstance(dataset, SampleBatch) else SampleBatch(samples)
    return evaluate(batch, model, lam, weights, backend, max_sweeps, enum_cap)[0]


def batch_gradient(batch: SampleBatch, model: FactorModel, zs, active, lam: float) -> dict:
    """Mean over samples of the per-sample gradients of every trainable block.

    Each sample contributes ``p + lam * (grad g(x, z) - grad g(x, y))`` when
    its hinge is active and ``p`` otherwise, which averages to
    ``p + lam / N * sum_active (...)``.
    """
    N = len(batch)
    is_active = np.zeros(N, dtype=bool)
    is_active[list(active)] = True
    grads = {}
    idx = model.idx
    if model.unary is not None:
        y_pos = np.concatenate(zs)
        y_neg = np.concatenate([s.ground_truth for s in batch.samples])
        err = selection_error(model.n_labels, y_pos, y_neg)
        err[~np.repeat(is_active, np.diff(batch.node_offsets))] = 0.0
        g = model.unary.backward(model.unary_inputs(batch.node_features), err)
        grads["unary"] = model.unary.params + (lam / N) * g
    if model.pairwise is not None:
        n_edges = int(batch.edge_offsets[-1])
        if n_edges:
            pos, neg = [], []
            for s, z in zip(batch.samples, zs):
                e = s.edges
                pos.append(idx.table[z[e[:, 0]], z[e[:, 1]]])
                neg.append(idx.table[s.ground_truth[e[:, 0]], s.ground_truth[e[:, 1]]])
            err = selection_error(idx.dim, np.concatenate(pos), np.concatenate(neg))
            err[~np.repeat(is_active, np.diff(batch.edge_offsets))] = 0.0
            g = model.pairwise.backward(batch.edge_features, err)
        else:
            g = np.zeros(model.pairwise.n_params)
        grads["pairwise"] = model.pairwise.params + (lam / N) * g
    return grads


def subgradient_linear(sample: FactorGraphSample, z, ground_truth, w, lam: float,
                       n_samples: int, idx: EdgeStateIndex, weights=None) -> np.ndarray:
    """Per-sample subgradient contribution for a fully linear model.

    ``w`` is the concatenation ``[w_U; w_I]``.  Returns
    ``(w + lam * (phi(x, z) - phi(x, y))) / n_samples`` when the hinge
    ``Delta(y, z) + <w, phi(x, z) - phi(x, y)>`` is positive, else
    ``w / n_samples``.
    """
    L = idx.n_labels
    w = np.asarray(w, dtype=np.float64)
    d_u = sample.node_features.shape[1]
    d_i = sample.edge_features.shape[1] if sample.edge_features.ndim == 2 else 0
    if w.shape != (d_u * L + d_i * idx.dim,):
        raise InvalidInputError(f"weight vector has shape {w.shape}")
    if weights is None:
        weights = np.ones(L)
    gt = check_labeling(sample, ground_truth, L)
    z = check_labeling(sample, z, L)
    dphi = np.concatenate([
        joint_feature_unary(sample, z, L) - joint_feature_unary(sample, gt, L),
        joint_feature_interaction(sample, z, L, idx) - joint_feature_interaction(sample, gt, L, idx),
    ])
    hinge = structured_loss(gt, z, weights) + float(w @ dphi)
    if hinge > 0:
        return (w + lam * dphi) / n_samples
    return w / n_samples


def gradient_neural(sample: FactorGraphSample, z, ground_truth, model: FactorModel,
                    lam: float, weights=None, tables: Optional[FactorTables] = None) -> dict:
    """Per-sample gradient of every trainable block with ``z`` held fixed.

    ``{block: p + lam * (grad g(x, z) - grad g(x, y))}`` when the hinge at
    ``z`` is positive, else ``{block: p}``.
    """
    idx = model.idx
    gt = check_labeling(sample, ground_truth, idx.n_labels)
    z = check_labeling(sample, z, idx.n_labels)
    if weights is None:
        weights = np.ones(idx.n_labels)
    if tables is None:
        tables = SampleBatch([sample]).tables(model)[0]
    hinge = (structured_loss(gt, z, weights) - compatibility(sample, gt, tables, idx)
             + compatibility(sample, z, tables, idx))
    out = {}
    for name, factor in model.factors().items():
        if hinge > 0:
            if name == "unary":
                g = net_param_gradient(factor, sample, z, gt,
                                       inputs=model.unary_inputs(sample.node_features))
            else:
                g = net_param_gradient(factor, sample, z, gt, idx=idx)
            out[name] = factor.params + lam * g
        else:
            out[name] = factor.params.copy()
    return out
