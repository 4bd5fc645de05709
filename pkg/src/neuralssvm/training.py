"""Training regimes for structural SVMs with linear and neural factors.

``unary``
    logistic-regression classifier only;
``bif_lin``
    classifier trained upfront, then a linear SSVM on its outputs;
``bif_nrl``
    classifier trained upfront, then neural unary factors on its outputs
    and neural interaction factors;
``int_lin``
    neural unary factors and linear interaction factors trained together;
``int_nrl``
    neural unary and neural interaction factors trained together.

All SSVM regimes share one subgradient descent loop with momentum, the
``mu / (t0 + t)`` learning rate curve and best-so-far memoization of the
objective.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .classifier import UnaryClassifier, fit_logistic
from .factors import Architecture, FactorModel, LinearFactor, SampleBatch, init_model
from .graph_model import Dataset, EdgeStateIndex
from .inference import DEFAULT_SWEEPS, ENUM_CAP, predict_labeling
from .objective import ClassWeights, batch_gradient, evaluate

REGIMES = ("unary", "bif_lin", "bif_nrl", "int_lin", "int_nrl")
TRACE_COLUMNS = ("iteration", "objective", "best_objective", "mean_hinge", "seconds")


@dataclass
class TrainConfig:
    iterations: int = 300
    lam: float = 1.0
    mu: float = 0.1
    t0: float = 10.0
    momentum: float = 0.9
    class_weights: str = "class_balanced"
    unary_hidden: tuple = (32,)
    pairwise_hidden: tuple = (32,)
    activation: str = "tanh"
    edge_mode: str = "symmetric"
    backend: str = "auto"
    max_sweeps: int = DEFAULT_SWEEPS
    enum_cap: int = ENUM_CAP
    seed: int = 0
    batch_mode: str = "full"
    unary_rate_scale: float = 1.0
    pairwise_rate_scale: float = 1.0
    clf_epochs: int = 500
    clf_rate: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.lam <= 0 or self.mu <= 0 or self.t0 < 0:
            raise ValueError("need lam > 0, mu > 0 and t0 >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_mode not in ("full", "per_sample"):
            raise ValueError(f"unknown batch mode {self.batch_mode!r}")
        self.unary_hidden = tuple(int(w) for w in self.unary_hidden)
        self.pairwise_hidden = tuple(int(w) for w in self.pairwise_hidden)

    def rate(self, t: int) -> float:
        return self.mu / (self.t0 + t)


@dataclass
class TrainState:
    """Current and best-so-far parameters of a run."""

    model: FactorModel
    velocity: dict
    weights: ClassWeights
    best_objective: float = np.inf
    best_params: Optional[dict] = None
    iteration: int = 0
    trace: list = field(default_factory=list)

    @property
    def best_model(self) -> FactorModel:
        m = self.model.copy()
        if self.best_params is not None:
            m.set_params(self.best_params)
        return m

    def record(self, objective: float, mean_hinge: float, started: float):
        """Best-so-far memoization of the objective at the current parameters."""
        if objective < self.best_objective or self.best_params is None:
            self.best_objective = objective
            self.best_params = self.model.get_params()
        self.trace.append((self.iteration, objective, self.best_objective, mean_hinge,
                           time.perf_counter() - started))


def _apply_update(state: TrainState, grads: dict, rate: float, cfg: TrainConfig):
    scale = {"unary": cfg.unary_rate_scale, "pairwise": cfg.pairwise_rate_scale}
    for name, factor in state.model.factors().items():
        v = state.velocity[name]
        v *= cfg.momentum
        v -= (rate * scale[name]) * grads[name]
        factor.params += v


def subgradient_descent(dataset: Dataset, model: FactorModel, cfg: TrainConfig,
                        weights: Optional[ClassWeights] = None,
                        callback=None) -> TrainState:
    """Integrated SSVM subgradient descent on ``model`` (modified in place).

    Each iteration runs loss-augmented inference for every sample, records
    the objective at the current parameters, and takes a momentum step
    along the averaged gradients.  With ``batch_mode='per_sample'`` the step
    is taken after every sample instead.
    """
    if weights is None:
        weights = ClassWeights.from_mode(cfg.class_weights, dataset.ground_truths,
                                         dataset.n_labels)
    batch = SampleBatch(dataset.samples)
    state = TrainState(model, {k: np.zeros_like(f.params) for k, f in model.factors().items()},
                       weights)
    started = time.perf_counter()
    infer_args = (cfg.backend, cfg.max_sweeps, cfg.enum_cap)
    for t in range(1, cfg.iterations + 1):
        state.iteration = t
        report, _ = evaluate(batch, model, cfg.lam, weights, *infer_args)
        state.record(report.total, report.mean_hinge, started)
        rate = cfg.rate(t)
        if cfg.batch_mode == "full":
            grads = batch_gradient(batch, model, report.predictions, report.active, cfg.lam)
            _apply_update(state, grads, rate, cfg)
        else:
            for n in range(len(batch)):
                one = SampleBatch([batch.samples[n]])
                rep, _ = evaluate(one, model, cfg.lam, weights, *infer_args)
                grads = batch_gradient(one, model, rep.predictions, rep.active, cfg.lam)
                _apply_update(state, grads, rate, cfg)
        if callback is not None:
            callback(state)
    return state


def train_unary_classifier(dataset: Dataset, epochs: int = 500, rate: float = 0.5,
                           seed: int = 0, trace: Optional[list] = None) -> UnaryClassifier:
    """Logistic regression on all labeled nodes of the dataset.

    Optimization starts from zero weights and is deterministic; ``seed`` is
    accepted for interface symmetry with the other trainers.
    """
    del seed
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    X = np.concatenate([s.node_features for s in dataset.samples])
    y = np.concatenate([s.ground_truth for s in dataset.samples])
    return fit_logistic(X, y, dataset.n_labels, epochs, rate, trace)


def _arch(dataset: Dataset, cfg: TrainConfig, unary, pairwise, unary_in=None) -> Architecture:
    return Architecture(dataset.n_labels, dataset.d_u, dataset.d_i, unary, pairwise,
                        cfg.unary_hidden, cfg.pairwise_hidden, cfg.activation,
                        cfg.edge_mode, unary_in)


def train_bifurcated_linear(dataset: Dataset, clf: UnaryClassifier, cfg: TrainConfig,
                            weights: Optional[ClassWeights] = None) -> TrainState:
    """Linear SSVM whose unary features are the classifier's class probabilities."""
    if clf.n_labels != dataset.n_labels or clf.d_in != dataset.d_u:
        raise ValueError("classifier does not match the dataset dimensions")
    idx = EdgeStateIndex(dataset.n_labels, cfg.edge_mode)
    model = FactorModel(dataset.n_labels, idx,
                        LinearFactor(dataset.n_labels, dataset.n_labels),
                        LinearFactor(dataset.d_i, idx.dim), classifier=clf, regime="bif_lin")
    return subgradient_descent(dataset, model, cfg, weights)


def train_alg1(dataset: Dataset, cfg: TrainConfig,
               weights: Optional[ClassWeights] = None) -> TrainState:
    """Neural unary factors with linear interaction factors, trained jointly."""
    model = init_model(_arch(dataset, cfg, "net", "linear"), cfg.seed)
    model.regime = "int_lin"
    return subgradient_descent(dataset, model, cfg, weights)


def train_alg2(dataset: Dataset, cfg: TrainConfig, weights: Optional[ClassWeights] = None,
               classifier: Optional[UnaryClassifier] = None) -> TrainState:
    """Neural unary and neural interaction factors, trained jointly.

    With a ``classifier`` the unary net reads its (frozen) class
    probabilities instead of the raw node features.
    """
    unary_in = None if classifier is None else dataset.n_labels
    model = init_model(_arch(dataset, cfg, "net", "net", unary_in), cfg.seed)
    model.classifier = classifier
    model.regime = "int_nrl" if classifier is None else "bif_nrl"
    return subgradient_descent(dataset, model, cfg, weights)


def train_regime(dataset: Dataset, regime: str, cfg: TrainConfig):
    """Train one named regime; returns ``(best_model, state_or_None)``."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if regime in ("unary", "bif_lin", "bif_nrl"):
        clf = train_unary_classifier(dataset, cfg.clf_epochs, cfg.clf_rate, cfg.seed)
    if regime == "unary":
        idx = EdgeStateIndex(dataset.n_labels, cfg.edge_mode)
        return FactorModel(dataset.n_labels, idx, classifier=clf, regime="unary"), None
    if regime == "bif_lin":
        state = train_bifurcated_linear(dataset, clf, cfg)
    elif regime == "bif_nrl":
        state = train_alg2(dataset, cfg, classifier=clf)
    elif regime == "int_lin":
        state = train_alg1(dataset, cfg)
    else:
        state = train_alg2(dataset, cfg)
    best = state.best_model
    best.meta.update(best_objective=state.best_objective, iterations=state.iteration)
    return best, state


def predict(dataset, model: FactorModel, backend: str = "auto",
            max_sweeps: int = DEFAULT_SWEEPS, enum_cap: int = ENUM_CAP) -> list:
    """Plain MAP inference per sample."""
    samples = dataset.samples if hasattr(dataset, "samples") else list(dataset)
    tables = SampleBatch(samples).tables(model) if samples else []
    return [predict_labeling(s, t, model.idx, backend, max_sweeps, enum_cap)
            for s, t in zip(samples, tables)]


def ablate_predict(dataset, model: FactorModel, keep: str = "both", backend: str = "auto",
                   max_sweeps: int = DEFAULT_SWEEPS, enum_cap: int = ENUM_CAP) -> list:
    """Inference with the excluded factor type set to a zero factor value."""
    if keep not in ("both", "unary_only", "interaction_only"):
        raise ValueError(f"unknown ablation {keep!r}")
    samples = dataset.samples if hasattr(dataset, "samples") else list(dataset)
    tables = SampleBatch(samples).tables(model) if samples else []
    if keep == "unary_only":
        tables = [t.zero_pairwise() for t in tables]
    elif keep == "interaction_only":
        tables = [t.zero_unary() for t in tables]
    return [predict_labeling(s, t, model.idx, backend, max_sweeps, enum_cap)
            for s, t in zip(samples, tables)]


def with_config(cfg: TrainConfig, **changes) -> TrainConfig:
    return replace(cfg, **changes)
