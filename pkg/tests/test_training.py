import numpy as np
import pytest

from neuralssvm.classifier import UnaryClassifier
from neuralssvm.factors import (
    Architecture,
    FactorModel,
    FactorNet,
    LinearFactor,
    SampleBatch,
    build_factor_tables,
    init_model,
)
from neuralssvm.graph_model import Dataset, EdgeStateIndex, FactorGraphSample
from neuralssvm.inference import EnergyInstance, infer_exact
from neuralssvm.metrics import evaluate_predictions
from neuralssvm.objective import ClassWeights, evaluate, objective_value, subgradient_linear
from neuralssvm.synthetic import SynthConfig, generate_synthetic, split
from neuralssvm.training import (
    TrainConfig,
    TrainState,
    _apply_update,
    ablate_predict,
    predict,
    subgradient_descent,
    train_alg1,
    train_alg2,
    train_bifurcated_linear,
    train_regime,
    train_unary_classifier,
)

from conftest import make_sample


def small_dataset(rng, n=6, L=3, d_u=3, d_i=2, nodes=5):
    return Dataset(L, d_u, d_i, [make_sample(rng, nodes, d_u, d_i, L, 0.6) for _ in range(n)])


@pytest.fixture(scope="module")
def grid_data():
    ds = generate_synthetic(SynthConfig(width=5, height=5, n_samples=14, seed=3))
    return split(ds, 10)


class TestTrainConfig:
    @pytest.mark.parametrize("bad", [dict(iterations=0), dict(lam=0), dict(mu=0), dict(t0=-1),
                                     dict(momentum=1.0), dict(batch_mode="mini")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_rate_curve(self):
        cfg = TrainConfig(mu=2.0, t0=10)
        assert cfg.rate(1) == 2.0 / 11 and cfg.rate(90) == 2.0 / 100


class TestUnaryClassifier:
    def test_separable(self, rng):
        X = np.concatenate([rng.normal(-3, 0.5, size=(20, 2)), rng.normal(3, 0.5, size=(20, 2))])
        y = np.repeat([0, 1], 20)
        ds = Dataset(2, 2, 1, [FactorGraphSample(X, np.zeros((0, 2)), np.zeros((0, 1)), y)])
        clf = train_unary_classifier(ds, 200, 0.5)
        assert np.mean(clf.predict(X) == y) == 1.0

    def test_zero_epochs_uniform(self, rng):
        ds = small_dataset(rng)
        clf = train_unary_classifier(ds, 0)
        np.testing.assert_allclose(clf.predict_proba(rng.normal(size=(4, 3))), 1 / 3)

    def test_cross_entropy_non_increasing(self, rng):
        trace = []
        train_unary_classifier(small_dataset(rng, 10), 100, 0.5, trace=trace)
        assert len(trace) == 101
        assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))

    def test_empty(self):
        with pytest.raises(ValueError):
            train_unary_classifier(Dataset(2, 1, 1, []))


class TestBifurcatedLinear:
    def test_one_step_matches_independent_subgradient(self, rng):
        ds = small_dataset(rng)
        clf = UnaryClassifier(rng.normal(size=(4, 3)))
        cfg = TrainConfig(iterations=1, momentum=0.0, mu=0.5, lam=1.7, backend="exact",
                          class_weights="uniform")
        state = train_bifurcated_linear(ds, clf, cfg)
        # independent recomputation on classifier-output features from w = 0
        idx = EdgeStateIndex(3)
        w = np.zeros(3 * 3 + 2 * idx.dim)
        eta = np.ones(3)
        total = np.zeros_like(w)
        for s in ds.samples:
            s2 = s.with_node_features(clf.predict_proba(s.node_features))
            m = FactorModel(3, idx, LinearFactor(3, 3, w[:9]), LinearFactor(2, idx.dim, w[9:]))
            z = infer_exact(EnergyInstance.from_tables(
                s2, build_factor_tables(s2, m), idx,
                np.where(np.arange(3)[None] != s.ground_truth[:, None], 1.0, 0.0)))
            total += subgradient_linear(s2, z, s.ground_truth, w, cfg.lam, len(ds), idx, eta)
        expected = w - cfg.rate(1) * total
        got = np.concatenate([state.model.unary.params, state.model.pairwise.params])
        np.testing.assert_allclose(got, expected, atol=1e-14)

    def test_tiny_lambda_stays_near_zero(self, rng):
        ds = small_dataset(rng)
        clf = train_unary_classifier(ds, 50)
        state = train_bifurcated_linear(ds, clf, TrainConfig(iterations=30, lam=1e-8))
        for p in state.best_model.get_params().values():
            assert np.abs(p).max() < 1e-6
        assert state.best_objective == pytest.approx(state.best_model.regularizer(), abs=1e-6)

    def test_informative_classifier_no_edges(self, rng):
        samples = []
        for _ in range(6):
            y = rng.integers(3, size=5)
            X = np.eye(3)[y] * 4 + 0.1 * rng.normal(size=(5, 3))
            samples.append(FactorGraphSample(X, np.zeros((0, 2)), np.zeros((0, 2)), y))
        ds = Dataset(3, 3, 2, samples)
        clf = train_unary_classifier(ds, 300)
        state = train_bifurcated_linear(ds, clf, TrainConfig(iterations=60, lam=10.0))
        preds = predict(ds, state.best_model)
        assert all(np.array_equal(p, s.ground_truth) for p, s in zip(preds, ds.samples))

    def test_dimension_check(self, rng):
        with pytest.raises(ValueError):
            train_bifurcated_linear(small_dataset(rng), UnaryClassifier(np.zeros((3, 3))),
                                    TrainConfig(iterations=1))


class TestIntegrated:
    def test_single_node_first_step_signs(self):
        s = FactorGraphSample([[1.0, -0.5]], np.zeros((0, 2)), np.zeros((0, 1)), [1])
        ds = Dataset(2, 2, 1, [s])
        cfg = TrainConfig(iterations=1, momentum=0.0, class_weights="uniform",
                          backend="exact", unary_hidden=(4,))
        model = init_model(Architecture(2, 2, 1, "net", "linear", (4,), (4,)), 0)
        rep, _ = evaluate(SampleBatch([s]), model, cfg.lam, ClassWeights.uniform(2), "exact")
        assert rep.predictions[0].tolist() == [0]
        state = train_alg1(ds, cfg)
        out = state.model.unary.forward(s.node_features)[0]
        assert out[1] > 0 > out[0]

    def test_weight_decay_through_trainer(self):
        # one node, label 0, huge margin: hinge inactive, so the step only shrinks weights
        s = FactorGraphSample([[1.0]], np.zeros((0, 2)), np.zeros((0, 1)), [0])
        ds = Dataset(2, 1, 1, [s])
        idx = EdgeStateIndex(2)
        net = FactorNet([1, 2], ["identity"], np.array([5.0, -5.0, 0.0, 0.0]))
        model = FactorModel(2, idx, net, LinearFactor(1, idx.dim, np.full(idx.dim, 0.3)))
        cfg = TrainConfig(iterations=1, momentum=0.0, backend="exact", class_weights="uniform")
        start = model.get_params()
        state = subgradient_descent(ds, model, cfg)
        assert state.trace[0][3] == 0.0
        for k in start:
            np.testing.assert_allclose(model.get_params()[k], (1 - cfg.rate(1)) * start[k])

    def test_zero_rate_leaves_params(self, rng):
        model = init_model(Architecture(3, 3, 2, "net", "net", (5,), (5,)), 0)
        start = model.get_params()
        state = TrainState(model, {k: np.zeros_like(v) for k, v in start.items()},
                           ClassWeights.uniform(3))
        grads = {k: rng.normal(size=v.shape) for k, v in start.items()}
        for _ in range(3):
            _apply_update(state, grads, 0.0, TrainConfig(momentum=0.0))
        for k in start:
            np.testing.assert_array_equal(model.get_params()[k], start[k])

    def test_first_prediction_maximizes_loss(self, rng):
        ds = small_dataset(rng, 5)
        eta = ClassWeights.class_balanced(ds.ground_truths, 3)
        for arch in (("net", "linear"), ("net", "net"), ("linear", "linear")):
            model = init_model(Architecture(3, 3, 2, *arch, (4,), (4,)), 0)
            rep, _ = evaluate(SampleBatch(ds.samples), model, 1.0, eta, "exact")
            for s, z in zip(ds.samples, rep.predictions):
                assert np.all(z != s.ground_truth)
                # ties in Delta resolved lexicographically: lowest wrong label
                assert z.tolist() == [0 if y != 0 else 1 for y in s.ground_truth]

    def test_affine_unary_net_matches_linear_first_iteration(self, rng):
        ds = small_dataset(rng, 5)
        eta = ClassWeights.uniform(3)
        lin = init_model(Architecture(3, 3, 2, "linear", "linear"), 0)
        aff = init_model(Architecture(3, 3, 2, "net", "linear", (), ()), 0)
        assert isinstance(aff.unary, FactorNet) and aff.unary.activations == ["identity"]
        za = evaluate(SampleBatch(ds.samples), lin, 1.0, eta, "exact")[0].predictions
        zb = evaluate(SampleBatch(ds.samples), aff, 1.0, eta, "exact")[0].predictions
        assert all(np.array_equal(a, b) for a, b in zip(za, zb))

    @pytest.mark.parametrize("batch_mode", ["full", "per_sample"])
    def test_determinism(self, rng, batch_mode):
        ds = small_dataset(rng, 4)
        cfg = TrainConfig(iterations=5, batch_mode=batch_mode, unary_hidden=(6,),
                          pairwise_hidden=(6,))
        for trainer in (train_alg1, train_alg2):
            a, b = trainer(ds, cfg), trainer(ds, cfg)
            assert [r[:4] for r in a.trace] == [r[:4] for r in b.trace]
            for k, v in a.model.get_params().items():
                assert v.tobytes() == b.model.get_params()[k].tobytes()

    def test_per_sample_mode_moves_after_each_sample(self, rng):
        ds = small_dataset(rng, 3)
        cfg = TrainConfig(iterations=1, batch_mode="per_sample", momentum=0.0)
        full = train_alg2(ds, TrainConfig(iterations=1, momentum=0.0))
        per = train_alg2(ds, cfg)
        assert not np.array_equal(full.model.unary.params, per.model.unary.params)


class TestBestSoFar:
    @pytest.mark.parametrize("regime", ["bif_lin", "bif_nrl", "int_lin", "int_nrl"])
    def test_trace_and_snapshot(self, grid_data, regime):
        train, _ = grid_data
        cfg = TrainConfig(iterations=15, unary_hidden=(8,), pairwise_hidden=(8,))
        best, state = train_regime(train, regime, cfg)
        bests = [r[2] for r in state.trace]
        assert all(b <= a for a, b in zip(bests, bests[1:]))
        assert bests[-1] == min(r[1] for r in state.trace) == state.best_objective
        eta = ClassWeights.from_mode(cfg.class_weights, train.ground_truths, train.n_labels)
        rep = objective_value(train, best, cfg.lam, eta, cfg.backend)
        assert rep.total == state.best_objective
        assert best.regime == regime and best.meta["iterations"] == 15

    def test_unary_regime(self, grid_data):
        train, _ = grid_data
        model, state = train_regime(train, "unary", TrainConfig(clf_epochs=50))
        assert state is None and model.unary is None and model.pairwise is None
        assert model.classifier is not None

    def test_unknown_regime(self, grid_data):
        with pytest.raises(ValueError):
            train_regime(grid_data[0], "crf", TrainConfig())


class TestPredict:
    def test_zero_model(self, rng):
        ds = small_dataset(rng)
        model = init_model(Architecture(3, 3, 2, "net", "net"), 0)
        assert all(not p.any() for p in predict(ds, model))

    def test_edgeless_unary_argmax(self, rng):
        s = FactorGraphSample(rng.normal(size=(6, 3)), np.zeros((0, 2)), np.zeros((0, 2)))
        idx = EdgeStateIndex(3)
        model = FactorModel(3, idx, LinearFactor(3, 3, rng.normal(size=9)),
                            LinearFactor(2, idx.dim, rng.normal(size=2 * idx.dim)))
        pred = predict([s], model, "expansion")[0]
        assert pred.tolist() == np.argmax(build_factor_tables(s, model).unary, 1).tolist()

    def test_matches_exact(self, rng):
        idx = EdgeStateIndex(3)
        for _ in range(10):
            s = make_sample(rng, 6)
            model = FactorModel(3, idx, LinearFactor(3, 3, rng.normal(size=9)),
                                LinearFactor(2, idx.dim, rng.normal(size=2 * idx.dim)))
            ref = infer_exact(EnergyInstance.from_tables(s, build_factor_tables(s, model), idx))
            assert predict([s], model, "exact")[0].tolist() == ref.tolist()

    def test_ablation(self, rng):
        ds = small_dataset(rng)
        idx = EdgeStateIndex(3)
        model = FactorModel(3, idx, LinearFactor(3, 3, rng.normal(size=9)),
                            LinearFactor(2, idx.dim, rng.normal(size=2 * idx.dim)))
        both = ablate_predict(ds, model, "both")
        assert all(np.array_equal(a, b) for a, b in zip(both, predict(ds, model)))
        for s, p in zip(ds.samples, ablate_predict(ds, model, "unary_only")):
            assert p.tolist() == np.argmax(build_factor_tables(s, model).unary, 1).tolist()
        with pytest.raises(ValueError):
            ablate_predict(ds, model, "neither")


def test_structured_beats_unary_on_small_grid_task():
    ds = generate_synthetic(SynthConfig(n_samples=20, seed=11))
    cfg = TrainConfig(iterations=60)
    truths = ds.ground_truths
    scores = {}
    for regime in ("unary", "int_lin"):
        model, _ = train_regime(ds, regime, cfg)
        scores[regime] = evaluate_predictions(truths, predict(ds, model), 3).class_mean_accuracy
    assert scores["int_lin"] > scores["unary"]
