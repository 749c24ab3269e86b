"""Tests for losses, gradients, the schedule and the optimization loop."""

import json
import math

import numpy as np
import pytest

from calibrag.corpus import Document
from calibrag.datagen import SupervisionRecord
from calibrag.features import ExtractorConfig, extract
from calibrag.forecaster import ForecasterParams, FourierSpec, init_params
from calibrag.training import (
    TrainConfig,
    TrainError,
    TrainingData,
    TrainReport,
    _clip_global_norm,
    learning_rate_at,
    loss_and_grad,
    loss_value,
    prepare_training_data,
    save_report,
    train,
)


def make_params(mode, w_p, head_w, head_b, n=1):
    spec = FourierSpec(n_frequencies=n)
    w_p = np.asarray(w_p, dtype=np.float64)
    return ForecasterParams(mode, w_p.shape[0], spec, w_p, np.asarray(head_w), np.asarray(head_b))


def finite_difference(params, features, temps, labels, eps=1e-6):
    """Central-difference gradients for every parameter coordinate."""
    arrays = {
        "w_p": params.w_p.copy(),
        "head_w": params.head_w.copy(),
        "head_b": np.atleast_1d(np.asarray(params.head_b, dtype=np.float64)).copy(),
    }

    def rebuild(tweaked):
        head_b = tweaked["head_b"]
        if params.mode == "binary":
            head_b = np.float64(head_b[0])
        return ForecasterParams(
            params.mode,
            params.dimension,
            params.fourier,
            tweaked["w_p"],
            tweaked["head_w"],
            head_b,
        )

    grads = {}
    for name, base in arrays.items():
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.shape[0]):
            saved = flat[i]
            flat[i] = saved + eps
            hi = loss_value(rebuild(arrays), features, temps, labels)
            flat[i] = saved - eps
            lo = loss_value(rebuild(arrays), features, temps, labels)
            flat[i] = saved
            gflat[i] = (hi - lo) / (2 * eps)
        grads[name] = grad
    grads["head_b"] = grads["head_b"] if params.mode == "multi" else grads["head_b"][:1]
    return grads


def assert_close_grads(analytic, numeric, mode):
    for key in ("head_w", "head_b", "w_p"):
        a = np.atleast_1d(np.asarray(analytic[key])).reshape(-1)
        f = np.asarray(numeric[key]).reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
        rel = np.abs(a - f) / denom
        assert rel.max() <= 1e-5, f"{mode} {key} rel err {rel.max():.2e}"


class TestBinaryLoss:
    def constant_predictor(self, logit):
        """h=1 head that ignores features and always outputs sigmoid(logit)."""
        return make_params("binary", np.zeros((1, 2)), np.zeros(1), np.float64(logit))

    def test_hand_value_single_example(self):
        params = self.constant_predictor(math.log(4.0))  # f = 0.8
        loss, _ = loss_and_grad(params, np.zeros((1, 1)), np.array([1.0]), np.array([1.0]))
        np.testing.assert_allclose(loss, -math.log(0.8), atol=1e-12)
        np.testing.assert_allclose(loss, 0.22314355131420976, atol=1e-12)

    def test_hand_value_soft_label(self):
        params = self.constant_predictor(0.0)  # f = 0.5
        loss, _ = loss_and_grad(params, np.zeros((1, 1)), np.array([1.3]), np.array([0.7]))
        np.testing.assert_allclose(loss, math.log(2.0), atol=1e-12)

    def test_batch_mean(self):
        params = self.constant_predictor(math.log(4.0))
        loss, _ = loss_and_grad(
            params, np.zeros((2, 1)), np.array([1.0, 1.5]), np.array([1.0, 0.0])
        )
        want = (-math.log(0.8) - math.log(0.2)) / 2
        np.testing.assert_allclose(loss, want, atol=1e-12)

    def test_bias_gradient_is_mean_residual(self):
        params = self.constant_predictor(math.log(3.0))  # f = 0.75
        _, grads = loss_and_grad(
            params, np.zeros((1, 1)), np.array([1.0]), np.array([0.25])
        )
        np.testing.assert_allclose(grads["head_b"], 0.5, atol=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(21)
        params = make_params(
            "binary", rng.normal(scale=0.3, size=(5, 4)), rng.normal(scale=0.3, size=5),
            np.float64(0.1), n=2
        )
        features = rng.normal(size=(7, 5))
        temps = rng.uniform(1.0, 2.0, size=7)
        labels = rng.uniform(0.05, 0.95, size=7)
        _, analytic = loss_and_grad(params, features, temps, labels)
        numeric = finite_difference(params, features, temps, labels)
        assert_close_grads(analytic, numeric, "binary")


class TestMultiLoss:
    def test_uniform_logits_hand_value(self):
        params = make_params("multi", np.zeros((2, 2)), np.zeros((3, 2)), np.zeros(3))
        loss, grads = loss_and_grad(
            params, np.zeros((1, 2)), np.array([1.0]), np.array([1.0])
        )
        np.testing.assert_allclose(loss, math.log(3.0), atol=1e-12)
        np.testing.assert_allclose(grads["head_b"], [1 / 3, 1 / 3, -2 / 3], atol=1e-12)

    def test_label_to_bin_uses_round_half_even(self):
        params = make_params("multi", np.zeros((1, 2)), np.zeros((11, 1)), np.arange(11.0))
        feats = np.zeros((1, 1))
        temps = np.array([1.0])
        base = [float(loss_value(params, feats, temps, np.array([b / 10]))) for b in range(11)]
        assert loss_value(params, feats, temps, np.array([0.45])) == base[4]
        assert loss_value(params, feats, temps, np.array([0.55])) == base[6]

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(22)
        params = make_params(
            "multi", rng.normal(scale=0.3, size=(4, 4)),
            rng.normal(scale=0.3, size=(5, 4)), rng.normal(scale=0.1, size=5), n=2
        )
        features = rng.normal(size=(6, 4))
        temps = rng.uniform(1.0, 2.0, size=6)
        labels = rng.uniform(0.0, 1.0, size=6)
        _, analytic = loss_and_grad(params, features, temps, labels)
        numeric = finite_difference(params, features, temps, labels)
        assert_close_grads(analytic, numeric, "multi")


class TestSchedule:
    def cfg(self, **kw):
        base = dict(learning_rate=0.2, max_steps=100, warmup_steps=10)
        base.update(kw)
        return TrainConfig(**base)

    def test_linear_warmup(self):
        cfg = self.cfg()
        np.testing.assert_allclose(learning_rate_at(cfg, 1), 0.02)
        np.testing.assert_allclose(learning_rate_at(cfg, 5), 0.1)
        np.testing.assert_allclose(learning_rate_at(cfg, 10), 0.2)

    def test_linear_decay_to_zero(self):
        cfg = self.cfg()
        np.testing.assert_allclose(learning_rate_at(cfg, 55), 0.2 * 45 / 90)
        np.testing.assert_allclose(learning_rate_at(cfg, 100), 0.0)

    def test_no_warmup(self):
        cfg = self.cfg(warmup_steps=0)
        np.testing.assert_allclose(learning_rate_at(cfg, 1), 0.2 * 99 / 100)

    def test_peak_reached_exactly_once(self):
        cfg = self.cfg()
        rates = [learning_rate_at(cfg, s) for s in range(1, 101)]
        assert max(rates) == pytest.approx(0.2)
        assert rates.index(max(rates)) == 9


class TestClipping:
    def test_scales_when_over(self):
        grads = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
        clipped = _clip_global_norm(grads, 1.0)
        total = sum(float(np.sum(np.square(g))) for g in clipped.values())
        np.testing.assert_allclose(math.sqrt(total), 1.0, atol=1e-12)
        np.testing.assert_allclose(clipped["a"], [0.6, 0.0], atol=1e-12)

    def test_untouched_when_under(self):
        grads = {"a": np.array([0.3])}
        clipped = _clip_global_norm(grads, 1.0)
        np.testing.assert_array_equal(clipped["a"], grads["a"])


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-4
        assert cfg.batch_size == 4
        assert cfg.max_steps == 10000
        assert cfg.weight_decay == 0.01
        assert cfg.grad_clip == 1.0
        assert cfg.warmup_steps == 500

    def test_from_mapping(self):
        cfg = TrainConfig.from_mapping({"learning_rate": 0.5, "max_steps": 20, "warmup_steps": 2})
        assert cfg.learning_rate == 0.5
        assert cfg.max_steps == 20

    def test_from_mapping_rejects_unknown_key(self):
        with pytest.raises(TrainError, match="unknown train config key: 'momentum'"):
            TrainConfig.from_mapping({"momentum": 0.9})

    def test_validation(self):
        with pytest.raises(TrainError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(TrainError, match="batch_size"):
            TrainConfig(batch_size=0)
        with pytest.raises(TrainError, match="warmup_steps"):
            TrainConfig(max_steps=10, warmup_steps=10)


class TestTrainingData:
    def test_validation(self):
        ok = TrainingData(np.zeros((3, 4)), np.ones(3), np.full(3, 0.5))
        assert len(ok) == 3
        with pytest.raises(TrainError, match="non-empty"):
            TrainingData(np.zeros((0, 4)), np.zeros(0), np.zeros(0))
        with pytest.raises(TrainError, match="shape"):
            TrainingData(np.zeros((3, 4)), np.ones(2), np.full(3, 0.5))
        with pytest.raises(TrainError, match="non-finite"):
            TrainingData(np.full((1, 2), np.nan), np.ones(1), np.zeros(1))
        with pytest.raises(TrainError, match=r"\[0, 1\]"):
            TrainingData(np.zeros((1, 2)), np.ones(1), np.array([1.5]))


class TestPrepareTrainingData:
    def setup_method(self):
        self.queries = {"q1": "solar panels"}
        self.documents = {"d1": Document("d1", "Solar", "solar panel basics")}
        self.cfg = ExtractorConfig(dimension=32)

    def test_rows_match_extractor(self):
        records = [
            SupervisionRecord(t=1.2, query_id="q1", doc_id="d1", label=0.7, r=10),
            SupervisionRecord(t=1.9, query_id="q1", doc_id="d1", label=0.3, r=10),
        ]
        data = prepare_training_data(records, self.queries, self.documents, self.cfg)
        assert data.features.shape == (2, 32)
        np.testing.assert_array_equal(
            data.features[0], extract(self.cfg, "solar panels", self.documents["d1"])
        )
        np.testing.assert_array_equal(data.temperatures, [1.2, 1.9])
        np.testing.assert_array_equal(data.labels, [0.7, 0.3])

    def test_unknown_query_named(self):
        records = [SupervisionRecord(t=1.0, query_id="qX", doc_id="d1", label=0.5, r=10)]
        with pytest.raises(TrainError, match="unknown query_id: 'qX'"):
            prepare_training_data(records, self.queries, self.documents, self.cfg)

    def test_unknown_doc_named(self):
        records = [SupervisionRecord(t=1.0, query_id="q1", doc_id="dX", label=0.5, r=10)]
        with pytest.raises(TrainError, match="unknown doc_id: 'dX'"):
            prepare_training_data(records, self.queries, self.documents, self.cfg)

    def test_empty_records_rejected(self):
        with pytest.raises(TrainError, match="no training records"):
            prepare_training_data([], self.queries, self.documents, self.cfg)


def toy_data(seed=0, n=160, h=8):
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, h)) / math.sqrt(h)
    w_true = rng.normal(size=h) * 2.0
    logits = features @ w_true
    labels = 1.0 / (1.0 + np.exp(-logits))
    temps = rng.uniform(1.0, 2.0, size=n)
    return TrainingData(features, temps, labels)


class TestTrainLoop:
    def quick_cfg(self, **kw):
        base = dict(learning_rate=0.05, batch_size=16, max_steps=400,
                    warmup_steps=20, weight_decay=0.001, grad_clip=1.0, seed=3)
        base.update(kw)
        return TrainConfig(**base)

    def test_loss_decreases_on_learnable_data(self):
        data = toy_data()
        cfg = self.quick_cfg()
        params, report = train(data, cfg)
        start = loss_value(
            init_params("binary", 8, params.fourier, cfg.seed),
            data.features, data.temperatures, data.labels,
        )
        assert report.final_loss < start - 0.05
        assert report.steps == 400

    def test_deterministic_given_seed(self):
        data = toy_data()
        cfg = self.quick_cfg(max_steps=60, warmup_steps=5)
        a, _ = train(data, cfg)
        b, _ = train(data, cfg)
        np.testing.assert_array_equal(a.head_w, b.head_w)
        np.testing.assert_array_equal(a.w_p, b.w_p)
        assert float(a.head_b) == float(b.head_b)

    def test_seed_changes_trajectory(self):
        data = toy_data()
        a, _ = train(data, self.quick_cfg(max_steps=60, warmup_steps=5, seed=1))
        b, _ = train(data, self.quick_cfg(max_steps=60, warmup_steps=5, seed=2))
        assert not np.array_equal(a.head_w, b.head_w)

    def test_multi_mode_trains(self):
        data = toy_data(n=120)
        params, report = train(data, self.quick_cfg(max_steps=150, warmup_steps=10), mode="multi")
        assert params.mode == "multi"
        assert params.head_w.shape[0] == 11
        assert math.isfinite(report.final_loss)

    def test_divergence_raises_with_step_number(self):
        data = toy_data(n=32)
        cfg = self.quick_cfg(learning_rate=1e300, max_steps=50, warmup_steps=1, grad_clip=1e6)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RuntimeError, match=r"diverged at step \d+"):
                train(data, cfg)

    def test_report_curve_and_config(self):
        data = toy_data(n=64)
        cfg = self.quick_cfg(max_steps=30, warmup_steps=2)
        _, report = train(data, cfg, report_every=10)
        steps = [entry[0] for entry in report.loss_curve]
        assert steps == [10, 20, 30]
        assert report.config["learning_rate"] == cfg.learning_rate
        assert report.n_examples == 64
        assert report.final_learning_rate == 0.0

    def test_save_report(self, tmp_path):
        report = TrainReport(
            mode="binary", n_examples=10, steps=5, final_loss=0.5,
            final_learning_rate=0.0, loss_curve=[[5, 0.5]], config={"seed": 1},
        )
        path = tmp_path / "report.json"
        save_report(report, str(path))
        payload = json.loads(path.read_text())
        assert payload["mode"] == "binary"
        assert payload["loss_curve"] == [[5, 0.5]]

    def test_batch_size_larger_than_dataset(self):
        data = toy_data(n=5)
        cfg = self.quick_cfg(batch_size=64, max_steps=20, warmup_steps=2)
        params, report = train(data, cfg)
        assert report.steps == 20
