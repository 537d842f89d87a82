import numpy as np
import pytest

from fd import grad_check
from melbird import transformer
from melbird.errors import DataEmpty, DivergedLoss, ShapeMismatch
from melbird.tensor import Tensor
from melbird.train import (
    AdamState,
    ExampleSet,
    SplitData,
    TrainConfig,
    TrainingLog,
    adam_step,
    bce_loss,
    cosine_lr,
    early_stop,
    evaluate,
    model_functions,
    train,
)


class TestBceLoss:
    def test_perfect_prediction_is_tiny(self):
        t = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss = bce_loss(Tensor(t), t)
        assert float(loss.data) <= 1e-6

    def test_uniform_half_is_ln2(self):
        loss = bce_loss(Tensor(np.full((3, 4), 0.5)), np.zeros((3, 4)))
        assert float(loss.data) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bce_loss(Tensor(np.full((2, 2), 0.5)), np.zeros((2, 3)))

    def test_non_binary_targets_rejected(self):
        with pytest.raises(ValueError):
            bce_loss(Tensor(np.full((1, 2), 0.5)), np.array([[0.3, 0.7]]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.05, 0.95, size=(3, 4))
        t = rng.integers(0, 2, size=(3, 4)).astype(np.float64)
        grad_check(lambda tp: bce_loss(tp, t), [p])


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
        adam_step(p, {"w": np.zeros(2)}, AdamState(), lr=0.1)
        assert np.array_equal(p["w"].data, [1.0, -2.0])

    def test_single_step_bias_correction(self):
        p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
        adam_step(p, {"w": np.array([1.0])}, AdamState(), lr=0.1)
        assert p["w"].data[0] == pytest.approx(-0.1, abs=1e-6)

    def test_converges_on_quadratic(self):
        p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
        state = AdamState()
        for _ in range(200):
            g = 2.0 * (p["w"].data - 3.0)
            adam_step(p, {"w": g}, state, lr=0.1)
        assert abs(p["w"].data[0] - 3.0) < 0.05

    @pytest.mark.parametrize("seed", range(20))
    def test_small_step_never_increases_quadratic(self, seed):
        rng = np.random.default_rng(seed)
        scales = rng.uniform(0.5, 5.0, size=4)
        target = rng.normal(size=4)
        w = rng.normal(size=4)
        p = {"w": Tensor(w.copy(), requires_grad=True)}
        loss_before = float((scales * (w - target) ** 2).sum())
        adam_step(p, {"w": 2.0 * scales * (w - target)}, AdamState(), lr=1e-4)
        loss_after = float((scales * (p["w"].data - target) ** 2).sum())
        assert loss_after <= loss_before

    def test_missing_gradient_treated_as_zero(self):
        p = {"w": Tensor(np.array([1.0]), requires_grad=True),
             "b": Tensor(np.array([2.0]), requires_grad=True)}
        adam_step(p, {"w": np.array([1.0])}, AdamState(), lr=0.1)
        assert p["b"].data[0] == 2.0


class TestCosineSchedule:
    CFG = TrainConfig(learning_rate=1e-4, total_epochs=40)

    def test_endpoints(self):
        assert cosine_lr(0, self.CFG) == pytest.approx(1e-4, abs=1e-12)
        assert cosine_lr(40, self.CFG) == pytest.approx(0.0, abs=1e-12)

    def test_midpoint(self):
        assert cosine_lr(20, self.CFG) == pytest.approx(5e-5, abs=1e-12)

    def test_monotone_decay(self):
        lrs = [cosine_lr(e, self.CFG) for e in range(41)]
        assert np.all(np.diff(lrs) < 0)

    def test_eta_min_floor(self):
        cfg = TrainConfig(learning_rate=1e-3, total_epochs=10, eta_min=1e-5, patience=10)
        assert cosine_lr(10, cfg) == pytest.approx(1e-5, abs=1e-15)

    def test_out_of_range_epoch(self):
        with pytest.raises(ValueError):
            cosine_lr(41, self.CFG)


class TestEarlyStop:
    def test_strictly_decreasing_continues(self):
        stop, best = early_stop([1.0, 0.9, 0.8, 0.7], patience=10)
        assert not stop
        assert best == 4

    def test_stops_ten_epochs_after_best(self):
        history = [1.0 - 0.01 * i for i in range(21)] + [0.9] * 10
        assert len(history) == 31
        stop, best = early_stop(history, patience=10)
        assert stop
        assert best == 21
        stop_30, _ = early_stop(history[:30], patience=10)
        assert not stop_30

    def test_improvement_resets_counter(self):
        history = [1.0] + [1.1] * 8 + [0.5]  # best moves to epoch 10
        stop, best = early_stop(history, patience=10)
        assert not stop
        assert best == 10

    def test_patience_zero_stops_immediately(self):
        stop, best = early_stop([1.0], patience=0)
        assert stop
        assert best == 1

    def test_ties_resolve_to_earliest(self):
        stop, best = early_stop([0.5, 0.5, 0.5], patience=10)
        assert best == 1
        assert not stop


def synthetic_split(n_classes=2, per_class=12, size=16, seed=0):
    """Separable toy images: class c lights up its own band of rows."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    band = size // n_classes
    for c in range(n_classes):
        for _ in range(per_class):
            img = rng.uniform(0.0, 0.08, size=(size, size))
            img[c * band : (c + 1) * band, :] += 0.9
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(c)
    images = np.stack(images)
    labels = np.asarray(labels)
    order = rng.permutation(len(labels))
    images, labels = images[order], labels[order]
    n_val = len(labels) // 4
    return SplitData(
        train=ExampleSet(images[n_val:], labels[n_val:], n_classes),
        val=ExampleSet(images[:n_val], labels[:n_val], n_classes),
    )


TINY_AST = transformer.AstConfig(
    num_classes=2, patch_size=4, patch_stride=4, embed_dim=16,
    n_layers=1, n_heads=2, mlp_ratio=2, image_size=16,
)


class TestTrainLoop:
    def test_separable_task_reaches_high_f1(self):
        split = synthetic_split()
        cfg = TrainConfig(learning_rate=3e-3, total_epochs=15, train_batch=10,
                          val_batch=2, patience=10, seed=0)
        weights, log = train("ast", split, cfg, TINY_AST)
        assert max(r.val_macro_f1 for r in log.records) >= 0.95

    def test_determinism_same_seed(self):
        split = synthetic_split()
        cfg = TrainConfig(learning_rate=1e-3, total_epochs=3, train_batch=10,
                          val_batch=2, patience=3, seed=7)
        _, log_a = train("ast", split, cfg, TINY_AST)
        _, log_b = train("ast", split, cfg, TINY_AST)
        for ra, rb in zip(log_a.records, log_b.records):
            assert ra.train_loss == rb.train_loss
            assert ra.val_loss == rb.val_loss
            assert ra.train_macro_f1 == rb.train_macro_f1
            assert ra.val_samples_f1 == rb.val_samples_f1

    def test_patience_zero_stops_after_first_epoch(self):
        split = synthetic_split(per_class=6)
        cfg = TrainConfig(learning_rate=1e-3, total_epochs=10, train_batch=4,
                          val_batch=2, patience=0, seed=0)
        _, log = train("ast", split, cfg, TINY_AST)
        assert len(log.records) == 1

    def test_lr_sequence_matches_schedule(self):
        split = synthetic_split(per_class=6)
        cfg = TrainConfig(learning_rate=1e-3, total_epochs=4, train_batch=6,
                          val_batch=2, patience=4, seed=1)
        _, log = train("ast", split, cfg, TINY_AST)
        for r in log.records:
            assert r.lr == cosine_lr(r.epoch - 1, cfg)

    def test_returned_weights_are_best_epoch(self):
        split = synthetic_split(per_class=8)
        cfg = TrainConfig(learning_rate=3e-3, total_epochs=6, train_batch=8,
                          val_batch=2, patience=6, seed=3)
        weights, log = train("ast", split, cfg, TINY_AST)
        _, forward = model_functions("ast", TINY_AST)
        val_loss, _, _ = evaluate(forward, weights, split.val, cfg.val_batch)
        assert val_loss == min(r.val_loss for r in log.records)

    def test_train_loss_improves_on_separable_task(self):
        split = synthetic_split(per_class=8)
        cfg = TrainConfig(learning_rate=3e-3, total_epochs=8, train_batch=8,
                          val_batch=2, patience=8, seed=0)
        init, forward = model_functions("ast", TINY_AST)
        before, _, _ = evaluate(forward, init(cfg.seed), split.train, cfg.train_batch)
        weights, _ = train("ast", split, cfg, TINY_AST)
        after, _, _ = evaluate(forward, weights, split.train, cfg.train_batch)
        assert after <= before

    def test_empty_split_rejected(self):
        empty = ExampleSet(np.zeros((0, 16, 16)), np.zeros(0, dtype=np.int64), 2)
        full = synthetic_split().train
        with pytest.raises(DataEmpty):
            train("ast", SplitData(train=empty, val=full), TrainConfig(), TINY_AST)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverged_loss_surfaces(self):
        split = synthetic_split(per_class=4)
        cfg = TrainConfig(learning_rate=1e150, total_epochs=3, train_batch=4,
                          val_batch=2, patience=3, seed=0)
        with pytest.raises(DivergedLoss):
            train("ast", split, cfg, TINY_AST)

    def test_unknown_model_kind(self):
        with pytest.raises(ValueError):
            model_functions("mlp", TINY_AST)


class TestTrainingLogCsv:
    def test_round_trip(self, tmp_path):
        split = synthetic_split(per_class=6)
        cfg = TrainConfig(learning_rate=1e-3, total_epochs=2, train_batch=6,
                          val_batch=2, patience=2, seed=0)
        _, log = train("ast", split, cfg, TINY_AST)
        log.to_csv(tmp_path / "log.csv")
        back = TrainingLog.from_csv(tmp_path / "log.csv")
        assert len(back.records) == len(log.records)
        for ra, rb in zip(log.records, back.records):
            assert ra.epoch == rb.epoch
            assert ra.val_loss == pytest.approx(rb.val_loss, rel=1e-10)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(patience=50, total_epochs=40)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
