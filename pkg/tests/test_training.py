import numpy as np
import pytest

from helpers import FD_REL_TOL, check_gradients

from lgpnet.corpus import Manifest
from lgpnet.errors import ManifestError
from lgpnet.model import ModelCfg, ModelOutput, ResidualBlockCfg, build_model
from lgpnet.tensor import Tensor, softmax_cross_entropy
from lgpnet.training import (
    AdamState,
    TrainConfig,
    adam_step,
    ensemble_aware_loss,
    ensemble_ce_loss,
    evaluate_loss,
    predict_logits,
    reduce_on_plateau,
    run_epoch,
    train,
)


def output_from(group_logits):
    tensors = [Tensor(np.asarray(g, dtype=np.float64)) for g in group_logits]
    from lgpnet.tensor import mean_tensors

    return ModelOutput(ensemble_logits=mean_tensors(tensors), group_logits=tensors)


class TestEnsembleAwareLoss:
    def test_identical_groups_equal_plain_ce(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(4, 2))
        labels = np.array([0, 1, 1, 0])
        out = output_from([logits, logits, logits])
        loss = ensemble_aware_loss(out, labels)
        ce = softmax_cross_entropy(Tensor(logits), labels)
        assert loss.item() == pytest.approx(ce.item(), abs=1e-12)

    def test_single_group_degenerate(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(3, 2))
        labels = np.array([1, 0, 1])
        out = output_from([logits])
        loss = ensemble_aware_loss(out, labels)
        ce = softmax_cross_entropy(Tensor(logits), labels)
        assert loss.item() == pytest.approx(ce.item(), abs=1e-12)

    def test_group_permutation_invariance(self):
        rng = np.random.default_rng(2)
        groups = [rng.normal(size=(4, 2)) for _ in range(4)]
        labels = np.array([0, 1, 0, 1])
        base = ensemble_aware_loss(output_from(groups), labels)
        permuted = ensemble_aware_loss(output_from([groups[2], groups[0], groups[3], groups[1]]), labels)
        assert base.item() == pytest.approx(permuted.item(), abs=1e-12)
        b0 = output_from(groups).ensemble_logits.data
        b1 = output_from([groups[2], groups[0], groups[3], groups[1]]).ensemble_logits.data
        assert np.max(np.abs(b0 - b1)) < 1e-12

    def test_nonnegative_and_zero_in_perfect_limit(self):
        labels = np.array([1, 0])
        confident = np.array([[-40.0, 40.0], [40.0, -40.0]])
        out = output_from([confident, confident])
        loss = ensemble_aware_loss(out, labels)
        assert 0.0 <= loss.item() < 1e-12
        rng = np.random.default_rng(3)
        noisy = output_from([rng.normal(size=(2, 2)) for _ in range(3)])
        assert ensemble_aware_loss(noisy, labels).item() >= 0.0

    def test_differs_from_plain_ce_in_general(self):
        rng = np.random.default_rng(4)
        out = output_from([rng.normal(size=(4, 2)) for _ in range(3)])
        labels = np.array([0, 1, 1, 0])
        assert ensemble_aware_loss(out, labels).item() != pytest.approx(
            ensemble_ce_loss(out, labels).item(), abs=1e-9
        )

    def test_gradients_through_tiny_model(self):
        cfg = ModelCfg(n_groups=2, n_blocks=1, block=ResidualBlockCfg(channels=4), group_input_dim=3)
        model = build_model(cfg, seed=0)
        rng = np.random.default_rng(5)
        slices = [Tensor(rng.normal(size=(2, 3, 8))) for _ in range(2)]
        labels = np.array([0, 1])

        def loss():
            return ensemble_aware_loss(model.forward_slices(slices), labels)

        worst = check_gradients(loss, model.parameters())
        assert worst < FD_REL_TOL


class TestAdam:
    def test_constant_gradient_moves_monotonically(self):
        p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        state = AdamState([p])
        previous = p.data.copy()
        for _ in range(10):
            p.grad = np.array([0.5, -0.25])
            adam_step(state, lr=0.01)
            delta = p.data - previous
            assert delta[0] < 0 and delta[1] > 0
            previous = p.data.copy()

    def test_zero_gradient_leaves_params(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        state = AdamState([p])
        p.grad = np.zeros(1)
        adam_step(state, lr=0.1)
        assert np.array_equal(p.data, [3.0])
        assert state.step_count == 1

    def test_first_step_closed_form(self):
        # with zeroed state, update = -lr * g / (|g| + eps) ~ -lr * sign(g)
        g = np.array([0.3, -2.0, 7.5])
        p = Tensor(np.zeros(3), requires_grad=True)
        state = AdamState([p])
        p.grad = g.copy()
        lr = 0.05
        adam_step(state, lr=lr)
        expected = -lr * g / (np.abs(g) + state.eps)
        assert np.allclose(p.data, expected, rtol=1e-9)
        assert np.allclose(p.data, -lr * np.sign(g), rtol=1e-6)

    def test_missing_grad_counts_as_zero(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        state = AdamState([p])
        adam_step(state, lr=0.1)
        assert np.array_equal(p.data, [1.0])


class TestReduceOnPlateau:
    def cfg(self, patience=3):
        return TrainConfig(learning_rate=1e-3, plateau_patience=patience, plateau_factor=0.5)

    def test_decreasing_history_keeps_lr(self):
        cfg = self.cfg()
        history = [1.0, 0.8, 0.6, 0.4, 0.2]
        assert reduce_on_plateau(history, cfg) == cfg.learning_rate

    def test_flat_history_reduces_once(self):
        cfg = self.cfg(patience=3)
        history = [1.0] + [1.0] * 3  # first epoch improves on inf, then 3 flat
        assert reduce_on_plateau(history, cfg) == cfg.learning_rate * 0.5

    def test_improvement_resets_counter(self):
        cfg = self.cfg(patience=3)
        history = [1.0, 1.0, 1.0, 0.5, 0.5, 0.5]  # never 3 consecutive bad epochs
        assert reduce_on_plateau(history, cfg) == cfg.learning_rate

    def test_two_plateaus_reduce_twice(self):
        cfg = self.cfg(patience=2)
        history = [1.0, 1.0, 1.0, 0.5, 0.5, 0.5]
        assert reduce_on_plateau(history, cfg) == cfg.learning_rate * 0.25

    def test_min_delta_counts_tiny_improvements_as_flat(self):
        cfg = self.cfg(patience=2)
        history = [1.0, 1.0 - 1e-6, 1.0 - 2e-6]
        assert reduce_on_plateau(history, cfg) == cfg.learning_rate * 0.5

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            reduce_on_plateau([], self.cfg())


def small_train_cfg(**overrides):
    defaults = dict(learning_rate=1e-3, batch_size=8, epochs=3, seed=123)
    defaults.update(overrides)
    return TrainConfig(**defaults)


def tiny_model_cfg(assignment):
    return ModelCfg(
        n_groups=assignment.n_groups,
        n_blocks=2,
        block=ResidualBlockCfg(channels=16),
        group_input_dim=assignment.group_dim(),
    )


class TestTrainLoop:
    def test_empty_manifest_rejected(self, tiny_pipeline):
        empty = Manifest(entries=[], split="train")
        with pytest.raises(ManifestError):
            train(
                empty,
                tiny_pipeline["bank"],
                tiny_pipeline["assignment"],
                tiny_model_cfg(tiny_pipeline["assignment"]),
                small_train_cfg(),
            )

    def test_deterministic_given_seed(self, tiny_pipeline):
        kwargs = dict(
            manifest=tiny_pipeline["manifest"],
            bank=tiny_pipeline["bank"],
            assignment=tiny_pipeline["assignment"],
            model_cfg=tiny_model_cfg(tiny_pipeline["assignment"]),
            lfcc_cfg=tiny_pipeline["lfcc_cfg"],
            target_frames=50,
        )
        _, log_a = train(train_cfg=small_train_cfg(epochs=2), **kwargs)
        _, log_b = train(train_cfg=small_train_cfg(epochs=2), **kwargs)
        assert log_a[0]["train_loss"] == log_b[0]["train_loss"]  # bitwise
        assert log_a[-1]["train_loss"] == log_b[-1]["train_loss"]

    def test_writes_epoch_log_csv(self, tiny_pipeline, tmp_path):
        log_path = tmp_path / "log.csv"
        train(
            tiny_pipeline["manifest"],
            tiny_pipeline["bank"],
            tiny_pipeline["assignment"],
            tiny_model_cfg(tiny_pipeline["assignment"]),
            small_train_cfg(epochs=2),
            lfcc_cfg=tiny_pipeline["lfcc_cfg"],
            target_frames=50,
            log_path=log_path,
        )
        lines = log_path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,dev_loss,lr"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "1"
        assert float(first[3]) == 1e-3

    def test_checkpoint_reload_reproduces_scores(self, tiny_pipeline, tmp_path):
        ckpt = tmp_path / "model.npz"
        model, _ = train(
            tiny_pipeline["manifest"],
            tiny_pipeline["bank"],
            tiny_pipeline["assignment"],
            tiny_model_cfg(tiny_pipeline["assignment"]),
            small_train_cfg(epochs=2),
            lfcc_cfg=tiny_pipeline["lfcc_cfg"],
            target_frames=50,
            checkpoint_path=ckpt,
        )
        from lgpnet.model import load_checkpoint

        reloaded, assignment = load_checkpoint(ckpt)
        feats = tiny_pipeline["feats"]
        direct = predict_logits(model, tiny_pipeline["assignment"], feats)
        from_disk = predict_logits(reloaded, assignment, feats)
        assert np.array_equal(direct, from_disk)

    def test_dev_monitoring_and_best_restore(self, tiny_pipeline):
        model, log = train(
            tiny_pipeline["manifest"],
            tiny_pipeline["bank"],
            tiny_pipeline["assignment"],
            tiny_model_cfg(tiny_pipeline["assignment"]),
            small_train_cfg(epochs=3),
            dev_manifest=tiny_pipeline["manifest"],
            lfcc_cfg=tiny_pipeline["lfcc_cfg"],
            target_frames=50,
        )
        best = min(row["dev_loss"] for row in log)
        recomputed = evaluate_loss(
            model,
            tiny_pipeline["assignment"],
            tiny_pipeline["feats"],
            tiny_pipeline["labels"],
            small_train_cfg(),
        )
        assert recomputed == pytest.approx(best, abs=1e-12)

    def test_eval_loss_is_pure(self, tiny_pipeline):
        assignment = tiny_pipeline["assignment"]
        model = build_model(tiny_model_cfg(assignment), seed=5)
        cfg = small_train_cfg()
        feats, labels = tiny_pipeline["feats"], tiny_pipeline["labels"]
        first = evaluate_loss(model, assignment, feats, labels, cfg)
        stats_before = [bn.state.running_mean.copy() for bn in model.batchnorms()]
        second = evaluate_loss(model, assignment, feats, labels, cfg)
        assert first == second
        for bn, before in zip(model.batchnorms(), stats_before):
            assert np.array_equal(bn.state.running_mean, before)

    def test_run_epoch_reduces_loss_on_easy_data(self, tiny_pipeline):
        assignment = tiny_pipeline["assignment"]
        model = build_model(tiny_model_cfg(assignment), seed=6)
        cfg = small_train_cfg(batch_size=16)
        state = AdamState(model.parameters())
        feats, labels = tiny_pipeline["feats"], tiny_pipeline["labels"]
        rng = np.random.default_rng(0)
        first = run_epoch(model, assignment, feats, labels, cfg, state, rng.permutation(labels.size), cfg.learning_rate)
        for _ in range(4):
            last = run_epoch(model, assignment, feats, labels, cfg, state, rng.permutation(labels.size), cfg.learning_rate)
        assert last < first
