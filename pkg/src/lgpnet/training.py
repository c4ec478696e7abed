"""Ensemble-aware loss, Adam, plateau scheduling, and the training loop.

The loss averages the ensemble cross-entropy with every group classifier's
own cross-entropy:

    L = (CE(b, y) + sum_i CE(b_i, y)) / (G + 1)

so each branch is trained as an independent classifier while the averaged
prediction is optimized directly.  Switching ``ensemble_aware`` off reduces
the loss to CE(b, y) alone (ablation).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Manifest
from .errors import ConfigError, ManifestError
from .lfcc import LfccConfig
from .model import GroupedResNetEnsemble, ModelCfg, ModelOutput, save_checkpoint
from .multiscale import GmmBank, GroupAssignment, manifest_lgp_features
from .tensor import Tensor, backward, no_grad, softmax_cross_entropy


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    plateau_min_delta: float = 1e-4
    seed: int = 0
    ensemble_aware: bool = True

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.epochs, self.plateau_patience) <= 0:
            raise ConfigError("learning_rate, batch_size, epochs, plateau_patience must be positive")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigError("plateau_factor must lie in (0, 1)")


def ensemble_aware_loss(output: ModelOutput, labels: np.ndarray) -> Tensor:
    """Mean of the ensemble CE and every group classifier CE."""
    terms = [softmax_cross_entropy(output.ensemble_logits, labels)]
    for logits in output.group_logits:
        terms.append(softmax_cross_entropy(logits, labels))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def ensemble_ce_loss(output: ModelOutput, labels: np.ndarray) -> Tensor:
    """Plain cross-entropy on the averaged logits (ablation path)."""
    return softmax_cross_entropy(output.ensemble_logits, labels)


class AdamState:
    """First/second moment accumulators for a fixed parameter list."""

    def __init__(self, params: list[Tensor], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState, lr: float) -> None:
    """One Adam update with bias correction; missing grads count as zero."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, m, v in zip(state.params, state.m, state.v):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def reduce_on_plateau(history: list[float], cfg: TrainConfig) -> float:
    """Learning rate implied by a monitored-loss history.

    Replays the history: whenever the monitored value fails to improve on
    the best seen by at least plateau_min_delta for plateau_patience
    consecutive epochs, the rate is multiplied by plateau_factor and the
    counter resets.
    """
    if not history:
        raise ValueError("history must be non-empty")
    lr = cfg.learning_rate
    best = np.inf
    bad = 0
    for value in history:
        if value < best - cfg.plateau_min_delta:
            best = value
            bad = 0
        else:
            bad += 1
            if bad >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                bad = 0
    return lr


def _batch_indices(n: int, batch_size: int) -> list[np.ndarray]:
    return [np.arange(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]


def run_epoch(
    model: GroupedResNetEnsemble,
    assignment: GroupAssignment,
    feats: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    state: AdamState,
    perm: np.ndarray,
    lr: float,
) -> float:
    """One optimization pass over shuffled data; returns the mean sample loss."""
    loss_fn = ensemble_aware_loss if cfg.ensemble_aware else ensemble_ce_loss
    model.set_mode("train")
    total = 0.0
    for idx in _batch_indices(perm.size, cfg.batch_size):
        batch = perm[idx]
        output = model(feats[batch], assignment)
        loss = loss_fn(output, labels[batch])
        model.zero_grad()
        backward(loss)
        adam_step(state, lr)
        total += loss.item() * batch.size
    return total / perm.size


def evaluate_loss(
    model: GroupedResNetEnsemble,
    assignment: GroupAssignment,
    feats: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> float:
    """Loss over a dataset in eval mode; no graph, no state mutation."""
    loss_fn = ensemble_aware_loss if cfg.ensemble_aware else ensemble_ce_loss
    model.set_mode("eval")
    total = 0.0
    with no_grad():
        for idx in _batch_indices(labels.size, cfg.batch_size):
            output = model(feats[idx], assignment)
            total += loss_fn(output, labels[idx]).item() * idx.size
    return total / labels.size


def predict_logits(
    model: GroupedResNetEnsemble,
    assignment: GroupAssignment,
    feats: np.ndarray,
    batch_size: int = 32,
) -> np.ndarray:
    """Ensemble logits for a stacked feature batch, in eval mode."""
    model.set_mode("eval")
    outs = []
    with no_grad():
        for idx in _batch_indices(feats.shape[0], batch_size):
            outs.append(model(feats[idx], assignment).ensemble_logits.data)
    return np.vstack(outs)


def _snapshot(model: GroupedResNetEnsemble) -> dict:
    return {
        "params": [p.data.copy() for p in model.parameters()],
        "bn": [
            (bn.state.running_mean.copy(), bn.state.running_var.copy())
            for bn in model.batchnorms()
        ],
    }


def _restore(model: GroupedResNetEnsemble, snap: dict) -> None:
    for p, data in zip(model.parameters(), snap["params"]):
        p.data = data.copy()
    for bn, (mean, var) in zip(model.batchnorms(), snap["bn"]):
        bn.state.running_mean = mean.copy()
        bn.state.running_var = var.copy()


def train(
    manifest: Manifest,
    bank: GmmBank,
    assignment: GroupAssignment,
    model_cfg: ModelCfg,
    train_cfg: TrainConfig,
    dev_manifest: Manifest | None = None,
    lfcc_cfg: LfccConfig | None = None,
    target_frames: int = 400,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
    reader=None,
) -> tuple[GroupedResNetEnsemble, list[dict]]:
    """Full training run; returns the best model and the per-epoch log.

    Deterministic given train_cfg.seed: the same generator drives parameter
    initialization and every epoch's shuffle.  The monitored loss is the
    dev-set loss when a dev manifest is given, the training loss otherwise;
    the best-monitored parameters are restored (and written to
    checkpoint_path, when given) at the end.
    """
    if len(manifest) == 0:
        raise ManifestError("training manifest is empty")
    feats, labels, _ = manifest_lgp_features(manifest, bank, lfcc_cfg, target_frames, reader=reader)
    dev = None
    if dev_manifest is not None:
        dev_feats, dev_labels, _ = manifest_lgp_features(
            dev_manifest, bank, lfcc_cfg, target_frames, reader=reader
        )
        dev = (dev_feats, dev_labels)

    rng = np.random.default_rng(train_cfg.seed)
    model = GroupedResNetEnsemble(model_cfg, rng)
    state = AdamState(model.parameters())

    log_rows: list[dict] = []
    monitor_history: list[float] = []
    best_value = np.inf
    best_snap = _snapshot(model)
    lr = train_cfg.learning_rate
    log_file = None
    writer = None
    if log_path is not None:
        log_file = open(log_path, "a", newline="")
        writer = csv.writer(log_file)
        if log_file.tell() == 0:
            writer.writerow(["epoch", "train_loss", "dev_loss", "lr"])
    try:
        for epoch in range(1, train_cfg.epochs + 1):
            perm = rng.permutation(labels.size)
            train_loss = run_epoch(model, assignment, feats, labels, train_cfg, state, perm, lr)
            if dev is not None:
                dev_loss = evaluate_loss(model, assignment, dev[0], dev[1], train_cfg)
            else:
                dev_loss = train_loss
            monitor_history.append(dev_loss)
            row = {"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss, "lr": lr}
            log_rows.append(row)
            if writer is not None:
                writer.writerow([epoch, repr(train_loss), repr(dev_loss), repr(lr)])
                log_file.flush()
            if dev_loss < best_value:
                best_value = dev_loss
                best_snap = _snapshot(model)
            lr = reduce_on_plateau(monitor_history, train_cfg)
    finally:
        if log_file is not None:
            log_file.close()

    _restore(model, best_snap)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, assignment)
    return model, log_rows
