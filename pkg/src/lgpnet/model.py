"""Grouped 1-d residual network ensemble over LGP group slices.

Each group slice feeds its own branch: a 1x1 entry convolution, a stack of
residual blocks, multi-scale feature aggregation (channel concat of every
block output followed by a 1x1 convolution), adaptive max pooling over
time, and a linear classifier.  The ensemble output is the mean of the
group logits.

The residual block keeps a single batch normalization and a single
activation, both between the two convolutions:

    y = x + conv2(relu(bn(conv1(x))))

A conventional block (two BNs, two activations) is available behind the
``improved_blocks`` flag for ablations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .multiscale import GroupAssignment
from .tensor import (
    BatchNormState,
    Tensor,
    add,
    batchnorm1d,
    concat_channels,
    conv1d,
    linear,
    max_pool_time,
    mean_tensors,
    relu,
)

_CKPT_VERSION = 1


@dataclass
class ResidualBlockCfg:
    channels: int = 256
    kernel: int = 3
    stride: int = 1

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError("channels must be positive")
        if self.kernel % 2 == 0:
            raise ConfigError("kernel size must be odd")
        if self.stride != 1:
            raise ConfigError("identity skips require stride 1")


@dataclass
class ModelCfg:
    n_groups: int = 8
    n_blocks: int = 6
    block: ResidualBlockCfg = field(default_factory=ResidualBlockCfg)
    group_input_dim: int = 248
    n_classes: int = 2
    mfa: bool = True
    improved_blocks: bool = True


@dataclass
class ModelOutput:
    """Ensemble logits b plus the per-group logits b_i they average."""

    ensemble_logits: Tensor  # N x n_classes
    group_logits: list[Tensor]  # G tensors, N x n_classes each


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1dLayer:
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = Tensor(
            _kaiming_uniform(rng, (out_ch, in_ch, kernel), in_ch * kernel), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


class BatchNorm1dLayer:
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.state = BatchNormState(channels, momentum=momentum, eps=eps)

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm1d(x, self.state)

    def named_parameters(self):
        return [("gamma", self.state.gamma), ("beta", self.state.beta)]


class LinearLayer:
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = Tensor(
            _kaiming_uniform(rng, (out_features, in_features), in_features), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


class ImprovedResidualBlock:
    """Two convolutions, one BN, one activation, identity skip."""

    n_activations = 1

    def __init__(self, cfg: ResidualBlockCfg, rng: np.random.Generator):
        c, k = cfg.channels, cfg.kernel
        self.conv1 = Conv1dLayer(c, c, k, rng)
        self.bn = BatchNorm1dLayer(c)
        self.conv2 = Conv1dLayer(c, c, k, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return add(x, self.conv2(relu(self.bn(self.conv1(x)))))

    def batchnorms(self):
        return [self.bn]

    def sublayers(self):
        return [("conv1", self.conv1), ("bn", self.bn), ("conv2", self.conv2)]


class StandardResidualBlock:
    """Conventional block for ablation: BN + activation after each convolution."""

    n_activations = 2

    def __init__(self, cfg: ResidualBlockCfg, rng: np.random.Generator):
        c, k = cfg.channels, cfg.kernel
        self.conv1 = Conv1dLayer(c, c, k, rng)
        self.bn1 = BatchNorm1dLayer(c)
        self.conv2 = Conv1dLayer(c, c, k, rng)
        self.bn2 = BatchNorm1dLayer(c)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.bn2(self.conv2(relu(self.bn1(self.conv1(x)))))
        return relu(add(x, h))

    def batchnorms(self):
        return [self.bn1, self.bn2]

    def sublayers(self):
        return [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]


class GroupBranch:
    """Embedding extractor for one group slice: entry conv, blocks, MFA, pooling."""

    def __init__(self, cfg: ModelCfg, rng: np.random.Generator):
        c = cfg.block.channels
        self.cfg = cfg
        self.entry_conv = Conv1dLayer(cfg.group_input_dim, c, 1, rng)
        self.entry_bn = BatchNorm1dLayer(c)
        block_type = ImprovedResidualBlock if cfg.improved_blocks else StandardResidualBlock
        self.blocks = [block_type(cfg.block, rng) for _ in range(cfg.n_blocks)]
        if cfg.mfa:
            self.mfa_conv = Conv1dLayer(cfg.n_blocks * c, c, 1, rng)
            self.mfa_bn = BatchNorm1dLayer(c)
        else:
            self.mfa_conv = None
            self.mfa_bn = None

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.entry_bn(self.entry_conv(x)))
        block_outs = []
        for block in self.blocks:
            h = block(h)
            block_outs.append(h)
        if self.cfg.mfa:
            h = relu(self.mfa_bn(self.mfa_conv(concat_channels(block_outs))))
        else:
            h = block_outs[-1]
        return max_pool_time(h)

    def sublayers(self):
        layers = [("entry_conv", self.entry_conv), ("entry_bn", self.entry_bn)]
        for i, block in enumerate(self.blocks):
            layers.extend((f"block{i}.{name}", layer) for name, layer in block.sublayers())
        if self.cfg.mfa:
            layers.extend([("mfa_conv", self.mfa_conv), ("mfa_bn", self.mfa_bn)])
        return layers

    def batchnorms(self):
        bns = [self.entry_bn]
        for block in self.blocks:
            bns.extend(block.batchnorms())
        if self.cfg.mfa:
            bns.append(self.mfa_bn)
        return bns


class GroupedResNetEnsemble:
    """G independent branch+classifier pairs whose logits are averaged."""

    def __init__(self, cfg: ModelCfg, rng: np.random.Generator):
        self.cfg = cfg
        self.branches = [GroupBranch(cfg, rng) for _ in range(cfg.n_groups)]
        self.classifiers = [
            LinearLayer(cfg.block.channels, cfg.n_classes, rng) for _ in range(cfg.n_groups)
        ]

    def forward_slices(self, slices: list[Tensor]) -> ModelOutput:
        if len(slices) != self.cfg.n_groups:
            raise ShapeError(f"expected {self.cfg.n_groups} slices, got {len(slices)}")
        group_logits = []
        for x, branch, classifier in zip(slices, self.branches, self.classifiers):
            if x.shape[1] != self.cfg.group_input_dim:
                raise ShapeError(
                    f"slice has {x.shape[1]} dims, model expects {self.cfg.group_input_dim}"
                )
            group_logits.append(classifier(branch(x)))
        return ModelOutput(ensemble_logits=mean_tensors(group_logits), group_logits=group_logits)

    def __call__(self, lgp: np.ndarray, assignment: GroupAssignment) -> ModelOutput:
        """Forward a stacked (N, D_total, T) LGP batch using a group assignment."""
        lgp = np.asarray(lgp, dtype=np.float64)
        if lgp.ndim != 3:
            raise ShapeError("model input must be N x D x T")
        index_lists = assignment.index_lists()
        if assignment.n_groups != self.cfg.n_groups:
            raise ShapeError("assignment group count does not match the model")
        total = sum(assignment.orders)
        if lgp.shape[1] != total:
            raise ShapeError(f"input has {lgp.shape[1]} dims, assignment covers {total}")
        slices = [Tensor(lgp[:, cols, :]) for cols in index_lists]
        return self.forward_slices(slices)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params = []
        for gi, (branch, classifier) in enumerate(zip(self.branches, self.classifiers)):
            for layer_name, layer in branch.sublayers():
                for pname, p in layer.named_parameters():
                    params.append((f"group{gi}.{layer_name}.{pname}", p))
            for pname, p in classifier.named_parameters():
                params.append((f"group{gi}.classifier.{pname}", p))
        return params

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def batchnorms(self) -> list[BatchNorm1dLayer]:
        return [bn for branch in self.branches for bn in branch.batchnorms()]

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        for bn in self.batchnorms():
            bn.state.mode = mode

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def describe(self) -> dict[str, int]:
        """Parameter count per layer; key 'total' is the grand total."""
        breakdown: dict[str, int] = {}
        for name, p in self.named_parameters():
            layer = name.rsplit(".", 1)[0]
            breakdown[layer] = breakdown.get(layer, 0) + p.size
        breakdown["total"] = sum(p.size for p in self.parameters())
        return breakdown

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


def build_model(cfg: ModelCfg, seed: int = 0) -> GroupedResNetEnsemble:
    return GroupedResNetEnsemble(cfg, np.random.default_rng(seed))


def score(output: ModelOutput) -> np.ndarray:
    """Log-likelihood-ratio-style score: bonafide logit minus spoof logit."""
    b = output.ensemble_logits.data
    return b[:, 1] - b[:, 0]


def save_checkpoint(
    path: str | Path,
    model: GroupedResNetEnsemble,
    assignment: GroupAssignment,
) -> None:
    """Write parameters, BN running stats, config, and grouping to one npz file."""
    arrays: dict[str, np.ndarray] = {}
    for name, p in model.named_parameters():
        arrays[f"param/{name}"] = p.data
    for gi, branch in enumerate(model.branches):
        for bi, bn in enumerate(branch.batchnorms()):
            arrays[f"bn/group{gi}/{bi}/running_mean"] = bn.state.running_mean
            arrays[f"bn/group{gi}/{bi}/running_var"] = bn.state.running_var
    meta = {
        "version": _CKPT_VERSION,
        "model_cfg": asdict(model.cfg),
        "n_groups": assignment.n_groups,
        "assignment": {str(order): g.tolist() for order, g in assignment.groups.items()},
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[GroupedResNetEnsemble, GroupAssignment]:
    with np.load(path) as data:
        try:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        except KeyError:
            raise FormatError(f"{path}: not a model checkpoint") from None
        if meta.get("version") != _CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        cfg_doc = dict(meta["model_cfg"])
        cfg_doc["block"] = ResidualBlockCfg(**cfg_doc["block"])
        cfg = ModelCfg(**cfg_doc)
        assignment = GroupAssignment(
            groups={int(o): np.asarray(g, dtype=np.int64) for o, g in meta["assignment"].items()},
            n_groups=int(meta["n_groups"]),
        )
        model = build_model(cfg, seed=0)
        for name, p in model.named_parameters():
            key = f"param/{name}"
            if key not in data:
                raise FormatError(f"{path}: checkpoint is missing {key}")
            stored = data[key]
            if stored.shape != p.data.shape:
                raise FormatError(f"{path}: shape mismatch for {key}")
            p.data = stored.astype(np.float64)
        for gi, branch in enumerate(model.branches):
            for bi, bn in enumerate(branch.batchnorms()):
                bn.state.running_mean = data[f"bn/group{gi}/{bi}/running_mean"].astype(np.float64)
                bn.state.running_var = data[f"bn/group{gi}/{bi}/running_var"].astype(np.float64)
    return model, assignment
