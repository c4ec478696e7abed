"""Dense float64 tensors with reverse-mode gradients.

Covers exactly the operations the grouped 1-d residual network needs:
convolution, batch normalization, ReLU, max pooling over time, linear
layers, softmax cross-entropy, and the elementwise glue (add, mul, sum,
channel concat, tensor mean).  Each op wires a backward closure onto its
output; ``backward(loss)`` runs the closures in reverse topological order
and then drops the graph, so a fresh forward pass is needed per step.

Everything is double precision and single-threaded per graph, which keeps
forward values bitwise reproducible for identical inputs.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (evaluation / scoring passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._backward = None
        self._prev: tuple[Tensor, ...] = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def sum(self) -> "Tensor":
        return tsum(self)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _tracking(*tensors: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, track: bool) -> Tensor:
    out = Tensor(data, requires_grad=track)
    if track:
        out._prev = parents
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss.

    The graph is consumed: closures and parent links are cleared so the
    tensors can be garbage collected and a stale second call is impossible.
    """
    if loss.data.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss._accumulate(np.ones(()))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()
    for node in topo:
        node._backward = None
        node._prev = ()


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    track = _tracking(a, b)
    out = _result(a.data + b.data, (a, b), None, track)
    if track:
        def _bw():
            if a.requires_grad:
                a._accumulate(out.grad)
            if b.requires_grad:
                b._accumulate(out.grad)
        out._backward = _bw
    return out


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        scalar = float(b)
        track = _tracking(a)
        out = _result(a.data * scalar, (a,), None, track)
        if track:
            def _bw():
                if a.requires_grad:
                    a._accumulate(out.grad * scalar)
            out._backward = _bw
        return out
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    track = _tracking(a, b)
    out = _result(a.data * b.data, (a, b), None, track)
    if track:
        a_data, b_data = a.data, b.data

        def _bw():
            if a.requires_grad:
                a._accumulate(out.grad * b_data)
            if b.requires_grad:
                b._accumulate(out.grad * a_data)

        out._backward = _bw
    return out


def tsum(a: Tensor) -> Tensor:
    track = _tracking(a)
    out = _result(a.data.sum(), (a,), None, track)
    if track:
        def _bw():
            if a.requires_grad:
                a._accumulate(np.broadcast_to(out.grad, a.shape).copy())
        out._backward = _bw
    return out


def relu(a: Tensor) -> Tensor:
    track = _tracking(a)
    mask = a.data > 0
    out = _result(np.where(mask, a.data, 0.0), (a,), None, track)
    if track:
        def _bw():
            if a.requires_grad:
                a._accumulate(out.grad * mask)
        out._backward = _bw
    return out


def concat_channels(tensors: list[Tensor]) -> Tensor:
    """Concatenate N x C_i x T tensors along the channel axis."""
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    for t in tensors:
        if t.ndim != 3:
            raise ShapeError("concat_channels expects N x C x T tensors")
    track = _tracking(*tensors)
    out = _result(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), None, track)
    if track:
        sizes = [t.shape[1] for t in tensors]

        def _bw():
            off = 0
            for t, c in zip(tensors, sizes):
                if t.requires_grad:
                    t._accumulate(out.grad[:, off : off + c, :])
                off += c

        out._backward = _bw
    return out


def mean_tensors(tensors: list[Tensor]) -> Tensor:
    """Elementwise mean of same-shape tensors (the ensemble average)."""
    if not tensors:
        raise ShapeError("mean_tensors needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise ShapeError("mean_tensors requires identical shapes")
    track = _tracking(*tensors)
    n = len(tensors)
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total += t.data
    out = _result(total / n, tuple(tensors), None, track)
    if track:
        def _bw():
            g = out.grad / n
            for t in tensors:
                if t.requires_grad:
                    t._accumulate(g)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# neural network ops


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of N x C_in x T with C_out x C_in x k filters."""
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError("conv1d expects x: N x C_in x T and weight: C_out x C_in x k")
    n, c_in, t = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d channel mismatch: input {c_in}, weight {c_in_w}")
    if k % 2 == 0:
        raise ShapeError("conv1d kernel size must be odd")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d bias must have shape ({c_out},)")
    t_pad = t + 2 * padding
    t_out = (t_pad - k) // stride + 1
    if t_out < 1:
        raise ShapeError("conv1d output length would be < 1")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(n, c_in, t_out, k), strides=(s0, s1, s2 * stride, s2), writeable=False
    )
    # (N*T_out, C_in*k) @ (C_in*k, C_out) does the whole contraction in one matmul
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(n * t_out, c_in * k)
    w2 = weight.data.reshape(c_out, c_in * k)
    y = (cols @ w2.T).reshape(n, t_out, c_out).transpose(0, 2, 1) + bias.data[None, :, None]

    track = _tracking(x, weight, bias)
    out = _result(y, (x, weight, bias), None, track)
    if track:
        def _bw():
            g = out.grad  # N x C_out x T_out
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 2)))
            g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * t_out, c_out)
            if weight.requires_grad:
                weight._accumulate((g2.T @ cols).reshape(c_out, c_in, k))
            if x.requires_grad:
                gcols = (g2 @ w2).reshape(n, t_out, c_in, k).transpose(0, 2, 1, 3)
                gxp = np.zeros((n, c_in, t_pad))
                for j in range(k):
                    gxp[:, :, j : j + stride * t_out : stride] += gcols[:, :, :, j]
                x._accumulate(gxp[:, :, padding : t_pad - padding] if padding else gxp)

        out._backward = _bw
    return out


class BatchNormState:
    """Learnable scale/shift plus running statistics for one channel axis."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.mode = "train"

    @property
    def channels(self) -> int:
        return self.gamma.data.shape[0]


def batchnorm1d(x: Tensor, state: BatchNormState) -> Tensor:
    """Normalize N x C x T per channel; batch stats in train mode, running in eval."""
    if x.ndim != 3:
        raise ShapeError("batchnorm1d expects N x C x T input")
    n, c, t = x.shape
    if c != state.channels:
        raise ShapeError(f"batchnorm1d channel mismatch: input {c}, state {state.channels}")
    gamma, beta = state.gamma, state.beta
    if state.mode == "train":
        m = n * t
        if m < 2:
            raise ShapeError("train-mode batchnorm needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mean
        state.running_var = (1 - state.momentum) * state.running_var + state.momentum * (
            var * m / (m - 1)
        )
    elif state.mode == "eval":
        mean = state.running_mean
        var = state.running_var
    else:
        raise ValueError(f"unknown batchnorm mode {state.mode!r}")
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mean[None, :, None]) * inv_std[None, :, None]
    y = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    track = _tracking(x, gamma, beta)
    out = _result(y, (x, gamma, beta), None, track)
    if track:
        train_mode = state.mode == "train"

        def _bw():
            g = out.grad
            if gamma.requires_grad:
                gamma._accumulate((g * xhat).sum(axis=(0, 2)))
            if beta.requires_grad:
                beta._accumulate(g.sum(axis=(0, 2)))
            if x.requires_grad:
                ghat = g * gamma.data[None, :, None]
                if train_mode:
                    gx = (
                        ghat
                        - ghat.mean(axis=(0, 2), keepdims=True)
                        - xhat * (ghat * xhat).mean(axis=(0, 2), keepdims=True)
                    ) * inv_std[None, :, None]
                else:
                    gx = ghat * inv_std[None, :, None]
                x._accumulate(gx)

        out._backward = _bw
    return out


def max_pool_time(x: Tensor) -> Tensor:
    """Adaptive max over the time axis: N x C x T -> N x C.

    Gradient is routed to the earliest maximum when there are ties.
    """
    if x.ndim != 3:
        raise ShapeError("max_pool_time expects N x C x T input")
    n, c, t = x.shape
    idx = x.data.argmax(axis=2)  # first occurrence on ties
    pooled = np.take_along_axis(x.data, idx[:, :, None], axis=2)[:, :, 0]
    track = _tracking(x)
    out = _result(pooled, (x,), None, track)
    if track:
        def _bw():
            if x.requires_grad:
                gx = np.zeros((n, c, t))
                gx[np.arange(n)[:, None], np.arange(c)[None, :], idx] = out.grad
                x._accumulate(gx)
        out._backward = _bw
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of N x F rows with an O x F weight matrix."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError("linear expects x: N x F and weight: O x F")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear feature mismatch: input {x.shape[1]}, weight {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError("linear bias shape mismatch")
    y = x.data @ weight.data.T + bias.data[None, :]
    track = _tracking(x, weight, bias)
    out = _result(y, (x, weight, bias), None, track)
    if track:
        def _bw():
            g = out.grad
            if weight.requires_grad:
                weight._accumulate(g.T @ x.data)
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=0))
            if x.requires_grad:
                x._accumulate(g @ weight.data)
        out._backward = _bw
    return out


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits) at the true class."""
    if logits.ndim != 2:
        raise ShapeError("softmax_cross_entropy expects N x n_classes logits")
    n, n_classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},)")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    track = _tracking(logits)
    out = _result(np.asarray(loss), (logits,), None, track)
    if track:
        probs = np.exp(log_probs)

        def _bw():
            if logits.requires_grad:
                g = probs.copy()
                g[np.arange(n), labels] -= 1.0
                logits._accumulate(g * (out.grad / n))
        out._backward = _bw
    return out
