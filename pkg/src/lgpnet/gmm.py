"""Diagonal-covariance GMMs trained by binary splitting plus EM.

Training boots a single Gaussian up to the target order by repeatedly
splitting every component in two and re-estimating with EM.  The split
history is kept as an explicit binary tree (the lineage) because the
downstream grouping step assigns components that descend from the same
branch to the same group.

The per-frame log Gaussian probability (LGP) transform maps a feature
vector x to one value per component:

    y_i = -1/2 x' inv(S_i) x + x' inv(S_i) mu_i

i.e. the log density of component i without its x-independent terms.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .lfcc import FeatureMatrix

_GMM_MAGIC = b"GMM1"
_GMM_VERSION = 1

_LOG_2PI = np.log(2.0 * np.pi)

# Absolute lower bound applied on top of the relative variance floor so
# constant data dimensions cannot produce zero variances.
_ABS_VAR_FLOOR = 1e-12


@dataclass
class EmConfig:
    n_iterations: int = 30
    variance_floor: float = 1e-3  # relative to the global per-dimension data variance
    split_epsilon: float = 0.1

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ConfigError("n_iterations must be >= 1")
        if self.variance_floor <= 0 or self.split_epsilon <= 0:
            raise ConfigError("variance_floor and split_epsilon must be positive")


@dataclass
class LineageNode:
    """One node of the binary split tree; leaves carry a component index."""

    node_id: int
    parent: int | None
    component_index: int | None  # None for internal nodes


class Lineage:
    """Binary split tree over GMM components.

    Nodes are stored in creation order; the two children created when a
    component splits are appended left (minus perturbation) then right, so
    walking children in id order is a left-to-right tree walk.
    """

    def __init__(self, nodes: list[LineageNode]):
        self.nodes = nodes
        self._by_id = {n.node_id: n for n in nodes}
        self._children: dict[int, list[int]] = {n.node_id: [] for n in nodes}
        for n in nodes:
            if n.parent is not None:
                self._children[n.parent].append(n.node_id)
        for node_id, kids in self._children.items():
            if len(kids) not in (0, 2):
                raise ValueError(f"lineage node {node_id} has {len(kids)} children, expected 0 or 2")

    @classmethod
    def single(cls) -> "Lineage":
        return cls([LineageNode(node_id=0, parent=None, component_index=0)])

    def children(self, node_id: int) -> list[int]:
        return list(self._children[node_id])

    @property
    def root(self) -> int:
        return next(n.node_id for n in self.nodes if n.parent is None)

    def leaves(self) -> list[LineageNode]:
        return [n for n in self.nodes if not self._children[n.node_id]]

    def n_leaves(self) -> int:
        return len(self.leaves())

    def level(self, size: int) -> list[int]:
        """Node ids of the tree level holding exactly `size` nodes, left to right."""
        frontier = [self.root]
        while len(frontier) < size:
            nxt = []
            for node_id in frontier:
                kids = self._children[node_id]
                if not kids:
                    raise ValueError(f"lineage has no level of size {size}")
                nxt.extend(kids)
            frontier = nxt
        if len(frontier) != size:
            raise ValueError(f"lineage has no level of size {size}")
        return frontier

    def leaf_components_under(self, node_id: int) -> list[int]:
        """Component indices of all leaves in the subtree of node_id, left to right."""
        out = []
        stack = [node_id]
        while stack:
            nid = stack.pop()
            kids = self._children[nid]
            if kids:
                stack.extend(reversed(kids))
            else:
                out.append(self._by_id[nid].component_index)
        return out

    def split_all_leaves(self) -> "Lineage":
        """New lineage where every leaf (component i) gains children 2i and 2i+1."""
        nodes = [LineageNode(n.node_id, n.parent, n.component_index) for n in self.nodes]
        leaves = sorted(
            (n for n in nodes if self._children[n.node_id] == []),
            key=lambda n: n.component_index,
        )
        next_id = len(nodes)
        for leaf in leaves:
            comp = leaf.component_index
            leaf.component_index = None
            nodes.append(LineageNode(node_id=next_id, parent=leaf.node_id, component_index=2 * comp))
            nodes.append(
                LineageNode(node_id=next_id + 1, parent=leaf.node_id, component_index=2 * comp + 1)
            )
            next_id += 2
        return Lineage(nodes)


@dataclass(eq=False)
class Gmm:
    """Diagonal-covariance mixture with its binary-split lineage."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    lineage: Lineage = field(default_factory=Lineage.single)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        k = self.weights.shape[0]
        if k & (k - 1):
            raise ValueError(f"component count must be a power of 2, got {k}")
        if self.means.shape[0] != k or self.variances.shape != self.means.shape:
            raise ShapeError("weights/means/variances shapes are inconsistent")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {self.weights.sum()!r}")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        if self.lineage.n_leaves() != k:
            raise ValueError("lineage leaf count does not match component count")

    @property
    def order(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _component_log_densities(data: np.ndarray, gmm: Gmm) -> np.ndarray:
    """(N, K) matrix of per-component log densities log N(x_n; mu_i, S_i)."""
    prec = 1.0 / gmm.variances  # (K, D)
    log_det = np.sum(np.log(gmm.variances), axis=1)  # (K,)
    # Quadratic form expanded so everything is a matmul:
    #   sum_d (x_d - mu_d)^2 / s_d = x^2 . prec - 2 x . (mu * prec) + sum mu^2 prec
    quad = (
        (data**2) @ prec.T
        - 2.0 * data @ (gmm.means * prec).T
        + np.sum(gmm.means**2 * prec, axis=1)
    )
    return -0.5 * (quad + gmm.dim * _LOG_2PI + log_det)


def log_likelihood(gmm: Gmm, data: np.ndarray, chunk: int = 16384) -> float:
    """Total log-likelihood of the data under the mixture."""
    data = np.asarray(data, dtype=np.float64)
    log_w = np.log(gmm.weights)
    total = 0.0
    for lo in range(0, data.shape[0], chunk):
        block = _component_log_densities(data[lo : lo + chunk], gmm) + log_w
        m = block.max(axis=1, keepdims=True)
        total += float(np.sum(m[:, 0] + np.log(np.sum(np.exp(block - m), axis=1))))
    return total


def _floor_vector(data: np.ndarray, cfg: EmConfig) -> np.ndarray:
    return np.maximum(cfg.variance_floor * data.var(axis=0), _ABS_VAR_FLOOR)


def em_fit(gmm: Gmm, data: np.ndarray, cfg: EmConfig, chunk: int = 16384) -> Gmm:
    """Re-estimate a GMM with cfg.n_iterations of EM, keeping the lineage.

    Responsibilities are computed in log space with log-sum-exp.  A
    component that collects (numerically) zero responsibility mass is
    reseeded at the worst-modeled data point and given the global data
    variance so the component count never shrinks.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n < gmm.order:
        raise ValueError(f"need at least K={gmm.order} frames, got {n}")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data contains non-finite values")
    floor = _floor_vector(data, cfg)
    global_var = np.maximum(data.var(axis=0), _ABS_VAR_FLOOR)

    weights = gmm.weights.copy()
    means = gmm.means.copy()
    variances = gmm.variances.copy()
    for _ in range(cfg.n_iterations):
        model = Gmm(weights, means, variances, gmm.lineage)
        log_w = np.log(model.weights)
        nk = np.zeros(model.order)
        sum_x = np.zeros((model.order, model.dim))
        sum_x2 = np.zeros((model.order, model.dim))
        point_ll = np.empty(n)
        for lo in range(0, n, chunk):
            block = data[lo : lo + chunk]
            log_joint = _component_log_densities(block, model) + log_w
            m = log_joint.max(axis=1, keepdims=True)
            norm = m[:, 0] + np.log(np.sum(np.exp(log_joint - m), axis=1))
            point_ll[lo : lo + block.shape[0]] = norm
            resp = np.exp(log_joint - norm[:, None])
            nk += resp.sum(axis=0)
            sum_x += resp.T @ block
            sum_x2 += resp.T @ block**2

        empty = nk < 1e-10
        occupied = ~empty
        weights = np.where(occupied, nk / n, 0.0)
        means = np.where(occupied[:, None], sum_x / np.maximum(nk, 1e-300)[:, None], means)
        variances = np.where(
            occupied[:, None],
            sum_x2 / np.maximum(nk, 1e-300)[:, None] - means**2,
            variances,
        )
        if np.any(empty):
            worst = int(np.argmin(point_ll))
            for i in np.flatnonzero(empty):
                means[i] = data[worst]
                variances[i] = global_var
                weights[i] = 1.0 / n
        variances = np.maximum(variances, floor)
        weights = weights / weights.sum()
    return Gmm(weights, means, variances, gmm.lineage)


def binary_split(gmm: Gmm, cfg: EmConfig) -> Gmm:
    """Double the order: component i becomes children with means mu_i -+ eps*sigma_i.

    Children inherit the parent variance and half its weight; the new
    components land at indices 2i (minus) and 2i+1 (plus), mirroring the
    left/right children recorded in the lineage.
    """
    k, d = gmm.means.shape
    sigma = np.sqrt(gmm.variances)
    means = np.empty((2 * k, d))
    means[0::2] = gmm.means - cfg.split_epsilon * sigma
    means[1::2] = gmm.means + cfg.split_epsilon * sigma
    variances = np.repeat(gmm.variances, 2, axis=0)
    weights = np.repeat(gmm.weights / 2.0, 2)
    return Gmm(weights, means, variances, gmm.lineage.split_all_leaves())


def train_by_splitting(data: np.ndarray, target_order: int, cfg: EmConfig | None = None) -> list[Gmm]:
    """Boot a GMM from one component to target_order, returning every order.

    The returned list holds the fitted models of orders 1, 2, 4, ...,
    target_order; a multi-order bank is just a selection of these.
    """
    cfg = cfg or EmConfig()
    if target_order < 1 or target_order & (target_order - 1):
        raise ConfigError(f"target order must be a power of 2, got {target_order}")
    data = np.asarray(data, dtype=np.float64)
    floor = _floor_vector(data, cfg)
    start = Gmm(
        weights=np.array([1.0]),
        means=data.mean(axis=0, keepdims=True),
        variances=np.maximum(data.var(axis=0, keepdims=True), floor),
    )
    models = [start]
    while models[-1].order < target_order:
        grown = binary_split(models[-1], cfg)
        models.append(em_fit(grown, data, cfg))
    return models


def lgp_transform(gmm: Gmm, feat: FeatureMatrix, normalize: bool = True) -> FeatureMatrix:
    """Per-frame log Gaussian probability features under one GMM.

    Each frame x yields K values  y_i = -1/2 x' inv(S_i) x + x' inv(S_i) mu_i.
    With normalize=True every output dimension is mean/variance normalized
    over the utterance's frames; dimensions with zero variance map to 0.
    """
    if feat.n_dims != gmm.dim:
        raise ShapeError(f"feature dim {feat.n_dims} does not match GMM dim {gmm.dim}")
    x = feat.values
    prec = 1.0 / gmm.variances
    y = -0.5 * (x**2) @ prec.T + x @ (gmm.means * prec).T
    if normalize:
        mean = y.mean(axis=0)
        std = y.std(axis=0)
        nonzero = std > 0
        y = np.where(nonzero[None, :], (y - mean[None, :]) / np.where(nonzero, std, 1.0)[None, :], 0.0)
    return FeatureMatrix(values=y, dim_kind="lgp")


def save_gmm(gmm: Gmm, path: str | Path) -> None:
    """Serialize to the binary layout documented in the README."""
    with open(path, "wb") as fh:
        fh.write(_GMM_MAGIC)
        fh.write(struct.pack("<III", _GMM_VERSION, gmm.dim, gmm.order))
        fh.write(np.ascontiguousarray(gmm.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(gmm.means, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(gmm.variances, dtype="<f8").tobytes())
        nodes = gmm.lineage.nodes
        fh.write(struct.pack("<I", len(nodes)))
        for n in nodes:
            parent = -1 if n.parent is None else n.parent
            comp = -1 if n.component_index is None else n.component_index
            fh.write(struct.pack("<qqq", n.node_id, parent, comp))


def load_gmm(path: str | Path) -> Gmm:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != _GMM_MAGIC:
        raise FormatError(f"{path}: not a GMM model file")
    version, dim, order = struct.unpack("<III", raw[4:16])
    if version != _GMM_VERSION:
        raise FormatError(f"{path}: unsupported GMM file version {version}")
    off = 16
    need = order * 8 + 2 * order * dim * 8 + 4
    if len(raw) < off + need:
        raise FormatError(f"{path}: truncated GMM file")
    weights = np.frombuffer(raw, dtype="<f8", count=order, offset=off).copy()
    off += order * 8
    means = np.frombuffer(raw, dtype="<f8", count=order * dim, offset=off).reshape(order, dim).copy()
    off += order * dim * 8
    variances = (
        np.frombuffer(raw, dtype="<f8", count=order * dim, offset=off).reshape(order, dim).copy()
    )
    off += order * dim * 8
    (n_nodes,) = struct.unpack("<I", raw[off : off + 4])
    off += 4
    if len(raw) < off + 24 * n_nodes:
        raise FormatError(f"{path}: truncated GMM lineage")
    nodes = []
    for _ in range(n_nodes):
        node_id, parent, comp = struct.unpack("<qqq", raw[off : off + 24])
        off += 24
        nodes.append(
            LineageNode(
                node_id=node_id,
                parent=None if parent < 0 else parent,
                component_index=None if comp < 0 else comp,
            )
        )
    return Gmm(weights, means, variances, Lineage(nodes))
