"""Multi-order LGP features and their partition into groups.

A bank of GMMs with increasing orders produces one LGP block per order;
the blocks are concatenated along the feature axis (64+128+256+512+1024 =
1984 dims for the default bank).  Components are then assigned to G groups
either at random or by their split lineage: components descending from the
same branch of the binary-split tree land in the same group.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import AudioClip, Manifest, label_index
from .errors import ConfigError, ShapeError
from .gmm import Gmm, lgp_transform, load_gmm, save_gmm
from .lfcc import FeatureMatrix, LfccConfig, fix_length, lfcc_extract


@dataclass
class GmmBank:
    gmms: list[Gmm]

    def __post_init__(self):
        orders = [g.order for g in self.gmms]
        if not orders:
            raise ValueError("bank must hold at least one GMM")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise ValueError(f"bank orders must be strictly increasing, got {orders}")
        dims = {g.dim for g in self.gmms}
        if len(dims) != 1:
            raise ShapeError(f"bank GMMs disagree on feature dimension: {sorted(dims)}")

    @property
    def orders(self) -> list[int]:
        return [g.order for g in self.gmms]

    @property
    def total_components(self) -> int:
        return sum(self.orders)

    @property
    def dim(self) -> int:
        return self.gmms[0].dim


@dataclass
class GroupAssignment:
    """Per-order map from component index to group id in 0..n_groups-1."""

    groups: dict[int, np.ndarray]  # order -> (order,) int array
    n_groups: int

    def __post_init__(self):
        for order, g in self.groups.items():
            g = np.asarray(g, dtype=np.int64)
            self.groups[order] = g
            if g.shape != (order,):
                raise ShapeError(f"assignment for order {order} has shape {g.shape}")
            counts = np.bincount(g, minlength=self.n_groups)
            if counts.size > self.n_groups or np.any(counts != order // self.n_groups):
                raise ValueError(f"assignment for order {order} is not balanced over {self.n_groups} groups")

    @property
    def orders(self) -> list[int]:
        return sorted(self.groups)

    def group_dim(self) -> int:
        return sum(self.orders) // self.n_groups

    def index_lists(self) -> list[np.ndarray]:
        """Concatenated-feature column indices per group.

        Columns of the concatenated LGP matrix are ordered by ascending GMM
        order, then component index; within each group the same ordering is
        kept, which pins the row layout of every group slice.
        """
        offsets = {}
        off = 0
        for order in self.orders:
            offsets[order] = off
            off += order
        out = []
        for g in range(self.n_groups):
            cols = []
            for order in self.orders:
                comps = np.flatnonzero(self.groups[order] == g)
                cols.append(comps + offsets[order])
            out.append(np.concatenate(cols))
        return out


def _check_grouping_args(bank: GmmBank, n_groups: int) -> None:
    if n_groups < 1 or n_groups & (n_groups - 1):
        raise ConfigError(f"group count must be a power of 2, got {n_groups}")
    low = min(bank.orders)
    if low < n_groups:
        raise ConfigError(f"every GMM order must be >= the group count ({low} < {n_groups})")


def lineage_grouping(bank: GmmBank, n_groups: int) -> GroupAssignment:
    """Group components by their shared ancestor in the split tree.

    For each GMM the lineage is descended to the level with exactly
    n_groups nodes (left to right); all leaf components under the g-th
    node form group g.
    """
    _check_grouping_args(bank, n_groups)
    groups = {}
    for gmm in bank.gmms:
        assign = np.full(gmm.order, -1, dtype=np.int64)
        for g, node_id in enumerate(gmm.lineage.level(n_groups)):
            for comp in gmm.lineage.leaf_components_under(node_id):
                assign[comp] = g
        groups[gmm.order] = assign
    return GroupAssignment(groups=groups, n_groups=n_groups)


def random_grouping(bank: GmmBank, n_groups: int, seed: int) -> GroupAssignment:
    """Uniformly random balanced partition of each order's components."""
    _check_grouping_args(bank, n_groups)
    rng = np.random.default_rng(seed)
    groups = {}
    for gmm in bank.gmms:
        perm = rng.permutation(gmm.order)
        assign = np.empty(gmm.order, dtype=np.int64)
        per_group = gmm.order // n_groups
        for g in range(n_groups):
            assign[perm[g * per_group : (g + 1) * per_group]] = g
        groups[gmm.order] = assign
    return GroupAssignment(groups=groups, n_groups=n_groups)


def extract_multiscale_lgp(bank: GmmBank, lfcc_feat: FeatureMatrix) -> FeatureMatrix:
    """Concatenate each order's normalized LGP block along the feature axis."""
    blocks = [lgp_transform(g, lfcc_feat).values for g in bank.gmms]
    return FeatureMatrix(values=np.hstack(blocks), dim_kind="lgp")


def group_slices(assignment: GroupAssignment, feat: FeatureMatrix) -> list[FeatureMatrix]:
    """Split a concatenated LGP matrix into its G group slices."""
    total = sum(assignment.orders)
    if feat.n_dims != total:
        raise ShapeError(f"feature dim {feat.n_dims} does not match assignment total {total}")
    return [
        FeatureMatrix(values=feat.values[:, cols], dim_kind="lgp_group")
        for cols in assignment.index_lists()
    ]


def save_assignment(assignment: GroupAssignment, path: str | Path) -> None:
    doc = {
        "n_groups": assignment.n_groups,
        "groups": {str(order): g.tolist() for order, g in assignment.groups.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_assignment(path: str | Path) -> GroupAssignment:
    doc = json.loads(Path(path).read_text())
    groups = {int(order): np.asarray(g, dtype=np.int64) for order, g in doc["groups"].items()}
    return GroupAssignment(groups=groups, n_groups=int(doc["n_groups"]))


def save_bank(bank: GmmBank, directory: str | Path) -> None:
    """One model file per order, named gmm_<order>.bin."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for gmm in bank.gmms:
        save_gmm(gmm, directory / f"gmm_{gmm.order:05d}.bin")


def load_bank(directory: str | Path) -> GmmBank:
    directory = Path(directory)
    paths = sorted(directory.glob("gmm_*.bin"))
    if not paths:
        raise FileNotFoundError(f"no gmm_*.bin files under {directory}")
    return GmmBank(gmms=[load_gmm(p) for p in paths])


def utterance_lgp(
    clip: AudioClip,
    bank: GmmBank,
    lfcc_cfg: LfccConfig | None = None,
    target_frames: int = 400,
) -> FeatureMatrix:
    """Waveform -> fixed-length LFCC -> concatenated multi-order LGP."""
    feat = fix_length(lfcc_extract(clip, lfcc_cfg), target_frames)
    return extract_multiscale_lgp(bank, feat)


def manifest_lgp_features(
    manifest: Manifest,
    bank: GmmBank,
    lfcc_cfg: LfccConfig | None = None,
    target_frames: int = 400,
    reader=None,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Stacked (N, D, T) LGP features, (N,) labels, and utt_ids for a manifest.

    The feature axis comes first within each utterance (channels-first)
    because that is the layout the 1-d convolution stack consumes.
    `reader` can replace corpus.read_wav in tests.
    """
    from .corpus import read_wav

    reader = reader or read_wav
    feats = []
    labels = []
    utt_ids = []
    for wav_path, label in manifest.entries:
        clip = reader(wav_path, utt_id=label.utt_id)
        lgp = utterance_lgp(clip, bank, lfcc_cfg, target_frames)
        feats.append(lgp.values.T)
        labels.append(label_index(label))
        utt_ids.append(label.utt_id)
    return np.stack(feats), np.asarray(labels, dtype=np.int64), utt_ids
