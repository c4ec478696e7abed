import numpy as np
import pytest

from helpers import build_synth_corpus

from lgpnet.corpus import build_manifest, parse_protocol
from lgpnet.gmm import EmConfig, train_by_splitting
from lgpnet.lfcc import LfccConfig, lfcc_extract
from lgpnet.multiscale import GmmBank, lineage_grouping, manifest_lgp_features


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """Small two-class corpus on disk: 8 tone + 8 noise waveforms."""
    root = tmp_path_factory.mktemp("corpus")
    protocol, audio_dir = build_synth_corpus(root, n_per_class=8, seed=11)
    return protocol, audio_dir


@pytest.fixture(scope="session")
def tiny_pipeline(synth_corpus):
    """Manifest + order-{8,16} bank + G=2 lineage grouping + stacked LGP features."""
    protocol, audio_dir = synth_corpus
    manifest = build_manifest(parse_protocol(protocol), audio_dir)
    lfcc_cfg = LfccConfig()
    frames = np.vstack(
        [lfcc_extract_from(path, lfcc_cfg) for path, _ in manifest.entries]
    )
    models = train_by_splitting(frames, 16, EmConfig(n_iterations=4))
    bank = GmmBank(gmms=[m for m in models if m.order in (8, 16)])
    assignment = lineage_grouping(bank, 2)
    feats, labels, utt_ids = manifest_lgp_features(
        manifest, bank, lfcc_cfg, target_frames=50
    )
    return {
        "manifest": manifest,
        "bank": bank,
        "assignment": assignment,
        "feats": feats,
        "labels": labels,
        "utt_ids": utt_ids,
        "lfcc_cfg": lfcc_cfg,
    }


def lfcc_extract_from(path, cfg):
    from lgpnet.corpus import read_wav

    return lfcc_extract(read_wav(path), cfg).values
