"""Synthetic-speech detection with multi-order GMM log-probability features
and grouped 1-d residual network ensembles."""

from .corpus import (
    AudioClip,
    Manifest,
    UtteranceLabel,
    build_manifest,
    label_index,
    parse_protocol,
    read_wav,
    serialize_protocol,
)
from .errors import (
    ConfigError,
    FormatError,
    LgpnetError,
    ManifestError,
    ProtocolError,
    ShapeError,
    UnsupportedAudioError,
)
from .evaluation import (
    EerResult,
    ScoreRecord,
    compute_eer,
    compute_eer_records,
    score_file_read,
    score_file_write,
)
from .gmm import (
    EmConfig,
    Gmm,
    Lineage,
    LineageNode,
    binary_split,
    em_fit,
    lgp_transform,
    load_gmm,
    log_likelihood,
    save_gmm,
    train_by_splitting,
)
from .lfcc import (
    FeatureMatrix,
    LfccConfig,
    fix_length,
    frame_and_window,
    lfcc_extract,
    linear_filterbank,
    power_spectrum,
    read_feature_record,
    write_feature_record,
)
from .model import (
    GroupedResNetEnsemble,
    ModelCfg,
    ModelOutput,
    ResidualBlockCfg,
    build_model,
    load_checkpoint,
    save_checkpoint,
    score,
)
from .multiscale import (
    GmmBank,
    GroupAssignment,
    extract_multiscale_lgp,
    group_slices,
    lineage_grouping,
    load_assignment,
    load_bank,
    manifest_lgp_features,
    random_grouping,
    save_assignment,
    save_bank,
    utterance_lgp,
)
from .tensor import (
    BatchNormState,
    Tensor,
    backward,
    batchnorm1d,
    concat_channels,
    conv1d,
    linear,
    max_pool_time,
    mean_tensors,
    no_grad,
    relu,
    softmax_cross_entropy,
)
from .training import (
    AdamState,
    TrainConfig,
    adam_step,
    ensemble_aware_loss,
    ensemble_ce_loss,
    evaluate_loss,
    predict_logits,
    reduce_on_plateau,
    train,
)

__version__ = "0.1.0"
