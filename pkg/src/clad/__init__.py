"""Contrastive anomaly detection (CLAD) and open-set recognition (CLOSR) for network flows."""

from clad.data import (
    BatchPlan,
    FeatureScaler,
    FlowDataset,
    SplitSpec,
    balanced_batches,
    fit_scaler,
    load_csv,
    split_holdout,
    synth_blobs,
)
from clad.errors import CladError, ConfigError, DataError, NumericError
from clad.inference import (
    CentroidSet,
    closed_set_probs,
    compute_centroid,
    compute_centroids,
    predict_binary,
    predict_osr,
    score_binary,
    score_osr,
)
from clad.losses import (
    BatchView,
    LossConfig,
    bce_loss,
    clad_loss,
    closr_loss,
    contrastive_loss,
    cosine_distance,
    supcon_loss,
)
from clad.metrics import (
    auroc,
    closed_set_report,
    fpr_at_recall,
    normalized_rank,
    open_set_metrics,
    pr_auc,
)
from clad.model import EmbeddingBatch, ModelConfig, NetworkParameters, backward, forward, init_network
from clad.optim import OptimizerState, TrainConfig, adamw_step, lr_at, train

__version__ = "0.1.0"
