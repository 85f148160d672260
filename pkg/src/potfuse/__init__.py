"""Road pothole classification from fused frozen-backbone image features."""

from .baselines import BaselineConfig, BaselineModel, evaluate_baseline, train_baseline
from .dataset import ImageSample, Manifest, ingest, load_manifest, save_manifest, split, verify
from .errors import (
    DegenerateDataError,
    DegenerateRangeError,
    DimensionError,
    ExtractionError,
    FormatError,
    FusionError,
    PotfuseError,
    UndefinedMetricError,
)
from .estimators import (
    FusedHeadClassifier,
    LinearSVMBaseline,
    LogisticRegressionBaseline,
    MLPBaseline,
)
from .features import (
    BACKBONE_DIMS,
    BACKBONE_ORDER,
    FUSED_DIM,
    BackboneSpec,
    FeatureMatrix,
    StubBackbone,
    extract_dataset,
    extract_one,
    fuse,
    load_features,
    save_features,
    split_fused,
)
from .head import (
    HeadParameters,
    TrainingConfig,
    TrainingHistory,
    load_head,
    predict,
    save_head,
    train,
)
from .metrics import ConfusionCounts, EvalReport, build_report, emit_report, fps_bench, roc_auc
from .preprocess import AugmentPolicy, augment, minmax, normalize, resize
from .viz import Embedding2D, feature_heatmap, pca2, tsne2

__version__ = "0.1.0"
