"""padstream: two-stream video anti-spoofing on registered clips.

Public surface re-exports the pieces most callers need; submodules stay
importable for everything else.
"""

from .backbone import (
    BackboneConfig,
    FeatureFusion,
    FeaturePyramid,
    PyramidBackbone,
    PyramidEnricher,
    PyramidPooling,
    count_parameters,
    init_backbone,
)
from .config import RunConfig, build_diff_model_from, build_multi_model_from, load_config
from .dataset import KEYPOINT_NAMES, LABELS, RawClip, read_clip, split_clip_ids, write_clip
from .diff_head import DiffModel, adapt_first_layer, build_diff_model
from .errors import PadstreamError
from .metrics import (
    FusedScore,
    MetricsReport,
    ScorePair,
    acer_from_rates,
    compute_metrics,
    decide,
    fuse_scores,
    sweep_threshold,
)
from .preprocess import (
    DiffStack,
    FrameSequence,
    PreprocessConfig,
    compute_crop_box,
    compute_diff_stack,
    difference_deviation,
    preprocess_clip,
    select_keyframes,
)
from .registration import RegistrationTransform, fit_registration, warp_frame
from .synthetic import SynthConfig, generate_clip, generate_dataset
from .temporal_head import MultiFrameModel, build_multiframe_model, pool_levels
from .training import (
    HyperParams,
    PreparedClip,
    TrainHistory,
    augment_spatial,
    augment_temporal,
    evaluate_models,
    prepare_clips,
    train_branch,
)

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "DiffModel",
    "DiffStack",
    "FeatureFusion",
    "FeaturePyramid",
    "FrameSequence",
    "FusedScore",
    "HyperParams",
    "KEYPOINT_NAMES",
    "LABELS",
    "MetricsReport",
    "MultiFrameModel",
    "PadstreamError",
    "PreparedClip",
    "PreprocessConfig",
    "PyramidBackbone",
    "PyramidEnricher",
    "PyramidPooling",
    "RawClip",
    "RegistrationTransform",
    "RunConfig",
    "ScorePair",
    "SynthConfig",
    "TrainHistory",
    "acer_from_rates",
    "adapt_first_layer",
    "augment_spatial",
    "augment_temporal",
    "build_diff_model",
    "build_diff_model_from",
    "build_multi_model_from",
    "build_multiframe_model",
    "compute_crop_box",
    "compute_diff_stack",
    "compute_metrics",
    "count_parameters",
    "decide",
    "difference_deviation",
    "evaluate_models",
    "fit_registration",
    "fuse_scores",
    "generate_clip",
    "generate_dataset",
    "init_backbone",
    "load_config",
    "pool_levels",
    "prepare_clips",
    "preprocess_clip",
    "read_clip",
    "select_keyframes",
    "split_clip_ids",
    "sweep_threshold",
    "train_branch",
    "warp_frame",
    "write_clip",
]
