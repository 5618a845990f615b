"""Non-neural core of an RGB-D object perception pipeline."""

from .core_types import (
    ColorImage,
    DepthMap,
    Detection,
    FeatureMapStack,
    LabelMap,
    ProbabilityMap,
    WeightMap,
)
from .depth_fusion import FusionConfig, fuse
from .evaluation import (
    DatasetIndex,
    GroundTruthScene,
    distillation_loss,
    iou,
    location_f1,
    mean_average_precision,
    pixel_f1,
    stratified_folds,
)
from .geometry import CameraModel, back_project, estimate_normals, reproject_depth
from .hha_encode import HhaConfig, encode_hha, encode_raw3
from .posterior_fusion import CombineConfig, argmax_labels, combine, render_detection_map
from .region_proposals import ProposalConfig, RegionLabeling, connected_components, extract_boxes
from .tgv_densify import DensifyResult, TgvConfig, build_tensor, densify, to_grayscale

__version__ = "0.1.0"
