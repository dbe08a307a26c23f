"""Instance-wise evaluation of 2D/3D segmentation maps."""

from .cca import BACKEND, CcaStrategy, approximate_instances, connected_components, resolve_auto_strategy
from .evaluator import (
    EdgeCase,
    EdgeCasePolicy,
    EvalConfig,
    InputMode,
    PanopticResult,
    aggregate,
    evaluate,
    evaluate_matched,
    resolve_edge_case,
    sweep_thresholds,
)
from .matching import MatchConfig, Matcher, MatchResult, apply_match, match
from .metrics import MetricKind, assd, build_overlap_table, dsc, global_dsc, iou, surface_voxels
from .volume import (
    BoundingBox,
    LabelMap,
    LabelMapError,
    binarize,
    crop,
    joint_bounding_box,
    load_label_map,
    save_label_map,
    unique_labels,
)

__version__ = "0.1.0"
