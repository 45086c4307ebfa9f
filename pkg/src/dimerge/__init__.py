"""Training-free checkpoint merging with direction- and magnitude-aware
column weights, classical merging baselines, scope control, and residual
diagnostics. Operates directly on serialized weight tensors; no ML runtime
required.
"""

from .align import AlignedTriple, AlignmentReport, align_triple
from .baselines import (
    BaselineParams,
    breadcrumbs_transform,
    dare_transform,
    task_arithmetic,
    ties_merge,
    unit_uniforms,
)
from .diagnostics import HeatmapRow, ModuleKeySchema, diagnose, export_csv, export_json
from .errors import (
    AlignmentError,
    ConfigError,
    DimergeError,
    FormatError,
    NumericError,
    RemapCollisionError,
    ShapeError,
    ShardError,
)
from .geometry import (
    ColumnDecomposition,
    DeviationProfile,
    HeterogeneityStats,
    cross_alignment,
    decompose,
    deviation_profile,
    direction_deviation,
    magnitude_deviation,
    residual_identity_terms,
    tensor_stats,
)
from .merge import MergeConfig, MergeReport, merge_checkpoint, merge_matrix, merge_vector
from .records import DType, TensorRecord
from .salience import (
    AggregationKind,
    EstimatorKind,
    SalienceWeights,
    aggregate_branches,
    elementwise_salience,
    estimate_salience,
    rank_normalize,
    salience_pair,
)
from .scope import ScopeFilter, parse_layer_index
from .store import Checkpoint, Role, load_checkpoint, remap_keys, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AggregationKind",
    "AlignedTriple",
    "AlignmentError",
    "AlignmentReport",
    "BaselineParams",
    "Checkpoint",
    "ColumnDecomposition",
    "ConfigError",
    "DType",
    "DeviationProfile",
    "DimergeError",
    "EstimatorKind",
    "FormatError",
    "HeatmapRow",
    "HeterogeneityStats",
    "MergeConfig",
    "MergeReport",
    "ModuleKeySchema",
    "NumericError",
    "RemapCollisionError",
    "Role",
    "SalienceWeights",
    "ScopeFilter",
    "ShapeError",
    "ShardError",
    "TensorRecord",
    "aggregate_branches",
    "align_triple",
    "breadcrumbs_transform",
    "cross_alignment",
    "dare_transform",
    "decompose",
    "deviation_profile",
    "diagnose",
    "direction_deviation",
    "elementwise_salience",
    "estimate_salience",
    "export_csv",
    "export_json",
    "load_checkpoint",
    "magnitude_deviation",
    "merge_checkpoint",
    "merge_matrix",
    "merge_vector",
    "parse_layer_index",
    "rank_normalize",
    "remap_keys",
    "residual_identity_terms",
    "salience_pair",
    "save_checkpoint",
    "task_arithmetic",
    "tensor_stats",
    "ties_merge",
    "unit_uniforms",
]
