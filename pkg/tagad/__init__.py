"""Cross-modal and uni-modal multi-scale contrastive anomaly detection on text-attributed graphs.

Anomalies are planted into a clean graph, text and graph encoders are
trained to agree across modalities and scales, and nodes are scored by how
inconsistent their views remain.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .encoders import BiModalModel, load_checkpoint, save_checkpoint
from .errors import ConfigError, DatasetError, InjectionError, NumericError, TagadError
from .evalkit import EvalReport, auc, average_precision, evaluate, per_type_auc, roc_points
from .featurizer import FrozenFeatures, hashed_features, load_external_features
from .graph import AnomalyType, InjectionLabel, TagGraph, load_dataset, load_dataset_dir, save_dataset
from .injector import InjectionPlan, run_injection
from .objective import build_views, info_nce, joint_loss
from .pipeline import run_pipeline
from .scorer import ScoreRecord, score_nodes
from .synthgen import SynthSpec, generate
from .trainer import grad_check, train

__all__ = [
    "AnomalyType",
    "BiModalModel",
    "ConfigError",
    "DatasetError",
    "EvalReport",
    "FrozenFeatures",
    "InjectionError",
    "InjectionLabel",
    "InjectionPlan",
    "NumericError",
    "RunConfig",
    "ScoreRecord",
    "SynthSpec",
    "TagGraph",
    "TagadError",
    "auc",
    "average_precision",
    "build_views",
    "evaluate",
    "generate",
    "grad_check",
    "hashed_features",
    "info_nce",
    "joint_loss",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_dataset_dir",
    "load_external_features",
    "per_type_auc",
    "roc_points",
    "run_injection",
    "run_pipeline",
    "save_checkpoint",
    "save_dataset",
    "score_nodes",
    "train",
]
