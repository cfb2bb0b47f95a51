"""Scalable inception graph networks: precomputed graph diffusions + a shallow classifier."""

from .graph import Graph, add_self_loops, degrees, load_edge_list, spmm, symmetrize
from .operators import OperatorKind, OperatorSpec, build_operator, sign_specs
from .precompute import FeatureBundle, load_bundle, precompute_features, save_bundle, slice_rows
from .nn import ModelConfig, SignModel, init_model, predict
from .training import Splits, TrainConfig, evaluate, micro_f1, train
from .datagen import SbmSpec, sbm_generate
from .analysis import histogram, triangle_row_std

__version__ = "0.1.0"

__all__ = [
    "Graph", "add_self_loops", "degrees", "load_edge_list", "spmm", "symmetrize",
    "OperatorKind", "OperatorSpec", "build_operator", "sign_specs",
    "FeatureBundle", "load_bundle", "precompute_features", "save_bundle", "slice_rows",
    "ModelConfig", "SignModel", "init_model", "predict",
    "Splits", "TrainConfig", "evaluate", "micro_f1", "train",
    "SbmSpec", "sbm_generate", "histogram", "triangle_row_std",
]
