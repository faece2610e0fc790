"""Static IR-drop estimation on power grids with graph neural networks.

A seeded synthetic power-grid generator with an exact nodal solver supplies
labelled per-net data; graph, tree and convolutional models learn the drop
from per-net electrical and timing features.
"""
from .data import Dataset, FeatureSet, NetRecord, SplitSpec, load_dataset, save_dataset, select_features, split_dataset
from .exceptions import IRDropError, NumericError, ParseError, ShapeError, TapeError, ValidationError
from .gnn import GnnConfig, GraphRegressor, TrainedModel, predict, train
from .graph import CircuitGraph, build_graph, degree_rank, normalized_adjacency
from .metrics import EvalReport, compute_report
from .pipeline import BENCHMARK_CONFIG, BENCHMARK_SPLIT, FittedModel, benchmark, fit_model, prepare_graph
from .preprocess import LogMinMaxScaler, ScalerParams, apply_scaler, fit_scaler, log_transform
from .synth import SynthConfig, solve_ir_drop, solve_pdn, synthesize

__version__ = "0.1.0"

__all__ = [
    "BENCHMARK_CONFIG", "BENCHMARK_SPLIT", "CircuitGraph", "Dataset", "EvalReport", "FeatureSet", "FittedModel",
    "GnnConfig", "GraphRegressor", "IRDropError", "LogMinMaxScaler", "NetRecord", "NumericError", "ParseError",
    "ScalerParams", "ShapeError", "SplitSpec", "SynthConfig", "TapeError", "TrainedModel", "ValidationError",
    "apply_scaler", "benchmark", "build_graph", "compute_report", "degree_rank", "fit_model", "fit_scaler",
    "load_dataset", "log_transform", "normalized_adjacency", "predict", "prepare_graph", "save_dataset",
    "select_features", "solve_ir_drop", "solve_pdn", "split_dataset", "synthesize", "train",
]
