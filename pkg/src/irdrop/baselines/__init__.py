"""Comparison models: boosted trees on tabular features, CNN on tile maps."""
from .cnn import (
    CnnConfig,
    CnnModel,
    CnnRegressor,
    TileGrid,
    cnn_forward,
    cnn_predict_map,
    cnn_predict_per_net,
    cnn_train,
    init_cnn_params,
    rasterize,
    tile_channels,
)
from .gbt import GbtConfig, GbtModel, GbtRegressor, RegressionTree, best_split, build_tree, gbt_predict, gbt_train

__all__ = [
    "CnnConfig", "CnnModel", "CnnRegressor", "GbtConfig", "GbtModel", "GbtRegressor", "RegressionTree",
    "TileGrid", "best_split", "build_tree", "cnn_forward", "cnn_predict_map", "cnn_predict_per_net",
    "cnn_train", "gbt_predict", "gbt_train", "init_cnn_params", "rasterize", "tile_channels",
]
