"""Glue between datasets, preprocessing and graphs; the shipped benchmark."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Union

import numpy as np

from .baselines.cnn import DEFAULT_TILE_UM, CnnConfig, CnnModel, cnn_predict_per_net, cnn_train, rasterize
from .baselines.gbt import GbtConfig, GbtModel, gbt_predict, gbt_train
from .data import Dataset, FeatureSet, Split, SplitSpec, select_features, split_dataset
from .exceptions import ValidationError
from .gnn import GnnConfig, TrainedModel
from .gnn import predict as gnn_predict
from .gnn import train as gnn_train
from .graph import DEFAULT_THRESHOLD_UM, CircuitGraph, build_graph
from .preprocess import ScalerParams, apply_scaler, fit_scaler
from .synth import SynthConfig, synthesize

BENCHMARK_CONFIG = SynthConfig(seed=1, n_cells=500, kappa=0.5)
BENCHMARK_SPLIT = SplitSpec(0.7, 0.1, 0.2, seed=0)


def scaled_features(dataset: Dataset, feature_set, fit_rows=None, scaler: Optional[ScalerParams] = None):
    """(scaled matrix, scaler). The scaler is fitted on ``fit_rows`` unless given."""
    fm = select_features(dataset, feature_set)
    if scaler is None:
        rows = np.arange(len(dataset)) if fit_rows is None else np.asarray(fit_rows)
        scaler = fit_scaler(fm.values[rows], fm.columns)
    return apply_scaler(fm.values, scaler), scaler


def prepare_graph(
    dataset: Dataset,
    feature_set: Union[str, FeatureSet] = FeatureSet.SET_B,
    threshold: float = DEFAULT_THRESHOLD_UM,
    fit_rows=None,
    scaler: Optional[ScalerParams] = None,
) -> CircuitGraph:
    x, scaler = scaled_features(dataset, feature_set, fit_rows, scaler)
    return build_graph(dataset, threshold, features=x, scaler=scaler)


def benchmark(config: SynthConfig = BENCHMARK_CONFIG, split: SplitSpec = BENCHMARK_SPLIT):
    """The seeded benchmark circuit: (dataset, split)."""
    dataset, *_ = synthesize(config)
    return dataset, split_dataset(dataset, split)


GNN_KINDS = ("gcn", "gat", "gin")
MODEL_KINDS = GNN_KINDS + ("gbt", "cnn")
CHECKPOINT_FORMAT = "irdrop.checkpoint"


@dataclass
class FittedModel:
    """A trained model plus everything needed to featurise new data for it."""

    kind: str
    feature_set: str
    model: object
    threshold: float = DEFAULT_THRESHOLD_UM
    tile_um: float = DEFAULT_TILE_UM
    scaler: Optional[ScalerParams] = None

    def predict(self, dataset: Dataset) -> np.ndarray:
        """Per-net IR drop (mV) in dataset order."""
        if len(dataset) == 0:
            return np.zeros(0)
        if self.kind == "gbt":
            return gbt_predict(self.model, select_features(dataset, self.feature_set).values)
        x, _ = scaled_features(dataset, self.feature_set, scaler=self.scaler)
        if self.kind == "cnn":
            return cnn_predict_per_net(self.model, rasterize(dataset, self.tile_um, self.feature_set, features=x), dataset)
        graph = build_graph(dataset, self.threshold, features=x, scaler=self.scaler)
        return gnn_predict(self.model, graph)

    def history_rows(self) -> List[dict]:
        """Training curve as rows of step, loss, train_mae_mv, val_mae_mv, best_val_mae_mv."""
        rows = []
        best = np.inf
        for h in self.model.history:
            step = h.get("epoch", h.get("tree"))
            train_mae = h.get("train_mae_mv", h.get("train_mae"))
            val = h.get("val_mae_mv", h.get("val_mae", float("nan")))
            if np.isfinite(val):
                best = min(best, val)
            rows.append({
                "step": step,
                "loss": h.get("loss", float("nan")),
                "train_mae_mv": train_mae,
                "val_mae_mv": val,
                "best_val_mae_mv": best if np.isfinite(best) else float("nan"),
            })
        return rows

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "kind": self.kind,
            "feature_set": self.feature_set,
            "threshold_um": self.threshold,
            "tile_um": self.tile_um,
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"not a checkpoint file (format={d.get('format')!r})")
        kind = d["kind"]
        if kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {kind!r}")
        loader = {"gbt": GbtModel.from_dict, "cnn": CnnModel.from_dict}.get(kind, TrainedModel.from_dict)
        return cls(
            kind=kind,
            feature_set=FeatureSet.parse(d["feature_set"]).value,
            model=loader(d["model"]),
            threshold=float(d["threshold_um"]),
            tile_um=float(d["tile_um"]),
            scaler=None if d.get("scaler") is None else ScalerParams.from_dict(d["scaler"]),
        )


def fit_model(
    dataset: Dataset,
    split: Split,
    kind: str,
    feature_set: Union[str, FeatureSet] = FeatureSet.SET_B,
    threshold: float = DEFAULT_THRESHOLD_UM,
    tile_um: float = DEFAULT_TILE_UM,
    gnn_config: Optional[GnnConfig] = None,
    gbt_config: Optional[GbtConfig] = None,
    cnn_config: Optional[CnnConfig] = None,
) -> FittedModel:
    """Train one model kind on ``split.train`` with ``split.val`` for selection.

    GNNs and the CNN see log/min-max scaled features fitted on the training
    rows; trees use raw values since splits are invariant to monotone maps.
    """
    if kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    fs = FeatureSet.parse(feature_set).value
    y = dataset.labels()
    missing = [int(dataset.records[i].net_id) for i in np.concatenate([split.train, split.val]) if not np.isfinite(y[i])]
    if missing:
        shown = ", ".join(str(m) for m in missing[:5]) + (", ..." if len(missing) > 5 else "")
        raise ValidationError(f"{len(missing)} training/validation nets have no ir_drop_mv label (net_id {shown})")
    if kind == "gbt":
        x = select_features(dataset, fs).values
        model = gbt_train(x, dataset.labels(), split.train, split.val, gbt_config or GbtConfig())
        return FittedModel(kind, fs, model, threshold, tile_um)
    x, scaler = scaled_features(dataset, fs, split.train)
    if kind == "cnn":
        train_grid = rasterize(dataset, tile_um, fs, features=x, label_rows=split.train)
        val_grid = rasterize(dataset, tile_um, fs, features=x, label_rows=split.val)
        model = cnn_train(train_grid, cnn_config or CnnConfig(), val_grids=val_grid)
        return FittedModel(kind, fs, model, threshold, tile_um, scaler)
    config = replace(gnn_config or GnnConfig(), arch=kind)
    graph = build_graph(dataset, threshold, features=x, scaler=scaler)
    model = gnn_train(graph, split.train, split.val, config)
    return FittedModel(kind, fs, model, threshold, tile_um, scaler)
