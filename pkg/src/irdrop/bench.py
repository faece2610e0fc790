"""Wall-clock comparison of the models against the exact nodal solve."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .baselines.cnn import DEFAULT_TILE_UM, CnnConfig
from .baselines.gbt import GbtConfig
from .data import Dataset, FeatureSet, Split
from .exceptions import ValidationError
from .gnn import GnnConfig
from .graph import DEFAULT_THRESHOLD_UM
from .pipeline import GNN_KINDS, MODEL_KINDS, fit_model
from .synth import solve_pdn

BENCH_COLUMNS = ("model", "phase", "rep", "seconds", "epochs", "seconds_per_epoch")


@dataclass(frozen=True)
class BenchRow:
    model: str
    phase: str  # train | predict | solve
    rep: int
    seconds: float
    epochs: Optional[int] = None

    @property
    def seconds_per_epoch(self) -> Optional[float]:
        return self.seconds / self.epochs if self.epochs else None

    def as_list(self) -> list:
        spe = self.seconds_per_epoch
        return [self.model, self.phase, self.rep, repr(self.seconds),
                "" if self.epochs is None else self.epochs, "" if spe is None else repr(spe)]


def runtime_bench(
    dataset: Dataset,
    split: Split,
    models: Sequence[str] = GNN_KINDS,
    feature_set: Union[str, FeatureSet] = FeatureSet.SET_B,
    threshold: float = DEFAULT_THRESHOLD_UM,
    tile_um: float = DEFAULT_TILE_UM,
    epochs: int = 50,
    reps: int = 1,
    gnn_config: Optional[GnnConfig] = None,
    gbt_config: Optional[GbtConfig] = None,
    cnn_config: Optional[CnnConfig] = None,
    circuit=None,
) -> List[BenchRow]:
    """Time training and prediction separately for each model, ``reps`` times.

    GNNs and the CNN run exactly ``epochs`` epochs (early stopping off) so
    per-epoch costs compare fairly. ``circuit`` is an optional (grid, loads)
    pair whose exact solve is timed as the reference.
    """
    unknown = [m for m in models if m not in MODEL_KINDS]
    if unknown:
        raise ValidationError(f"unknown models {unknown}; choose from {', '.join(MODEL_KINDS)}")
    if reps < 1 or epochs < 1:
        raise ValidationError("reps and epochs must be >= 1")
    gnn_config = replace(gnn_config or GnnConfig(), max_epochs=epochs, patience=epochs)
    cnn_config = replace(cnn_config or CnnConfig(), max_epochs=epochs, patience=epochs)
    rows: List[BenchRow] = []
    for rep in range(reps):
        for kind in models:
            t0 = time.perf_counter()
            fitted = fit_model(dataset, split, kind, feature_set, threshold, tile_um,
                               gnn_config=gnn_config, gbt_config=gbt_config, cnn_config=cnn_config)
            train_s = time.perf_counter() - t0
            n_steps = len(fitted.model.history)
            rows.append(BenchRow(kind, "train", rep, train_s, n_steps if kind != "gbt" else None))
            t0 = time.perf_counter()
            fitted.predict(dataset)
            rows.append(BenchRow(kind, "predict", rep, time.perf_counter() - t0))
        if circuit is not None:
            grid, loads = circuit
            t0 = time.perf_counter()
            solve_pdn(grid, loads)
            rows.append(BenchRow("oracle", "solve", rep, time.perf_counter() - t0))
    return rows


def write_bench_csv(rows: Sequence[BenchRow], path: Union[str, Path]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())
