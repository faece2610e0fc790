"""Error metrics and the supply-tolerance violation count."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict

import numpy as np

from ._validation import as_vector
from .exceptions import ValidationError

TOLERANCE_FRACTION = 0.10
NRMSE_NOTE = "NRMSE = 100 * RMSE / (max(label) - min(label)); RMSE / |mean(label)| if labels are constant"


@dataclass(frozen=True)
class EvalReport:
    n_samples: int
    mae_mv: float
    maxe_mv: float
    rmse_mv: float
    nrmse_pct: float
    mean_pred_mv: float
    max_pred_mv: float
    mean_label_mv: float
    max_label_mv: float
    n_violations: int
    vdd_mv: float
    violation_threshold_mv: float
    wall_clock_s: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nrmse_definition"] = NRMSE_NOTE
        return d

    def to_json(self, include_timings: bool = True) -> str:
        d = self.to_dict()
        if not include_timings:
            d.pop("wall_clock_s")
        return json.dumps(d, indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("samples", f"{self.n_samples}"),
            ("MAE (mV)", f"{self.mae_mv:.4f}"),
            ("MaxE (mV)", f"{self.maxe_mv:.4f}"),
            ("RMSE (mV)", f"{self.rmse_mv:.4f}"),
            ("NRMSE (%)", f"{self.nrmse_pct:.4f}"),
            ("Mean IR drop pred (mV)", f"{self.mean_pred_mv:.4f}"),
            ("Max IR drop pred (mV)", f"{self.max_pred_mv:.4f}"),
            ("Mean IR drop label (mV)", f"{self.mean_label_mv:.4f}"),
            ("Max IR drop label (mV)", f"{self.max_label_mv:.4f}"),
            (f"|error| > {self.violation_threshold_mv:g} mV", f"{self.n_violations}"),
        ]
        for phase, sec in sorted(self.wall_clock_s.items()):
            rows.append((f"{phase} time (s)", f"{sec:.4f}"))
        width = max(len(k) for k, _ in rows)
        lines = [f"# {NRMSE_NOTE}"]
        lines += [f"{k.ljust(width)}  {v}" for k, v in rows]
        return "\n".join(lines) + "\n"


def compute_report(pred, labels, vdd_mv: float = 800.0, wall_clock_s=None) -> EvalReport:
    """Compare predictions against labels, both in mV."""
    pred = as_vector(pred, "pred")
    labels = as_vector(labels, "labels")
    if pred.shape != labels.shape:
        raise ValidationError(f"pred has {pred.size} entries, labels {labels.size}")
    if pred.size == 0:
        raise ValidationError("cannot evaluate an empty prediction vector")
    if not vdd_mv > 0:
        raise ValidationError("vdd_mv must be > 0")
    err = np.abs(pred - labels)
    rmse = float(np.sqrt(np.mean(err ** 2)))
    span = float(labels.max() - labels.min())
    if span > 0:
        nrmse = 100.0 * rmse / span
    else:
        scale = abs(float(np.mean(labels)))
        nrmse = 0.0 if rmse == 0 else (100.0 * rmse / scale if scale != 0 else math.inf)
    limit = TOLERANCE_FRACTION * vdd_mv
    return EvalReport(
        n_samples=int(pred.size),
        mae_mv=float(err.mean()),
        maxe_mv=float(err.max()),
        rmse_mv=rmse,
        nrmse_pct=nrmse,
        mean_pred_mv=float(pred.mean()),
        max_pred_mv=float(pred.max()),
        mean_label_mv=float(labels.mean()),
        max_label_mv=float(labels.max()),
        n_violations=int(np.count_nonzero(err > limit)),
        vdd_mv=float(vdd_mv),
        violation_threshold_mv=limit,
        wall_clock_s=dict(wall_clock_s or {}),
    )
