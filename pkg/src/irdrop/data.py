"""Per-net records, CSV I/O, feature-set selection and dataset splitting."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .exceptions import ParseError, ValidationError

CSV_COLUMNS = (
    "net_id",
    "x_um",
    "y_um",
    "resistance_ohm",
    "p_total_w",
    "i_peak_a",
    "i_avg_a",
    "t_rise_s",
    "t_fall_s",
    "tau_s",
)
LABEL_COLUMN = "ir_drop_mv"


@dataclass(frozen=True)
class NetRecord:
    """One net / cell instance with its electrical, timing and physical features."""

    net_id: int
    x_um: float
    y_um: float
    resistance_ohm: float
    p_total_w: float
    i_peak_a: float
    i_avg_a: float
    t_rise_s: float
    t_fall_s: float
    tau_s: float
    ir_drop_mv: Optional[float] = None

    def __post_init__(self):
        if not self.resistance_ohm > 0:
            raise ValidationError(
                f"net {self.net_id}: resistance_ohm must be > 0, got {self.resistance_ohm}"
            )
        if self.i_avg_a < 0:
            raise ValidationError(f"net {self.net_id}: i_avg_a must be >= 0")
        if self.i_peak_a < self.i_avg_a:
            raise ValidationError(f"net {self.net_id}: i_peak_a < i_avg_a")
        for name in ("t_rise_s", "t_fall_s", "tau_s"):
            if getattr(self, name) < 0:
                raise ValidationError(f"net {self.net_id}: {name} must be >= 0")
        if self.ir_drop_mv is not None and self.ir_drop_mv < 0:
            raise ValidationError(f"net {self.net_id}: ir_drop_mv must be >= 0")

    @property
    def has_label(self) -> bool:
        return self.ir_drop_mv is not None


class FeatureSet(str, enum.Enum):
    """Named feature combinations. SET_B adds the timing columns to SET_A."""

    SET_A = "setA"
    SET_B = "setB"

    @classmethod
    def parse(cls, value: Union[str, "FeatureSet"]) -> "FeatureSet":
        if isinstance(value, FeatureSet):
            return value
        key = str(value).strip().lower().replace("_", "").replace("set", "")
        if key == "a":
            return cls.SET_A
        if key == "b":
            return cls.SET_B
        raise ValidationError(f"unknown feature set {value!r}; expected setA or setB")

    @property
    def columns(self) -> tuple:
        return FEATURE_COLUMNS[self]


# Column order is part of the public contract; scalers and checkpoints depend on it.
FEATURE_COLUMNS = {
    FeatureSet.SET_A: ("resistance_ohm", "p_total_w", "i_peak_a", "i_avg_a", "x_um", "y_um"),
    FeatureSet.SET_B: (
        "resistance_ohm",
        "p_total_w",
        "i_peak_a",
        "i_avg_a",
        "x_um",
        "y_um",
        "t_rise_s",
        "t_fall_s",
        "tau_s",
    ),
}


@dataclass(frozen=True)
class Dataset:
    records: tuple
    vdd_mv: float = 800.0
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.vdd_mv > 0:
            raise ValidationError(f"vdd_mv must be > 0, got {self.vdd_mv}")
        seen = set()
        for rec in self.records:
            if rec.net_id in seen:
                raise ValidationError(f"duplicate net_id {rec.net_id}")
            seen.add(rec.net_id)

    def __len__(self):
        return len(self.records)

    @property
    def net_ids(self) -> np.ndarray:
        return np.array([r.net_id for r in self.records], dtype=np.int64)

    @property
    def coordinates(self) -> np.ndarray:
        return np.array([(r.x_um, r.y_um) for r in self.records], dtype=float).reshape(-1, 2)

    @property
    def has_labels(self) -> bool:
        return len(self.records) > 0 and all(r.has_label for r in self.records)

    def labels(self) -> np.ndarray:
        """Label vector in mV; NaN where a record carries no label."""
        return np.array(
            [np.nan if r.ir_drop_mv is None else r.ir_drop_mv for r in self.records],
            dtype=float,
        )

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(
            records=[self.records[i] for i in indices],
            vdd_mv=self.vdd_mv,
            provenance=self.provenance,
        )


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows aligned with net ids and (optional) labels."""

    values: np.ndarray
    columns: tuple
    net_ids: np.ndarray
    labels: np.ndarray
    set_id: FeatureSet

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise ValidationError(f"split fractions must be >= 0, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {sum(fracs)!r}")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def _parse_float(text: str, column: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {line_no}: column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(f"row {line_no}: column {column!r}: non-finite value {text!r}")
    return value


def load_dataset(path: Union[str, Path], vdd_mv: float = 800.0, provenance: Optional[str] = None) -> Dataset:
    """Read a per-net CSV. Row numbers in errors count the header as row 1."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header required") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"row 1: missing required columns {missing}")
        extra = [c for c in header if c not in CSV_COLUMNS and c != LABEL_COLUMN]
        if extra:
            raise ParseError(f"row 1: unknown columns {extra}")
        index = {name: header.index(name) for name in header}
        has_label = LABEL_COLUMN in index

        records = []
        seen = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"row {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                net_id = int(row[index["net_id"]])
            except ValueError:
                raise ParseError(f"row {line_no}: net_id {row[index['net_id']]!r} is not an integer") from None
            if net_id in seen:
                raise ValidationError(f"row {line_no}: duplicate net_id {net_id} (first seen at row {seen[net_id]})")
            seen[net_id] = line_no
            values = {c: _parse_float(row[index[c]], c, line_no) for c in CSV_COLUMNS[1:]}
            label = None
            if has_label:
                raw = row[index[LABEL_COLUMN]].strip()
                if raw:
                    label = _parse_float(raw, LABEL_COLUMN, line_no)
            try:
                records.append(NetRecord(net_id=net_id, ir_drop_mv=label, **values))
            except ValidationError as exc:
                raise ValidationError(f"row {line_no}: {exc}") from None
    return Dataset(records=records, vdd_mv=vdd_mv, provenance=provenance or str(path))


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write the CSV layout read by :func:`load_dataset` (floats as shortest round-trip repr)."""
    path = Path(path)
    with_label = any(r.has_label for r in dataset.records)
    header = list(CSV_COLUMNS) + ([LABEL_COLUMN] if with_label else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in dataset.records:
            row = [str(r.net_id)] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[1:]]
            if with_label:
                row.append("" if r.ir_drop_mv is None else repr(float(r.ir_drop_mv)))
            writer.writerow(row)


def select_features(dataset: Dataset, set_id: Union[str, FeatureSet]) -> FeatureMatrix:
    """Feature matrix with columns [R, P, I_peak, I_avg, x, y (, t_rise, t_fall, tau)].

    The net id travels alongside the matrix and is never a model input.
    """
    set_id = FeatureSet.parse(set_id)
    if len(dataset) == 0:
        raise ValidationError("select_features needs a non-empty dataset")
    cols = set_id.columns
    values = np.array([[getattr(r, c) for c in cols] for r in dataset.records], dtype=float)
    return FeatureMatrix(
        values=values,
        columns=cols,
        net_ids=dataset.net_ids,
        labels=dataset.labels(),
        set_id=set_id,
    )


def split_sizes(n: int, spec: SplitSpec) -> tuple:
    # Small epsilon keeps e.g. 0.29*100 from flooring to 28.
    n_train = int(math.floor(spec.train_frac * n + 1e-9))
    n_val = int(math.floor(spec.val_frac * n + 1e-9))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_dataset(dataset: Union[Dataset, int, Sequence], spec: SplitSpec = SplitSpec()) -> Split:
    """Seeded shuffle, then floor/floor/remainder partition into train/val/test."""
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    if n < 10:
        raise ValidationError(f"split_dataset needs at least 10 records, got {n}")
    n_train, n_val, _ = split_sizes(n, spec)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return Split(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train:n_train + n_val]),
        test=np.sort(perm[n_train + n_val:]),
    )
