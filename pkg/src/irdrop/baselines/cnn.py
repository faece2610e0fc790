"""Convolutional encoder-decoder on rasterized tile maps.

Nets are binned into square tiles; each tile carries the summed per-net
features (coordinates excluded, they are implicit in the tile position) and
the mean label of the labelled nets it holds. The network maps the feature
map to a drop map of the same size, and a net's prediction is the value of
its tile.
"""
from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .. import autodiff as ad
from .._validation import as_index, as_matrix
from ..data import Dataset, FeatureSet
from ..exceptions import ShapeError, ValidationError

DEFAULT_TILE_UM = 1.5
POOL_STAGES = 4
GRID_MULTIPLE = 2 ** POOL_STAGES
MODEL_FORMAT = "irdrop.cnn"
GRID_MAGIC = b"IRDTILE1"


def tile_channels(set_id) -> Tuple[str, ...]:
    """Feature columns that become channels: everything but the coordinates."""
    return tuple(c for c in FeatureSet.parse(set_id).columns if c not in ("x_um", "y_um"))


def _padded(n: int) -> int:
    return max(GRID_MULTIPLE, -(-n // GRID_MULTIPLE) * GRID_MULTIPLE)


@dataclass(frozen=True)
class TileGrid:
    features: np.ndarray  # (C, H, W)
    labels: np.ndarray  # (H, W)
    mask: np.ndarray  # (H, W) bool, tiles holding at least one labelled net
    net_tiles: np.ndarray  # (n_nets, 2) as (row, col)
    tile_um: float
    set_id: str
    channels: Tuple[str, ...]

    def __post_init__(self):
        c, h, w = self.features.shape
        if h < 4 or w < 4:
            raise ShapeError(f"tile grid must be at least 4x4, got {h}x{w}")
        if self.labels.shape != (h, w) or self.mask.shape != (h, w):
            raise ShapeError("labels/mask must match the feature map's spatial shape")
        if c != len(self.channels):
            raise ShapeError(f"{c} feature planes but {len(self.channels)} channel names")
        if self.channels != tile_channels(self.set_id):
            raise ValidationError(f"channels {self.channels} do not match feature set {self.set_id}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    def with_mask(self, mask: np.ndarray, labels: Optional[np.ndarray] = None) -> "TileGrid":
        return TileGrid(
            self.features, self.labels if labels is None else labels, np.asarray(mask, dtype=bool),
            self.net_tiles, self.tile_um, self.set_id, self.channels,
        )

    def to_bytes(self) -> bytes:
        """Magic, header length, JSON header, then raw little-endian arrays."""
        arrays = {
            "features": self.features.astype("<f8"),
            "labels": self.labels.astype("<f8"),
            "mask": self.mask.astype("u1"),
            "net_tiles": self.net_tiles.astype("<i8"),
        }
        header = {
            "tile_um": self.tile_um,
            "set_id": self.set_id,
            "channels": list(self.channels),
            "arrays": [{"name": k, "dtype": v.dtype.str, "shape": list(v.shape)} for k, v in arrays.items()],
        }
        head = json.dumps(header, sort_keys=True).encode()
        return GRID_MAGIC + struct.pack("<I", len(head)) + head + b"".join(v.tobytes() for v in arrays.values())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TileGrid":
        if blob[:8] != GRID_MAGIC:
            raise ValidationError("not a tile-grid blob")
        (n,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12:12 + n])
        pos = 12 + n
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"], dtype=np.int64))
            arrays[spec["name"]] = np.frombuffer(blob, dtype, count, pos).reshape(spec["shape"]).copy()
            pos += count * dtype.itemsize
        return cls(
            features=arrays["features"].astype(float),
            labels=arrays["labels"].astype(float),
            mask=arrays["mask"].astype(bool),
            net_tiles=arrays["net_tiles"].astype(np.int64),
            tile_um=float(header["tile_um"]),
            set_id=header["set_id"],
            channels=tuple(header["channels"]),
        )


def rasterize(dataset: Dataset, tile_um: float = DEFAULT_TILE_UM, set_id="setB",
              features=None, label_rows=None) -> TileGrid:
    """Bin nets into ``tile_um`` squares.

    ``features`` optionally replaces the raw columns (e.g. scaled values, one
    row per net, same column order as the feature set). ``label_rows`` limits
    which nets contribute to the label map and mask; by default every
    labelled net does.
    """
    if not tile_um > 0:
        raise ValidationError(f"tile_um must be > 0, got {tile_um}")
    fs = FeatureSet.parse(set_id)
    channels = tile_channels(fs)
    n = len(dataset)
    coords = dataset.coordinates
    if np.any(coords < 0):
        raise ValidationError("coordinates must be non-negative to rasterize")
    if features is None:
        values = np.array([[getattr(r, c) for c in channels] for r in dataset.records], dtype=float).reshape(n, len(channels))
    else:
        full = as_matrix(features, "features", n_columns=len(fs.columns)) if n else np.zeros((0, len(fs.columns)))
        if full.shape[0] != n:
            raise ValidationError(f"features has {full.shape[0]} rows for {n} nets")
        keep = [i for i, c in enumerate(fs.columns) if c in channels]
        values = full[:, keep]

    rows = np.floor(coords[:, 1] / tile_um).astype(np.int64)
    cols = np.floor(coords[:, 0] / tile_um).astype(np.int64)
    h = _padded(int(rows.max()) + 1 if n else 0)
    w = _padded(int(cols.max()) + 1 if n else 0)

    grid = np.zeros((len(channels), h, w))
    for c in range(len(channels)):
        np.add.at(grid[c], (rows, cols), values[:, c])

    y = dataset.labels() if n else np.zeros(0)
    chosen = np.arange(n) if label_rows is None else as_index(label_rows, n, "label_rows")
    chosen = chosen[np.isfinite(y[chosen])]
    total = np.zeros((h, w))
    count = np.zeros((h, w))
    np.add.at(total, (rows[chosen], cols[chosen]), y[chosen])
    np.add.at(count, (rows[chosen], cols[chosen]), 1.0)
    mask = count > 0
    labels = np.divide(total, count, out=np.zeros_like(total), where=mask)
    return TileGrid(grid, labels, mask, np.stack([rows, cols], axis=1).reshape(n, 2), float(tile_um), fs.value, channels)


@dataclass(frozen=True)
class CnnConfig:
    encoder_channels: Tuple[int, ...] = (16, 32, 32, 64)
    decoder_channels: Tuple[int, int] = (32, 16)
    lr: float = 1e-3
    weight_decay: float = 0.0
    max_epochs: int = 300
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        if len(self.encoder_channels) != POOL_STAGES:
            raise ValidationError(f"encoder needs {POOL_STAGES} stages, got {len(self.encoder_channels)}")
        if len(self.decoder_channels) != 2:
            raise ValidationError("decoder needs exactly 2 channel widths")
        if min(self.encoder_channels + self.decoder_channels) < 1:
            raise ValidationError("channel widths must be >= 1")
        if not self.lr > 0 or self.weight_decay < 0:
            raise ValidationError("lr must be > 0 and weight_decay >= 0")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValidationError("max_epochs must be >= 1 and patience >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        d["decoder_channels"] = list(self.decoder_channels)
        return d


def init_cnn_params(config: CnnConfig, in_channels: int, zero_head: bool = False) -> Dict[str, ad.Tensor]:
    rng = np.random.default_rng(config.seed)
    p: Dict[str, ad.Tensor] = {}
    c_in = in_channels
    for i, c in enumerate(config.encoder_channels):
        p[f"enc{i}_w"] = ad.glorot(rng, (c, c_in, 3, 3), f"enc{i}_w")
        p[f"enc{i}_b"] = ad.zeros((c,), f"enc{i}_b")
        c_in = c
    # Each transposed conv upsamples x4 so that two of them undo the four pools.
    for i, c in enumerate(config.decoder_channels):
        p[f"up{i}_w"] = ad.glorot(rng, (c_in, c, 4, 4), f"up{i}_w")
        p[f"up{i}_b"] = ad.zeros((c,), f"up{i}_b")
        c_out = c if i == 0 else 1
        p[f"dec{i}_w"] = ad.glorot(rng, (c_out, c, 3, 3), f"dec{i}_w")
        p[f"dec{i}_b"] = ad.zeros((c_out,), f"dec{i}_b")
        c_in = c_out
    if zero_head:
        p["dec1_w"] = ad.zeros(p["dec1_w"].shape, "dec1_w")
    return p


def cnn_forward(x, params: Dict[str, ad.Tensor]) -> ad.Tensor:
    """(N, C, H, W) -> (N, H, W). H and W must be multiples of 16."""
    x = ad.as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"expected NCHW input, got shape {x.shape}")
    n, _, h, w = x.shape
    if h % GRID_MULTIPLE or w % GRID_MULTIPLE or h == 0 or w == 0:
        raise ShapeError(f"input spatial shape {h}x{w} is not a multiple of {GRID_MULTIPLE}")
    for i in range(POOL_STAGES):
        x = ad.maxpool2(ad.relu(ad.conv2d(x, params[f"enc{i}_w"], params[f"enc{i}_b"])))
    x = ad.relu(ad.conv_transpose(x, params["up0_w"], params["up0_b"]))
    x = ad.relu(ad.conv2d(x, params["dec0_w"], params["dec0_b"]))
    x = ad.relu(ad.conv_transpose(x, params["up1_w"], params["up1_b"]))
    x = ad.conv2d(x, params["dec1_w"], params["dec1_b"])
    return ad.reshape(x, (n, h, w))


@dataclass
class CnnModel:
    config: CnnConfig
    params: Dict[str, np.ndarray]
    in_channels: int
    set_id: str
    label_scale: float
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    wall_clock_s: float = 0.0

    def tensors(self) -> Dict[str, ad.Tensor]:
        return {k: ad.Tensor(v, name=k) for k, v in self.params.items()}

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "config": self.config.to_dict(),
            "params": ad.params_to_dict(self.tensors()),
            "in_channels": self.in_channels,
            "set_id": self.set_id,
            "label_scale": self.label_scale,
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CnnModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a CNN model file (format={d.get('format')!r})")
        params = ad.params_from_dict(d["params"], requires_grad=False)
        return cls(
            config=CnnConfig(**d["config"]),
            params={k: t.data for k, t in params.items()},
            in_channels=int(d["in_channels"]),
            set_id=d["set_id"],
            label_scale=float(d["label_scale"]),
            best_epoch=int(d.get("best_epoch", 0)),
        )


def _stack(grids: Sequence[TileGrid]):
    shapes = {g.features.shape for g in grids}
    if len(shapes) != 1:
        raise ShapeError(f"all grids in a batch must share one shape, got {sorted(shapes)}")
    x = np.stack([g.features for g in grids])
    y = np.stack([g.labels for g in grids])
    m = np.stack([g.mask for g in grids])
    return x, y, m


def _as_grids(grids) -> List[TileGrid]:
    if isinstance(grids, TileGrid):
        return [grids]
    grids = list(grids or [])
    return grids


def _masked_mae(pred: ad.Tensor, target: np.ndarray, mask: np.ndarray) -> ad.Tensor:
    weight = mask.astype(float) / mask.sum()
    return ad.sum_(ad.mul(ad.abs_(ad.sub(pred, target)), weight))


def cnn_train(grids, config: CnnConfig = CnnConfig(), val_grids=None, zero_head: bool = False) -> CnnModel:
    """Masked-MAE training with Adam; the best epoch on validation tiles is kept
    (training tiles when no validation grids are given)."""
    grids = _as_grids(grids)
    val_grids = _as_grids(val_grids)
    if not grids:
        raise ValidationError("no training grids")
    x, y, m = _stack(grids)
    if not m.any():
        raise ValidationError("training grids hold no labelled tiles")
    set_ids = {g.set_id for g in grids + val_grids}
    if len(set_ids) != 1:
        raise ValidationError(f"grids mix feature sets {sorted(set_ids)}")
    has_val = bool(val_grids) and any(g.mask.any() for g in val_grids)
    if has_val:
        xv, yv, mv = _stack(val_grids)

    scale = float(y[m].max())
    if not scale > 0:
        scale = 1.0
    params = init_cnn_params(config, x.shape[1], zero_head=zero_head)
    opt = ad.Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    target = y / scale

    history: List[dict] = []
    best, best_epoch, wait = np.inf, 0, 0
    best_params = {k: v.data.copy() for k, v in params.items()}
    t_start = time.perf_counter()
    for epoch in range(config.max_epochs):
        opt.zero_grad()
        loss = _masked_mae(cnn_forward(x, params), target, m)
        loss.backward()
        opt.step()
        out = cnn_forward(x, params).data * scale
        train_mae = float(np.abs(out - y)[m].mean())
        entry = {"epoch": epoch, "loss": loss.item(), "train_mae_mv": train_mae, "val_mae_mv": float("nan")}
        score = train_mae
        if has_val:
            outv = cnn_forward(xv, params).data * scale
            entry["val_mae_mv"] = score = float(np.abs(outv - yv)[mv].mean())
        history.append(entry)
        if score < best:
            best, best_epoch, wait = score, epoch, 0
            best_params = {k: v.data.copy() for k, v in params.items()}
        else:
            wait += 1
            if wait > config.patience:
                break
    return CnnModel(config, best_params, x.shape[1], grids[0].set_id, scale, history, best_epoch,
                    time.perf_counter() - t_start)


def cnn_predict_map(model: CnnModel, grid: TileGrid) -> np.ndarray:
    if grid.features.shape[0] != model.in_channels or grid.set_id != model.set_id:
        raise ValidationError(f"model expects {model.in_channels} channels of {model.set_id}, "
                              f"grid has {grid.features.shape[0]} of {grid.set_id}")
    return cnn_forward(grid.features[None], model.tensors()).data[0] * model.label_scale


def cnn_predict_per_net(model: CnnModel, grid: TileGrid, dataset: Optional[Dataset] = None) -> np.ndarray:
    """Each net gets its tile's predicted drop (mV), in dataset order."""
    if dataset is not None and len(dataset) != grid.net_tiles.shape[0]:
        raise ValidationError(f"grid was rasterized from {grid.net_tiles.shape[0]} nets, dataset has {len(dataset)}")
    out = cnn_predict_map(model, grid)
    return out[grid.net_tiles[:, 0], grid.net_tiles[:, 1]]


class CnnRegressor(RegressorMixin, BaseEstimator):
    """``X`` is a TileGrid (or list of them); labels and masks travel with it."""

    def __init__(self, encoder_channels=(16, 32, 32, 64), decoder_channels=(32, 16), lr=1e-3,
                 weight_decay=0.0, max_epochs=300, patience=50, seed=0):
        self.encoder_channels = encoder_channels
        self.decoder_channels = decoder_channels
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    def fit(self, X, y=None, val_grids=None):
        self.model_ = cnn_train(X, CnnConfig(**self.get_params()), val_grids=val_grids)
        self.history_ = self.model_.history
        return self

    def predict(self, X: TileGrid) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("CnnRegressor is not fitted yet")
        return cnn_predict_per_net(self.model_, X)
