"""GCN, GAT and GIN node regressors for per-net IR drop.

All three share the same skeleton: ``n_layers`` message-passing layers, ReLU
between layers, dropout after the first layer only, one output per node.
Training is full-graph: every epoch runs one forward pass over the whole
graph, takes the MAE on the training nodes and applies one Adam step.
Labels are divided by the largest training label for the loss and scaled
back to mV for every reported number.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from ._validation import as_index
from .autodiff.checkpoint import params_from_dict, params_to_dict
from .autodiff.init import glorot, zeros
from .exceptions import NumericError, ValidationError
from .graph import CircuitGraph
from .preprocess import ScalerParams

ARCHITECTURES = ("gcn", "gat", "gin")
MODEL_FORMAT = "irdrop.gnn"


@dataclass(frozen=True)
class GnnConfig:
    arch: str = "gcn"
    n_layers: int = 3
    hidden_channels: int = 64
    heads: int = 4
    dropout: float = 0.5
    lr: float = 1e-4
    weight_decay: float = 1e-3
    max_epochs: int = 2000
    patience: int = 200
    use_edge_feature: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arch", str(self.arch).lower())
        if self.arch not in ARCHITECTURES:
            raise ValidationError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if self.n_layers < 1:
            raise ValidationError("n_layers must be >= 1")
        if self.hidden_channels < 1:
            raise ValidationError("hidden_channels must be >= 1")
        if self.heads < 1:
            raise ValidationError("heads must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must be in [0, 1)")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.patience < 0:
            raise ValidationError("patience must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MessageStructure:
    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    edge_feature: np.ndarray
    gcn_weight: np.ndarray
    # Neighbour edges without the self loops (GIN sums these separately).
    nb_src: np.ndarray
    nb_dst: np.ndarray
    nb_feature: np.ndarray


def message_structure(graph: CircuitGraph) -> MessageStructure:
    src, dst, ef = graph.message_edges(self_loops=True)
    deg = graph.degrees() + 1.0
    n = graph.n_nodes
    return MessageStructure(
        n_nodes=n,
        src=src,
        dst=dst,
        edge_feature=ef,
        gcn_weight=1.0 / np.sqrt(deg[src] * deg[dst]),
        nb_src=src[n:],
        nb_dst=dst[n:],
        nb_feature=ef[n:],
    )


# ---------------------------------------------------------------- parameters

def _layer_dims(config: GnnConfig, in_features: int):
    dims = [in_features] + [config.hidden_channels] * (config.n_layers - 1) + [1]
    return list(zip(dims[:-1], dims[1:]))


def init_params(config: GnnConfig, in_features: int) -> Dict[str, ad.Tensor]:
    rng = np.random.default_rng(config.seed)
    p: Dict[str, ad.Tensor] = {}
    if config.arch == "gcn":
        for k, (fi, fo) in enumerate(_layer_dims(config, in_features)):
            p[f"W{k}"] = glorot(rng, (fi, fo), f"W{k}")
            p[f"b{k}"] = zeros((fo,), f"b{k}")
    elif config.arch == "gat":
        width = in_features
        for k in range(config.n_layers):
            last = k == config.n_layers - 1
            heads = 1 if last else config.heads
            out = 1 if last else config.hidden_channels
            p[f"W{k}"] = glorot(rng, (width, heads * out), f"W{k}")
            p[f"att_src{k}"] = glorot(rng, (heads, out), f"att_src{k}")
            p[f"att_dst{k}"] = glorot(rng, (heads, out), f"att_dst{k}")
            if config.use_edge_feature:
                p[f"att_edge{k}"] = glorot(rng, (1, heads), f"att_edge{k}")
            p[f"b{k}"] = zeros((heads * out,), f"b{k}")
            width = heads * out
    else:
        width = in_features
        hid = config.hidden_channels
        for k in range(config.n_layers):
            p[f"eps{k}"] = zeros((1,), f"eps{k}")
            if config.use_edge_feature:
                p[f"edge{k}"] = glorot(rng, (1, width), f"edge{k}")
            p[f"W{k}a"] = glorot(rng, (width, hid), f"W{k}a")
            p[f"b{k}a"] = zeros((hid,), f"b{k}a")
            p[f"W{k}b"] = glorot(rng, (hid, hid), f"W{k}b")
            p[f"b{k}b"] = zeros((hid,), f"b{k}b")
            width = hid
        p["W_out"] = glorot(rng, (hid, 1), "W_out")
        p["b_out"] = zeros((1,), "b_out")
    return p


def _input_width(config: GnnConfig, params) -> int:
    return params["W0a" if config.arch == "gin" else "W0"].shape[0]


# -------------------------------------------------------------------- layers

def gcn_layer(h, weight, bias, s: MessageStructure):
    hw = ad.matmul(h, weight)
    msg = ad.mul(ad.gather_rows(hw, s.src), s.gcn_weight[:, None])
    return ad.add(ad.segment_sum(msg, s.dst, s.n_nodes), bias)


def gat_layer(h, params, k: int, heads: int, s: MessageStructure, use_edge_feature: bool, return_attention=False):
    """One attention layer; heads are concatenated on the output."""
    weight = params[f"W{k}"]
    out = weight.shape[1] // heads
    n = s.n_nodes
    wh = ad.reshape(ad.matmul(h, weight), (n, heads, out))
    score_src = ad.sum_(ad.mul(wh, params[f"att_src{k}"]), axis=2)  # n, heads
    score_dst = ad.sum_(ad.mul(wh, params[f"att_dst{k}"]), axis=2)
    logits = ad.add(ad.gather_rows(score_src, s.src), ad.gather_rows(score_dst, s.dst))
    if use_edge_feature:
        logits = ad.add(logits, ad.mul(params[f"att_edge{k}"], s.edge_feature[:, None]))
    alpha = ad.softmax_over_segments(ad.leaky_relu(logits, 0.2), s.dst, n)  # E, heads
    msg = ad.mul(ad.gather_rows(wh, s.src), ad.reshape(alpha, (len(s.src), heads, 1)))
    agg = ad.reshape(ad.segment_sum(msg, s.dst, n), (n, heads * out))
    res = ad.add(agg, params[f"b{k}"])
    return (res, alpha) if return_attention else res


def gin_layer(h, params, k: int, s: MessageStructure, use_edge_feature: bool):
    """MLP((1 + eps) h_v + sum of neighbour messages)."""
    nb = ad.gather_rows(h, s.nb_src)
    if use_edge_feature:
        nb = ad.relu(ad.add(nb, ad.mul(s.nb_feature[:, None], params[f"edge{k}"])))
    agg = ad.add(ad.mul(ad.add(params[f"eps{k}"], 1.0), h), ad.segment_sum(nb, s.nb_dst, s.n_nodes))
    z = ad.relu(ad.add(ad.matmul(agg, params[f"W{k}a"]), params[f"b{k}a"]))
    return ad.add(ad.matmul(z, params[f"W{k}b"]), params[f"b{k}b"])


# ------------------------------------------------------------------- forward

def _check_input(graph: CircuitGraph, params, config: GnnConfig):
    if graph.features is None:
        raise ValidationError("graph has no node features; preprocess before running a model")
    want = _input_width(config, params)
    if graph.features.shape[1] != want:
        raise ValidationError(
            f"graph has {graph.features.shape[1]} feature columns, model expects {want}"
        )


def _after_layer(h, k: int, config: GnnConfig, training: bool, seed: int):
    h = ad.relu(h)
    if k == 0:
        h = ad.dropout(h, config.dropout, training, seed)
    return h


def gcn_forward(graph, params, config: GnnConfig = GnnConfig(), training=False, seed=0, structure=None):
    _check_input(graph, params, config)
    s = structure or message_structure(graph)
    h = ad.Tensor(graph.features)
    for k in range(config.n_layers):
        h = gcn_layer(h, params[f"W{k}"], params[f"b{k}"], s)
        if k < config.n_layers - 1:
            h = _after_layer(h, k, config, training, seed)
    return ad.reshape(h, (graph.n_nodes,))


def gat_forward(graph, params, config: GnnConfig = GnnConfig(arch="gat"), training=False, seed=0, structure=None):
    _check_input(graph, params, config)
    s = structure or message_structure(graph)
    h = ad.Tensor(graph.features)
    for k in range(config.n_layers):
        last = k == config.n_layers - 1
        h = gat_layer(h, params, k, 1 if last else config.heads, s, config.use_edge_feature)
        if not last:
            h = _after_layer(h, k, config, training, seed)
    return ad.reshape(h, (graph.n_nodes,))


def gin_forward(graph, params, config: GnnConfig = GnnConfig(arch="gin"), training=False, seed=0, structure=None):
    _check_input(graph, params, config)
    s = structure or message_structure(graph)
    h = ad.Tensor(graph.features)
    for k in range(config.n_layers):
        h = _after_layer(gin_layer(h, params, k, s, config.use_edge_feature), k, config, training, seed)
    out = ad.add(ad.matmul(h, params["W_out"]), params["b_out"])
    return ad.reshape(out, (graph.n_nodes,))


FORWARD = {"gcn": gcn_forward, "gat": gat_forward, "gin": gin_forward}


def forward(graph, params, config: GnnConfig, training=False, seed=0, structure=None):
    return FORWARD[config.arch](graph, params, config, training=training, seed=seed, structure=structure)


def gat_attention(graph, params, config: GnnConfig, layer: int = 0):
    """Attention coefficients (E_with_self_loops, heads) of one GAT layer in eval mode."""
    s = message_structure(graph)
    h = ad.Tensor(graph.features)
    for k in range(layer + 1):
        last = k == config.n_layers - 1
        heads = 1 if last else config.heads
        h, alpha = gat_layer(h, params, k, heads, s, config.use_edge_feature, return_attention=True)
        if not last:
            h = _after_layer(h, k, config, False, 0)
    return s, alpha.data


# ------------------------------------------------------------------ training

@dataclass
class TrainedModel:
    config: GnnConfig
    params: Dict[str, np.ndarray]
    label_scale: float
    in_features: int
    scaler: Optional[ScalerParams] = None
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    wall_clock_s: float = 0.0
    epoch_seconds: List[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def tensors(self) -> Dict[str, ad.Tensor]:
        return {k: ad.Tensor(v, name=k) for k, v in self.params.items()}

    def to_dict(self) -> dict:
        """JSON envelope; timings are left out so reruns serialise identically."""
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "config": self.config.to_dict(),
            "params": params_to_dict(self.tensors()),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "label_scale": self.label_scale,
            "in_features": self.in_features,
            "best_epoch": self.best_epoch,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not a GNN model file (format={d.get('format')!r})")
        params = params_from_dict(d["params"], requires_grad=False)
        return cls(
            config=GnnConfig(**d["config"]),
            params={k: t.data for k, t in params.items()},
            label_scale=float(d["label_scale"]),
            in_features=int(d["in_features"]),
            scaler=None if d.get("scaler") is None else ScalerParams.from_dict(d["scaler"]),
            best_epoch=int(d.get("best_epoch", 0)),
            metadata=d.get("metadata", {}),
        )


def _mae_loss(pred, idx, target):
    return ad.mean(ad.abs_(ad.sub(ad.gather_rows(pred, idx), target)))


def train(graph: CircuitGraph, train_idx, val_idx=None, config: GnnConfig = GnnConfig(), labels=None) -> TrainedModel:
    """Full-graph training with MAE loss, Adam and early stopping on validation MAE.

    With an empty validation set the training MAE drives model selection.
    """
    if graph.features is None:
        raise ValidationError("graph has no node features")
    y = graph.labels if labels is None else np.asarray(labels, dtype=float)
    train_idx = as_index(train_idx, graph.n_nodes, "train_idx")
    val_idx = as_index(val_idx, graph.n_nodes, "val_idx")
    if train_idx.size == 0:
        raise ValidationError("training split is empty")
    if y is None:
        raise ValidationError("graph carries no IR-drop labels")
    used = np.concatenate([train_idx, val_idx])
    if np.any(~np.isfinite(y[used])):
        raise ValidationError("missing labels on training/validation nodes")

    scale = float(np.max(y[train_idx]))
    if not scale > 0:
        scale = 1.0
    target = ad.Tensor(y[train_idx] / scale)
    structure = message_structure(graph)
    params = init_params(config, graph.features.shape[1])
    opt = ad.Adam(params, lr=config.lr, weight_decay=config.weight_decay)

    history: List[dict] = []
    epoch_seconds: List[float] = []
    best = np.inf
    best_params = {k: v.data.copy() for k, v in params.items()}
    best_epoch = 0
    wait = 0
    t_start = time.perf_counter()
    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        opt.zero_grad()
        pred = forward(graph, params, config, training=True, seed=config.seed * 1_000_003 + epoch, structure=structure)
        loss = _mae_loss(pred, train_idx, target)
        if not np.isfinite(loss.item()):
            raise NumericError(f"non-finite training loss at epoch {epoch}")
        loss.backward()
        opt.step()
        epoch_seconds.append(time.perf_counter() - t0)

        out = forward(graph, params, config, training=False, structure=structure).data * scale
        train_mae = float(np.mean(np.abs(out[train_idx] - y[train_idx])))
        val_mae = float(np.mean(np.abs(out[val_idx] - y[val_idx]))) if val_idx.size else float("nan")
        history.append({"epoch": epoch, "loss": loss.item(), "train_mae_mv": train_mae, "val_mae_mv": val_mae})

        score = val_mae if val_idx.size else train_mae
        if score < best:
            best, best_epoch, wait = score, epoch, 0
            best_params = {k: v.data.copy() for k, v in params.items()}
        else:
            wait += 1
            if wait > config.patience:
                break

    return TrainedModel(
        config=config,
        params=best_params,
        label_scale=scale,
        in_features=graph.features.shape[1],
        scaler=graph.scaler,
        history=history,
        best_epoch=best_epoch,
        wall_clock_s=time.perf_counter() - t_start,
        epoch_seconds=epoch_seconds,
    )


def predict(model: TrainedModel, graph: CircuitGraph) -> np.ndarray:
    """Per-node IR drop in mV."""
    if model.scaler is not None and graph.scaler is not None and graph.scaler != model.scaler:
        raise ValidationError("graph was preprocessed with a different scaler than the model's")
    if model.scaler is not None and graph.scaler is None:
        raise ValidationError("graph carries no scaler; preprocess it with the model's scaler first")
    out = forward(graph, model.tensors(), model.config, training=False)
    return out.data * model.label_scale


class GraphRegressor(RegressorMixin, BaseEstimator):
    """Estimator front end to :func:`train` / :func:`predict`.

    ``X`` is a :class:`CircuitGraph` with preprocessed node features; the
    training and validation node indices are passed to ``fit``.
    """

    def __init__(
        self,
        arch="gcn",
        n_layers=3,
        hidden_channels=64,
        heads=4,
        dropout=0.5,
        lr=1e-4,
        weight_decay=1e-3,
        max_epochs=2000,
        patience=200,
        use_edge_feature=True,
        seed=0,
    ):
        self.arch = arch
        self.n_layers = n_layers
        self.hidden_channels = hidden_channels
        self.heads = heads
        self.dropout = dropout
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.use_edge_feature = use_edge_feature
        self.seed = seed

    def _config(self) -> GnnConfig:
        return GnnConfig(**self.get_params())

    def fit(self, X: CircuitGraph, y=None, train_idx=None, val_idx=None):
        if not isinstance(X, CircuitGraph):
            raise ValidationError("GraphRegressor.fit expects a CircuitGraph")
        if train_idx is None:
            train_idx = np.arange(X.n_nodes)
        self.model_ = train(X, train_idx, val_idx, self._config(), labels=y)
        self.history_ = self.model_.history
        self.n_features_in_ = self.model_.in_features
        return self

    def predict(self, X: CircuitGraph) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("GraphRegressor is not fitted yet")
        return predict(self.model_, X)
