"""The five survival-prediction model variants.

* collab_only   — 4 mean-aggregation layers over the bipartite graph,
                  per-layer hidden outputs concatenated to 128-dim node
                  embeddings, max-pool readout, dense head.
* comorbidity_only — dense layer over the 39-dim comorbidity vector.
* combined      — collab trunk; comorbidity vector concatenated to the
                  graph embedding before the head (167 -> 1).
* attr_only     — dense head over max-pooled raw node attributes
                  (no message passing).
* topo_only     — the 4-layer trunk on a simplified (all-HCP or all-note)
                  graph with log-degree features only.

All models share one forward/backward/train machinery operating on
batches; gradients are exact and audited by finite differences in the
test suite.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import graph as graphmod
from . import nn
from .graph import CollabGraph, SimplifiedGraph
from .taxonomy import FEATURE_DIM

N_COMORBIDITIES = 39
N_SAGE_LAYERS = 4
DEFAULT_HIDDEN = 32

MODEL_KINDS = ("collab_only", "comorbidity_only", "combined", "attr_only", "topo_only")


class ContractError(TypeError):
    """Instance does not match the model's input contract."""


class DegenerateDataError(ValueError):
    """Training set is empty or contains a single class."""


@dataclass(frozen=True)
class Hyperparams:
    hidden_dim: int = DEFAULT_HIDDEN
    lr: float = 1e-3
    epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.1
    class_weighting: bool = False
    weight_decay: float = 0.0  # decoupled; applied to weight matrices only

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "lr": self.lr,
            "epochs": self.epochs,
            "patience": self.patience,
            "val_fraction": self.val_fraction,
            "class_weighting": self.class_weighting,
            "weight_decay": self.weight_decay,
        }


# ---------------------------------------------------------------------------
# Batched graph inputs


@dataclass
class GraphInput:
    """One graph, encoded: node features plus in-neighbor lists."""

    X: np.ndarray
    in_neighbors: list[list[int]]


@dataclass
class GraphBatch:
    """Disjoint union of graphs; offsets delimit each graph's node rows."""

    X: np.ndarray
    agg: nn.MeanAggregator
    offsets: np.ndarray  # (n_graphs + 1,)

    @property
    def n_graphs(self) -> int:
        return len(self.offsets) - 1


def encode_collab_graph(g: CollabGraph) -> GraphInput:
    return GraphInput(X=graphmod.encode_features(g), in_neighbors=g.in_neighbors())


def encode_simplified_graph(g: SimplifiedGraph) -> GraphInput:
    return GraphInput(X=graphmod.structural_features(g), in_neighbors=g.in_neighbors())


def batch_graphs(inputs: Sequence[GraphInput], feature_dim: int) -> GraphBatch:
    sizes = [inp.X.shape[0] for inp in inputs]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
    total = int(offsets[-1])
    X = np.zeros((total, feature_dim), dtype=np.float64)
    neigh: list[list[int]] = []
    for inp, start in zip(inputs, offsets[:-1]):
        if inp.X.size:
            X[start : start + inp.X.shape[0]] = inp.X
        for row in inp.in_neighbors:
            neigh.append([int(start) + u for u in row])
    return GraphBatch(X=X, agg=nn.MeanAggregator(neigh), offsets=offsets)


def _pool_batch(H: np.ndarray, offsets: np.ndarray):
    """Per-graph max-pool with first-occurrence argmax; empty graphs pool
    to the zero vector."""
    n_graphs = len(offsets) - 1
    d = H.shape[1]
    pooled = np.zeros((n_graphs, d), dtype=np.float64)
    argmax = np.full((n_graphs, d), -1, dtype=np.intp)
    for g in range(n_graphs):
        s, e = int(offsets[g]), int(offsets[g + 1])
        if e > s:
            block = H[s:e]
            am = block.argmax(axis=0)
            pooled[g] = block[am, np.arange(d)]
            argmax[g] = s + am
    return pooled, argmax


def _pool_backward(dpooled: np.ndarray, argmax: np.ndarray, n_rows: int) -> np.ndarray:
    dH = np.zeros((n_rows, dpooled.shape[1]), dtype=np.float64)
    cols = np.arange(dpooled.shape[1])
    for g in range(dpooled.shape[0]):
        rows = argmax[g]
        live = rows >= 0
        dH[rows[live], cols[live]] += dpooled[g, live]
    return dH


# ---------------------------------------------------------------------------
# Parameter init


def _glorot(rng: np.random.Generator, d_out: int, d_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_out, d_in))


def _init_trunk(rng: np.random.Generator, in_dim: int, hidden: int) -> nn.Params:
    params: nn.Params = {}
    d = in_dim
    for layer in range(N_SAGE_LAYERS):
        params[f"sage{layer}.W"] = _glorot(rng, hidden, 2 * d)
        params[f"sage{layer}.b"] = np.zeros(hidden)
        d = hidden
    return params


def _trunk_forward(batch: GraphBatch, params: nn.Params, hidden: int):
    H = batch.X
    caches = []
    outs = []
    for layer in range(N_SAGE_LAYERS):
        lp = nn.SageLayerParams(params[f"sage{layer}.W"], params[f"sage{layer}.b"])
        H, cache = nn.sage_forward(H, batch.agg, lp)
        caches.append(cache)
        outs.append(H)
    Hcat = np.concatenate(outs, axis=1)  # (N, 4*hidden) node embeddings
    pooled, argmax = _pool_batch(Hcat, batch.offsets)
    return pooled, (caches, argmax, batch, hidden)


def _trunk_backward(dpooled: np.ndarray, cache) -> nn.Params:
    caches, argmax, batch, hidden = cache
    n_rows = batch.X.shape[0]
    dHcat = _pool_backward(dpooled, argmax, n_rows)
    grads: nn.Params = {}
    dnext = None  # gradient flowing into the output of the current layer
    for layer in reversed(range(N_SAGE_LAYERS)):
        dout = dHcat[:, layer * hidden : (layer + 1) * hidden].copy()
        if dnext is not None:
            dout += dnext
        dH, dW, db = nn.sage_backward(dout, caches[layer])
        grads[f"sage{layer}.W"] = dW
        grads[f"sage{layer}.b"] = db
        dnext = dH
    return grads


def _head_forward(x: np.ndarray, params: nn.Params):
    logits = x @ params["head.W"].T + params["head.b"]
    return logits[:, 0], x


def _head_backward(dlogits: np.ndarray, x: np.ndarray, params: nn.Params):
    dW = dlogits[None, :] @ x
    db = np.array([dlogits.sum()])
    dx = dlogits[:, None] @ params["head.W"]
    return dx, {"head.W": dW, "head.b": db}


# ---------------------------------------------------------------------------
# Model variants


class CollabOnlyModel:
    """Graph-only model over the attributed bipartite collaboration graph."""

    kind = "collab_only"
    in_dim = FEATURE_DIM

    def __init__(self, hidden_dim: int = DEFAULT_HIDDEN):
        self.hidden = hidden_dim
        self.emb_dim = N_SAGE_LAYERS * hidden_dim

    def init_params(self, seed: int) -> nn.Params:
        rng = np.random.default_rng(seed)
        params = _init_trunk(rng, self.in_dim, self.hidden)
        params["head.W"] = _glorot(rng, 1, self.emb_dim)
        params["head.b"] = np.zeros(1)
        return params

    def prepare(self, instances: Sequence[CollabGraph]) -> list[GraphInput]:
        for g in instances:
            if not isinstance(g, CollabGraph):
                raise ContractError(f"{self.kind} expects CollabGraph, got {type(g).__name__}")
        return [encode_collab_graph(g) for g in instances]

    def batch(self, prepared: Sequence[GraphInput], idx: Sequence[int]) -> GraphBatch:
        return batch_graphs([prepared[i] for i in idx], self.in_dim)

    def forward(self, batch: GraphBatch, params: nn.Params):
        emb, trunk_cache = _trunk_forward(batch, params, self.hidden)
        logits, x = _head_forward(emb, params)
        return logits, (trunk_cache, x, params)

    def backward(self, cache, dlogits: np.ndarray) -> nn.Params:
        trunk_cache, x, params = cache
        demb, grads = _head_backward(dlogits, x, params)
        grads.update(_trunk_backward(demb, trunk_cache))
        return grads

    def node_embeddings(self, g: CollabGraph, params: nn.Params) -> np.ndarray:
        """Concatenated per-layer hidden outputs (n_nodes x 4*hidden)."""
        batch = self.batch(self.prepare([g]), [0])
        H = batch.X
        outs = []
        for layer in range(N_SAGE_LAYERS):
            lp = nn.SageLayerParams(params[f"sage{layer}.W"], params[f"sage{layer}.b"])
            H, _ = nn.sage_forward(H, batch.agg, lp)
            outs.append(H)
        return np.concatenate(outs, axis=1)


class TopoOnlyModel(CollabOnlyModel):
    """Same architecture on a simplified graph with log-degree features."""

    kind = "topo_only"
    in_dim = 2

    def prepare(self, instances: Sequence[SimplifiedGraph]) -> list[GraphInput]:
        for g in instances:
            if not isinstance(g, SimplifiedGraph):
                raise ContractError(
                    f"{self.kind} expects SimplifiedGraph, got {type(g).__name__}"
                )
        return [encode_simplified_graph(g) for g in instances]

    def node_embeddings(self, g: SimplifiedGraph, params: nn.Params) -> np.ndarray:
        batch = self.batch(self.prepare([g]), [0])
        H = batch.X
        outs = []
        for layer in range(N_SAGE_LAYERS):
            lp = nn.SageLayerParams(params[f"sage{layer}.W"], params[f"sage{layer}.b"])
            H, _ = nn.sage_forward(H, batch.agg, lp)
            outs.append(H)
        return np.concatenate(outs, axis=1)


class ComorbidityOnlyModel:
    """Single dense layer + sigmoid over the comorbidity vector."""

    kind = "comorbidity_only"
    in_dim = N_COMORBIDITIES

    def __init__(self, hidden_dim: int = DEFAULT_HIDDEN):
        del hidden_dim  # no hidden layers

    def init_params(self, seed: int) -> nn.Params:
        rng = np.random.default_rng(seed)
        return {"head.W": _glorot(rng, 1, self.in_dim), "head.b": np.zeros(1)}

    def prepare(self, instances) -> np.ndarray:
        rows = []
        for v in instances:
            try:
                v = np.asarray(v, dtype=np.float64)
            except (TypeError, ValueError):
                raise ContractError(
                    f"{self.kind} expects a {self.in_dim}-dim vector, got {type(v).__name__}"
                ) from None
            if v.shape != (self.in_dim,):
                raise ContractError(
                    f"{self.kind} expects a {self.in_dim}-dim vector, got shape {v.shape}"
                )
            rows.append(v)
        return np.array(rows).reshape(len(rows), self.in_dim)

    def batch(self, prepared: np.ndarray, idx: Sequence[int]) -> np.ndarray:
        return prepared[list(idx)]

    def forward(self, batch: np.ndarray, params: nn.Params):
        logits, x = _head_forward(batch, params)
        return logits, (x, params)

    def backward(self, cache, dlogits: np.ndarray) -> nn.Params:
        x, params = cache
        _, grads = _head_backward(dlogits, x, params)
        return grads


class AttrOnlyModel:
    """Dense head over max-pooled raw node attributes; no message passing."""

    kind = "attr_only"
    in_dim = FEATURE_DIM

    def __init__(self, hidden_dim: int = DEFAULT_HIDDEN):
        del hidden_dim

    def init_params(self, seed: int) -> nn.Params:
        rng = np.random.default_rng(seed)
        return {"head.W": _glorot(rng, 1, self.in_dim), "head.b": np.zeros(1)}

    def prepare(self, instances: Sequence[CollabGraph]) -> np.ndarray:
        rows = []
        for g in instances:
            if not isinstance(g, CollabGraph):
                raise ContractError(f"{self.kind} expects CollabGraph, got {type(g).__name__}")
            rows.append(pooled_attributes(g))
        return np.array(rows).reshape(len(rows), self.in_dim)

    def batch(self, prepared: np.ndarray, idx: Sequence[int]) -> np.ndarray:
        return prepared[list(idx)]

    def forward(self, batch: np.ndarray, params: nn.Params):
        logits, x = _head_forward(batch, params)
        return logits, (x, params)

    def backward(self, cache, dlogits: np.ndarray) -> nn.Params:
        x, params = cache
        _, grads = _head_backward(dlogits, x, params)
        return grads


def pooled_attributes(g: CollabGraph) -> np.ndarray:
    """Max over nodes of the raw 131-dim features (zeros for an empty graph)."""
    X = graphmod.encode_features(g)
    if X.shape[0] == 0:
        return np.zeros(FEATURE_DIM)
    return nn.maxpool_readout(X)


class CombinedModel:
    """Collab trunk with the comorbidity vector joined before the head."""

    kind = "combined"
    in_dim = FEATURE_DIM

    def __init__(self, hidden_dim: int = DEFAULT_HIDDEN):
        self.hidden = hidden_dim
        self.emb_dim = N_SAGE_LAYERS * hidden_dim

    def init_params(self, seed: int) -> nn.Params:
        rng = np.random.default_rng(seed)
        params = _init_trunk(rng, self.in_dim, self.hidden)
        params["head.W"] = _glorot(rng, 1, self.emb_dim + N_COMORBIDITIES)
        params["head.b"] = np.zeros(1)
        return params

    def prepare(self, instances) -> tuple[list[GraphInput], np.ndarray]:
        graphs = []
        vecs = []
        for inst in instances:
            try:
                g, v = inst
            except (TypeError, ValueError):
                raise ContractError(
                    f"{self.kind} expects (CollabGraph, comorbidity vector)"
                ) from None
            if not isinstance(g, CollabGraph):
                raise ContractError(f"{self.kind} expects CollabGraph, got {type(g).__name__}")
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (N_COMORBIDITIES,):
                raise ContractError(
                    f"{self.kind} expects a {N_COMORBIDITIES}-dim comorbidity vector"
                )
            graphs.append(encode_collab_graph(g))
            vecs.append(v)
        return graphs, np.array(vecs).reshape(len(vecs), N_COMORBIDITIES)

    def batch(self, prepared, idx: Sequence[int]):
        graphs, vecs = prepared
        return batch_graphs([graphs[i] for i in idx], self.in_dim), vecs[list(idx)]

    def forward(self, batch, params: nn.Params):
        gbatch, vecs = batch
        emb, trunk_cache = _trunk_forward(gbatch, params, self.hidden)
        joined = np.concatenate([emb, vecs], axis=1)
        logits, x = _head_forward(joined, params)
        return logits, (trunk_cache, x, params)

    def backward(self, cache, dlogits: np.ndarray) -> nn.Params:
        trunk_cache, x, params = cache
        djoined, grads = _head_backward(dlogits, x, params)
        grads.update(_trunk_backward(djoined[:, : self.emb_dim], trunk_cache))
        return grads


def make_model(kind: str, hidden_dim: int = DEFAULT_HIDDEN):
    classes = {
        "collab_only": CollabOnlyModel,
        "comorbidity_only": ComorbidityOnlyModel,
        "combined": CombinedModel,
        "attr_only": AttrOnlyModel,
        "topo_only": TopoOnlyModel,
    }
    if kind not in classes:
        raise ValueError(f"unknown model kind {kind!r} (choose from {MODEL_KINDS})")
    return classes[kind](hidden_dim=hidden_dim)


def predict(model, params: nn.Params, instance) -> float:
    """Predicted survival probability for one instance."""
    prepared = model.prepare([instance])
    batch = model.batch(prepared, [0])
    logits, _ = model.forward(batch, params)
    return float(nn.sigmoid(logits)[0])


def predict_batch(model, params: nn.Params, batch) -> np.ndarray:
    logits, _ = model.forward(batch, params)
    return nn.sigmoid(logits)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    params: nn.Params
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = np.inf


def class_weights(labels: np.ndarray, enabled: bool) -> np.ndarray:
    """Per-sample weights, inversely proportional to class frequency when
    enabled (mean weight 1), otherwise all ones."""
    labels = np.asarray(labels, dtype=np.float64)
    if not enabled:
        return np.ones_like(labels)
    n = labels.size
    n1 = labels.sum()
    n0 = n - n1
    w1 = n / (2.0 * n1)
    w0 = n / (2.0 * n0)
    return np.where(labels > 0.5, w1, w0)


def _stratified_holdout(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    """Split indices into (train, val); val is stratified and may be empty
    for tiny inputs."""
    train_idx: list[int] = []
    val_idx: list[int] = []
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        n_val = int(round(fraction * members.size)) if members.size >= 2 else 0
        n_val = min(max(n_val, 1 if members.size >= 2 else 0), members.size - 1)
        val_idx.extend(members[:n_val])
        train_idx.extend(members[n_val:])
    return np.array(sorted(train_idx), dtype=np.intp), np.array(sorted(val_idx), dtype=np.intp)


def train(
    model,
    instances: Sequence,
    labels: Sequence[int],
    hp: Hyperparams,
    seed: int,
) -> TrainResult:
    """Train one model; deterministic given (model kind, data, hp, seed).

    Returns the parameters from the best validation-loss epoch together
    with the per-epoch loss history.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.size == 0:
        raise DegenerateDataError("training set is empty")
    if y.min() == y.max():
        raise DegenerateDataError("training set contains a single class")

    prepared = model.prepare(instances)
    rng = np.random.default_rng(seed)
    params = model.init_params(int(rng.integers(2**32)))
    tr_idx, va_idx = _stratified_holdout(y, hp.val_fraction, rng)
    if va_idx.size == 0:  # tiny datasets: monitor training loss instead
        tr_idx = np.arange(y.size, dtype=np.intp)

    w_all = class_weights(y, hp.class_weighting)
    tr_batch = model.batch(prepared, tr_idx)
    y_tr, w_tr = y[tr_idx], w_all[tr_idx]
    if va_idx.size:
        va_batch = model.batch(prepared, va_idx)
        y_va, w_va = y[va_idx], w_all[va_idx]

    state = nn.AdamState(lr=hp.lr)
    result = TrainResult(params=copy.deepcopy(params))
    stall = 0
    for epoch in range(hp.epochs):
        logits, cache = model.forward(tr_batch, params)
        train_loss, dlogits = nn.bce_with_logits(logits, y_tr, w_tr)
        grads = model.backward(cache, dlogits)
        params = nn.adam_step(params, grads, state)
        if hp.weight_decay > 0.0:
            for name in params:
                if name.endswith(".W"):
                    params[name] *= 1.0 - hp.lr * hp.weight_decay

        if va_idx.size:
            va_logits, _ = model.forward(va_batch, params)
            val_loss, _ = nn.bce_with_logits(va_logits, y_va, w_va)
        else:
            tr_logits, _ = model.forward(tr_batch, params)
            val_loss, _ = nn.bce_with_logits(tr_logits, y_tr, w_tr)
        val_loss = float(val_loss)
        result.history.append(
            {"epoch": epoch, "train_loss": float(train_loss), "val_loss": val_loss}
        )
        if val_loss < result.best_val_loss - 1e-12:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            result.params = copy.deepcopy(params)
            stall = 0
        else:
            stall += 1
            if stall > hp.patience:
                break
    return result
