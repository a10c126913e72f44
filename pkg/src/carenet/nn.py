"""Dense numerical kernel for the survival models.

Implements exactly the pieces the model zoo needs: mean-aggregation
message passing over in-neighbors, max-pool readout, dense layers,
binary cross-entropy and Adam, with hand-written reverse-mode gradients.
Everything is float64 and single-pass deterministic so that training runs
are bit-reproducible and gradients can be audited against finite
differences.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

Params = dict[str, np.ndarray]


class DimensionError(ValueError):
    """Operand shapes are inconsistent with the layer contract."""


class EmptyGraphError(ValueError):
    """Readout over zero nodes; callers substitute the zero vector."""


class NumericsError(ValueError):
    """Non-finite values crossed a layer boundary."""


def check_finite(name: str, a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericsError(f"non-finite values in {name}")
    return a


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign for stability; output stays strictly inside (0, 1).
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, 1e-15, 1.0 - 1e-15)


# ---------------------------------------------------------------------------
# Neighbor aggregation


class MeanAggregator:
    """Mean over in-neighbors, compiled from an adjacency list.

    ``in_neighbors[v]`` lists the nodes whose features flow into ``v``.
    Summation order is fixed at compile time, so repeated applications are
    bitwise identical.
    """

    def __init__(self, in_neighbors: Sequence[Sequence[int]]):
        self.n_nodes = len(in_neighbors)
        src = []
        dst = []
        for v, neigh in enumerate(in_neighbors):
            for u in neigh:
                if not 0 <= u < self.n_nodes:
                    raise DimensionError(
                        f"in-neighbor index {u} out of range for {self.n_nodes} nodes"
                    )
                src.append(u)
                dst.append(v)
        self.src = np.asarray(src, dtype=np.intp)
        self.dst = np.asarray(dst, dtype=np.intp)
        self.counts = np.bincount(self.dst, minlength=self.n_nodes).astype(np.float64)
        # Edges grouped by destination for the forward pass and by source
        # for the backward pass; reduceat needs contiguous groups.
        self._by_dst = np.argsort(self.dst, kind="stable")
        self._by_src = np.argsort(self.src, kind="stable")
        self._dst_groups = _group_starts(self.dst[self._by_dst])
        self._src_groups = _group_starts(self.src[self._by_src])

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def mean(self, H: np.ndarray) -> np.ndarray:
        """Row v of the result is the mean of H over v's in-neighbors
        (zero vector when v has none)."""
        if H.shape[0] != self.n_nodes:
            raise DimensionError(
                f"feature matrix has {H.shape[0]} rows, aggregator built for {self.n_nodes}"
            )
        M = np.zeros_like(H)
        if self.n_edges == 0:
            return M
        keys, starts = self._dst_groups
        sums = np.add.reduceat(H[self.src[self._by_dst]], starts, axis=0)
        M[keys] = sums / self.counts[keys, None]
        return M

    def mean_backward(self, dM: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`mean`: routes dM[v]/deg(v) back to each
        in-neighbor of v."""
        dH = np.zeros_like(dM)
        if self.n_edges == 0:
            return dH
        scaled = dM / np.maximum(self.counts, 1.0)[:, None]
        keys, starts = self._src_groups
        sums = np.add.reduceat(scaled[self.dst[self._by_src]], starts, axis=0)
        dH[keys] = sums
        return dH


def _group_starts(sorted_keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if sorted_keys.size == 0:
        return sorted_keys, np.empty(0, dtype=np.intp)
    mask = np.empty(sorted_keys.size, dtype=bool)
    mask[0] = True
    mask[1:] = sorted_keys[1:] != sorted_keys[:-1]
    starts = np.flatnonzero(mask)
    return sorted_keys[starts], starts


def aggregator_from_edges(n_nodes: int, edges: Iterable[tuple[int, int]]) -> MeanAggregator:
    """Build the in-neighbor aggregator from directed (src, dst) pairs."""
    neigh: list[list[int]] = [[] for _ in range(n_nodes)]
    for s, d in edges:
        if not (0 <= s < n_nodes and 0 <= d < n_nodes):
            raise DimensionError(f"edge ({s}, {d}) out of range for {n_nodes} nodes")
        neigh[d].append(s)
    return MeanAggregator(neigh)


# ---------------------------------------------------------------------------
# Layers


@dataclass
class SageLayerParams:
    """One message-passing layer: W has shape (d_out, 2*d_in) and acts on
    concat(self, neighbor-mean)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise DimensionError(
                f"inconsistent layer shapes W={self.W.shape} b={self.b.shape}"
            )
        if self.W.shape[1] % 2 != 0:
            raise DimensionError("W must act on concat(self, neighbor-mean)")


def sage_forward(
    H: np.ndarray, adj: MeanAggregator | Sequence[Sequence[int]], params: SageLayerParams
):
    """out_v = ReLU(W @ concat(H_v, mean of in-neighbor rows) + b).

    Returns (out, cache); cache feeds :func:`sage_backward`.
    """
    agg = adj if isinstance(adj, MeanAggregator) else MeanAggregator(adj)
    if 2 * H.shape[1] != params.W.shape[1]:
        raise DimensionError(
            f"input dim {H.shape[1]} incompatible with W shape {params.W.shape}"
        )
    check_finite("sage input", H)
    M = agg.mean(H)
    Z = np.concatenate([H, M], axis=1) @ params.W.T + params.b
    out = relu(Z)
    check_finite("sage output", out)
    return out, (H, M, Z, agg, params)


def sage_backward(dout: np.ndarray, cache):
    """Gradients of a sage layer. Returns (dH, dW, db)."""
    H, M, Z, agg, params = cache
    dZ = dout * (Z > 0.0)
    concat = np.concatenate([H, M], axis=1)
    dW = dZ.T @ concat
    db = dZ.sum(axis=0)
    dconcat = dZ @ params.W
    d = H.shape[1]
    dH = dconcat[:, :d] + agg.mean_backward(dconcat[:, d:])
    return dH, dW, db


def maxpool_readout(H: np.ndarray) -> np.ndarray:
    """Per-dimension maximum across all rows."""
    if H.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={H.ndim}")
    if H.shape[0] == 0:
        raise EmptyGraphError("max-pool readout over an empty graph")
    return H.max(axis=0)


def maxpool_argmax(H: np.ndarray) -> np.ndarray:
    """Row index of the maximum per column, first occurrence on ties;
    this is where the readout routes its gradient."""
    if H.shape[0] == 0:
        raise EmptyGraphError("max-pool readout over an empty graph")
    return H.argmax(axis=0)


ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": sigmoid,
    "relu": relu,
    "identity": lambda z: z,
}


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "identity"):
    """Affine map plus activation; x may be a vector or a (batch, d) matrix."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if x.shape[-1] != W.shape[1]:
        raise DimensionError(f"input dim {x.shape[-1]} != W columns {W.shape[1]}")
    check_finite("dense input", x)
    z = x @ W.T + b
    return ACTIVATIONS[activation](z)


# ---------------------------------------------------------------------------
# Loss

BCE_EPS = 1e-7


def bce_loss(p: float | np.ndarray, y: float | np.ndarray, weight: float | np.ndarray = 1.0):
    """-weight * (y*ln p + (1-y)*ln(1-p)) with p clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    return -np.asarray(weight) * (y * np.log(p) + (1.0 - y) * np.log1p(-p))


def bce_with_logits(z: np.ndarray, y: np.ndarray, weight: np.ndarray | float = 1.0):
    """Mean weighted BCE computed from logits, with its gradient in z.

    Value matches bce_loss(sigmoid(z), y, weight) away from the clamp;
    the logit form stays stable for large |z|.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64), z.shape)
    # softplus(z) - y*z, evaluated stably on both tails
    losses = w * (np.logaddexp(0.0, z) - y * z)
    loss = losses.mean()
    dz = w * (sigmoid(z) - y) / z.size
    return loss, dz


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> Params:
    """One Adam update; returns new params, mutates the optimizer state."""
    state.t += 1
    t = state.t
    out: Params = {}
    for name in params:
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        mhat = state.m[name] / (1.0 - state.beta1**t)
        vhat = state.v[name] / (1.0 - state.beta2**t)
        out[name] = params[name] - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return out


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is malformed or has an unsupported version."""


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    a = np.frombuffer(raw, dtype="<f8").copy()
    return a.reshape(obj["shape"])


def save_params(path, params: Params, meta: dict | None = None) -> None:
    """Dump parameter tensors losslessly (little-endian float64 + base64)."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {name: _encode_array(a) for name, a in sorted(params.items())},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_params(path) -> tuple[Params, dict]:
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version!r} unsupported (expected {CHECKPOINT_VERSION})"
        )
    params = {name: _decode_array(obj) for name, obj in doc["params"].items()}
    return params, doc.get("meta", {})
