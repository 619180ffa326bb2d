"""GCN and MLP numeric core: parameter packing, symmetric-normalized
propagation, and hand-rolled reverse-mode gradients.

Models are a stack of layers acting on a node-feature matrix.  A
``gcn_conv`` layer propagates through the normalized adjacency before the
affine map; a ``dense`` layer skips propagation.  Hidden layers use ReLU,
the output layer is linear, and the loss is mean softmax cross-entropy over
a node mask.  Gradients are exact (checked against finite differences) and
are returned flat, matching the parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import PopulationGraph


class ShapeError(Exception):
    """Raised when features, parameters, or adjacency disagree on dimensions."""


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    kind: str  # "gcn_conv" | "dense"

    def __post_init__(self):
        if self.kind not in ("gcn_conv", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dims must be positive")

    @property
    def size(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


@dataclass
class ModelParams:
    """Flat float64 parameter vector plus per-layer shape metadata."""

    flat: np.ndarray
    layers: tuple[LayerSpec, ...]
    seed: int = 0

    def __post_init__(self):
        expected = sum(l.size for l in self.layers)
        if self.flat.shape != (expected,):
            raise ValueError(f"flat length {self.flat.shape} != layer total {expected}")
        if not np.all(np.isfinite(self.flat)):
            raise ValueError("parameters must be finite")

    def weight_bias(self, l: int) -> tuple[np.ndarray, np.ndarray]:
        """Views of layer l's weight matrix and bias vector into the flat array."""
        off = sum(s.size for s in self.layers[:l])
        spec = self.layers[l]
        w = self.flat[off : off + spec.in_dim * spec.out_dim].reshape(spec.in_dim, spec.out_dim)
        b = self.flat[off + spec.in_dim * spec.out_dim : off + spec.size]
        return w, b

    def clone(self) -> "ModelParams":
        return ModelParams(flat=self.flat.copy(), layers=self.layers, seed=self.seed)

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat))

    def scale(self, factor: float) -> "ModelParams":
        return ModelParams(flat=self.flat * factor, layers=self.layers, seed=self.seed)

    def add_noise(self, std: float, seed) -> "ModelParams":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return ModelParams(flat=self.flat + rng.normal(0.0, std, self.flat.shape),
                           layers=self.layers, seed=self.seed)


def layer_dims(in_dim: int, hidden_dim: int, out_dim: int, num_layers: int) -> list[tuple[int, int]]:
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    if num_layers == 1:
        return [(in_dim, out_dim)]
    dims = [(in_dim, hidden_dim)]
    dims += [(hidden_dim, hidden_dim)] * (num_layers - 2)
    dims.append((hidden_dim, out_dim))
    return dims


def init_params(dims, kind: str, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, one RNG stream per model."""
    layers = tuple(LayerSpec(i, o, kind) for i, o in dims)
    rng = np.random.default_rng(seed)
    chunks = []
    for spec in layers:
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        chunks.append(rng.uniform(-limit, limit, spec.in_dim * spec.out_dim))
        chunks.append(np.zeros(spec.out_dim))
    return ModelParams(flat=np.concatenate(chunks), layers=layers, seed=seed)


def init_gcn(in_dim: int, hidden_dim: int, out_dim: int, num_layers: int, seed: int) -> ModelParams:
    return init_params(layer_dims(in_dim, hidden_dim, out_dim, num_layers), "gcn_conv", seed)


def init_mlp(in_dim: int, hidden_dim: int, out_dim: int, num_layers: int, seed: int) -> ModelParams:
    return init_params(layer_dims(in_dim, hidden_dim, out_dim, num_layers), "dense", seed)


@dataclass(frozen=True)
class ForwardContext:
    """Normalized adjacency plus the feature matrix it propagates."""

    adj_norm: object  # scipy CSR for full graphs, dense ndarray for small subgraphs
    features: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def normalize_adjacency(graph: PopulationGraph) -> ForwardContext:
    """Symmetric normalization with self-loops: D^{-1/2} (A + I) D^{-1/2}."""
    n = graph.num_nodes
    deg = graph.degrees() + 1.0  # self-loop guarantees positive degree
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(n), np.diff(graph.indptr))
    vals = inv_sqrt[rows] * inv_sqrt[graph.indices]
    adj = sp.csr_matrix((vals, graph.indices.astype(np.int64), graph.indptr), shape=(n, n))
    adj = adj + sp.diags(inv_sqrt * inv_sqrt, format="csr")
    return ForwardContext(adj_norm=adj.tocsr(), features=graph.features)


def dense_normalized_adjacency(n: int, edges: np.ndarray) -> np.ndarray:
    """Dense D^{-1/2}(A+I)D^{-1/2} for small node sets (edges are local (u,v) pairs)."""
    a = np.zeros((n, n))
    if edges.size:
        a[edges[:, 0], edges[:, 1]] = 1.0
        a[edges[:, 1], edges[:, 0]] = 1.0
    a[np.arange(n), np.arange(n)] = 1.0
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_dims(x: np.ndarray, params: ModelParams):
    if x.shape[1] != params.layers[0].in_dim:
        raise ShapeError(f"feature dim {x.shape[1]} != first-layer in_dim {params.layers[0].in_dim}")


def _forward(adj, x: np.ndarray, params: ModelParams, keep_cache: bool):
    """Shared forward pass; returns (logits, cache of (pre-affine input, pre-activation))."""
    _check_dims(x, params)
    h = x
    cache = []
    last = len(params.layers) - 1
    for l, spec in enumerate(params.layers):
        w, b = params.weight_bias(l)
        p = adj @ h if spec.kind == "gcn_conv" else h
        z = p @ w + b
        if keep_cache:
            cache.append((p, z))
        h = np.maximum(z, 0.0) if l < last else z
    return h, cache


def gcn_forward(ctx: ForwardContext, params: ModelParams) -> np.ndarray:
    """Per-node class logits of the GCN over the whole (transductive) graph."""
    logits, _ = _forward(ctx.adj_norm, ctx.features, params, keep_cache=False)
    return logits


def mlp_forward(features: np.ndarray, params: ModelParams) -> np.ndarray:
    logits, _ = _forward(None, features, params, keep_cache=False)
    return logits


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    sub = logits[idx]
    shifted = sub - sub.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(idx.size), labels[idx]] - log_z
    return float(-log_probs.mean())


def _backward(adj, params: ModelParams, cache, d_logits: np.ndarray) -> np.ndarray:
    """Reverse-mode sweep from an output-logit gradient to a flat parameter gradient."""
    grads = [None] * len(params.layers)
    dz = d_logits
    for l in range(len(params.layers) - 1, -1, -1):
        spec = params.layers[l]
        w, _ = params.weight_bias(l)
        p, _ = cache[l]
        dw = p.T @ dz
        db = dz.sum(axis=0)
        grads[l] = (dw, db)
        if l > 0:
            dp = dz @ w.T
            # normalized adjacency is symmetric, so A^T dp == A dp
            dh = adj @ dp if spec.kind == "gcn_conv" else dp
            _, z_prev = cache[l - 1]
            dz = dh * (z_prev > 0.0)
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


def _loss_and_grad(adj, x: np.ndarray, params: ModelParams, labels: np.ndarray,
                   mask: np.ndarray) -> tuple[float, np.ndarray]:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    logits, cache = _forward(adj, x, params, keep_cache=True)
    loss = masked_cross_entropy(logits, labels, mask)
    probs = softmax(logits[idx])
    d_logits = np.zeros_like(logits)
    d_logits[idx] = probs
    d_logits[idx, labels[idx]] -= 1.0
    d_logits[idx] /= idx.size
    return loss, _backward(adj, params, cache, d_logits)


def loss_and_grad(ctx: ForwardContext, params: ModelParams, labels: np.ndarray,
                  mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean masked cross-entropy and its exact gradient through all layers."""
    return _loss_and_grad(ctx.adj_norm, ctx.features, params, labels, mask)


def mlp_loss_and_grad(features: np.ndarray, params: ModelParams, labels: np.ndarray,
                      mask: np.ndarray) -> tuple[float, np.ndarray]:
    return _loss_and_grad(None, features, params, labels, mask)


def save_params(params: ModelParams, path) -> None:
    """Write a one-line JSON shape header followed by the flat little-endian float64 array."""
    import json

    header = {
        "layers": [[s.in_dim, s.out_dim, s.kind] for s in params.layers],
        "seed": params.seed,
        "dtype": "<f8",
        "length": int(params.flat.size),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path) -> ModelParams:
    import json

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    layers = tuple(LayerSpec(i, o, k) for i, o, k in header["layers"])
    if flat.size != header["length"]:
        raise ValueError(f"parameter payload length {flat.size} != header length {header['length']}")
    return ModelParams(flat=flat, layers=layers, seed=header.get("seed", 0))
