"""Training loops: transductive full-graph descent and per-subgraph batching
with optional clipping and Gaussian noise (DP-SGD).

Five regimes map onto the config flags:

    non-DP          full_graph, no clipping
    clipping        full_graph, clipping
    sub-graphing    subgraph_batch, no clipping
    subg. + clip    subgraph_batch, clipping
    DP              subgraph_batch, clipping, noise, with a PrivacySpec

DP runs calibrate (or validate) the noise multiplier against the accountant
before the first step and log spent epsilon alongside accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .accounting import (CalibrationError, PrivacySpec, calibrate_sigma, clip,
                         clip_rows, compose_and_convert, make_accountant,
                         noisy_batch_gradient)
from .graphs import PopulationGraph
from .nn import (ForwardContext, ModelParams, gcn_forward, init_gcn, init_mlp,
                 loss_and_grad, mlp_forward, mlp_loss_and_grad,
                 normalize_adjacency)
from .sampling import SubgraphStore, sample_training_subgraphs


@dataclass(frozen=True)
class TrainConfig:
    num_layers: int = 2
    hidden_dim: int = 32
    learning_rate: float = 1e-2
    optimizer: str = "adam"  # or "sgd" (with momentum)
    epochs: int = 200  # full-graph budget
    steps: int = 1000  # subgraph-batch budget (overridden by PrivacySpec)
    batch_size: int = 64
    seed: int = 0
    mode: str = "full_graph"  # or "subgraph_batch"
    clipping: bool = False
    clip_norm: float = 1.0
    noise: bool = False
    model_kind: str = "gcn"  # or "mlp"
    max_degree: int = 5  # non-DP subgraphing; DP runs take it from the PrivacySpec
    occurrence_bound: int | None = None  # None -> max_degree * num_layers + 1
    eval_every: int | None = None  # None -> every epoch / every 50 steps

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.mode not in ("full_graph", "subgraph_batch"):
            raise ValueError("mode must be 'full_graph' or 'subgraph_batch'")
        if self.model_kind not in ("gcn", "mlp"):
            raise ValueError("model_kind must be 'gcn' or 'mlp'")
        if self.noise and not (self.clipping and self.mode == "subgraph_batch"):
            raise ValueError("noise requires clipping and subgraph_batch mode")
        if self.clipping and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when clipping")


class _Sgd:
    def __init__(self, lr, momentum=0.9):
        self.lr, self.momentum, self.buf = lr, momentum, None

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        if self.buf is None:
            self.buf = np.zeros_like(flat)
        self.buf *= self.momentum
        self.buf += grad
        flat -= self.lr * self.buf


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(flat)
            self.v = np.zeros_like(flat)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        flat -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(config: TrainConfig):
    return _Adam(config.learning_rate) if config.optimizer == "adam" else _Sgd(config.learning_rate)


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def _full_logits(graph: PopulationGraph, params: ModelParams,
                 ctx: ForwardContext | None = None) -> np.ndarray:
    if params.layers[0].kind == "gcn_conv":
        ctx = ctx if ctx is not None else normalize_adjacency(graph)
        return gcn_forward(ctx, params)
    return mlp_forward(graph.features, params)


def _accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    pred = np.argmax(logits[idx], axis=1)  # argmax ties resolve to the lower class id
    return float((pred == labels[idx]).mean())


def evaluate(graph: PopulationGraph, params: ModelParams, mask: np.ndarray) -> float:
    """Argmax accuracy of the model over the masked nodes (transductive forward)."""
    return _accuracy(_full_logits(graph, params), graph.labels, mask)


def subgraph_batch_gradients(adj: np.ndarray, feats: np.ndarray, root_labels: np.ndarray,
                             params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-subgraph root losses and flat gradients, vectorized over the batch.

    ``adj`` is a zero-padded (m, s, s) stack of normalized adjacencies with
    the root at local index 0; gradients come back as an (m, n_params) matrix
    in the same layout as ``params.flat``.
    """
    m = adj.shape[0]
    h = feats
    cache = []
    last = len(params.layers) - 1
    for l, spec in enumerate(params.layers):
        w, b = params.weight_bias(l)
        p = adj @ h if spec.kind == "gcn_conv" else h
        z = p @ w + b
        cache.append((p, z))
        h = np.maximum(z, 0.0) if l < last else z
    root_logits = h[:, 0, :]
    shifted = root_logits - root_logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    log_z = np.log(exp.sum(axis=1))
    losses = log_z - shifted[np.arange(m), root_labels]
    probs = exp / exp.sum(axis=1, keepdims=True)

    dz = np.zeros_like(h)
    dz[:, 0, :] = probs
    dz[np.arange(m), 0, root_labels] -= 1.0
    pieces = [None] * len(params.layers)
    for l in range(last, -1, -1):
        spec = params.layers[l]
        w, _ = params.weight_bias(l)
        p, _ = cache[l]
        dw = np.einsum("msi,msj->mij", p, dz)
        db = dz.sum(axis=1)
        pieces[l] = (dw.reshape(m, -1), db)
        if l > 0:
            dp = dz @ w.T
            dh = adj @ dp if spec.kind == "gcn_conv" else dp
            _, z_prev = cache[l - 1]
            dz = dh * (z_prev > 0.0)
    grads = np.concatenate([np.concatenate(pc, axis=1) for pc in pieces], axis=1)
    return losses, grads


def _init_model(graph: PopulationGraph, config: TrainConfig) -> ModelParams:
    maker = init_gcn if config.model_kind == "gcn" else init_mlp
    return maker(graph.feat_dim, config.hidden_dim, graph.num_classes,
                 config.num_layers, config.seed)


def train(graph: PopulationGraph, config: TrainConfig,
          dp: PrivacySpec | None = None) -> tuple[ModelParams, list[dict]]:
    """Train under the configured regime; returns (best-val-accuracy params, log).

    The log has one record per evaluation interval: step, loss, train_acc,
    val_acc, and epsilon_spent for DP runs.  DP runs fail with
    CalibrationError before the first step if the epsilon target cannot be
    met at the requested step count.
    """
    if not graph.train_mask.any():
        raise ValueError("graph has no training nodes; assign splits first")
    if dp is not None and (config.mode != "subgraph_batch" or not config.clipping
                           or not config.noise):
        raise ValueError("DP training requires subgraph_batch mode with clipping and noise")

    params = _init_model(graph, config)
    if config.mode == "full_graph":
        return _train_full_graph(graph, config, params)
    return _train_subgraph(graph, config, params, dp)


def _checkpoint(best, params, val_acc):
    # >= keeps the most-trained params among ties (val accuracy saturates early
    # on easy splits and carries no signal between tied checkpoints)
    best_params, best_acc = best
    if best_params is None or val_acc >= best_acc:
        return (params.clone(), val_acc)
    return best


def _train_full_graph(graph, config, params):
    ctx = normalize_adjacency(graph) if config.model_kind == "gcn" else None
    has_val = bool(graph.val_mask.any())
    optimizer = _make_optimizer(config)
    every = config.eval_every or 1
    log: list[dict] = []
    best = (None, -1.0)
    loss = float("nan")
    for epoch in range(1, config.epochs + 1):
        if config.model_kind == "gcn":
            loss, grad = loss_and_grad(ctx, params, graph.labels, graph.train_mask)
        else:
            loss, grad = mlp_loss_and_grad(graph.features, params, graph.labels,
                                           graph.train_mask)
        if config.clipping:
            grad = clip(grad, config.clip_norm)
        optimizer.step(params.flat, grad)
        if epoch % every == 0 or epoch == config.epochs:
            logits = _full_logits(graph, params, ctx)
            record = {
                "step": epoch,
                "loss": float(loss),
                "train_acc": _accuracy(logits, graph.labels, graph.train_mask),
                "val_acc": _accuracy(logits, graph.labels, graph.val_mask) if has_val else None,
            }
            log.append(record)
            if has_val:
                best = _checkpoint(best, params, record["val_acc"])
    final = best[0] if best[0] is not None else params.clone()
    return final, log


def _train_subgraph(graph, config, params, dp: PrivacySpec | None):
    n_train = int(graph.train_mask.sum())
    if dp is not None:
        dp = dp.resolved(n_train)
        occurrence_bound = dp.effective_occurrence_bound
        max_degree, hops = dp.max_degree, dp.hops
        steps, batch_size = dp.total_steps, dp.batch_size
        sigma = dp.noise_multiplier
        if sigma is None:
            sigma = calibrate_sigma(dp.epsilon_target, dp.delta, steps, n_train,
                                    occurrence_bound, batch_size)
        accountant = make_accountant(sigma, n_train, occurrence_bound, batch_size)
        total_eps = compose_and_convert(accountant, steps, dp.delta)
        if total_eps > dp.epsilon_target * (1.0 + 1e-9):
            raise CalibrationError(
                f"epsilon budget infeasible: sigma={sigma} spends {total_eps:.4g} "
                f"over {steps} steps, target {dp.epsilon_target}"
            )
    else:
        max_degree = config.max_degree
        hops = config.num_layers
        occurrence_bound = config.occurrence_bound or max_degree * hops + 1
        steps, batch_size = config.steps, config.batch_size
        sigma, accountant = 0.0, None

    sampler_rng = _stream(config.seed, 1)
    batch_rng = _stream(config.seed, 2)
    noise_rng = _stream(config.seed, 3)
    subgraphs = sample_training_subgraphs(graph, max_degree, hops, occurrence_bound,
                                          sampler_rng)
    store = SubgraphStore(graph, subgraphs)
    batch_size = min(batch_size, len(store))

    ctx = normalize_adjacency(graph) if config.model_kind == "gcn" else None
    has_val = bool(graph.val_mask.any())
    optimizer = _make_optimizer(config)
    every = config.eval_every or 50
    log: list[dict] = []
    best = (None, -1.0)
    loss_window: list[float] = []
    for step in range(1, steps + 1):
        idx = batch_rng.choice(len(store), size=batch_size, replace=False)
        adj, feats, root_labels = store.batch(idx)
        losses, grads = subgraph_batch_gradients(adj, feats, root_labels, params)
        loss_window.append(float(losses.mean()))
        if config.noise:
            avg = noisy_batch_gradient(grads, config.clip_norm, sigma, noise_rng)
        elif config.clipping:
            avg = clip_rows(grads, config.clip_norm).mean(axis=0)
        else:
            avg = grads.mean(axis=0)
        optimizer.step(params.flat, avg)
        if step % every == 0 or step == steps:
            logits = _full_logits(graph, params, ctx)
            record = {
                "step": step,
                "loss": float(np.mean(loss_window)),
                "train_acc": _accuracy(logits, graph.labels, graph.train_mask),
                "val_acc": _accuracy(logits, graph.labels, graph.val_mask) if has_val else None,
            }
            if dp is not None:
                record["epsilon_spent"] = compose_and_convert(accountant, step, dp.delta)
                record["sigma"] = sigma
            log.append(record)
            loss_window = []
            if has_val:
                best = _checkpoint(best, params, record["val_acc"])
    final = best[0] if best[0] is not None else params.clone()
    return final, log


def write_training_log(log: list[dict], path) -> None:
    """JSON-lines export, one record per evaluation interval."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in log:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
