"""Multi-task training: bias-corrected Adam over the composite loss.

Each optimization step draws one minibatch per task, sums the task losses,
adds the coordinate-matrix regularizer, and applies a single Adam update to
the flattened parameter list.  Everything is driven by one seeded generator
so a run is fully reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from taan.metrics import GaussianMixture, build_gram, distance_matrix
from taan.network import (
    ModelGradients,
    TaanModel,
    forward,
    backward,
    gradient_arrays,
    model_parameters,
)
from taan.regularizers import RegConfig, RegKind, reg_grad, regularizer_value

LOSS_KINDS = ("squared_error", "cross_entropy")


class AdamState:
    """Adam accumulators plus the hyperparameters that drive the update."""

    def __init__(self, m, v, step, learning_rate, beta1, beta2, epsilon):
        self.m = m
        self.v = v
        self.step = step
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        if step < 0:
            raise ValueError("step counter must be >= 0")

    @classmethod
    def for_params(
        cls,
        params,
        learning_rate=1e-4,
        beta1=0.9,
        beta2=0.98,
        epsilon=1e-8,
    ):
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        )


def adam_step(params, grads, state: AdamState):
    """One in-place bias-corrected Adam update; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must have the same length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {p.shape}"
            )
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters; ``loss`` is one kind for all tasks or a tuple
    with one kind per task."""

    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-8
    seed: int = 0
    reg: RegConfig = field(default_factory=lambda: RegConfig(RegKind.NONE, 0.0))
    loss: object = "squared_error"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        for name in ("learning_rate", "beta1", "beta2", "epsilon"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite")
        if self.beta1 >= 1 or self.beta2 >= 1:
            raise ValueError("beta1 and beta2 must be < 1")
        kinds = (self.loss,) if isinstance(self.loss, str) else tuple(self.loss)
        for kind in kinds:
            if kind not in LOSS_KINDS:
                raise ValueError(f"unknown loss kind {kind!r}")

    def loss_kind(self, task):
        if isinstance(self.loss, str):
            return self.loss
        return self.loss[task]


def squared_error(pred, target):
    """0.5·Σ‖residual‖²/N and its gradient; N is the batch size."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValueError(
            f"target shape {target.shape} does not match output {pred.shape}"
        )
    r = pred - target
    n = pred.shape[0]
    return 0.5 * float(np.sum(r * r)) / n, r / n


def _as_onehot(target, n_classes):
    target = np.asarray(target)
    if target.ndim == 2 and target.shape[1] == n_classes:
        return np.asarray(target, dtype=np.float64)
    labels = np.asarray(target, dtype=np.int64).reshape(-1)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels outside [0, {n_classes})")
    onehot = np.zeros((labels.shape[0], n_classes))
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return onehot


def cross_entropy(pred, target):
    """Mean softmax cross-entropy; target is int labels or one-hot rows."""
    onehot = _as_onehot(target, pred.shape[1])
    if onehot.shape[0] != pred.shape[0]:
        raise ValueError("target batch size does not match output")
    z = pred - pred.max(axis=1, keepdims=True)
    expz = np.exp(z)
    total = expz.sum(axis=1, keepdims=True)
    logp = z - np.log(total)
    n = pred.shape[0]
    loss = -float(np.sum(onehot * logp)) / n
    return loss, (expz / total - onehot) / n


_LOSS_FNS = {"squared_error": squared_error, "cross_entropy": cross_entropy}


def loss_and_grad(kind, pred, target):
    return _LOSS_FNS[kind](pred, target)


class History:
    """Per-epoch records, one row per (epoch, task, layer).

    train_loss is the task's mean per-step loss across the epoch; reg_value
    is the raw regularizer summed over layers at the epoch's end (before the
    coefficient); mean_pairwise_distance averages the layer's squared
    functional distance over distinct task pairs (0 for single-task models).
    """

    COLUMNS = (
        "epoch",
        "task_id",
        "train_loss",
        "val_metric",
        "reg_value",
        "layer_id",
        "mean_pairwise_distance",
    )

    def __init__(self):
        self.rows = []

    def append(self, **kwargs):
        if set(kwargs) != set(self.COLUMNS):
            raise ValueError(f"history row needs exactly {self.COLUMNS}")
        self.rows.append(tuple(kwargs[c] for c in self.COLUMNS))

    def column(self, name):
        i = self.COLUMNS.index(name)
        return [row[i] for row in self.rows]

    def final_mean_distances(self):
        """layer_id -> mean pairwise distance at the last recorded epoch."""
        if not self.rows:
            return {}
        last = max(self.column("epoch"))
        out = {}
        for row in self.rows:
            record = dict(zip(self.COLUMNS, row))
            if record["epoch"] == last:
                out[record["layer_id"]] = record["mean_pairwise_distance"]
        return out

    def to_csv(self, path):
        # repr() keeps the shortest round-trip float text, so identical
        # runs serialize byte-identically.
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in self.rows:
                cells = [
                    repr(float(v)) if isinstance(v, float) else repr(int(v))
                    for v in row
                ]
                fh.write(",".join(cells) + "\n")


def _split_pair(entry):
    if hasattr(entry, "train") and hasattr(entry, "val"):
        return entry.train, entry.val
    train, val = entry
    return train, val


def _data_arrays(dataset):
    inputs = np.asarray(dataset.inputs, dtype=np.float64)
    targets = np.asarray(dataset.targets)
    return inputs, targets


def _layer_caches(model, cache):
    if cache is not None:
        return [cache] * len(model.layers)
    built = {}
    caches = []
    for layer in model.layers:
        key = layer.grid.breakpoints.tobytes()
        if key not in built:
            built[key] = build_gram(layer.grid, GaussianMixture.standard_normal())
        caches.append(built[key])
    return caches


def _mean_offdiag(dist):
    t = dist.shape[0]
    if t < 2:
        return 0.0
    return float(dist.sum() / (t * (t - 1)))


def train(model: TaanModel, datasets, config: TrainConfig, cache=None):
    """Optimize the model in place; returns (model, History).

    datasets holds one train/val split per task (objects with .train/.val
    attributes, or (train, val) pairs).  When cache is omitted each layer's
    Gram matrix is built under the standard normal mixture.
    """
    pairs = [_split_pair(d) for d in datasets]
    if len(pairs) != model.task_count:
        raise ValueError(
            f"got {len(pairs)} datasets for {model.task_count} tasks"
        )
    train_x, train_y, val_sets = [], [], []
    for t, (tr, va) in enumerate(pairs):
        x, y = _data_arrays(tr)
        if x.shape[0] == 0:
            raise ValueError(f"task {t} has an empty training split")
        if x.ndim != 2 or x.shape[1] != model.input_dim:
            raise ValueError(
                f"task {t} inputs have shape {x.shape}, expected "
                f"(n, {model.input_dim})"
            )
        train_x.append(x)
        train_y.append(y)
        val_sets.append(va)
    rng = np.random.default_rng(config.seed)
    params = model_parameters(model)
    state = AdamState.for_params(
        params,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    )
    caches = _layer_caches(model, cache)
    reg_on = config.reg.kind is not RegKind.NONE
    needs_cache = config.reg.kind in (RegKind.COSINE, RegKind.DISTANCE)
    steps = max(
        int(math.ceil(x.shape[0] / config.batch_size)) for x in train_x
    )
    history = History()
    for epoch in range(config.epochs):
        perms = [rng.permutation(x.shape[0]) for x in train_x]
        epoch_loss = np.zeros(model.task_count)
        for step in range(steps):
            take = np.arange(
                step * config.batch_size, (step + 1) * config.batch_size
            )
            total = ModelGradients.zeros_like(model)
            for t in range(model.task_count):
                idx = np.take(perms[t], take, mode="wrap")
                out, trace = forward(model, t, train_x[t][idx])
                loss, dout = loss_and_grad(
                    config.loss_kind(t), out, train_y[t][idx]
                )
                epoch_loss[t] += loss
                total.add_(backward(model, t, trace, dout))
            if reg_on and config.reg.coefficient > 0:
                for l, layer in enumerate(model.layers):
                    total.layer_coords[l] += config.reg.coefficient * reg_grad(
                        config.reg.kind,
                        layer.coords,
                        caches[l] if needs_cache else None,
                    )
            adam_step(params, gradient_arrays(total), state)
        reg_value = 0.0
        if reg_on:
            reg_value = sum(
                regularizer_value(
                    config.reg.kind,
                    layer.coords,
                    caches[l] if needs_cache else None,
                )
                for l, layer in enumerate(model.layers)
            )
        mean_dists = [
            _mean_offdiag(distance_matrix(layer.coords, caches[l]))
            for l, layer in enumerate(model.layers)
        ]
        for t in range(model.task_count):
            val = val_sets[t]
            metric = math.nan
            if val is not None and np.asarray(val.inputs).shape[0] > 0:
                kind = config.loss_kind(t)
                metric = evaluate(
                    model,
                    val,
                    t,
                    "mse" if kind == "squared_error" else "accuracy",
                )
            for l in range(len(model.layers)):
                history.append(
                    epoch=epoch,
                    task_id=t,
                    train_loss=epoch_loss[t] / steps,
                    val_metric=metric,
                    reg_value=float(reg_value),
                    layer_id=l,
                    mean_pairwise_distance=mean_dists[l],
                )
    return model, history


def _average_precision_at_k(scores, relevant, k):
    order = np.argsort(-scores, kind="stable")[:k]
    hits = relevant[order]
    if not np.any(relevant):
        return None
    precision = np.cumsum(hits) / (np.arange(hits.shape[0]) + 1.0)
    denom = min(int(np.sum(relevant)), k)
    return float(np.sum(precision * hits) / denom)


def map_at_k(scores, relevance, k=10):
    """Mean average precision truncated at k over ranked label scores.

    relevance is a binary (n, labels) matrix; rows without any relevant
    label are excluded from the mean.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevance = np.asarray(relevance)
    if scores.shape != relevance.shape or scores.ndim != 2:
        raise ValueError("scores and relevance must share a 2-D shape")
    values = [
        ap
        for row_scores, row_rel in zip(scores, relevance != 0)
        if (ap := _average_precision_at_k(row_scores, row_rel, k)) is not None
    ]
    if not values:
        raise ValueError("no example has a relevant label")
    return float(np.mean(values))


def evaluate(model: TaanModel, dataset, task, metric, k=10):
    """Score one task's dataset: metric is mse, accuracy or map_at_k."""
    inputs, targets = _data_arrays(dataset)
    if inputs.shape[0] == 0:
        raise ValueError("cannot evaluate an empty dataset")
    out, _ = forward(model, task, inputs)
    if metric == "mse":
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != out.shape:
            raise ValueError(
                f"target shape {targets.shape} does not match {out.shape}"
            )
        return float(np.mean((out - targets) ** 2))
    if metric == "accuracy":
        predicted = np.argmax(out, axis=1)
        labels = np.asarray(targets)
        if labels.ndim == 2 and labels.shape[1] == out.shape[1]:
            labels = np.argmax(labels, axis=1)
        else:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        return float(np.mean(predicted == labels))
    if metric == "map_at_k":
        return map_at_k(out, targets, k)
    raise ValueError(f"unknown metric {metric!r}")
