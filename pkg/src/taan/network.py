"""Shared-weight multi-task network with per-task adaptive activations.

Every hidden layer is a linear map shared by all tasks followed by an
activation whose hinge coordinates are task-specific; each task has its own
linear output head.  Forward caches pre-activations so the manual backward
pass can chain through the activation's x- and coordinate-derivatives.
"""

import json

import numpy as np

from taan import _backend
from taan.apl import BasisGrid, validate_coordinates
from taan.metrics import GaussianMixture

COORD_INIT_SCALE = 0.01


class LinearLayer:
    """Dense map y = x W' + b with weight (out, in) and bias (out,)."""

    def __init__(self, weight, bias):
        self.weight = np.ascontiguousarray(weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"inconsistent linear shapes {self.weight.shape}, "
                f"{self.bias.shape}"
            )
        if not (
            np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))
        ):
            raise ValueError("linear layer entries must be finite")

    @property
    def out_dim(self):
        return self.weight.shape[0]

    @property
    def in_dim(self):
        return self.weight.shape[1]


class AalLayer:
    """One shared linear layer plus the per-task activation coordinates."""

    def __init__(self, linear, coords, grid):
        self.linear = linear
        self.grid = grid
        self.coords = validate_coordinates(coords, grid)

    @property
    def task_count(self):
        return self.coords.shape[0]


class TaanModel:
    def __init__(self, layers, heads, task_count):
        if len(heads) != task_count:
            raise ValueError(f"expected {task_count} heads, got {len(heads)}")
        width = None
        for layer in layers:
            if layer.task_count != task_count:
                raise ValueError("coordinate rows must match the task count")
            if width is not None and layer.linear.in_dim != width:
                raise ValueError("layer widths do not chain")
            width = layer.linear.out_dim
        for head in heads:
            if width is not None and head.in_dim != width:
                raise ValueError("head input width must match the last layer")
        self.layers = list(layers)
        self.heads = list(heads)
        self.task_count = task_count

    @property
    def input_dim(self):
        if self.layers:
            return self.layers[0].linear.in_dim
        return self.heads[0].in_dim

    def head_dim(self, task):
        return self.heads[task].out_dim


class ForwardTrace:
    """Backprop cache: the input plus per-layer pre- and post-activations."""

    def __init__(self, x, pre_activations, activations):
        self.x = x
        self.pre_activations = pre_activations
        self.activations = activations


class ModelGradients:
    def __init__(self, layer_weight, layer_bias, layer_coords, head_weight, head_bias):
        self.layer_weight = layer_weight
        self.layer_bias = layer_bias
        self.layer_coords = layer_coords
        self.head_weight = head_weight
        self.head_bias = head_bias

    @classmethod
    def zeros_like(cls, model):
        return cls(
            [np.zeros_like(l.linear.weight) for l in model.layers],
            [np.zeros_like(l.linear.bias) for l in model.layers],
            [np.zeros_like(l.coords) for l in model.layers],
            [np.zeros_like(h.weight) for h in model.heads],
            [np.zeros_like(h.bias) for h in model.heads],
        )

    def add_(self, other):
        for mine, theirs in zip(self._lists(), other._lists()):
            for a, b in zip(mine, theirs):
                a += b
        return self

    def _lists(self):
        return (
            self.layer_weight,
            self.layer_bias,
            self.layer_coords,
            self.head_weight,
            self.head_bias,
        )


def _check_task(model, task):
    if not (isinstance(task, (int, np.integer)) and 0 <= task < model.task_count):
        raise ValueError(
            f"unknown task id {task!r} for a {model.task_count}-task model"
        )


def forward(model: TaanModel, task, x):
    """Run one task's batch through the network.

    Returns (outputs, trace); the trace holds everything backward needs.
    """
    _check_task(model, task)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"input has shape {x.shape}, expected (batch, {model.input_dim})"
        )
    h = x
    pre, act = [], []
    for layer in model.layers:
        a = h @ layer.linear.weight.T + layer.linear.bias
        z = _backend.apl_forward(
            np.ascontiguousarray(a.ravel()),
            layer.coords[task],
            layer.grid.breakpoints,
        ).reshape(a.shape)
        pre.append(a)
        act.append(z)
        h = z
    head = model.heads[task]
    out = h @ head.weight.T + head.bias
    return out, ForwardTrace(x, pre, act)


def backward(model: TaanModel, task, trace: ForwardTrace, output_grad):
    """Chain output_grad back to every parameter touched by this task.

    Fills gradients for the shared linear layers, the task's coordinate row
    and the task's head; the other tasks' coordinate rows and heads stay
    exactly zero.
    """
    _check_task(model, task)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    grads = ModelGradients.zeros_like(model)
    h_last = trace.activations[-1] if model.layers else trace.x
    if output_grad.shape != (h_last.shape[0], model.head_dim(task)):
        raise ValueError(
            f"output_grad has shape {output_grad.shape}, expected "
            f"({h_last.shape[0]}, {model.head_dim(task)})"
        )
    head = model.heads[task]
    grads.head_weight[task][:] = output_grad.T @ h_last
    grads.head_bias[task][:] = output_grad.sum(axis=0)
    dh = output_grad @ head.weight
    for l in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[l]
        a = trace.pre_activations[l]
        gx, gcoords = _backend.apl_backward(
            np.ascontiguousarray(a.ravel()),
            layer.coords[task],
            layer.grid.breakpoints,
            np.ascontiguousarray(dh.ravel()),
        )
        da = gx.reshape(a.shape)
        grads.layer_coords[l][task, :] = gcoords
        h_prev = trace.activations[l - 1] if l > 0 else trace.x
        grads.layer_weight[l][:] = da.T @ h_prev
        grads.layer_bias[l][:] = da.sum(axis=0)
        dh = da @ layer.linear.weight
    return grads


class ArchitectureSpec:
    """Widths and activation-basis layout of a model.

    ``output_dim`` may be a single int (all heads alike) or one int per task.
    """

    def __init__(
        self,
        input_dim,
        hidden_widths,
        output_dim,
        task_count,
        basis_count=8,
        basis_range=(-2.0, 2.0),
    ):
        self.input_dim = int(input_dim)
        self.hidden_widths = tuple(int(w) for w in hidden_widths)
        if isinstance(output_dim, (int, np.integer)):
            self.output_dims = (int(output_dim),) * int(task_count)
        else:
            self.output_dims = tuple(int(d) for d in output_dim)
        self.task_count = int(task_count)
        self.basis_count = int(basis_count)
        self.basis_range = (float(basis_range[0]), float(basis_range[1]))
        if self.task_count < 1:
            raise ValueError("task_count must be >= 1")
        if len(self.output_dims) != self.task_count:
            raise ValueError("need one output dim per task")
        bad = [
            w
            for w in (self.input_dim, *self.hidden_widths, *self.output_dims)
            if w < 1
        ]
        if bad:
            raise ValueError(f"invalid width(s) {bad}; all must be >= 1")


def build_model(arch: ArchitectureSpec, seed) -> TaanModel:
    """Seeded initialization: He-uniform weights, zero biases, coordinate
    rows i.i.d. uniform on [-0.01, 0.01] (a near-ReLU start with just enough
    asymmetry for tasks to diverge)."""
    rng = np.random.default_rng(seed)
    grid = BasisGrid.even(arch.basis_count, *arch.basis_range)
    layers = []
    fan_in = arch.input_dim
    for width in arch.hidden_widths:
        limit = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-limit, limit, size=(width, fan_in))
        coords = rng.uniform(
            -COORD_INIT_SCALE, COORD_INIT_SCALE, size=(arch.task_count, len(grid))
        )
        layers.append(AalLayer(LinearLayer(weight, np.zeros(width)), coords, grid))
        fan_in = width
    heads = []
    for out_dim in arch.output_dims:
        limit = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-limit, limit, size=(out_dim, fan_in))
        heads.append(LinearLayer(weight, np.zeros(out_dim)))
    return TaanModel(layers, heads, arch.task_count)


def _shared_coords(coords):
    # Already-identical rows are kept verbatim instead of re-averaged, so the
    # reduction is exactly idempotent despite rounding in the mean.
    if np.all(coords == coords[0]):
        return coords.copy()
    return np.repeat(coords.mean(axis=0, keepdims=True), coords.shape[0], axis=0)


def to_hard_sharing(model: TaanModel) -> TaanModel:
    """Replace every coordinate row with the row mean so all tasks share one
    activation per layer; weights, biases and heads are copied unchanged."""
    layers = [
        AalLayer(
            LinearLayer(l.linear.weight.copy(), l.linear.bias.copy()),
            _shared_coords(l.coords),
            l.grid,
        )
        for l in model.layers
    ]
    heads = [LinearLayer(h.weight.copy(), h.bias.copy()) for h in model.heads]
    return TaanModel(layers, heads, model.task_count)


def tie_heads(model: TaanModel) -> TaanModel:
    """Copy of the model with every head replaced by a copy of head 0."""
    first = model.heads[0]
    if any(h.out_dim != first.out_dim for h in model.heads):
        raise ValueError("cannot tie heads with different output dims")
    layers = [
        AalLayer(
            LinearLayer(l.linear.weight.copy(), l.linear.bias.copy()),
            l.coords.copy(),
            l.grid,
        )
        for l in model.layers
    ]
    heads = [
        LinearLayer(first.weight.copy(), first.bias.copy())
        for _ in range(model.task_count)
    ]
    return TaanModel(layers, heads, model.task_count)


def model_parameters(model: TaanModel):
    """All trainable arrays in a fixed order (layer W, b, coords; head W, b).

    The returned arrays are the model's own buffers, so in-place optimizer
    updates mutate the model directly.
    """
    params = []
    for layer in model.layers:
        params.extend((layer.linear.weight, layer.linear.bias, layer.coords))
    for head in model.heads:
        params.extend((head.weight, head.bias))
    return params


def gradient_arrays(grads: ModelGradients):
    """Gradient arrays in the same order as model_parameters."""
    out = []
    for w, b, c in zip(grads.layer_weight, grads.layer_bias, grads.layer_coords):
        out.extend((w, b, c))
    for w, b in zip(grads.head_weight, grads.head_bias):
        out.extend((w, b))
    return out


def save_checkpoint(model: TaanModel, path, mixture=None, seed=None):
    """Write the model (plus optional mixture and seed) as an npz archive.

    float64 arrays round-trip bitwise.
    """
    meta = {
        "task_count": model.task_count,
        "layer_count": len(model.layers),
        "output_dims": [h.out_dim for h in model.heads],
        "seed": None if seed is None else int(seed),
        "has_mixture": mixture is not None,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for l, layer in enumerate(model.layers):
        arrays[f"layer{l}_weight"] = layer.linear.weight
        arrays[f"layer{l}_bias"] = layer.linear.bias
        arrays[f"layer{l}_coords"] = layer.coords
        arrays[f"layer{l}_grid"] = layer.grid.breakpoints
    for t, head in enumerate(model.heads):
        arrays[f"head{t}_weight"] = head.weight
        arrays[f"head{t}_bias"] = head.bias
    if mixture is not None:
        arrays["mixture_weights"] = mixture.weights
        arrays["mixture_means"] = mixture.means
        arrays["mixture_sigmas"] = mixture.sigmas
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (model, mixture, seed)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        layers = []
        grids = {}
        for l in range(meta["layer_count"]):
            bps = data[f"layer{l}_grid"]
            key = bps.tobytes()
            if key not in grids:
                grids[key] = BasisGrid(bps)
            layers.append(
                AalLayer(
                    LinearLayer(data[f"layer{l}_weight"], data[f"layer{l}_bias"]),
                    data[f"layer{l}_coords"],
                    grids[key],
                )
            )
        heads = [
            LinearLayer(data[f"head{t}_weight"], data[f"head{t}_bias"])
            for t in range(meta["task_count"])
        ]
        mixture = None
        if meta["has_mixture"]:
            mixture = GaussianMixture(
                data["mixture_weights"],
                data["mixture_means"],
                data["mixture_sigmas"],
            )
    model = TaanModel(layers, heads, meta["task_count"])
    return model, mixture, meta["seed"]
