"""Synthetic multi-task regression data with planted task clusters, plus
CSV load/save for external tabular task data.

Targets blend a cluster-level random map with a task-private one,
y = (1-δ)·g_cluster(x) + δ·h_task(x) + noise·ε, so δ=0 makes tasks in one
cluster pointwise identical and δ=1 makes every task an independent random
function.  Inputs are standard normal, matching the default metric measure.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

SPLIT_TAGS = ("train", "val", "test")
HIDDEN_UNITS = 16


@dataclass(frozen=True)
class TaskDataset:
    """One task's examples: inputs (n, d) and targets (n, k) or labels (n,)."""

    inputs: np.ndarray
    targets: np.ndarray
    task_id: int
    split: str

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets)
        if inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {inputs.shape}")
        if targets.ndim not in (1, 2):
            raise ValueError(
                f"targets must be 1-D labels or 2-D reals, got {targets.shape}"
            )
        if targets.shape[0] != inputs.shape[0]:
            raise ValueError(
                f"row mismatch: {inputs.shape[0]} inputs, "
                f"{targets.shape[0]} targets"
            )
        if not np.all(np.isfinite(inputs)) or not np.all(
            np.isfinite(np.asarray(targets, dtype=np.float64))
        ):
            raise ValueError("datasets must not contain non-finite entries")
        if self.split not in SPLIT_TAGS:
            raise ValueError(f"split must be one of {SPLIT_TAGS}")
        if int(self.task_id) < 0:
            raise ValueError("task_id must be >= 0")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class SplitDatasets:
    train: TaskDataset
    val: TaskDataset
    test: TaskDataset


@dataclass(frozen=True)
class SyntheticSpec:
    """Benchmark layout.

    clusters maps each task to a cluster id; relatedness δ interpolates
    between identical-within-cluster (0) and fully independent (1) targets.
    """

    task_count: int = 8
    samples_per_task: int = 1000
    input_dim: int = 8
    clusters: tuple = None
    relatedness: float = 0.3
    noise: float = 0.1
    seed: int = 0
    output_dim: int = 1
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    shared_inputs: bool = False

    def __post_init__(self):
        if self.task_count < 1:
            raise ValueError("task_count must be >= 1")
        for name in ("samples_per_task", "input_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 <= self.relatedness <= 1.0):
            raise ValueError("relatedness must lie in [0, 1]")
        if not (math.isfinite(self.noise) and self.noise >= 0):
            raise ValueError("noise must be finite and >= 0")
        clusters = self.clusters
        if clusters is None:
            clusters = (0,) * self.task_count
        clusters = tuple(int(c) for c in clusters)
        if len(clusters) != self.task_count or any(c < 0 for c in clusters):
            raise ValueError(
                "clusters needs one id >= 0 per task "
                f"(got {clusters!r} for {self.task_count} tasks)"
            )
        object.__setattr__(self, "clusters", clusters)
        if not (0 < self.train_fraction < 1 and 0 < self.val_fraction < 1):
            raise ValueError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.val_fraction >= 1:
            raise ValueError("train and val fractions must leave a test split")
        n_train, n_val, n_test = self.split_sizes()
        if min(n_train, n_val, n_test) < 1:
            raise ValueError("every split needs at least one sample")

    def split_sizes(self):
        n = self.samples_per_task
        n_train = int(round(self.train_fraction * n))
        n_val = int(round(self.val_fraction * n))
        return n_train, n_val, n - n_train - n_val


def _random_map(rng, in_dim, out_dim):
    a = rng.standard_normal((in_dim, HIDDEN_UNITS))
    a /= np.linalg.norm(a, axis=0)
    b = rng.standard_normal((HIDDEN_UNITS, out_dim))
    return a, b


def _apply_map(theta, x):
    # Unit-norm directions make each projection exactly N(0,1); the centered
    # cubic (u^3-3u)/sqrt(6) then has unit variance and no linear component,
    # so independently drawn maps are near-orthogonal as functions.
    a, b = theta
    u = x @ a
    z = (u**3 - 3.0 * u) / np.sqrt(6.0)
    return z @ b / np.sqrt(HIDDEN_UNITS)


def generate(spec: SyntheticSpec):
    """Draw the benchmark; returns one SplitDatasets per task."""
    rng = np.random.default_rng(spec.seed)
    cluster_maps = {
        cid: _random_map(rng, spec.input_dim, spec.output_dim)
        for cid in sorted(set(spec.clusters))
    }
    task_maps = [
        _random_map(rng, spec.input_dim, spec.output_dim)
        for _ in range(spec.task_count)
    ]
    shared_x = None
    if spec.shared_inputs:
        shared_x = rng.standard_normal((spec.samples_per_task, spec.input_dim))
    delta = spec.relatedness
    n_train, n_val, _ = spec.split_sizes()
    out = []
    for t in range(spec.task_count):
        if shared_x is None:
            x = rng.standard_normal((spec.samples_per_task, spec.input_dim))
        else:
            x = shared_x
        y = (1.0 - delta) * _apply_map(cluster_maps[spec.clusters[t]], x)
        y += delta * _apply_map(task_maps[t], x)
        y += spec.noise * rng.standard_normal(y.shape)
        bounds = ((0, n_train), (n_train, n_train + n_val), (n_train + n_val, None))
        parts = [
            TaskDataset(x[lo:hi], y[lo:hi], t, tag)
            for (lo, hi), tag in zip(bounds, SPLIT_TAGS)
        ]
        out.append(SplitDatasets(*parts))
    return out


@dataclass(frozen=True)
class CsvSchema:
    """Column layout: x0..x{d-1} then y0..y{k-1}."""

    n_inputs: int
    n_targets: int

    def __post_init__(self):
        if self.n_inputs < 1 or self.n_targets < 1:
            raise ValueError("schema needs at least one input and one target")

    def header(self):
        return [f"x{i}" for i in range(self.n_inputs)] + [
            f"y{i}" for i in range(self.n_targets)
        ]


def load_csv(path, schema: CsvSchema, task_id=0, split="train") -> TaskDataset:
    """Read one task/split file, rejecting malformed or non-finite cells."""
    expected = schema.header()
    inputs, targets = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if header != expected:
            raise ValueError(
                f"{path}: header {header!r} does not match schema {expected!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(expected)} "
                    f"columns, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise ValueError(
                    f"{path}: line {lineno}: non-finite value"
                )
            inputs.append(values[: schema.n_inputs])
            targets.append(values[schema.n_inputs :])
    if not inputs:
        raise ValueError(f"{path}: no data rows")
    return TaskDataset(
        np.array(inputs, dtype=np.float64),
        np.array(targets, dtype=np.float64),
        task_id,
        split,
    )


def save_csv(dataset: TaskDataset, path):
    """Inverse of load_csv; repr() floats give byte-stable reruns."""
    targets = np.asarray(dataset.targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    schema = CsvSchema(dataset.inputs.shape[1], targets.shape[1])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(schema.header()) + "\n")
        for xrow, yrow in zip(dataset.inputs, targets):
            cells = [repr(float(v)) for v in xrow] + [
                repr(float(v)) for v in yrow
            ]
            fh.write(",".join(cells) + "\n")
