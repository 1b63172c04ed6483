"""Command-line front end.

Subcommands: gen-data (synthetic benchmark to CSV), train (checkpoint +
history), analyze (distance matrices + heatmaps), check (self-diagnostics:
closed-form moments vs quadrature, analytic gradients vs finite
differences, layer-1 bounds vs Monte Carlo).  A JSON config supplies
experiment settings; flags override file values.  Exit status is 0 only on
full success.
"""

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from taan.analysis import (
    bound_report_csv,
    bound_report_text,
    check_l1_bounds,
    export_heatmap,
    layer1_unit_gaussians,
    layer_distances,
)
from taan.apl import BasisGrid, apl_eval, apl_grad_coords, apl_grad_x
from taan.data import (
    CsvSchema,
    SplitDatasets,
    SyntheticSpec,
    generate,
    load_csv,
    save_csv,
)
from taan.metrics import GaussianMixture
from taan.moments import (
    GaussianParams,
    moment_b0_sq,
    moment_b0b,
    moment_bb,
    oracle_moment,
)
from taan.network import (
    ArchitectureSpec,
    backward,
    build_model,
    forward,
    gradient_arrays,
    load_checkpoint,
    model_parameters,
    save_checkpoint,
)
from taan.regularizers import RegConfig, reg_grad, regularizer_value
from taan.training import TrainConfig, train

DEFAULT_CONFIG = {
    "out": "taan_out",
    "seed": 0,
    "arch": {
        "hidden_widths": [16, 16],
        "basis_count": 8,
        "basis_range": [-2.0, 2.0],
    },
    "train": {
        "epochs": 10,
        "batch_size": 64,
        "learning_rate": 1e-4,
        "beta1": 0.9,
        "beta2": 0.98,
        "epsilon": 1e-8,
        "loss": "squared_error",
        "reg": {"kind": "none", "coefficient": 0.0},
    },
    "data": {
        "synthetic": {
            "task_count": 8,
            "samples_per_task": 1000,
            "input_dim": 8,
            "clusters": [0, 0, 0, 0, 1, 1, 1, 1],
            "relatedness": 0.3,
            "noise": 0.1,
        }
    },
}

OUT_SUBDIRS = ("checkpoints", "history", "matrices", "reports", "data")


def _deep_merge(base, override):
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(args):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = _deep_merge(cfg, json.load(fh))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "reg", None):
        cfg["train"]["reg"]["kind"] = args.reg
    if getattr(args, "coef", None) is not None:
        cfg["train"]["reg"]["coefficient"] = args.coef
    return cfg


def _outdirs(out):
    root = Path(out)
    dirs = {name: root / name for name in OUT_SUBDIRS}
    for path in dirs.values():
        path.mkdir(parents=True, exist_ok=True)
    return dirs


def _synthetic_spec(cfg):
    params = dict(cfg["data"]["synthetic"])
    params.setdefault("seed", cfg["seed"])
    if params.get("clusters") is not None:
        params["clusters"] = tuple(params["clusters"])
    return SyntheticSpec(**params)


def _load_datasets(cfg):
    data_cfg = cfg.get("data", {})
    if data_cfg.get("synthetic"):
        return generate(_synthetic_spec(cfg))
    csv_cfg = data_cfg.get("csv")
    if not csv_cfg:
        raise ValueError("config needs data.synthetic or data.csv")
    schema = CsvSchema(**csv_cfg["schema"])
    out = []
    for t, entry in enumerate(csv_cfg["tasks"]):
        out.append(
            SplitDatasets(
                load_csv(entry["train"], schema, t, "train"),
                load_csv(entry["val"], schema, t, "val")
                if entry.get("val")
                else None,
                load_csv(entry["test"], schema, t, "test")
                if entry.get("test")
                else None,
            )
        )
    return out


def _architecture(cfg, datasets):
    arch_cfg = dict(cfg["arch"])
    first = datasets[0].train
    arch_cfg.setdefault("input_dim", first.inputs.shape[1])
    if "output_dim" not in arch_cfg:
        dims = []
        for split in datasets:
            targets = split.train.targets
            if targets.ndim == 2:
                dims.append(targets.shape[1])
            else:
                dims.append(int(np.max(targets)) + 1)
        arch_cfg["output_dim"] = tuple(dims)
    arch_cfg["task_count"] = len(datasets)
    arch_cfg["basis_range"] = tuple(arch_cfg["basis_range"])
    arch_cfg["hidden_widths"] = tuple(arch_cfg["hidden_widths"])
    return ArchitectureSpec(**arch_cfg)


def _train_config(cfg):
    params = dict(cfg["train"])
    reg_cfg = params.pop("reg")
    params.setdefault("seed", cfg["seed"])
    if isinstance(params.get("loss"), list):
        params["loss"] = tuple(params["loss"])
    return TrainConfig(
        reg=RegConfig(reg_cfg["kind"], reg_cfg["coefficient"]), **params
    )


def cmd_gen_data(args):
    cfg = load_config(args)
    dirs = _outdirs(cfg["out"])
    spec = _synthetic_spec(cfg)
    datasets = generate(spec)
    for split in datasets:
        for part in (split.train, split.val, split.test):
            path = dirs["data"] / f"task{part.task_id}_{part.split}.csv"
            save_csv(part, path)
            print(f"wrote {path} ({len(part)} rows)")
    return 0


def cmd_train(args):
    cfg = load_config(args)
    dirs = _outdirs(cfg["out"])
    datasets = _load_datasets(cfg)
    arch = _architecture(cfg, datasets)
    config = _train_config(cfg)
    model = build_model(arch, cfg["seed"])
    model, history = train(model, datasets, config)
    ckpt = dirs["checkpoints"] / "model.npz"
    save_checkpoint(
        model, ckpt, mixture=GaussianMixture.standard_normal(), seed=cfg["seed"]
    )
    history_path = dirs["history"] / "history.csv"
    history.to_csv(history_path)
    print(f"wrote {ckpt}")
    print(f"wrote {history_path}")
    if history.rows:
        losses = history.column("train_loss")[-model.task_count :]
        print(
            f"final epoch mean train loss: {float(np.mean(losses)):.6f} "
            f"({model.task_count} tasks, {config.epochs} epochs)"
        )
    return 0


def cmd_analyze(args):
    cfg = load_config(args)
    dirs = _outdirs(cfg["out"])
    ckpt = args.checkpoint or dirs["checkpoints"] / "model.npz"
    model, mixture, _seed = load_checkpoint(ckpt)
    reports = layer_distances(model, mixture=mixture)
    lines = []
    for report in reports:
        for fmt in ("csv", "pgm"):
            path = dirs["matrices"] / f"layer{report.layer_id}.{fmt}"
            export_heatmap(report, path, fmt)
            print(f"wrote {path}")
        t = report.matrix.shape[0]
        mean = report.matrix.sum() / (t * (t - 1)) if t > 1 else 0.0
        lines.append(
            f"layer {report.layer_id}: mean pairwise distance {mean:.6g}, "
            f"max {report.matrix.max():.6g}"
        )
    summary = dirs["reports"] / "analysis.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {summary}")
    return 0


def _closed_moment(pair, g):
    if pair[0] == "relu_sq":
        return moment_b0_sq(g)
    if pair[0] == "relu_hinge":
        return moment_b0b(pair[1], g)
    return moment_bb(pair[1], pair[2], g)


def check_moments():
    mus = (-3.0, -1.5, 0.0, 1.5, 3.0)
    sigmas = (0.3, 1.0, 2.0, 3.0)
    hinges = (-2.0, -0.5, 0.0, 0.7, 1.5, 3.0)
    hinge_pairs = (
        (-2.0, -0.5),
        (-0.5, 0.7),
        (0.7, 0.7),
        (1.5, 3.0),
        (-2.0, 3.0),
        (0.0, 1.0),
    )
    worst = 0.0
    count = 0
    for mu in mus:
        for sigma in sigmas:
            g = GaussianParams(mu, sigma)
            pairs = [("relu_sq",)]
            pairs += [("relu_hinge", b) for b in hinges]
            pairs += [("hinge_hinge", bi, bj) for bi, bj in hinge_pairs]
            for pair in pairs:
                err = abs(_closed_moment(pair, g) - oracle_moment(pair, g))
                worst = max(worst, err)
                count += 1
    ok = worst <= 1e-8
    print(
        f"moments: {count} combinations, max |closed form - quadrature| "
        f"= {worst:.3e} -> {'pass' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


def _rel_err(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _fd_scalar(f, eps=1e-5):
    return (f(eps) - f(-eps)) / (2.0 * eps)


def _check_apl_gradients(rng):
    grid = BasisGrid.even(6)
    worst = 0.0
    for _ in range(30):
        coords = rng.uniform(-1.0, 1.0, len(grid))
        x = float(rng.uniform(-3.0, 3.0))
        gaps = np.abs(np.append(grid.breakpoints, 0.0) - x)
        if gaps.min() < 1e-3:
            continue
        fd_x = _fd_scalar(lambda e: apl_eval(x + e, coords, grid))
        worst = max(worst, _rel_err(apl_grad_x(x, coords, grid), fd_x))
        gc = apl_grad_coords(x, grid)
        for i in range(len(grid)):
            def shifted(e, i=i):
                c = coords.copy()
                c[i] += e
                return apl_eval(x, c, grid)

            worst = max(worst, _rel_err(gc[i], _fd_scalar(shifted)))
    return worst


def _check_reg_gradients(rng):
    from taan.metrics import build_gram

    grid = BasisGrid.even(6)
    cache = build_gram(grid, GaussianMixture.standard_normal())
    worst = 0.0
    for _ in range(3):
        alpha = rng.uniform(-1.0, 1.0, (4, len(grid)))
        for kind in ("trace", "cos", "dis"):
            config = RegConfig(kind, 1.0)
            grad = reg_grad(config.kind, alpha, cache)
            for t in range(alpha.shape[0]):
                for m in range(alpha.shape[1]):
                    def shifted(e, t=t, m=m):
                        a = alpha.copy()
                        a[t, m] += e
                        return regularizer_value(config.kind, a, cache)

                    worst = max(
                        worst, _rel_err(grad[t, m], _fd_scalar(shifted))
                    )
    return worst


def _check_network_gradients(rng):
    arch = ArchitectureSpec(
        input_dim=4, hidden_widths=(5,), output_dim=2, task_count=2,
        basis_count=4,
    )
    model = build_model(arch, int(rng.integers(1 << 31)))
    for layer in model.layers:
        layer.coords[:] = rng.uniform(-0.5, 0.5, layer.coords.shape)
    x = rng.standard_normal((3, arch.input_dim))
    projection = rng.standard_normal((3, 2))
    out, trace = forward(model, 0, x)
    grads = gradient_arrays(backward(model, 0, trace, projection))
    params = model_parameters(model)

    def objective():
        return float(np.sum(forward(model, 0, x)[0] * projection))

    worst = 0.0
    eps = 1e-5
    for arr, grad in zip(params, grads):
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + eps
            hi = objective()
            flat[i] = old - eps
            lo = objective()
            flat[i] = old
            worst = max(worst, _rel_err(gflat[i], (hi - lo) / (2.0 * eps)))
    return worst


def check_gradients(seed):
    rng = np.random.default_rng(seed)
    families = (
        ("apl", _check_apl_gradients),
        ("regularizers", _check_reg_gradients),
        ("network", _check_network_gradients),
    )
    ok = True
    for name, fn in families:
        worst = fn(rng)
        passed = worst <= 1e-4
        ok = ok and passed
        print(
            f"gradients/{name}: max relative error vs finite differences "
            f"= {worst:.3e} -> {'pass' if passed else 'FAIL'}"
        )
    return 0 if ok else 1


def check_bounds(seed, out=None):
    rng = np.random.default_rng(seed)
    arch = ArchitectureSpec(
        input_dim=6, hidden_widths=(8,), output_dim=1, task_count=2,
        basis_count=6,
    )
    model = build_model(arch, seed)
    layer = model.layers[0]
    layer.coords[:] = rng.uniform(-0.5, 0.5, layer.coords.shape)
    units = layer1_unit_gaussians(model)
    reports = [
        check_l1_bounds(model, units, 1.0, pair, 200_000, seed + 1)
        for pair in ((0, 0), (0, 1))
    ]
    ok = True
    for report in reports:
        print(bound_report_text(report))
        ok = ok and report.passed
    if out is not None:
        dirs = _outdirs(out)
        path = dirs["reports"] / "bounds.csv"
        bound_report_csv(reports, path)
        print(f"wrote {path}")
    print(f"bounds: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_check(args):
    seed = args.seed if args.seed is not None else 0
    if args.kind == "moments":
        return check_moments()
    if args.kind == "gradients":
        return check_gradients(seed)
    return check_bounds(seed, getattr(args, "out", None))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="taan",
        description=(
            "Multi-task networks with task-adaptive piecewise-linear "
            "activations"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reg=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        if reg:
            p.add_argument(
                "--reg",
                choices=("none", "trace", "cos", "dis"),
                help="coordinate-matrix regularizer",
            )
            p.add_argument(
                "--coef", type=float, help="regularizer coefficient"
            )

    p_gen = sub.add_parser("gen-data", help="write the synthetic benchmark")
    common(p_gen)
    p_gen.set_defaults(func=cmd_gen_data)

    p_train = sub.add_parser("train", help="train a model")
    common(p_train, reg=True)
    p_train.set_defaults(func=cmd_train)

    p_an = sub.add_parser("analyze", help="distance matrices and heatmaps")
    common(p_an)
    p_an.add_argument("--checkpoint", help="checkpoint path (.npz)")
    p_an.set_defaults(func=cmd_analyze)

    p_check = sub.add_parser("check", help="numeric self-diagnostics")
    p_check.add_argument("kind", choices=("moments", "gradients", "bounds"))
    p_check.add_argument("--seed", type=int)
    p_check.add_argument("--out", help="also write a CSV report here")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
