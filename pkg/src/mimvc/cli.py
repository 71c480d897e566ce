"""Command-line front end.

Subcommands::

    mimvc mask    --data DIR --eta 0.3 --seed 0 --out DIR
    mimvc train   --data DIR [--config FILE] [flags] --out RUN_DIR
    mimvc eval    --run RUN_DIR [--data DIR]
    mimvc ablate  --data DIR [flags] --out DIR
    mimvc sweep   --data DIR [flags] --out DIR
    mimvc export  --run RUN_DIR [--data DIR] [--out FILE]

Exit codes: 0 ok, 2 configuration, 3 training, 4 data or labels.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace

import numpy as np

from .dataset import MaskSpec, generate_mask, load_dataset, mask_directory
from .evaluation import METRIC_NAMES, RESULT_COLUMNS
from .exceptions import ConfigError, DataError, MimvcError
from .training import (
    LAMBDA_GRID,
    VARIANTS,
    TrainConfig,
    evaluate_state,
    median,
    run_ablation,
    run_sweep,
    train,
    write_rows,
)

logger = logging.getLogger("mimvc")

WORKERS_ENV = "MIMVC_WORKERS"
RUN_KEYS = ("data", "out", "eta", "mask_seed")
PLOT_COLUMNS = ("epoch", *METRIC_NAMES, "loss")
# ablation and sweep cells score the representation this often unless configured
DEFAULT_PLOT_EVERY = 10

# flag -> config key
FLAG_KEYS = {
    "lam": "lam",
    "tau": "tau",
    "k": "k",
    "epochs": "epochs",
    "lr": "learning_rate",
    "seed": "seed",
    "variant": "variant",
    "eval_every": "eval_every",
    "n_clusters": "n_clusters",
}


# -- run configuration ----------------------------------------------------------


def read_config_file(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def build_run_config(args):
    """Merge the config file and command-line flags into one flat dict.

    Flags win over the file. Unknown keys are rejected.
    """
    cfg = read_config_file(args.config) if getattr(args, "config", None) else {}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(cfg) - train_keys - set(RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    for key in RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if not cfg.get("data"):
        raise ConfigError("no dataset given: pass --data or set 'data' in the config")
    return cfg


def split_run_config(cfg):
    train_cfg = TrainConfig.from_dict({k: v for k, v in cfg.items() if k not in RUN_KEYS})
    return train_cfg, {k: cfg.get(k) for k in RUN_KEYS}


def load_run_dataset(run):
    """Load ``run['data']`` and apply ``run['eta']`` if the data are complete."""
    ds = load_dataset(run["data"])
    eta = run.get("eta")
    if eta:
        if not ds.mask.all():
            raise ConfigError("eta given but the dataset already has a mask; mask it once")
        seed = run.get("mask_seed") or 0
        ds = ds.with_mask(generate_mask(ds.n_samples, ds.n_views, MaskSpec(float(eta), seed)))
        ds.meta.update(eta=float(eta), mask_seed=seed)
    return ds


def snapshot(cfg, train_cfg):
    out = {k: cfg[k] for k in RUN_KEYS if cfg.get(k) is not None}
    out["data"] = os.path.abspath(cfg["data"])
    out.update(train_cfg.to_dict())
    return out


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {path}: {exc}") from None


def _workers(args):
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _print_metrics(record):
    for key, value in _metrics_row(record).items():
        if isinstance(value, float):
            value = f"{value:.6f}"
        print(f"{key}: {value}")


def _metrics_row(record):
    row = record.as_row()
    if isinstance(row["seed"], list):
        row["seed"] = " ".join(str(s) for s in row["seed"])
    return row


# -- commands --------------------------------------------------------------------


def cmd_mask(args):
    spec = MaskSpec(missing_rate=args.eta, seed=args.seed)
    mask = mask_directory(args.data, args.out, spec)
    print(f"masked {int((mask == 0).sum())} of {mask.size} cells -> {args.out}")
    return 0


def cmd_train(args):
    cfg = build_run_config(args)
    train_cfg, run = split_run_config(cfg)
    if not run["out"]:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    ds = load_run_dataset(run)
    out = run["out"]
    _makedirs(out)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(snapshot(cfg, train_cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")

    from .state import save_state

    state, history = train(ds, train_cfg, checkpoint_dir=out)
    history.to_csv(os.path.join(out, "history.csv"))
    F = state.embed(ds)
    save_state(state, os.path.join(out, "model.bin"), extra={"F": F})
    print(f"trained {train_cfg.epochs} epochs ({train_cfg.variant}) -> {out}")
    if ds.labels is not None:
        record = evaluate_state(state, ds)
        write_rows(os.path.join(out, "metrics.csv"), [_metrics_row(record)], RESULT_COLUMNS)
        _print_metrics(record)
    else:
        logger.warning("dataset has no labels; metrics.csv not written")
    return 0


def _load_run(run_dir, data=None):
    from .state import load_state

    cfg_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise DataError(f"{run_dir} is not a run directory (no config.json)")
    cfg = read_config_file(cfg_path)
    if data is not None:
        cfg["data"] = data
    _, run = split_run_config(cfg)
    state, extras = load_state(os.path.join(run_dir, "model.bin"))
    return state, extras, run


def cmd_eval(args):
    state, _, run = _load_run(args.run, args.data)
    ds = load_run_dataset(run)
    if ds.labels is None:
        raise DataError(f"dataset {run['data']} has no labels.csv; cannot evaluate")
    record = evaluate_state(state, ds, seeds=args.seeds)
    path = os.path.join(args.run, "metrics.csv")
    row = _metrics_row(record)
    if os.path.exists(path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.append(row)
    else:
        rows = [row]
    write_rows(path, rows, RESULT_COLUMNS)
    _print_metrics(record)
    return 0


def cmd_export(args):
    state, extras, run = _load_run(args.run, args.data)
    labels = None
    if args.data is not None or "F" not in extras:
        ds = load_run_dataset(run)
        F, labels = state.embed(ds), ds.labels
    else:
        F = extras["F"]
        try:
            labels = load_run_dataset(run).labels
        except MimvcError as exc:
            logger.warning("labels unavailable: %s", exc)
    out = args.out or os.path.join(args.run, "embedding.csv")
    header = [f"f{j}" for j in range(F.shape[1])] + ["label"]
    with open(out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i, row in enumerate(F):
            label = "" if labels is None else str(int(labels[i]))
            fh.write(",".join(repr(float(x)) for x in row) + "," + label + "\n")
    print(f"wrote {F.shape[0]} x {F.shape[1]} embedding -> {out}")
    return 0


def _experiment_setup(args):
    cfg = build_run_config(args)
    train_cfg, run = split_run_config(cfg)
    if train_cfg.eval_every == 0:
        train_cfg = replace(train_cfg, eval_every=DEFAULT_PLOT_EVERY)
    if not run["out"]:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    ds = load_run_dataset(run)
    _makedirs(run["out"])
    with open(os.path.join(run["out"], "config.json"), "w") as fh:
        json.dump(snapshot(cfg, train_cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ds, train_cfg, run["out"]


def _write_cell(out, name, history):
    cell = os.path.join(out, name)
    _makedirs(cell)
    history.to_csv(os.path.join(cell, "history.csv"))
    write_rows(os.path.join(cell, "plot.csv"), history.plot_rows(), PLOT_COLUMNS)


def cmd_ablate(args):
    ds, cfg, out = _experiment_setup(args)
    variants = args.variants or list(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    table = run_ablation(ds, cfg, seeds=args.seeds, variants=variants, workers=_workers(args))
    rows, summary = [], []
    for variant, runs in table.items():
        for record, history in runs:
            _write_cell(out, f"{variant}_seed{record.seed}", history)
            rows.append(_metrics_row(record))
        entry = {"variant": variant, "n_runs": len(runs)}
        entry.update({m: float(np.mean([getattr(r, m) for r, _ in runs])) for m in METRIC_NAMES})
        entry["median_acc"] = median([r.acc for r, _ in runs])
        summary.append(entry)
    write_rows(os.path.join(out, "results.csv"), rows, RESULT_COLUMNS)
    write_rows(os.path.join(out, "summary.csv"), summary,
               ("variant", "n_runs", *METRIC_NAMES, "median_acc"))
    for entry in summary:
        print(f"{entry['variant']:>8}  " + "  ".join(f"{m}={entry[m]:.4f}" for m in METRIC_NAMES))
    return 0


def cmd_sweep(args):
    ds, cfg, out = _experiment_setup(args)
    lambdas = args.lambdas or list(LAMBDA_GRID)
    cells, summary = run_sweep(ds, cfg, lambdas=lambdas, seeds=args.seeds, workers=_workers(args))
    rows = []
    for lam, seed, record, history in cells:
        _write_cell(out, f"lambda_{lam:g}_seed{seed}", history)
        rows.append(_metrics_row(record))
    write_rows(os.path.join(out, "results.csv"), rows, RESULT_COLUMNS)
    write_rows(os.path.join(out, "summary.csv"), summary, ("lambda", "n_runs", *METRIC_NAMES))
    for entry in summary:
        print(f"lambda={entry['lambda']:g}  " + "  ".join(f"{m}={entry[m]:.4f}" for m in METRIC_NAMES))
    return 0


# -- parser ----------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--data", help="dataset directory (manifest.json + view_*.csv)")
    p.add_argument("--config", help="JSON file with config keys; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--lambda", dest="lam", type=float, help="contrastive loss weight")
    p.add_argument("--tau", type=float, help="temperature")
    p.add_argument("--eta", type=float, help="mask a complete dataset at this missing rate")
    p.add_argument("--mask-seed", dest="mask_seed", type=int)
    p.add_argument("--k", type=int, help="neighbours per graph row")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--eval-every", dest="eval_every", type=int,
                   help="score the representation every N epochs (0 = only at the end)")
    p.add_argument("--n-clusters", dest="n_clusters", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="mimvc", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="write a masked copy of a complete dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("train", help="train one model")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained run")
    p.add_argument("--run", required=True)
    p.add_argument("--data", help="override the dataset recorded in the run")
    p.add_argument("--seeds", type=_seeds, help="k-means seeds, comma separated")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write the fused representation as CSV")
    p.add_argument("--run", required=True)
    p.add_argument("--data", help="embed this dataset instead of the stored one")
    p.add_argument("--out", help="CSV path (default RUN/embedding.csv)")
    p.set_defaults(func=cmd_export)

    for name, func in (("ablate", cmd_ablate), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} over variants" if name == "ablate" else "lambda grid")
        _add_train_flags(p)
        p.add_argument("--seeds", type=_seeds, default=[0, 1, 2, 3, 4])
        p.add_argument("--workers", type=int, help=f"worker processes (env {WORKERS_ENV})")
        if name == "ablate":
            p.add_argument("--variants", type=lambda s: s.split(","))
        else:
            p.add_argument("--lambdas", type=lambda s: [float(x) for x in s.split(",")])
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MimvcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
