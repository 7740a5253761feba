"""Experiment runner: multi-seed training under configurable corruption,
mean/std aggregation, and table/curve emission.

Verbs: ``run`` (one config, run_count seeded repetitions), ``sweep`` (one
axis over several values, optionally several models with paired corruption
per point), ``report`` (re-emit a stored results file).
"""

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import corrupt, data, nn, propagate
from .graph import build_normalized_adjacency

MODELS = (
    "GCN",
    "GDEN-NLap",
    "RobustGCN-N",
    "RobustGCN-M1",
    "RobustGCN-M2a",
    "RobustGCN-M2e",
)
MASK_MODELS = ("RobustGCN-M1", "RobustGCN-M2a", "RobustGCN-M2e")
RESULTS_FORMAT_VERSION = 1
OUTPUT_ROOT_ENV = "ROBUSTGCN_OUT"

ALPHA_GRID = (8.0, 9.0, 10.0, 11.0, 12.0)
EPSILON_GRID = (1e-2, 5e-3, 1e-3, 5e-4, 1e-4)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment cell."""

    model: str = "GCN"
    dataset: str | None = None            # bundle directory
    synth: dict | None = None             # kwargs for data.synth_communities
    corruption: dict | None = None        # regime/level for corrupt module
    fill_strategy: str = "NMF"
    alpha: float | None = None            # None -> per-model default
    epsilon: float = 1e-3
    steps: int | None = None              # None -> 10 (M1) / 5 (M2a)
    select_by_val: bool = False           # grid-select alpha/epsilon (N only)
    robust_both_layers: bool = False
    train: dict = field(default_factory=dict)   # TrainConfig overrides
    split: dict = field(default_factory=dict)   # SplitSpec overrides
    run_count: int = 10
    seed: int = 0
    out_dir: str | None = None

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if (self.dataset is None) == (self.synth is None):
            raise ConfigError("exactly one of dataset/synth must be given")
        regime = (self.corruption or {}).get("regime")
        if self.model in MASK_MODELS:
            if regime not in ("missing_elements", "missing_nodes"):
                raise ConfigError(
                    f"{self.model} requires a missing-data regime"
                )
            if self.model == "RobustGCN-M1" and regime != "missing_elements":
                raise ConfigError("RobustGCN-M1 needs missing_elements")
            if self.model.startswith("RobustGCN-M2") and regime != "missing_nodes":
                raise ConfigError(f"{self.model} needs missing_nodes")
        if self.fill_strategy not in corrupt.FILL_STRATEGIES:
            raise ConfigError(f"unknown fill strategy {self.fill_strategy!r}")
        if self.run_count < 1:
            raise ConfigError("run_count must be >= 1")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def default_alpha(self):
        if self.alpha is not None:
            return self.alpha
        if self.model in MASK_MODELS or self.model == "GDEN-NLap":
            return 1.8
        return 10.0

    def default_steps(self):
        if self.steps is not None:
            return self.steps
        return 5 if self.model == "RobustGCN-M2a" else 10


@dataclass
class RunRecord:
    run: int
    seed: int
    test_acc: float | None
    epochs: int | None
    error: str | None = None


@dataclass
class ResultTable:
    config: dict
    fingerprint: str
    runs: list
    mean: float | None
    std: float | None

    def to_dict(self):
        return {
            "format_version": RESULTS_FORMAT_VERSION,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "mean": self.mean,
            "std": self.std,
            "runs": [dataclasses.asdict(r) for r in self.runs],
        }


def _load_base_dataset(cfg):
    if cfg.dataset is not None:
        return data.load_dataset(cfg.dataset)
    return data.synth_communities(**cfg.synth)


def _build_model(cfg, S, S_selfloop, graph, H_model, mask, d_in, n_classes,
                 model_seed, alpha=None, epsilon=None):
    alpha = cfg.default_alpha() if alpha is None else alpha
    epsilon = cfg.epsilon if epsilon is None else epsilon
    gamma = alpha / (1.0 + alpha)
    name = cfg.model
    if name == "GCN":
        prop = nn.OneStepProp(S_selfloop)
        prop1, prop2 = prop, prop
    elif name == "GDEN-NLap":
        prop = nn.GdenProp(S, gamma)
        prop1, prop2 = prop, prop
    elif name == "RobustGCN-N":
        fcfg = propagate.FistaConfig(alpha=alpha, epsilon=epsilon,
                                     max_iterations=1000)
        prop1 = nn.FistaProp(S, fcfg)
        if cfg.robust_both_layers:
            prop2 = nn.FistaProp(S, fcfg)
        else:
            prop2 = nn.GdenProp(S, gamma)
    elif name == "RobustGCN-M1":
        mcfg = propagate.MaskConfig(alpha=alpha, steps=cfg.default_steps())
        prop1 = nn.MaskM1Prop(S, mask, mcfg)
        prop2 = nn.GdenProp(S, gamma)
    elif name == "RobustGCN-M2a":
        mcfg = propagate.MaskConfig(alpha=alpha, steps=cfg.default_steps())
        prop1 = nn.MaskM2IterProp(S, mask, mcfg)
        prop2 = nn.GdenProp(S, gamma)
    elif name == "RobustGCN-M2e":
        prop1 = nn.MaskM2ExactProp(S, mask, alpha)
        prop2 = nn.GdenProp(S, gamma)
    else:
        raise ConfigError(f"unknown model {name!r}")
    return nn.Model(prop1, prop2, d_in, n_classes, seed=model_seed)


def _prepare_run_features(cfg, ds, run_seed):
    """Apply the configured corruption; return (H for the model, mask)."""
    spec_dict = cfg.corruption
    H = ds.features
    if spec_dict is None or spec_dict.get("level", 0) == 0:
        return H, None
    spec = corrupt.CorruptionSpec(
        regime=spec_dict["regime"], level=spec_dict["level"], seed=run_seed
    )
    if spec.regime in ("binary_flip", "random_value"):
        return corrupt.corrupt_features(H, spec), None
    H_null, mask = corrupt.make_missing(H, spec)
    if cfg.model in MASK_MODELS:
        # robust mask models get the NMF-filled features as anchor/init
        filled = corrupt.fill(H_null, mask, "NMF", ds.graph)
        return filled, mask
    filled = corrupt.fill(H_null, mask, cfg.fill_strategy, ds.graph)
    return filled, None


def _execute_run(cfg, run_idx):
    ds = _load_base_dataset(cfg)
    S = build_normalized_adjacency(ds.graph)
    S_selfloop = build_normalized_adjacency(ds.graph, add_self_loops=True)
    run_seed = cfg.seed + 1000 * run_idx
    split = data.SplitSpec(seed=run_seed, **cfg.split)
    train_mask, val_mask, test_mask = data.make_splits(ds, split)
    H_model, mask = _prepare_run_features(cfg, ds, run_seed)
    tcfg = nn.TrainConfig(seed=run_seed, **cfg.train)

    def fit(alpha=None, epsilon=None):
        model = _build_model(
            cfg, S, S_selfloop, ds.graph, H_model, mask,
            ds.features.shape[1], ds.class_count, run_seed,
            alpha=alpha, epsilon=epsilon,
        )
        best, history = nn.train(
            model, H_model, ds.labels, train_mask, val_mask, tcfg
        )
        val_loss = model.loss(H_model, ds.labels, val_mask, best)
        acc = nn.evaluate(model, H_model, ds.labels, test_mask, best)
        return val_loss, acc, history

    if cfg.model == "RobustGCN-N" and cfg.select_by_val:
        best = None
        for a in ALPHA_GRID:
            for e in EPSILON_GRID:
                vl, acc, hist = fit(alpha=a, epsilon=e)
                if best is None or vl < best[0]:
                    best = (vl, acc, hist)
        _, acc, history = best
    else:
        _, acc, history = fit()
    return acc, history


def run_experiment(cfg, emit=True):
    """Run cfg.run_count seeded repetitions and aggregate test accuracy."""
    cfg.validate()
    records = []
    histories = {}
    for r in range(cfg.run_count):
        try:
            acc, history = _execute_run(cfg, r)
            records.append(RunRecord(r, cfg.seed + 1000 * r, acc,
                                     len(history)))
            histories[r] = history
        except Exception as exc:  # recorded per-run, aggregation continues
            records.append(
                RunRecord(r, cfg.seed + 1000 * r, None, None, error=str(exc))
            )
    accs = [r.test_acc for r in records if r.error is None]
    mean = float(np.mean(accs)) if accs else None
    std = float(np.std(accs)) if accs else None
    table = ResultTable(cfg.to_dict(), cfg.fingerprint(), records, mean, std)
    if emit and cfg.out_dir:
        emit_outputs(table, cfg.out_dir, histories)
    return table


def run_experiment_parallel(cfg, threads):
    """Like run_experiment but with runs spread over worker processes."""
    cfg.validate()
    if threads <= 1:
        return run_experiment(cfg, emit=False)
    records = []
    histories = {}
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {
            pool.submit(_execute_run, cfg, r): r for r in range(cfg.run_count)
        }
        for fut in concurrent.futures.as_completed(futures):
            r = futures[fut]
            try:
                acc, history = fut.result()
                records.append(
                    RunRecord(r, cfg.seed + 1000 * r, acc, len(history))
                )
                histories[r] = history
            except Exception as exc:
                records.append(
                    RunRecord(r, cfg.seed + 1000 * r, None, None,
                              error=str(exc))
                )
    records.sort(key=lambda rec: rec.run)
    accs = [r.test_acc for r in records if r.error is None]
    mean = float(np.mean(accs)) if accs else None
    std = float(np.std(accs)) if accs else None
    return ResultTable(cfg.to_dict(), cfg.fingerprint(), records, mean, std), histories


def sweep(cfg, axis, values, models=None):
    """One run_experiment per (axis value, model); corruption stays paired
    across models at each point because run seeds derive from cfg.seed.

    Returns the list of tables plus long-format rows
    (value, model, mean, std).
    """
    if axis not in ("noise_level", "missing_level", "alpha", "epsilon"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    models = list(models or [cfg.model])
    tables = []
    rows = []
    for value in values:
        for model in models:
            point = dataclasses.replace(cfg, model=model, out_dir=None)
            if axis in ("noise_level", "missing_level"):
                if point.corruption is None:
                    raise ConfigError("sweeping a level needs a corruption")
                point.corruption = dict(point.corruption, level=value)
            elif axis == "alpha":
                point.alpha = value
            else:
                point.epsilon = value
            try:
                table = run_experiment(point, emit=False)
                rows.append((value, model, table.mean, table.std))
            except Exception as exc:
                table = ResultTable(point.to_dict(), point.fingerprint(),
                                    [], None, None)
                rows.append((value, model, None, None))
                table.config["error"] = str(exc)
            tables.append(table)
    return tables, rows


def _format_table(table):
    lines = ["model            mean_acc  std       runs  fingerprint"]
    cfg = table.config
    mean = "-" if table.mean is None else f"{table.mean:.4f}"
    std = "-" if table.std is None else f"{table.std:.4f}"
    ok = sum(1 for r in table.runs if r.error is None)
    lines.append(
        f"{cfg['model']:<16} {mean:>8}  {std:>8}  {ok:>4}  {table.fingerprint}"
    )
    for r in table.runs:
        acc = "-" if r.test_acc is None else f"{r.test_acc:.4f}"
        err = f"  ERROR: {r.error}" if r.error else ""
        lines.append(f"  run {r.run:<3} seed {r.seed:<8} acc {acc}{err}")
    return "\n".join(lines) + "\n"


def emit_outputs(table, out_dir, histories=None):
    """Write the aligned text table, the versioned JSON results, and one
    per-run loss-curve file."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(_format_table(table))
    with open(os.path.join(out_dir, "results.json"), "w",
              encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if histories:
        curve_dir = os.path.join(out_dir, "curves")
        os.makedirs(curve_dir, exist_ok=True)
        for r, history in histories.items():
            nn.export_history(
                history, os.path.join(curve_dir, f"run_{r}.jsonl")
            )


def emit_sweep(rows, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("value,model,mean,std\n")
        for value, model, mean, std in rows:
            m = "" if mean is None else f"{mean:.6f}"
            s = "" if std is None else f"{std:.6f}"
            fh.write(f"{value},{model},{m},{s}\n")
    return path


def load_results(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    runs = [RunRecord(**r) for r in payload["runs"]]
    return ResultTable(payload["config"], payload["fingerprint"], runs,
                       payload["mean"], payload["std"])


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p):
    p.add_argument("--dataset", help="portable bundle directory")
    p.add_argument("--synth", help="synthetic spec as JSON, e.g. "
                   '\'{"classes":3,"nodes_per_class":100,"p_in":0.1,'
                   '"p_out":0.01,"signal_dims":12,"noise_std":0.5}\'')
    p.add_argument("--model", default="GCN", choices=MODELS)
    p.add_argument("--noise", choices=("binary_flip", "random_value"))
    p.add_argument("--missing", choices=("elements", "nodes"))
    p.add_argument("--level", type=float, default=0.0)
    p.add_argument("--fill", default="nmf", choices=("zf", "mf", "nmf"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--steps", type=int)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=10000)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--val-size", type=int, default=500)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--select-by-val", action="store_true")
    p.add_argument("--out", help="output directory "
                   f"(default: ${OUTPUT_ROOT_ENV}/<fingerprint>)")
    p.add_argument("--threads", type=int, default=1)


def _cfg_from_args(args):
    corruption = None
    if args.noise:
        corruption = {"regime": args.noise, "level": args.level}
    elif args.missing:
        corruption = {
            "regime": f"missing_{args.missing}", "level": args.level
        }
    synth = json.loads(args.synth) if args.synth else None
    cfg = ExperimentConfig(
        model=args.model,
        dataset=args.dataset,
        synth=synth,
        corruption=corruption,
        fill_strategy=args.fill.upper(),
        alpha=args.alpha,
        epsilon=args.epsilon,
        steps=args.steps,
        select_by_val=args.select_by_val,
        train={"max_epochs": args.max_epochs, "patience": args.patience},
        split={
            "train_per_class": args.train_per_class,
            "val_size": args.val_size,
            "test_size": args.test_size,
        },
        run_count=args.runs,
        seed=args.seed,
        out_dir=args.out,
    )
    if cfg.out_dir is None:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root:
            cfg.out_dir = os.path.join(root, cfg.fingerprint())
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustgcn",
        description="Robust graph convolution experiment runner",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis over values")
    _add_common(p_sweep)
    p_sweep.add_argument(
        "--axis", required=True,
        choices=("noise_level", "missing_level", "alpha", "epsilon"),
    )
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--models",
                         help="comma-separated model list (default: --model)")

    p_report = sub.add_parser("report", help="re-emit a stored results file")
    p_report.add_argument("results", help="path to results.json")
    p_report.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "report":
            table = load_results(args.results)
            emit_outputs(table, args.out)
            print(_format_table(table), end="")
            return 0
        cfg = _cfg_from_args(args)
        cfg.validate()
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.verb == "run":
        if args.threads > 1:
            table, histories = run_experiment_parallel(cfg, args.threads)
            if cfg.out_dir:
                emit_outputs(table, cfg.out_dir, histories)
        else:
            table = run_experiment(cfg)
        print(_format_table(table), end="")
        return 0 if all(r.error is None for r in table.runs) else 2

    # sweep
    values = [float(v) for v in args.values.split(",")]
    models = args.models.split(",") if args.models else None
    tables, rows = sweep(cfg, args.axis, values, models)
    out_dir = cfg.out_dir or "."
    path = emit_sweep(rows, out_dir)
    print(f"wrote {path}")
    failed = any(mean is None for _, _, mean, _ in rows)
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
