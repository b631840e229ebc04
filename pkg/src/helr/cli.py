"""Command-line benchmark harness.

Three subcommands: ``run`` executes one experiment from flags and/or a
JSON config and writes metrics/weights/summary files, ``compare`` runs
two experiment specs and reports per-iteration log-likelihood dominance,
and ``plot`` renders metric curves from previously written CSV files.

Flag precedence is CLI > config file > defaults; the defaults reproduce
the full-batch MNIST benchmark settings.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import data as datamod
from .enctrain import train_encrypted, write_ledger_csv
from .hesim import HeParams, ciphertext_size_mb
from .optim import (
    LrSchedule,
    TrainConfig,
    accuracy,
    auroc,
    predict,
    train,
    write_metrics_csv,
)
from .quadgrad import per_batch_scalers, merge_bbar

__all__ = ["ExperimentSpec", "run_experiment", "compare_experiments", "plot_metrics", "main"]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one run."""

    dataset: str = "mnist"
    mode: str = "full_batch"
    optimizer: str = "enhanced_nag"
    execution: str = "plaintext"
    iters: int = 26
    batch: int = 1024
    lr_max: float = 2.0
    lr_min: float = 1.0
    lr_T: int = 36
    lr_gamma: float = 2.5
    sigmoid: str = "g16"
    log_n: int = 16
    log_q: int = 275
    log_delta: int = 30
    log_delta_c: int = 20
    noise_sigma: float = 0.0
    seed: int = 0
    shuffle: bool = False
    synth_n: int = 8192
    synth_f: int = 200
    data_dir: Optional[str] = None

    def __post_init__(self):
        if self.optimizer not in ("nag", "enhanced_nag"):
            raise ValueError(f"optimizer must be nag or enhanced_nag, got {self.optimizer!r}")
        if self.execution not in ("plaintext", "encrypted_sim"):
            raise ValueError(f"execution must be plaintext or encrypted_sim, got {self.execution!r}")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**raw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            mode=self.mode,
            batch_size=self.batch,
            max_iterations=self.iters,
            schedule=LrSchedule(self.lr_max, self.lr_min, self.lr_T, self.lr_gamma),
            sigmoid=self.sigmoid,
            shuffle=self.shuffle,
            seed=self.seed,
        )

    def he_params(self) -> HeParams:
        return HeParams(
            log_n=self.log_n,
            log_q=self.log_q,
            log_delta=self.log_delta,
            log_delta_c=self.log_delta_c,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
        )


def _load_dataset(spec: ExperimentSpec):
    """Returns (train, val). CSV datasets are split 85/15 deterministically."""
    if spec.dataset == "mnist":
        return datamod.mnist_datasets(spec.data_dir)
    if spec.dataset == "synth_financial":
        ds = datamod.synth_financial(spec.synth_n, spec.synth_f, spec.seed)
        return datamod.split_dataset(ds, datamod.SplitSpec(0.85, seed=spec.seed))
    path = Path(spec.dataset)
    if not path.exists():
        raise FileNotFoundError(f"dataset {spec.dataset!r}: not a known name and no such CSV file")
    ds = datamod.normalize(datamod.read_csv(path))
    return datamod.split_dataset(ds, datamod.SplitSpec(0.85, seed=spec.seed))


def run_experiment(spec: ExperimentSpec, out_dir) -> dict:
    """Execute one spec; write metrics.csv, weights.csv, spec.echo,
    summary.txt, and (for encrypted runs) ledger.csv.  Returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, val_ds = _load_dataset(spec)
    cfg = spec.train_config()

    ledger = None
    if spec.execution == "encrypted_sim":
        result = train_encrypted(
            train_ds,
            cfg,
            spec.he_params(),
            val=val_ds,
            enhanced=spec.optimizer == "enhanced_nag",
        )
        weights, metrics, ledger = result.weights, result.metrics, result.ledger
        extra = {
            "bbar_blocks": result.bbar_block_count,
            "z_blocks": result.z_block_count,
            "block_size_mb": round(ciphertext_size_mb(spec.he_params()), 4),
            "bootstraps_total": sum(r["bootstraps"] for r in ledger),
        }
    else:
        bbar = None
        if spec.optimizer == "enhanced_nag":
            scalers = per_batch_scalers(train_ds.X, cfg.batch_size)
            bbar = scalers if cfg.mode == "mini_batch" else merge_bbar(scalers)
        result = train(train_ds, cfg, bbar=bbar, val=val_ds)
        weights, metrics = result.weights, result.metrics
        extra = {}

    write_metrics_csv(out / "metrics.csv", metrics)
    np.savetxt(out / "weights.csv", weights[None, :], delimiter=",", fmt="%.17g")
    if ledger is not None:
        write_ledger_csv(out / "ledger.csv", ledger)
    (out / "spec.echo").write_text(spec.to_json(), encoding="utf-8")

    val_scores = val_ds.X @ weights
    summary = {
        "dataset": spec.dataset,
        "mode": spec.mode,
        "optimizer": spec.optimizer,
        "execution": spec.execution,
        "iterations": len(metrics),
        "final_train_acc": accuracy(train_ds.y, predict(weights, train_ds.X)),
        "final_val_acc": accuracy(val_ds.y, predict(weights, val_ds.X)),
        "final_auroc": auroc(val_ds.y, val_scores),
        "final_log_likelihood": metrics[-1]["log_likelihood"] if metrics else 0.0,
        "exceed_rate_last": metrics[-1]["exceed_rate"] if metrics else "",
        **extra,
    }
    lines = [f"{k}: {v}" for k, v in summary.items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


def compare_experiments(spec_a: ExperimentSpec, spec_b: ExperimentSpec, out_dir) -> dict:
    """Run both specs and tabulate per-iteration log-likelihood dominance.

    Writes each run under its own subdirectory, a combined compare.csv,
    and a loss-curve plot.  Iteration counts are truncated to the shorter
    run with a warning.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_experiment(spec_a, out / "a")
    run_experiment(spec_b, out / "b")
    rows_a = _read_metrics(out / "a" / "metrics.csv")
    rows_b = _read_metrics(out / "b" / "metrics.csv")
    if len(rows_a) != len(rows_b):
        print(
            f"warning: iteration counts differ ({len(rows_a)} vs {len(rows_b)}); truncating",
            file=sys.stderr,
        )
    k = min(len(rows_a), len(rows_b))
    lls_a = [float(r["log_likelihood"]) for r in rows_a[:k]]
    lls_b = [float(r["log_likelihood"]) for r in rows_b[:k]]
    wins = sum(1 for x, y in zip(lls_a, lls_b) if x >= y)
    with open(out / "compare.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_likelihood_a", "log_likelihood_b", "a_ge_b"])
        for i in range(k):
            writer.writerow([i + 1, repr(lls_a[i]), repr(lls_b[i]), int(lls_a[i] >= lls_b[i])])
    plot_metrics(
        [out / "a" / "metrics.csv", out / "b" / "metrics.csv"],
        out / "loss.svg",
        column="log_likelihood",
        labels=["a", "b"],
    )
    report = {
        "iterations": k,
        "dominance": wins / k if k else 0.0,
        "max_abs_delta": max((abs(x - y) for x, y in zip(lls_a, lls_b)), default=0.0),
    }
    (out / "compare_summary.txt").write_text(
        "\n".join(f"{k2}: {v}" for k2, v in report.items()) + "\n", encoding="utf-8"
    )
    return report


def _read_metrics(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def plot_metrics(paths, out_path, column: str = "log_likelihood", labels=None) -> None:
    """Deterministic SVG line plot of one metric column across runs."""
    import matplotlib

    matplotlib.use("svg")
    matplotlib.rcParams["svg.hashsalt"] = "helr"  # stable element ids
    import matplotlib.pyplot as plt

    if not paths:
        raise ValueError("no metrics files given")
    labels = labels or [str(p) for p in paths]
    fig, ax = plt.subplots(figsize=(6, 4))
    for path, label in zip(paths, labels):
        rows = _read_metrics(path)
        if not rows:
            raise ValueError(f"{path}: empty metrics file")
        if column not in rows[0]:
            raise ValueError(f"{path}: no column {column!r} (have {list(rows[0])})")
        xs = [int(r["iteration"]) for r in rows]
        ys = [float(r[column]) for r in rows]
        ax.plot(xs, ys, marker="o", markersize=2.5, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel(column)
    ax.grid(True, linestyle="--", alpha=0.5)
    if len(paths) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Date": None})
    plt.close(fig)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="helr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment")
    _add_spec_flags(run_p)
    run_p.add_argument("--config", help="JSON file with spec fields (overridden by flags)")
    run_p.add_argument("--out", required=True, help="output directory")

    cmp_p = sub.add_parser("compare", help="run two specs and compare convergence")
    cmp_p.add_argument("--spec-a", required=True, help="JSON spec for run A")
    cmp_p.add_argument("--spec-b", required=True, help="JSON spec for run B")
    cmp_p.add_argument("--out", required=True)

    plot_p = sub.add_parser("plot", help="plot metric curves from CSV files")
    plot_p.add_argument("metrics", nargs="+", help="metrics.csv files")
    plot_p.add_argument("--column", default="log_likelihood")
    plot_p.add_argument("--labels", nargs="*")
    plot_p.add_argument("--out", required=True, help="output SVG path")
    return parser


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="mnist, synth_financial, or a CSV path")
    p.add_argument("--mode", choices=["full_batch", "mini_batch"])
    p.add_argument("--optimizer", choices=["nag", "enhanced_nag"])
    p.add_argument("--execution", choices=["plaintext", "encrypted_sim"])
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr.max", dest="lr_max", type=float)
    p.add_argument("--lr.min", dest="lr_min", type=float)
    p.add_argument("--lr.T", dest="lr_T", type=int)
    p.add_argument("--lr.gamma", dest="lr_gamma", type=float)
    p.add_argument("--sigmoid", choices=["exact", "g8", "g16"])
    p.add_argument("--he.logN", dest="log_n", type=int)
    p.add_argument("--he.logQ", dest="log_q", type=int)
    p.add_argument("--he.logDelta", dest="log_delta", type=int)
    p.add_argument("--he.logDeltaC", dest="log_delta_c", type=int)
    p.add_argument("--noise.sigma", dest="noise_sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--shuffle", action="store_const", const=True)
    p.add_argument("--synth-n", dest="synth_n", type=int)
    p.add_argument("--synth-f", dest="synth_f", type=int)
    p.add_argument("--data-dir", dest="data_dir", help="MNIST cache directory (or $HELR_DATA_DIR)")


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    merged: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            merged.update(json.load(fh))
    for f in dataclasses.fields(ExperimentSpec):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    return ExperimentSpec.from_dict(merged)


def _load_spec_file(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentSpec.from_dict(json.load(fh))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            summary = run_experiment(_spec_from_args(args), args.out)
            for k, v in summary.items():
                print(f"{k}: {v}")
        elif args.command == "compare":
            report = compare_experiments(
                _load_spec_file(args.spec_a), _load_spec_file(args.spec_b), args.out
            )
            for k, v in report.items():
                print(f"{k}: {v}")
        elif args.command == "plot":
            plot_metrics(args.metrics, args.out, column=args.column, labels=args.labels)
    except (ValueError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
