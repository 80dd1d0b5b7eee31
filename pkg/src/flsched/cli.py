"""Command-line front end: run, sweep, plot, validate-config.

`run` and `sweep` write metrics.csv plus config.resolved.json (the full
effective configuration, reusable as an input config) into the output
directory, and render the convergence figure next to them unless --no-plot
is given. Exit codes: 0 ok, 2 config error, 3 runtime error, 4 I/O error.

The FLSCHED_THREADS environment variable caps within-round training
parallelism (0 = one worker per CPU, unset = serial); results are identical
either way.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import plotting, simulator
from .config import (
    ConfigError,
    apply_overrides,
    dump_resolved,
    load_config,
    merge_with_defaults,
    resolve,
    validate_resolved,
)
from .learner import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

METRICS_COLUMNS = (
    "run_id", "policy", "seed", "round", "accuracy", "loss", "v",
    "n_reliable", "n_selected", "mean_aou", "max_aou",
)
PER_CLIENT_COLUMNS = (
    "run_id", "policy", "seed", "round", "client", "selected", "aou", "shapley_score",
)


def threads_from_env() -> int:
    raw = os.environ.get("FLSCHED_THREADS", "")
    if raw == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"FLSCHED_THREADS: expected an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"FLSCHED_THREADS: expected >= 0, got {value}")
    return value


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics(path: Path, runs: list[simulator.SweepRun]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for sr in runs:
            run_id = f"{sr.policy}-s{sr.seed}"
            for r in sr.records:
                writer.writerow(
                    (
                        run_id, sr.policy, sr.seed, r.round,
                        _fmt(r.accuracy), _fmt(r.loss), _fmt(r.v),
                        r.n_reliable, len(r.selected),
                        _fmt(r.mean_aou), _fmt(r.max_aou),
                    )
                )


def _run_with_states(cfg, n_threads: int):
    """Run once, keeping per-round states for the optional per-client dump."""
    return list(simulator.iter_rounds(cfg, n_threads))


def write_per_client(path: Path, policy: str, seed: int, states) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PER_CLIENT_COLUMNS)
        run_id = f"{policy}-s{seed}"
        for st in states:
            chosen = set(st.record.selected)
            for client in range(st.ledger.n_clients):
                writer.writerow(
                    (
                        run_id, policy, seed, st.record.round, client,
                        int(client in chosen),
                        _fmt(st.aou.ages[client]), _fmt(st.ledger.scores[client]),
                    )
                )


def _load_resolved(args) -> tuple:
    raw = load_config(args.config)
    raw = apply_overrides(raw, args.set or [])
    _apply_dataset_flags(raw, args)
    return resolve(raw)


def _apply_dataset_flags(raw: dict, args) -> None:
    dataset = dict(raw.get("dataset", {}))
    if getattr(args, "mnist_images", None) or getattr(args, "mnist_labels", None):
        dataset.update(
            {
                "kind": "idx",
                "images": args.mnist_images or dataset.get("images", ""),
                "labels": args.mnist_labels or dataset.get("labels", ""),
            }
        )
        if getattr(args, "mnist_test_images", None):
            dataset["test_images"] = args.mnist_test_images
        if getattr(args, "mnist_test_labels", None):
            dataset["test_labels"] = args.mnist_test_labels
        raw["dataset"] = dataset
    if getattr(args, "synthetic", None):
        dataset["kind"] = "synthetic"
        for item in args.synthetic.split(","):
            if not item:
                continue
            if "=" not in item:
                raise ConfigError(f"--synthetic {item!r}: expected key=value")
            key, value = item.split("=", 1)
            if key not in ("classes", "dim", "n", "separation", "test_fraction"):
                raise ConfigError(f"--synthetic: unknown key {key!r}")
            dataset[key] = float(value) if "." in value or key in ("separation", "test_fraction") else int(value)
        raw["dataset"] = dataset


def _prepare_outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg, resolved = _load_resolved(args)
    out = _prepare_outdir(args.out)
    n_threads = threads_from_env()

    states = _run_with_states(cfg, n_threads)
    runs = [
        simulator.SweepRun(cfg.policy.kind, cfg.master_seed, tuple(s.record for s in states))
    ]
    write_metrics(out / "metrics.csv", runs)
    dump_resolved(resolved, str(out / "config.resolved.json"))
    if cfg.per_client_dump:
        write_per_client(out / "per_client.csv", cfg.policy.kind, cfg.master_seed, states)
    if not args.no_plot:
        plotting.plot_convergence(str(out / "metrics.csv"), str(out / "accuracy.svg"))
    print(f"wrote {out / 'metrics.csv'} ({len(states)} rounds)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, resolved = _load_resolved(args)
    out = _prepare_outdir(args.out)
    n_threads = threads_from_env()

    policies = [p for p in (args.policies or "random,aou,aou_or_ds,aou_and_ds").split(",") if p]
    seeds = [int(s) for s in (args.seeds or str(cfg.master_seed)).split(",") if s]
    runs = simulator.sweep(cfg, policies, seeds, n_threads)
    write_metrics(out / "metrics.csv", runs)
    dump_resolved(resolved, str(out / "config.resolved.json"))
    if not args.no_plot:
        plotting.plot_convergence(str(out / "metrics.csv"), str(out / "accuracy.svg"))
    print(f"wrote {out / 'metrics.csv'} ({len(runs)} runs)")
    return EXIT_OK


def cmd_plot(args) -> int:
    plotting.plot_convergence(args.metrics, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    raw = load_config(args.config)
    raw = apply_overrides(raw, args.set or [])
    merged, problems = merge_with_defaults(raw)
    if not problems:
        problems = validate_resolved(merged)
    if problems:
        for line in problems:
            print(line, file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flsched",
        description="Federated-learning scheduling simulator over an unreliable uplink.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="JSON run configuration.")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="Override a config value by dotted key (repeatable).",
        )

    def add_dataset_flags(p):
        p.add_argument("--mnist-images", help="IDX training images (switches dataset to idx).")
        p.add_argument("--mnist-labels", help="IDX training labels.")
        p.add_argument("--mnist-test-images", help="IDX test images.")
        p.add_argument("--mnist-test-labels", help="IDX test labels.")
        p.add_argument(
            "--synthetic", metavar="SPEC",
            help="Synthetic dataset spec, e.g. classes=10,dim=20,n=6000,separation=4.0.",
        )

    p_run = sub.add_parser("run", help="Execute one run and write metrics.")
    add_config_args(p_run)
    add_dataset_flags(p_run)
    p_run.add_argument("--out", required=True, help="Output directory.")
    p_run.add_argument("--no-plot", action="store_true", help="Skip the convergence figure.")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="Run a policy x seed grid with paired randomness.")
    add_config_args(p_sweep)
    add_dataset_flags(p_sweep)
    p_sweep.add_argument("--out", required=True, help="Output directory.")
    p_sweep.add_argument("--policies", help="Comma-separated policies (default: all four).")
    p_sweep.add_argument("--seeds", help="Comma-separated seeds (default: the config's master_seed).")
    p_sweep.add_argument("--no-plot", action="store_true", help="Skip the convergence figure.")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_plot = sub.add_parser("plot", help="Render the convergence figure from a metrics CSV.")
    p_plot.add_argument("--metrics", required=True, help="metrics.csv from run/sweep.")
    p_plot.add_argument("--out", required=True, help="Output SVG path.")
    p_plot.set_defaults(fn=cmd_plot)

    p_val = sub.add_parser("validate-config", help="Check a config and print violations.")
    add_config_args(p_val)
    p_val.set_defaults(fn=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
