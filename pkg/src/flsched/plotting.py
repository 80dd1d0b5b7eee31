"""Convergence figures rendered from the metrics CSV.

Output is SVG with a fixed hash salt and no timestamp metadata, so the same
CSV always produces byte-identical bytes.
"""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HASH_SALT = "flsched"


class MetricsFormatError(ValueError):
    """The metrics CSV does not conform to the run/sweep output schema."""


REQUIRED_COLUMNS = ("run_id", "policy", "seed", "round", "accuracy")


def read_metrics(path: str) -> list[dict]:
    """Parse the metrics CSV, reporting the offending row on bad data."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MetricsFormatError(f"{path}: missing columns {missing}")
        rows = []
        for i, row in enumerate(reader, start=2):
            try:
                rows.append(
                    {
                        "run_id": row["run_id"],
                        "policy": row["policy"],
                        "seed": int(row["seed"]),
                        "round": int(row["round"]),
                        "accuracy": float(row["accuracy"]),
                    }
                )
            except (TypeError, ValueError, KeyError) as e:
                raise MetricsFormatError(f"{path}: row {i}: {e}") from e
    if not rows:
        raise MetricsFormatError(f"{path}: no data rows")
    return rows


def plot_convergence(metrics_csv: str, out_svg: str) -> None:
    """One accuracy-vs-round line per policy, seed-averaged, min-max band.

    Each policy's line carries gid "policy-<name>" and its band
    "band-<name>", so the SVG structure is machine-checkable.
    """
    rows = read_metrics(metrics_csv)

    by_policy: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        by_policy[row["policy"]][row["round"]].append(row["accuracy"])

    plt.rcParams["svg.hashsalt"] = HASH_SALT
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for policy in sorted(by_policy):
        per_round = by_policy[policy]
        rounds = np.array(sorted(per_round))
        acc = [np.asarray(per_round[t]) for t in rounds]
        mean = np.array([a.mean() for a in acc])
        low = np.array([a.min() for a in acc])
        high = np.array([a.max() for a in acc])
        (line,) = ax.plot(rounds, mean, label=policy, linewidth=1.6)
        line.set_gid(f"policy-{policy}")
        band = ax.fill_between(rounds, low, high, alpha=0.15, color=line.get_color())
        band.set_gid(f"band-{policy}")

    ax.set_xlabel("communication round")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
