"""Run configuration: JSON schema, defaults, validation, and overrides.

A run is fully described by one JSON document. Missing keys take the
defaults below; unknown keys are rejected so typos fail loudly. The resolved
form (every effective value spelled out) is what `run`/`sweep` echo to
config.resolved.json, and feeding that file back reproduces the run bit for
bit.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

from .channel import ChannelConfig
from .freshness import Growth
from .learner import Arch, LocalTrainConfig, mlp_arch, softmax_arch
from .scheduler import POLICY_KINDS, Policy


class ConfigError(ValueError):
    """A configuration document or override that violates the schema."""


DEFAULTS: dict[str, Any] = {
    "k_clients": 100,
    "rounds": 60,
    "master_seed": 1,
    "gamma": 0.0,
    "aou_growth": "staleness",
    "policy": "aou",
    "aou_threshold": "mean",
    "per_client_dump": False,
    "channel": {
        "p": 0.8,
        "n_subchannels": 30,
        "tx_power": 1.0,
        "rayleigh_scale": 0.7071067811865476,
        "snr_threshold": 0.0,
    },
    "learner": {
        "arch": "mlp",
        "hidden": [64, 64],
        "epochs": 1,
        "batch_size": 10,
        "learning_rate": 0.05,
    },
    "dataset": {
        "kind": "synthetic",
        "classes": 10,
        "dim": 20,
        "n": 6000,
        "separation": 4.0,
        "test_fraction": 0.1,
        "images": "",
        "labels": "",
        "test_images": "",
        "test_labels": "",
    },
    "partition": {
        "kind": "iid",
        "shards": 200,
        "per_client": 2,
    },
}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str  # "synthetic" | "idx"
    classes: int = 10
    dim: int = 20
    n: int = 6000
    separation: float = 4.0
    test_fraction: float = 0.1
    images: str = ""
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass(frozen=True)
class PartitionSpec:
    kind: str  # "iid" | "shards"
    shards: int = 200
    per_client: int = 2


@dataclass(frozen=True)
class RunConfig:
    """Everything one deterministic run depends on."""

    k_clients: int
    rounds: int
    master_seed: int
    gamma: float
    growth: Growth
    policy: Policy
    per_client_dump: bool
    channel: ChannelConfig
    train: LocalTrainConfig
    arch_kind: str  # "softmax" | "mlp"
    hidden: tuple[int, ...]
    dataset: DatasetSpec
    partition: PartitionSpec

    def model_arch(self, in_dim: int, n_classes: int) -> Arch:
        if self.arch_kind == "softmax":
            return softmax_arch(in_dim, n_classes)
        return mlp_arch(in_dim, n_classes, self.hidden)


def _merge(defaults: dict, raw: dict, prefix: str, problems: list[str]) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            problems.append(f"{path}: unknown key")
            continue
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                problems.append(f"{path}: expected an object")
            else:
                out[key] = _merge(defaults[key], value, f"{path}.", problems)
        else:
            out[key] = value
    return out


def _expect(cond: bool, msg: str, problems: list[str]) -> bool:
    if not cond:
        problems.append(msg)
    return cond


def _is_num(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_resolved(cfg: dict) -> list[str]:
    """All schema violations in a fully merged document, dotted-key messages."""
    p: list[str] = []
    _expect(_is_int(cfg["k_clients"]) and cfg["k_clients"] >= 1,
            f"k_clients: expected integer >= 1, got {cfg['k_clients']!r}", p)
    _expect(_is_int(cfg["rounds"]) and cfg["rounds"] >= 1,
            f"rounds: expected integer >= 1, got {cfg['rounds']!r}", p)
    _expect(_is_int(cfg["master_seed"]) and cfg["master_seed"] >= 0,
            f"master_seed: expected integer >= 0, got {cfg['master_seed']!r}", p)
    _expect(_is_num(cfg["gamma"]), f"gamma: expected a number, got {cfg['gamma']!r}", p)
    _expect(isinstance(cfg["per_client_dump"], bool),
            f"per_client_dump: expected true/false, got {cfg['per_client_dump']!r}", p)

    growth = cfg["aou_growth"]
    if isinstance(growth, str):
        kind = growth.split(":", 1)[0]
        if kind not in ("constant", "staleness", "round"):
            p.append(f"aou_growth: unknown kind {growth!r}; "
                     "expected staleness, round, or constant:<c>")
        elif kind == "constant" and ":" in growth:
            try:
                c = float(growth.split(":", 1)[1])
                if c < 0:
                    p.append(f"aou_growth: constant rate must be >= 0, got {c}")
            except ValueError:
                p.append(f"aou_growth: cannot parse rate in {growth!r}")
    else:
        p.append(f"aou_growth: expected a string, got {growth!r}")

    _expect(cfg["policy"] in POLICY_KINDS,
            f"policy: expected one of {list(POLICY_KINDS)}, got {cfg['policy']!r}", p)

    thr = cfg["aou_threshold"]
    if isinstance(thr, str):
        if thr not in ("mean", "median"):
            if thr.startswith("fixed:"):
                try:
                    tau = float(thr.split(":", 1)[1])
                    if tau < 0:
                        p.append(f"aou_threshold: fixed tau must be >= 0, got {tau}")
                except ValueError:
                    p.append(f"aou_threshold: cannot parse tau in {thr!r}")
            else:
                p.append(f"aou_threshold: expected mean, median, or fixed:<tau>, got {thr!r}")
    else:
        p.append(f"aou_threshold: expected a string, got {thr!r}")

    ch = cfg["channel"]
    _expect(_is_num(ch["p"]) and 0.0 <= ch["p"] <= 1.0,
            f"channel.p: expected value in [0, 1], got {ch['p']!r}", p)
    _expect(_is_int(ch["n_subchannels"]) and ch["n_subchannels"] >= 1,
            f"channel.n_subchannels: expected integer >= 1, got {ch['n_subchannels']!r}", p)
    _expect(_is_num(ch["tx_power"]) and ch["tx_power"] > 0,
            f"channel.tx_power: expected value > 0, got {ch['tx_power']!r}", p)
    _expect(_is_num(ch["rayleigh_scale"]) and ch["rayleigh_scale"] > 0,
            f"channel.rayleigh_scale: expected value > 0, got {ch['rayleigh_scale']!r}", p)
    _expect(_is_num(ch["snr_threshold"]),
            f"channel.snr_threshold: expected a number, got {ch['snr_threshold']!r}", p)

    lr = cfg["learner"]
    _expect(lr["arch"] in ("softmax", "mlp"),
            f"learner.arch: expected softmax or mlp, got {lr['arch']!r}", p)
    _expect(isinstance(lr["hidden"], list) and all(_is_int(h) and h >= 1 for h in lr["hidden"]),
            f"learner.hidden: expected a list of integers >= 1, got {lr['hidden']!r}", p)
    _expect(_is_int(lr["epochs"]) and lr["epochs"] >= 1,
            f"learner.epochs: expected integer >= 1, got {lr['epochs']!r}", p)
    _expect(_is_int(lr["batch_size"]) and lr["batch_size"] >= 1,
            f"learner.batch_size: expected integer >= 1, got {lr['batch_size']!r}", p)
    _expect(_is_num(lr["learning_rate"]) and lr["learning_rate"] >= 0,
            f"learner.learning_rate: expected value >= 0, got {lr['learning_rate']!r}", p)

    ds = cfg["dataset"]
    if ds["kind"] == "synthetic":
        _expect(_is_int(ds["classes"]) and ds["classes"] >= 2,
                f"dataset.classes: expected integer >= 2, got {ds['classes']!r}", p)
        _expect(_is_int(ds["dim"]) and ds["dim"] >= ds["classes"],
                f"dataset.dim: expected integer >= dataset.classes, got {ds['dim']!r}", p)
        _expect(_is_int(ds["n"]) and ds["n"] >= ds["classes"],
                f"dataset.n: expected integer >= dataset.classes, got {ds['n']!r}", p)
        _expect(_is_num(ds["separation"]) and ds["separation"] >= 0,
                f"dataset.separation: expected value >= 0, got {ds['separation']!r}", p)
        _expect(_is_num(ds["test_fraction"]) and 0.0 < ds["test_fraction"] < 1.0,
                f"dataset.test_fraction: expected value in (0, 1), got {ds['test_fraction']!r}", p)
    elif ds["kind"] == "idx":
        for field in ("images", "labels", "test_images", "test_labels"):
            _expect(isinstance(ds[field], str) and ds[field] != "",
                    f"dataset.{field}: required for dataset.kind=idx", p)
    else:
        p.append(f"dataset.kind: expected synthetic or idx, got {ds['kind']!r}")

    part = cfg["partition"]
    if part["kind"] == "shards":
        _expect(_is_int(part["shards"]) and part["shards"] >= 1,
                f"partition.shards: expected integer >= 1, got {part['shards']!r}", p)
        _expect(_is_int(part["per_client"]) and part["per_client"] >= 1,
                f"partition.per_client: expected integer >= 1, got {part['per_client']!r}", p)
        if _is_int(part["shards"]) and _is_int(part["per_client"]) and _is_int(cfg["k_clients"]):
            _expect(part["shards"] == cfg["k_clients"] * part["per_client"],
                    f"partition.shards: must equal k_clients * per_client "
                    f"({cfg['k_clients']} * {part['per_client']}), got {part['shards']}", p)
    elif part["kind"] != "iid":
        p.append(f"partition.kind: expected iid or shards, got {part['kind']!r}")

    return p


def merge_with_defaults(raw: dict) -> tuple[dict, list[str]]:
    problems: list[str] = []
    merged = _merge(DEFAULTS, raw, "", problems)
    return merged, problems


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply dotted-key=value overrides; values parse as JSON, else strings."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        dotted, text = item.split("=", 1)
        parts = dotted.split(".")
        node = DEFAULTS
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override {dotted!r}: unknown key")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override {dotted!r}: unknown key")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        target = out
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return out


def _parse_growth(text: str) -> Growth:
    if text.startswith("constant"):
        value = float(text.split(":", 1)[1]) if ":" in text else 1.0
        return Growth("constant", value)
    return Growth(text)


def _parse_policy(kind: str, threshold: str) -> Policy:
    if threshold.startswith("fixed:"):
        return Policy(kind, "fixed", float(threshold.split(":", 1)[1]))
    return Policy(kind, threshold)


def resolve(raw: dict) -> tuple[RunConfig, dict]:
    """Merge, validate, and build the typed RunConfig plus the resolved echo."""
    merged, problems = merge_with_defaults(raw)
    if not problems:
        problems = validate_resolved(merged)
    if problems:
        raise ConfigError("\n".join(problems))

    ds = merged["dataset"]
    lr = merged["learner"]
    cfg = RunConfig(
        k_clients=merged["k_clients"],
        rounds=merged["rounds"],
        master_seed=merged["master_seed"],
        gamma=float(merged["gamma"]),
        growth=_parse_growth(merged["aou_growth"]),
        policy=_parse_policy(merged["policy"], merged["aou_threshold"]),
        per_client_dump=merged["per_client_dump"],
        channel=ChannelConfig(
            p=float(merged["channel"]["p"]),
            n_subchannels=merged["channel"]["n_subchannels"],
            tx_power=float(merged["channel"]["tx_power"]),
            rayleigh_scale=float(merged["channel"]["rayleigh_scale"]),
            snr_threshold=float(merged["channel"]["snr_threshold"]),
        ),
        train=LocalTrainConfig(
            epochs=lr["epochs"],
            batch_size=lr["batch_size"],
            learning_rate=float(lr["learning_rate"]),
        ),
        arch_kind=lr["arch"],
        hidden=tuple(lr["hidden"]),
        dataset=DatasetSpec(
            kind=ds["kind"],
            classes=ds["classes"],
            dim=ds["dim"],
            n=ds["n"],
            separation=float(ds["separation"]),
            test_fraction=float(ds["test_fraction"]),
            images=ds["images"],
            labels=ds["labels"],
            test_images=ds["test_images"],
            test_labels=ds["test_labels"],
        ),
        partition=PartitionSpec(
            kind=merged["partition"]["kind"],
            shards=merged["partition"]["shards"],
            per_client=merged["partition"]["per_client"],
        ),
    )
    return cfg, merged


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e


def dump_resolved(resolved: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(resolved, f, indent=2, sort_keys=True)
        f.write("\n")
