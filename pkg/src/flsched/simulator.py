"""The per-round simulation loop.

Each round: draw the channel, find the reliable set, select uploaders,
train them locally from the current global model, aggregate, evaluate on the
held-out test set, feed the accuracy delta to the value ledger, and age
everyone's update counter. Runs are bit-reproducible: every random stream is
derived from the master seed through a fixed counter scheme, so adding or
parallelizing one consumer never perturbs the others, and runs that share a
master seed see identical channels and data partitions regardless of policy.

Seed streams (spawn keys off the master seed):
    0 dataset synthesis     4 value-ledger init
    1 train/test split      5 channel (further keyed by round inside draw_round)
    2 client partitioning   6 scheduler randomness, keyed by round
    3 model init            7 local-train shuffling, keyed by (round, client)
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from . import channel as ch
from . import datasets as dsets
from . import freshness as fr
from . import learner as ln
from . import scheduler as sched
from . import valuation as val
from .config import RunConfig

STREAM_DATASET = 0
STREAM_SPLIT = 1
STREAM_PARTITION = 2
STREAM_INIT = 3
STREAM_LEDGER = 4
STREAM_CHANNEL = 5
STREAM_SCHED = 6
STREAM_SHUFFLE = 7


def derive_seed(master_seed: int, stream: int, *indices: int) -> int:
    """One 64-bit sub-seed per (stream, indices) counter position."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(stream, *indices))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RoundRecord:
    """Everything logged about one communication round."""

    round: int
    selected: tuple[int, ...]
    n_reliable: int
    accuracy: float
    loss: float
    v: float
    mean_aou: float
    max_aou: float
    wall_ms: float


@dataclass(frozen=True)
class RoundState:
    """A round's record plus the post-round simulator state, for inspection."""

    record: RoundRecord
    aou: fr.AouState
    ledger: val.ValueLedger
    params: ln.ModelParams


@dataclass(frozen=True)
class Problem:
    """Materialized data and model shape for one run."""

    parts: tuple[dsets.LabeledDataset, ...]
    test: dsets.LabeledDataset
    arch: ln.Arch


def build_problem(cfg: RunConfig) -> Problem:
    """Generate/load data, hold out the test set, and partition the rest."""
    spec = cfg.dataset
    if spec.kind == "synthetic":
        full = dsets.synth_gaussian(
            spec.classes, spec.dim, spec.n, spec.separation,
            derive_seed(cfg.master_seed, STREAM_DATASET),
        )
        train, test = dsets.train_test_split(
            full, spec.test_fraction, derive_seed(cfg.master_seed, STREAM_SPLIT)
        )
    else:
        train = dsets.load_idx(spec.images, spec.labels)
        test = dsets.load_idx(spec.test_images, spec.test_labels)

    part_seed = derive_seed(cfg.master_seed, STREAM_PARTITION)
    if cfg.partition.kind == "iid":
        parts = dsets.partition_iid(train, cfg.k_clients, part_seed)
    else:
        parts = dsets.partition_shards(
            train, cfg.k_clients, cfg.partition.shards, cfg.partition.per_client, part_seed
        )
    client_data = tuple(dsets.subset(train, idx) for idx in parts.assignment)
    n_classes = max(train.n_classes, test.n_classes)
    return Problem(client_data, test, cfg.model_arch(train.d_in, n_classes))


def _resolve_threads(n_threads: int) -> int:
    return os.cpu_count() or 1 if n_threads == 0 else max(1, n_threads)


def _train_selected(
    params: ln.ModelParams,
    problem: Problem,
    order: list[int],
    cfg: RunConfig,
    round_index: int,
    n_threads: int,
) -> list[tuple[ln.ModelParams, int]]:
    def train_one(client: int) -> tuple[ln.ModelParams, int]:
        local_cfg = replace(
            cfg.train, seed=derive_seed(cfg.master_seed, STREAM_SHUFFLE, round_index, client)
        )
        try:
            updated = ln.local_train(params, problem.parts[client], local_cfg)
        except ln.NumericalError as e:
            raise ln.NumericalError(f"client {client}: {e}") from e
        return updated, problem.parts[client].n

    workers = _resolve_threads(n_threads)
    if workers == 1 or len(order) <= 1:
        return [train_one(k) for k in order]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(train_one, order))


def iter_rounds(cfg: RunConfig, n_threads: int = 1) -> Iterator[RoundState]:
    """Yield one RoundState per communication round, in order.

    Deterministic in `cfg` and independent of `n_threads`: per-client training
    is pure and aggregation always reduces in ascending client-id order.
    """
    problem = build_problem(cfg)
    k = cfg.k_clients
    n_channels = cfg.channel.n_subchannels

    params = ln.init_params(problem.arch, derive_seed(cfg.master_seed, STREAM_INIT))
    ledger = val.init_values(k, derive_seed(cfg.master_seed, STREAM_LEDGER), gamma=cfg.gamma)
    aou = fr.AouState.fresh(k, cfg.growth)
    channel_seed = derive_seed(cfg.master_seed, STREAM_CHANNEL)
    prev_accuracy, _ = ln.evaluate(params, problem.test)

    for t in range(1, cfg.rounds + 1):
        started = time.perf_counter()
        try:
            real = ch.draw_round(cfg.channel, k, t, channel_seed)
            reliable = sched.reliable_set(real)
            sel = sched.select(
                cfg.policy,
                reliable,
                n_channels,
                fr.aou_snapshot(aou),
                ledger.scores,
                derive_seed(cfg.master_seed, STREAM_SCHED, t),
                round_index=t,
            )
            order = sorted(sel.selected)
            updates = _train_selected(params, problem, order, cfg, t, n_threads)
            params = ln.fedavg(updates, params)
            accuracy, loss = ln.evaluate(params, problem.test)
            v = accuracy - prev_accuracy
            prev_accuracy = accuracy
            ledger = val.record_round(ledger, set(sel.selected), v)
            aou = fr.aou_step(aou, set(sel.selected), t - 1)
        except (ValueError, ln.NumericalError) as e:
            raise type(e)(f"round {t}: {e}") from e

        record = RoundRecord(
            round=t,
            selected=sel.selected,
            n_reliable=len(reliable),
            accuracy=accuracy,
            loss=loss,
            v=v,
            mean_aou=float(aou.ages.mean()),
            max_aou=float(aou.ages.max()),
            wall_ms=(time.perf_counter() - started) * 1000.0,
        )
        yield RoundState(record, aou, ledger, params)


def run(cfg: RunConfig, n_threads: int = 1) -> list[RoundRecord]:
    """Execute all rounds and return their records."""
    return [state.record for state in iter_rounds(cfg, n_threads)]


@dataclass(frozen=True)
class SweepRun:
    policy: str
    seed: int
    records: tuple[RoundRecord, ...]


def sweep(
    base: RunConfig, policies: list[str], seeds: list[int], n_threads: int = 1
) -> list[SweepRun]:
    """Run the policy x seed cross product with paired randomness.

    All runs sharing a seed derive their channel, data, and initialization
    from the same streams, so they differ only through the policy.
    """
    if not policies or not seeds:
        raise ValueError("sweep needs at least one policy and one seed")
    out = []
    for seed in seeds:
        for kind in policies:
            cfg = replace(
                base,
                master_seed=seed,
                policy=replace(base.policy, kind=kind),
            )
            out.append(SweepRun(kind, seed, tuple(run(cfg, n_threads))))
    return out
