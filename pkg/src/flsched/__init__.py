"""Deterministic federated-learning simulator with freshness- and
value-aware client scheduling over an unreliable wireless uplink."""

from .channel import ChannelConfig, ChannelRealization, draw_round, feasible
from .config import ConfigError, RunConfig, resolve
from .datasets import (
    LabeledDataset,
    Partitioning,
    load_idx,
    partition_iid,
    partition_shards,
    synth_gaussian,
)
from .freshness import AouState, Growth, aou_snapshot, aou_step
from .learner import (
    Arch,
    LocalTrainConfig,
    ModelParams,
    evaluate,
    fedavg,
    global_loss,
    grad_check,
    init_params,
    local_loss,
    local_train,
    mlp_arch,
    softmax_arch,
)
from .scheduler import Policy, SelectionVector, reliable_set, select, verify_selection
from .simulator import RoundRecord, SweepRun, derive_seed, iter_rounds, run, sweep
from .valuation import ValueLedger, axioms_report, init_values, record_round, score

__version__ = "0.1.0"

__all__ = [
    "AouState", "Growth", "aou_step", "aou_snapshot",
    "ValueLedger", "init_values", "record_round", "score", "axioms_report",
    "ChannelConfig", "ChannelRealization", "draw_round", "feasible",
    "Policy", "SelectionVector", "reliable_set", "select", "verify_selection",
    "Arch", "ModelParams", "LocalTrainConfig", "softmax_arch", "mlp_arch",
    "init_params", "local_loss", "global_loss", "local_train", "fedavg",
    "evaluate", "grad_check",
    "LabeledDataset", "Partitioning", "synth_gaussian", "load_idx",
    "partition_iid", "partition_shards",
    "RunConfig", "ConfigError", "resolve",
    "RoundRecord", "SweepRun", "run", "sweep", "iter_rounds", "derive_seed",
]
