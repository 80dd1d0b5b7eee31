"""Per-round wireless uplink realizations.

Each communication round draws an independent realization: a Bernoulli(p)
reliability flag for every client plus Rayleigh-fading power gains for every
(client, subchannel) pair. Realizations are quasi-static -- constant within a
round, redrawn independently each round -- and fully determined by
(seed, round).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rayleigh amplitude scale for unit mean power gain: E[|h|^2] = 2 * scale^2.
UNIT_MEAN_SCALE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelConfig:
    p: float = 0.8
    n_subchannels: int = 30
    tx_power: float = 1.0
    rayleigh_scale: float = UNIT_MEAN_SCALE
    snr_threshold: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.n_subchannels < 1:
            raise ValueError(f"n_subchannels must be >= 1, got {self.n_subchannels}")
        if self.tx_power <= 0.0:
            raise ValueError(f"tx_power must be > 0, got {self.tx_power}")
        if self.rayleigh_scale <= 0.0:
            raise ValueError(f"rayleigh_scale must be > 0, got {self.rayleigh_scale}")


@dataclass(frozen=True)
class ChannelRealization:
    """One round's channel state: reliability flags and K x N power gains."""

    reliable: np.ndarray
    gains: np.ndarray
    tx_power: float
    snr_threshold: float
    round_index: int

    def __post_init__(self) -> None:
        reliable = np.asarray(self.reliable, dtype=bool).copy()
        gains = np.asarray(self.gains, dtype=float).copy()
        if gains.ndim != 2 or gains.shape[0] != len(reliable):
            raise ValueError("gains must be a K x N matrix matching the reliability vector")
        if np.any(gains < 0):
            raise ValueError("power gains must be nonnegative")
        reliable.flags.writeable = False
        gains.flags.writeable = False
        object.__setattr__(self, "reliable", reliable)
        object.__setattr__(self, "gains", gains)

    @property
    def n_clients(self) -> int:
        return len(self.reliable)

    @property
    def n_subchannels(self) -> int:
        return self.gains.shape[1]


def draw_round(cfg: ChannelConfig, n_clients: int, round_index: int, seed: int) -> ChannelRealization:
    """Draw one round's realization, deterministic in (seed, round_index).

    Reliability flags are drawn first, then the gain matrix row-major, so
    every (client, subchannel) value is reproducible bit for bit.
    """
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(round_index,)))
    reliable = rng.random(n_clients) < cfg.p
    amplitude = rng.rayleigh(scale=cfg.rayleigh_scale, size=(n_clients, cfg.n_subchannels))
    return ChannelRealization(reliable, amplitude**2, cfg.tx_power, cfg.snr_threshold, round_index)


def feasible(real: ChannelRealization, client: int, subchannel: int) -> bool:
    """Whether `client` can upload on `subchannel` this round.

    Requires the reliability flag plus an achievable SNR term
    log(1 + gain * tx_power) at or above the configured threshold. Transmit
    power is pinned to the budget, so the power constraint always holds; with
    the default threshold of 0 feasibility reduces to the reliability flag.
    """
    if not 0 <= client < real.n_clients:
        raise ValueError(f"client id {client} out of range for {real.n_clients} clients")
    if not 0 <= subchannel < real.n_subchannels:
        raise ValueError(
            f"subchannel {subchannel} out of range for {real.n_subchannels} subchannels"
        )
    if not real.reliable[client]:
        return False
    return bool(math.log1p(real.gains[client, subchannel] * real.tx_power) >= real.snr_threshold)


def feasible_matrix(real: ChannelRealization) -> np.ndarray:
    """K x N boolean matrix of `feasible` evaluated for every pair."""
    snr_ok = np.log1p(real.gains * real.tx_power) >= real.snr_threshold
    return real.reliable[:, None] & snr_ok


def assign_subchannels(real: ChannelRealization, ranked_clients: list[int]) -> dict[int, int]:
    """Greedily map clients (in selection-rank order) to distinct subchannels.

    Each client takes the free subchannel on which it has the highest gain.
    """
    if len(ranked_clients) > real.n_subchannels:
        raise ValueError(
            f"cannot assign {len(ranked_clients)} clients to {real.n_subchannels} subchannels"
        )
    free = list(range(real.n_subchannels))
    assignment: dict[int, int] = {}
    for client in ranked_clients:
        gains = real.gains[client, free]
        pick = free.pop(int(np.argmax(gains)))
        assignment[int(client)] = pick
    return assignment
