"""Shapley-style per-client value ledger.

Every client starts with a random value in [0, 1). After each communication
round, the clients that participated get +1 on their raw value if the round
improved global accuracy by more than a threshold gamma; everyone else keeps
their previous raw value. The score used for scheduling is the running mean
of a client's raw values over all completed rounds.

This is a deliberately cheap stand-in for exact Shapley valuation: the raw
ledger and the derived mean are kept separate so the +1 increments always
apply to the raw value, never to the mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ValueLedger:
    """Raw per-round values plus derived running-mean scores.

    `history` holds one row of K raw values per completed round; `scores`
    equals the row-mean of `history` (or `initial` before any round).
    """

    initial: np.ndarray
    history: tuple[np.ndarray, ...]
    gamma: float
    scores: np.ndarray

    def __post_init__(self) -> None:
        initial = _frozen(self.initial)
        if initial.ndim != 1 or len(initial) < 1:
            raise ValueError("initial must be a non-empty 1-d vector")
        if np.any(initial < 0) or np.any(initial >= 1):
            raise ValueError("initial values must lie in [0, 1)")
        history = tuple(_frozen(row) for row in self.history)
        for row in history:
            if row.shape != initial.shape:
                raise ValueError("history rows must match the number of clients")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "history", history)
        object.__setattr__(self, "scores", _frozen(self.scores))

    @property
    def n_clients(self) -> int:
        return len(self.initial)

    @property
    def n_rounds(self) -> int:
        return len(self.history)


def _mean_scores(initial: np.ndarray, history: tuple[np.ndarray, ...]) -> np.ndarray:
    if not history:
        return initial.copy()
    return np.mean(np.stack(history), axis=0)


def init_values(n_clients: int, seed: int, gamma: float = 0.0) -> ValueLedger:
    """Fresh ledger with uniform [0, 1) initial values drawn from `seed`."""
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    initial = np.random.default_rng(seed).random(n_clients)
    return ValueLedger(initial, (), float(gamma), initial.copy())


def record_round(ledger: ValueLedger, participants: set[int], v: float) -> ValueLedger:
    """Append one completed round.

    Participants gain +1 on their raw value iff the round's accuracy delta
    `v` strictly exceeds gamma; all other clients carry their raw value
    forward. Scores are recomputed as running means. Pure.
    """
    k = ledger.n_clients
    ids = sorted(int(c) for c in participants)
    if ids and (ids[0] < 0 or ids[-1] >= k):
        bad = ids[0] if ids[0] < 0 else ids[-1]
        raise ValueError(f"participant id {bad} out of range for {k} clients")

    prev = ledger.history[-1] if ledger.history else ledger.initial
    row = prev.copy()
    if ids and v > ledger.gamma:
        row[ids] += 1.0
    history = ledger.history + (row,)
    return ValueLedger(ledger.initial, history, ledger.gamma, _mean_scores(ledger.initial, history))


def score(ledger: ValueLedger, client: int) -> float:
    """Current running-mean score of one client."""
    if not 0 <= client < ledger.n_clients:
        raise ValueError(f"client id {client} out of range for {ledger.n_clients} clients")
    return float(ledger.scores[client])


@dataclass(frozen=True)
class AxiomsReport:
    """How close the ledger comes to the fairness axioms it is inspired by.

    `symmetric` is True iff every pair of clients with identical increment
    histories has equal scores -- which holds exactly when their random
    initial values also coincide, the strongest symmetry this heuristic can
    honor. `null_player_keeps_initial` is True iff every client that never
    received an increment still scores its initial value (the heuristic's
    analogue of the null-player axiom; note the value is not zero).
    """

    symmetric: bool
    null_player_keeps_initial: bool
    pairs_compared: int
    null_players: int


def axioms_report(ledger: ValueLedger, rtol: float = 1e-12) -> AxiomsReport:
    """Diagnostic check of the ledger against its inspiration's axioms."""
    k = ledger.n_clients
    if ledger.history:
        rows = np.stack((ledger.initial,) + ledger.history)
        deltas = np.diff(rows, axis=0)  # (rounds, K) increment indicators
    else:
        deltas = np.zeros((0, k))

    groups: dict[tuple[float, ...], list[int]] = {}
    for c in range(k):
        groups.setdefault(tuple(deltas[:, c]), []).append(c)

    symmetric = True
    pairs = 0
    for members in groups.values():
        pairs += len(members) * (len(members) - 1) // 2
        if len(members) > 1:
            s = ledger.scores[members]
            if not np.allclose(s, s[0], rtol=rtol, atol=0.0):
                symmetric = False

    never = np.flatnonzero(np.all(deltas == 0.0, axis=0))
    null_ok = bool(
        np.allclose(ledger.scores[never], ledger.initial[never], rtol=rtol, atol=1e-12)
    )
    return AxiomsReport(symmetric, null_ok, pairs, len(never))
