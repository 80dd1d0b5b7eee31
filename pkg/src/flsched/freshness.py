"""Per-client age-of-update tracking with pluggable growth.

Each client carries a staleness counter that is reset to zero in any round
in which the client uploads an update and otherwise grows by the square of
a configurable rate. The squared increment makes long-unserved clients age
super-linearly, which is what the non-linear scheduling policies exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# last_selected entry for clients that have never been scheduled
NEVER = -1

GROWTH_KINDS = ("constant", "staleness", "round")


@dataclass(frozen=True)
class Growth:
    """Descriptor for the aging rate x.

    The age increment applied to an unselected client in one round is x**2:

    - ``constant``: x = ``value`` (value=1 recovers plain +1 aging),
    - ``staleness``: x = rounds since the client's last reset, starting at 1,
    - ``round``: x = current round index + 1.
    """

    kind: str = "staleness"
    value: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in GROWTH_KINDS:
            raise ValueError(f"unknown growth kind {self.kind!r}; expected one of {GROWTH_KINDS}")
        if self.kind == "constant" and self.value < 0:
            raise ValueError(f"constant growth rate must be >= 0, got {self.value}")

    def rates(self, round_index: int, last_selected: np.ndarray) -> np.ndarray:
        """Per-client rate x for the step applied at `round_index`."""
        n = len(last_selected)
        if self.kind == "constant":
            return np.full(n, float(self.value))
        if self.kind == "round":
            return np.full(n, float(round_index + 1))
        # staleness: NEVER (-1) yields round_index + 1, a reset at r yields
        # round_index - r, so the rate restarts at 1 after every selection.
        return (round_index - last_selected).astype(float)


@dataclass(frozen=True)
class AouState:
    """Immutable snapshot of every client's age of update.

    `ages[k]` is the current staleness of client k; `last_selected[k]` is the
    round index of k's most recent reset (NEVER if none). Fresh clients start
    at age 1.
    """

    ages: np.ndarray
    last_selected: np.ndarray
    growth: Growth = Growth()

    def __post_init__(self) -> None:
        ages = np.asarray(self.ages, dtype=float).copy()
        last = np.asarray(self.last_selected, dtype=np.int64).copy()
        if ages.ndim != 1 or last.shape != ages.shape:
            raise ValueError("ages and last_selected must be 1-d vectors of equal length")
        if np.any(ages < 0):
            raise ValueError("ages must be nonnegative")
        ages.flags.writeable = False
        last.flags.writeable = False
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "last_selected", last)

    @property
    def n_clients(self) -> int:
        return len(self.ages)

    @classmethod
    def fresh(cls, n_clients: int, growth: Growth = Growth()) -> "AouState":
        if n_clients < 1:
            raise ValueError(f"n_clients must be >= 1, got {n_clients}")
        return cls(np.ones(n_clients), np.full(n_clients, NEVER), growth)


def aou_step(state: AouState, selected: set[int], round_index: int) -> AouState:
    """Advance every client's age by one round.

    Selected clients reset to 0 and record `round_index` as their last reset;
    everyone else gains rate**2. Pure: `state` is left untouched.
    """
    if round_index < 0:
        raise ValueError(f"round_index must be >= 0, got {round_index}")
    k = state.n_clients
    sel = sorted(int(c) for c in selected)
    if sel and (sel[0] < 0 or sel[-1] >= k):
        bad = sel[0] if sel[0] < 0 else sel[-1]
        raise ValueError(f"client id {bad} out of range for {k} clients")

    x = state.growth.rates(round_index, state.last_selected)
    ages = state.ages + x**2
    last = state.last_selected.copy()
    if sel:
        ages[sel] = 0.0
        last[sel] = round_index
    return AouState(ages, last, state.growth)


def aou_snapshot(state: AouState) -> np.ndarray:
    """Writable copy of the current ages; mutating it cannot touch `state`."""
    return state.ages.copy()
