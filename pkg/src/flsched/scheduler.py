"""Client selection policies for the per-round uplink schedule.

Every round, at most N of the reliable clients can upload. When the reliable
set fits, everyone uploads. Otherwise the policy ranks the reliable clients:

- ``random``: uniform draw without replacement (baseline),
- ``aou``: the N largest ages; this greedily minimizes the summed
  post-selection age since resetting the stalest clients removes the largest
  terms,
- ``aou_or_ds`` / ``aou_and_ds``: a two-group ordering built in one scan over
  the reliable clients in descending-age order. A client joins the front
  group when its age exceeds a threshold OR/AND its value score beats the
  running maximum score of clients already placed in the front group
  (initialized to -inf). Both groups keep (age desc, score desc, id asc)
  order and the first N of front+back are selected.

Ties everywhere break by higher score, then lower client id, so selections
are a deterministic function of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, feasible_matrix

POLICY_KINDS = ("random", "aou", "aou_or_ds", "aou_and_ds")
THRESHOLD_RULES = ("mean", "median", "fixed")


@dataclass(frozen=True)
class Policy:
    """Selection policy plus the age-threshold rule used by the combined kinds.

    `threshold_rule` is one of ``mean`` / ``median`` (of the round's reliable
    clients' ages) or ``fixed`` with `threshold_value` = tau.
    """

    kind: str = "aou"
    threshold_rule: str = "mean"
    threshold_value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ValueError(
                f"unknown threshold rule {self.threshold_rule!r}; expected one of {THRESHOLD_RULES}"
            )
        if self.threshold_rule == "fixed" and self.threshold_value < 0:
            raise ValueError(f"fixed threshold must be >= 0, got {self.threshold_value}")


@dataclass(frozen=True)
class SelectionVector:
    """The round's schedule: client ids in selection-rank order plus a 0/1 mask."""

    selected: tuple[int, ...]
    indicator: np.ndarray
    round_index: int

    def __post_init__(self) -> None:
        indicator = np.asarray(self.indicator, dtype=np.int8).copy()
        indicator.flags.writeable = False
        object.__setattr__(self, "selected", tuple(int(c) for c in self.selected))
        object.__setattr__(self, "indicator", indicator)


def reliable_set(real: ChannelRealization) -> set[int]:
    """Clients that can upload on at least one subchannel this round."""
    return {int(k) for k in np.flatnonzero(feasible_matrix(real).any(axis=1))}


def _rank_key(aou: np.ndarray, scores: np.ndarray):
    return lambda k: (-aou[k], -scores[k], k)


def _threshold(policy: Policy, aou: np.ndarray, reliable: list[int]) -> float:
    if policy.threshold_rule == "fixed":
        return policy.threshold_value
    if policy.threshold_rule == "median":
        return float(np.median(aou[reliable]))
    return float(np.mean(aou[reliable]))


def _two_group_order(
    policy: Policy, scan: list[int], aou: np.ndarray, scores: np.ndarray
) -> list[int]:
    thr = _threshold(policy, aou, scan)
    want_both = policy.kind == "aou_and_ds"
    front: list[int] = []
    back: list[int] = []
    run_max = -math.inf
    for k in scan:
        age_ok = aou[k] > thr
        score_ok = scores[k] > run_max
        if (age_ok and score_ok) if want_both else (age_ok or score_ok):
            front.append(k)
            run_max = max(run_max, float(scores[k]))
        else:
            back.append(k)
    # scan order is (age desc, score desc, id asc); both groups inherit it
    return front + back


def select(
    policy: Policy,
    reliable: set[int],
    n_channels: int,
    aou: np.ndarray,
    scores: np.ndarray,
    seed: int,
    round_index: int = 0,
) -> SelectionVector:
    """Pick the round's uploaders from the reliable set.

    When the reliable set is no larger than the number of subchannels, all of
    it is selected regardless of policy. An empty reliable set yields an
    empty (valid) selection.
    """
    aou = np.asarray(aou, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if aou.shape != scores.shape or aou.ndim != 1:
        raise ValueError("aou and scores must be 1-d vectors of equal length")
    if n_channels < 1:
        raise ValueError(f"n_channels must be >= 1, got {n_channels}")
    n = len(aou)
    rel = sorted(int(k) for k in reliable)
    if rel and (rel[0] < 0 or rel[-1] >= n):
        bad = rel[0] if rel[0] < 0 else rel[-1]
        raise ValueError(f"client id {bad} out of range for {n} clients")

    key = _rank_key(aou, scores)
    if len(rel) <= n_channels:
        order = sorted(rel, key=key)
    elif policy.kind == "random":
        rng = np.random.default_rng(seed)
        order = [int(k) for k in rng.choice(np.array(rel), size=n_channels, replace=False)]
    else:
        scan = sorted(rel, key=key)
        if policy.kind == "aou":
            order = scan[:n_channels]
        else:
            order = _two_group_order(policy, scan, aou, scores)[:n_channels]

    indicator = np.zeros(n, dtype=np.int8)
    indicator[order] = 1
    return SelectionVector(tuple(order), indicator, round_index)


def verify_selection(sel: SelectionVector, reliable: set[int], n_channels: int) -> bool:
    """Check every selection invariant; the simulator's per-round guard."""
    chosen = set(sel.selected)
    if len(chosen) != len(sel.selected):
        return False
    if len(chosen) > n_channels:
        return False
    if not chosen <= {int(k) for k in reliable}:
        return False
    mask = np.zeros(len(sel.indicator), dtype=np.int8)
    for k in chosen:
        if not 0 <= k < len(mask):
            return False
        mask[k] = 1
    return bool(np.array_equal(mask, sel.indicator))
