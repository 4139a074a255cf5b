"""Cost-weighted MaxWeight schedule selection.

A schedule is a permutation: queue (i, perm[i]) is served at every input i.
Each slot the scheduler picks a permutation maximizing sum_i c[i, perm[i]] *
Q[i, perm[i]].  For small n the argmax set is enumerated and ties are broken
uniformly at random; above the enumeration threshold a Hungarian solver with
a randomizing pre-shuffle is used instead (an arbitrary maximizer, so tie
breaking is only approximate there).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .wlinalg import CostMatrix

__all__ = [
    "Schedule",
    "MatcherConfig",
    "schedule_weight",
    "max_weight_schedule",
    "enumerate_argmax",
    "hungarian_schedule",
    "all_schedules",
]

MODES = ("exact-enumeration", "hungarian", "auto")


@dataclass(frozen=True)
class Schedule:
    """perm[i] = j means queue (i, j) is served."""

    perm: tuple[int, ...]

    def __post_init__(self):
        n = len(self.perm)
        if sorted(self.perm) != list(range(n)):
            raise ValueError(f"not a permutation of 0..{n-1}: {self.perm}")

    @property
    def n(self) -> int:
        return len(self.perm)

    def as_matrix(self) -> np.ndarray:
        s = np.zeros((self.n, self.n), dtype=int)
        for i, j in enumerate(self.perm):
            s[i, j] = 1
        return s

    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.perm))


@dataclass
class MatcherConfig:
    mode: str = "auto"
    exact_threshold: int = 7
    stream_name: str = "tiebreak"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.exact_threshold < 2:
            raise ValueError("exact_threshold must be >= 2")

    def resolved_mode(self, n: int) -> str:
        if self.mode == "auto":
            return "exact-enumeration" if n <= self.exact_threshold else "hungarian"
        return self.mode


def all_schedules(n: int) -> list[Schedule]:
    """All n! maximal schedules, in lexicographic order."""
    return [Schedule(p) for p in itertools.permutations(range(n))]


def _check_dims(Q: np.ndarray, cost: CostMatrix) -> np.ndarray:
    Q = np.asarray(Q)
    if Q.shape != (cost.n, cost.n):
        raise ValueError(f"queue matrix shape {Q.shape} != cost shape {(cost.n, cost.n)}")
    return Q


def schedule_weight(s: Schedule, Q, cost: CostMatrix) -> float:
    """sum_i c[i, perm[i]] * Q[i, perm[i]], accumulated in fixed row order.

    The fixed accumulation order makes identical multisets of terms compare
    exactly equal across schedules, which enumerate_argmax relies on.
    """
    Q = _check_dims(Q, cost)
    if s.n != cost.n:
        raise ValueError("schedule size does not match cost matrix")
    w = 0.0
    c = cost.c
    for i, j in enumerate(s.perm):
        w += c[i, j] * Q[i, j]
    return w


def _weights_by_perm(Q: np.ndarray, cost: CostMatrix) -> list[tuple[tuple[int, ...], float]]:
    c = cost.c
    out = []
    for perm in itertools.permutations(range(cost.n)):
        w = 0.0
        for i, j in enumerate(perm):
            w += c[i, j] * Q[i, j]
        out.append((perm, w))
    return out


def enumerate_argmax(Q, cost: CostMatrix, exact_threshold: int = 7) -> list[Schedule]:
    """All schedules attaining the maximum weight (exact float equality)."""
    Q = _check_dims(Q, cost)
    if cost.n > exact_threshold:
        raise ValueError(f"n={cost.n} above enumeration threshold {exact_threshold}")
    weighted = _weights_by_perm(Q, cost)
    best = max(w for _, w in weighted)
    return [Schedule(p) for p, w in weighted if w == best]


def hungarian_schedule(Q, cost: CostMatrix, rng: np.random.Generator) -> Schedule:
    """Maximum-weight assignment via the Hungarian method.

    A random row/column shuffle is applied first so that, under ties, which
    maximizer comes back is not a fixed artifact of index order.
    """
    Q = _check_dims(Q, cost)
    n = cost.n
    pr = rng.permutation(n)
    pc = rng.permutation(n)
    W = (cost.c * Q)[np.ix_(pr, pc)]
    rows, cols = linear_sum_assignment(W, maximize=True)
    perm = [0] * n
    for r, col in zip(rows, cols):
        perm[pr[r]] = int(pc[col])
    return Schedule(tuple(perm))


def max_weight_schedule(
    Q, cost: CostMatrix, cfg: MatcherConfig, rng: np.random.Generator
) -> Schedule:
    """Pick a maximum-weight schedule; exact mode samples uniformly from the
    full argmax set."""
    Q = _check_dims(Q, cost)
    mode = cfg.resolved_mode(cost.n)
    if mode == "exact-enumeration":
        ties = enumerate_argmax(Q, cost, exact_threshold=max(cfg.exact_threshold, cost.n))
        if len(ties) == 1:
            return ties[0]
        return ties[int(rng.integers(len(ties)))]
    return hungarian_schedule(Q, cost, rng)
