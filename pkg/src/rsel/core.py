"""Problem model, sampling oracles, seeded randomness streams, running
statistics, and the common selection-result record.

Randomness is counter-based: the l-th observation of a (seed, substream)
pair is a pure function of (seed, substream, l), so results never depend
on sampling interleaving order.  Each alternative gets one substream per
macro-replication; auxiliary channels (worker delay models) sit above the
alternative channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backend import kernel

__all__ = [
    "CHANNELS_PER_REP", "substream_id",
    "ProblemInstance", "Stream", "gaussian_sample",
    "GaussianOracle", "SequenceOracle",
    "RunningStat", "StatError", "pairwise_variance",
    "SelectionResult", "DECISION", "BUDGET_CAP",
]

# substream = rep * CHANNELS_PER_REP + channel; channels 0..k-1 are the
# alternatives, k.. are auxiliary (e.g. per-worker delay streams)
CHANNELS_PER_REP = 1 << 22

DECISION = "decision"
BUDGET_CAP = "budget_cap"


def substream_id(rep: int, channel: int) -> int:
    if not 0 <= channel < CHANNELS_PER_REP:
        raise ValueError(f"channel {channel} out of range")
    if rep < 0:
        raise ValueError(f"rep must be >= 0, got {rep}")
    return rep * CHANNELS_PER_REP + channel


@dataclass(frozen=True)
class ProblemInstance:
    """Ground-truth means/variances of k alternatives; drives the synthetic
    oracles and lets the harness judge correctness."""

    means: tuple
    variances: tuple
    iz_delta: float | None = None

    def __init__(self, means: Sequence[float], variances: Sequence[float] | float,
                 iz_delta: float | None = None):
        means = tuple(float(m) for m in means)
        if np.isscalar(variances):
            variances = tuple(float(variances) for _ in means)
        else:
            variances = tuple(float(v) for v in variances)
        if len(means) < 2:
            raise ValueError(f"need k >= 2 alternatives, got {len(means)}")
        if len(variances) != len(means):
            raise ValueError("means and variances must have equal length")
        if any(v <= 0.0 for v in variances):
            raise ValueError("all variances must be > 0")
        if iz_delta is not None and not iz_delta > 0:
            raise ValueError(f"iz_delta must be > 0, got {iz_delta}")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "iz_delta",
                           None if iz_delta is None else float(iz_delta))

    @property
    def k(self) -> int:
        return len(self.means)

    @property
    def best_value(self) -> float:
        return max(self.means)

    @property
    def best_set(self) -> tuple:
        """All tied maximizers; selecting any of them is a correct selection."""
        b = self.best_value
        return tuple(i for i, m in enumerate(self.means) if m == b)

    def common_variance(self) -> float:
        v = self.variances[0]
        if any(x != v for x in self.variances):
            raise ValueError("variances are not common across alternatives")
        return v


class Stream:
    """Counter-based randomness stream for one (seed, substream) pair.

    Identical (seed, substream) reproduce the identical sequence; indexed
    access never disturbs the cursor.
    """

    __slots__ = ("seed", "substream", "key", "cursor")

    def __init__(self, seed: int, substream: int, cursor: int = 0):
        self.seed = int(seed)
        self.substream = int(substream)
        self.key = kernel.stream_key(self.seed, self.substream)
        self.cursor = cursor

    def u01_at(self, index: int) -> float:
        return kernel.u01_at(self.key, index)

    def normal_at(self, index: int) -> float:
        return kernel.std_normal_at(self.key, index)

    def next_u01(self) -> float:
        v = kernel.u01_at(self.key, self.cursor)
        self.cursor += 1
        return v

    def next_normal(self) -> float:
        v = kernel.std_normal_at(self.key, self.cursor)
        self.cursor += 1
        return v

    def next_normals(self, n: int) -> np.ndarray:
        out = np.empty(n)
        kernel.fill_std_normals(self.key, self.cursor, out)
        self.cursor += n
        return out


def gaussian_sample(instance: ProblemInstance, i: int, stream: Stream) -> float:
    """One N(mu_i, sigma_i^2) observation via the standard-normal transform
    of the stream (advances the cursor)."""
    if not 0 <= i < instance.k:
        raise IndexError(f"alternative index {i} out of range 0..{instance.k - 1}")
    sd = instance.variances[i] ** 0.5
    return instance.means[i] + sd * stream.next_normal()


class GaussianOracle:
    """Synthetic sampling oracle over a ProblemInstance.

    ``sample(i)`` draws the next observation of alternative i (cursor
    semantics); ``value_at(i, l)`` returns the l-th observation statelessly
    (what the master/worker pool uses, so in-flight jobs cannot race).
    ``channel_map`` relabels which substream an alternative draws from
    (label-symmetry experiments).
    """

    def __init__(self, instance: ProblemInstance, seed: int, rep: int = 0,
                 channel_map: Sequence[int] | None = None):
        self.instance = instance
        self.seed = int(seed)
        self.rep = int(rep)
        k = instance.k
        channels = range(k) if channel_map is None else channel_map
        self._streams = [Stream(seed, substream_id(rep, c)) for c in channels]
        self._sds = [v ** 0.5 for v in instance.variances]

    @property
    def k(self) -> int:
        return self.instance.k

    def sample(self, i: int) -> float:
        return self.instance.means[i] + self._sds[i] * self._streams[i].next_normal()

    def value_at(self, i: int, index: int) -> float:
        return self.instance.means[i] + self._sds[i] * self._streams[i].normal_at(index)

    def take(self, i: int, n: int) -> np.ndarray:
        z = self._streams[i].next_normals(n)
        return self.instance.means[i] + self._sds[i] * z

    def consumed(self, i: int) -> int:
        return self._streams[i].cursor


class SequenceOracle:
    """Test oracle replaying fixed observation sequences (cycling when a
    sequence is exhausted, so constant oracles are one-element sequences)."""

    def __init__(self, sequences: Sequence[Sequence[float]]):
        self._seqs = [list(map(float, s)) for s in sequences]
        self._cursors = [0] * len(self._seqs)

    @property
    def k(self) -> int:
        return len(self._seqs)

    def sample(self, i: int) -> float:
        v = self.value_at(i, self._cursors[i])
        self._cursors[i] += 1
        return v

    def value_at(self, i: int, index: int) -> float:
        seq = self._seqs[i]
        return seq[index % len(seq)]

    def take(self, i: int, n: int) -> np.ndarray:
        return np.array([self.sample(i) for _ in range(n)])


def draw_block(oracle, i: int, n: int) -> np.ndarray:
    """n observations of alternative i, using the oracle's batch path when
    it has one."""
    take = getattr(oracle, "take", None)
    if take is not None:
        return np.asarray(take(i, n), dtype=float)
    return np.array([oracle.sample(i) for _ in range(n)])


class StatError(RuntimeError):
    """Statistic queried before it is defined (e.g. variance at n < 2)."""


class RunningStat:
    """Single-pass count/mean/variance accumulator (Welford update)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> "RunningStat":
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)
        return self

    def extend(self, xs) -> "RunningStat":
        for x in xs:
            self.push(x)
        return self

    @property
    def variance(self) -> float:
        if self.n < 2:
            raise StatError(f"sample variance undefined at n = {self.n}")
        return self.m2 / (self.n - 1)

    def __repr__(self):
        return f"RunningStat(n={self.n}, mean={self.mean!r}, m2={self.m2!r})"


def pairwise_variance(obs_j: Sequence[float], obs_i: Sequence[float]) -> float:
    """S^2 of the paired first-stage difference stream:
    (1/(n0-1)) * sum_l [X_jl - X_il - (Xbar_j - Xbar_i)]^2."""
    xj = np.asarray(obs_j, dtype=float)
    xi = np.asarray(obs_i, dtype=float)
    if xj.shape != xi.shape or xj.ndim != 1:
        raise ValueError("paired observation streams must have equal length")
    n = len(xj)
    if n < 2:
        raise ValueError(f"need at least 2 paired observations, got {n}")
    d = xj - xi
    return float(np.sum((d - d.mean()) ** 2) / (n - 1))


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one procedure run."""

    selected: int
    per_alt_samples: tuple
    total_samples: int
    elimination_log: tuple = field(default_factory=tuple)
    terminated_by: str = DECISION

    def __post_init__(self):
        k = len(self.per_alt_samples)
        if not 0 <= self.selected < k:
            raise ValueError(f"selected index {self.selected} out of range")
        if self.total_samples != sum(self.per_alt_samples):
            raise ValueError("total_samples must equal sum(per_alt_samples)")
        eliminated = [i for _, i in self.elimination_log]
        if len(set(eliminated)) != len(eliminated):
            raise ValueError("elimination_log indices must be distinct")
        if self.selected in eliminated:
            raise ValueError("selected index cannot appear in elimination_log")
        if self.terminated_by not in (DECISION, BUDGET_CAP):
            raise ValueError(f"unknown terminated_by {self.terminated_by!r}")


def make_result(selected, counts, elim_log, terminated_by=DECISION) -> SelectionResult:
    counts = tuple(int(c) for c in counts)
    return SelectionResult(
        selected=int(selected),
        per_alt_samples=counts,
        total_samples=sum(counts),
        elimination_log=tuple((int(s), int(i)) for s, i in elim_log),
        terminated_by=terminated_by,
    )
