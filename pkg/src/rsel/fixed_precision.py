"""Fixed-precision selection procedures: Bechhofer, Rinott, Paulson, KN,
and the IZ-free FHN.

All sequential procedures share the same shape: a first stage estimates
(pairwise) variances, then survivors advance in lockstep, one observation
per round, and a continuation region decides eliminations at round
boundaries.  KN's region is triangular (it closes at a finite round); the
FHN boundary grows to infinity, so FHN carries a budget cap for the exact-
tie case that can never resolve.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import numerics
from .core import (BUDGET_CAP, DECISION, draw_block, make_result,
                   pairwise_variance, SelectionResult)

__all__ = [
    "FixedPrecisionConfig",
    "bechhofer", "bechhofer_n",
    "rinott", "rinott_sample_size",
    "paulson", "paulson_a",
    "kn", "kn_match", "KnMatch",
    "fhn", "fhn_c",
    "DEFAULT_FHN_BUDGET_CAP",
]

DEFAULT_FHN_BUDGET_CAP = 10 ** 6

# pair screenings switch from Python loops to numpy above this size
_VECTOR_THRESHOLD = 16


@dataclass
class FixedPrecisionConfig:
    """Parameters shared by the fixed-precision procedures.

    delta is the indifference-zone parameter (absent for FHN), lam the
    Paulson drift parameter in (0, delta), budget_cap a safety valve on
    total observations.
    """

    alpha: float
    delta: float | None = None
    n0: int = 20
    lam: float | None = None
    budget_cap: int | None = None
    fhn_variance_update: str = "full"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.n0 < 2:
            raise ValueError(f"n0 must be >= 2, got {self.n0}")
        if self.budget_cap is not None and self.budget_cap < 1:
            raise ValueError("budget_cap must be >= 1")
        if self.fhn_variance_update not in ("full", "first_stage"):
            raise ValueError(
                f"fhn_variance_update must be 'full' or 'first_stage', "
                f"got {self.fhn_variance_update!r}")

    def check_alpha_for(self, k: int) -> None:
        if not self.alpha < 1.0 - 1.0 / k:
            raise ValueError(
                f"alpha must be < 1 - 1/k = {1.0 - 1.0 / k:.6g} for k={k}, "
                f"got {self.alpha}")

    def require_delta(self) -> float:
        if self.delta is None:
            raise ValueError("this procedure requires the IZ parameter delta")
        return self.delta

    def require_lambda(self) -> float:
        delta = self.require_delta()
        if self.lam is None:
            return 0.5 * delta
        if not 0.0 < self.lam < delta:
            raise ValueError(
                f"lambda must lie in (0, delta) = (0, {delta}), got {self.lam}")
        return self.lam


# ---------------------------------------------------------------------------
# stage-wise procedures


def bechhofer_n(k: int, sigma2: float, delta: float, alpha: float) -> int:
    """Common single-stage sample size n = ceil(2 h^2 sigma^2 / delta^2),
    clamped to >= 1."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    h = numerics.bechhofer_h(k, alpha)
    n = math.ceil(2.0 * h * h * sigma2 / (delta * delta))
    return max(1, n)


def bechhofer(k: int, sigma2: float, config: FixedPrecisionConfig,
              oracle) -> SelectionResult:
    """Single-stage procedure for known common variance: n observations of
    every alternative, pick the largest sample mean."""
    config.check_alpha_for(k)
    n = bechhofer_n(k, sigma2, config.require_delta(), config.alpha)
    means = np.array([draw_block(oracle, i, n).mean() for i in range(k)])
    return make_result(int(np.argmax(means)), [n] * k, [])


def rinott_sample_size(h: float, s2: float, delta: float, n0: int) -> int:
    """Second-stage total N_i = max(n0, ceil(h^2 S_i^2 / delta^2))."""
    return max(n0, math.ceil(h * h * s2 / (delta * delta)))


def rinott(k: int, config: FixedPrecisionConfig, oracle) -> SelectionResult:
    """Two-stage procedure for unknown, unequal variances."""
    config.check_alpha_for(k)
    delta = config.require_delta()
    n0 = config.n0
    h = numerics.rinott_h(k, n0, config.alpha)
    counts = []
    means = []
    for i in range(k):
        first = draw_block(oracle, i, n0)
        s2 = float(np.var(first, ddof=1))
        n_i = rinott_sample_size(h, s2, delta, n0)
        total = first.sum()
        if n_i > n0:
            total += draw_block(oracle, i, n_i - n0).sum()
        counts.append(n_i)
        means.append(total / n_i)
    return make_result(int(np.argmax(means)), counts, [])


# ---------------------------------------------------------------------------
# Paulson


def paulson_a(k: int, alpha: float, sigma2: float, delta: float,
              lam: float) -> float:
    """Elimination intercept a = ln((k-1)/alpha) * sigma^2 / (delta - lambda)."""
    return math.log((k - 1) / alpha) * sigma2 / (delta - lam)


def paulson(k: int, sigma2: float, config: FixedPrecisionConfig,
            oracle) -> SelectionResult:
    """Sequential elimination for known common variance: alternative j is
    dropped once its partial-sum deficit n(Xbar_j - Xbar_i) falls to
    -a + lambda*n against any survivor i."""
    config.check_alpha_for(k)
    delta = config.require_delta()
    lam = config.require_lambda()
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    a = paulson_a(k, config.alpha, sigma2, delta, lam)
    cap = config.budget_cap

    survivors = list(range(k))
    sums = [0.0] * k
    counts = [0] * k
    elim_log = []
    n = 0
    while len(survivors) > 1:
        if cap is not None and sum(counts) + len(survivors) > cap:
            best = max(survivors, key=lambda j: (sums[j], -j))
            return make_result(best, counts, elim_log, BUDGET_CAP)
        for j in survivors:
            sums[j] += oracle.sample(j)
            counts[j] += 1
        n += 1
        bound = -a + lam * n
        # j is screened against the best of the *other* survivors
        top = max(sums[j] for j in survivors)
        n_top = sum(1 for j in survivors if sums[j] == top)
        second = max((sums[j] for j in survivors if sums[j] < top), default=top)
        keep = []
        for j in survivors:
            opp = top if (sums[j] < top or n_top > 1) else second
            if not (sums[j] - opp <= bound):
                keep.append(j)
        if not keep:
            # simultaneous boundary hit (ties at a closed region): keep the
            # lowest-index leader
            keep = [min(j for j in survivors if sums[j] == top)]
        kept = set(keep)
        for j in survivors:
            if j not in kept:
                elim_log.append((n, j))
        survivors = keep
    return make_result(survivors[0], counts, elim_log)


# ---------------------------------------------------------------------------
# KN


class KnMatch:
    """State machine for one KN run over a set of alternatives.

    Drives either a direct oracle loop (``kn``/``kn_match``) or the
    master/worker pool (KT+ brackets): callers pull observation requests
    from ``pending`` and push values back via ``feed``.
    """

    def __init__(self, alts, alpha: float, delta: float, n0: int,
                 budget_cap: int | None = None):
        self.alts = list(alts)
        if len(self.alts) != len(set(self.alts)):
            raise ValueError("duplicate alternatives in match")
        if n0 < 2:
            raise ValueError(f"n0 must be >= 2, got {n0}")
        if not delta > 0:
            raise ValueError(f"delta must be > 0, got {delta}")
        self.delta = float(delta)
        self.n0 = int(n0)
        self.cap = budget_cap
        self.pending: deque = deque()
        self.elim_log: list = []
        s = len(self.alts)
        self.counts = dict.fromkeys(self.alts, 0)
        self.terminated_by = DECISION
        if s == 1:
            # a singleton match needs no sampling at all
            self.winner = self.alts[0]
            self.done = True
            self._survivors: list = [0]
            return
        self.h2 = numerics.kn_h2(s, n0, alpha)
        self.winner = None
        self.done = False
        self._survivors = list(range(s))  # local indexes into self.alts
        self._first = [[] for _ in range(s)]
        self._sums = np.zeros(s)
        self._n = 0
        self._s2 = None
        self._in_first_stage = True
        for local in range(s):
            self.pending.extend([local] * n0)
        self._round_left = s * n0

    # -- plumbing ----------------------------------------------------------

    def next_request(self):
        """Global index of the next needed observation, or None."""
        if not self.pending:
            return None
        return self.alts[self.pending[0]]

    def feed(self, alt: int, value: float) -> None:
        local = self.pending.popleft()
        assert self.alts[local] == alt, "observation fed out of order"
        self.counts[alt] += 1
        if self._in_first_stage:
            self._first[local].append(value)
        self._sums[local] += value
        self._round_left -= 1
        if self._round_left == 0:
            self._advance()

    def _total(self) -> int:
        return sum(self.counts.values())

    # -- algorithm ---------------------------------------------------------

    def _advance(self) -> None:
        if self._in_first_stage:
            self._in_first_stage = False
            self._n = self.n0
            self._init_pair_variances()
        else:
            self._n += 1
        self._screen()
        if self.done:
            return
        if self.cap is not None and self._total() + len(self._survivors) > self.cap:
            self._finish_by_cap()
            return
        for local in self._survivors:
            self.pending.append(local)
        self._round_left = len(self._survivors)

    def _init_pair_variances(self):
        s = len(self.alts)
        if s > _VECTOR_THRESHOLD:
            x = np.array(self._first)
            xc = x - x.mean(axis=1, keepdims=True)
            cov = xc @ xc.T / (self.n0 - 1)
            v = np.diag(cov)
            self._s2 = v[:, None] + v[None, :] - 2.0 * cov
        else:
            self._s2 = np.zeros((s, s))
            for a in range(s):
                for b in range(a + 1, s):
                    v = pairwise_variance(self._first[a], self._first[b])
                    self._s2[a, b] = self._s2[b, a] = v
        self._first = None

    def _screen(self) -> None:
        surv = self._survivors
        n = self._n
        delta = self.delta
        delta2 = delta * delta
        means = self._sums[surv] / n
        if len(surv) > _VECTOR_THRESHOLD:
            s2 = self._s2[np.ix_(surv, surv)]
            w = np.maximum(0.0, (delta / (2.0 * n)) * (self.h2 * s2 / delta2 - n))
            diff = means[:, None] - means[None, :]
            ok = diff >= -w
            np.fill_diagonal(ok, True)
            keep_mask = ok.all(axis=1)
            keep = [surv[j] for j in range(len(surv)) if keep_mask[j]]
        else:
            pref = delta / (2.0 * n)
            keep = []
            for j_pos, j in enumerate(surv):
                ok = True
                for i_pos, i in enumerate(surv):
                    if i == j:
                        continue
                    w = pref * (self.h2 * self._s2[j, i] / delta2 - n)
                    if w < 0.0:
                        w = 0.0
                    if not means[j_pos] - means[i_pos] >= -w:
                        ok = False
                        break
                if ok:
                    keep.append(j)
        kept = set(keep)
        for j in surv:
            if j not in kept:
                self.elim_log.append((n, self.alts[j]))
        self._survivors = keep
        if len(keep) == 1:
            self.winner = self.alts[keep[0]]
            self.done = True

    def _finish_by_cap(self) -> None:
        surv = self._survivors
        means = self._sums[surv] / self._n
        self.winner = self.alts[surv[int(np.argmax(means))]]
        self.terminated_by = BUDGET_CAP
        self.done = True

    # -- direct-oracle driver ----------------------------------------------

    def run(self, oracle) -> int:
        while not self.done:
            # consecutive requests for one alternative go out as a batch
            local = self.pending[0]
            run_len = 1
            while run_len < len(self.pending) and self.pending[run_len] == local:
                run_len += 1
            alt = self.alts[local]
            for v in draw_block(oracle, alt, run_len):
                self.feed(alt, float(v))
        return self.winner


def kn_match(alts, alpha: float, delta: float, n0: int, oracle,
             budget_cap: int | None = None) -> int:
    """Winner of one self-contained KN run over the subset ``alts``
    (a singleton subset returns its element with zero sampling)."""
    return KnMatch(alts, alpha, delta, n0, budget_cap).run(oracle)


def kn(k: int, config: FixedPrecisionConfig, oracle) -> SelectionResult:
    """Fully sequential KN procedure over all k alternatives."""
    config.check_alpha_for(k)
    match = KnMatch(range(k), config.alpha, config.require_delta(),
                    config.n0, config.budget_cap)
    match.run(oracle)
    counts = [match.counts[i] for i in range(k)]
    return make_result(match.winner, counts, match.elim_log, match.terminated_by)


# ---------------------------------------------------------------------------
# FHN (IZ-free)


def fhn_c(k: int, alpha: float) -> float:
    """Boundary constant c = -2 log(2 alpha / (k-1))."""
    return -2.0 * math.log(2.0 * alpha / (k - 1))


def _fhn_boundary(t: float, c: float) -> float:
    return math.sqrt((c + math.log(t + 1.0)) * (t + 1.0))


class _PairStat:
    """Welford accumulator over one pairwise difference stream."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, d: float) -> None:
        self.n += 1
        delta = d - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (d - self.mean)

    @property
    def s2(self) -> float:
        return self.m2 / (self.n - 1)


def fhn(k: int, config: FixedPrecisionConfig, oracle) -> SelectionResult:
    """IZ-free sequential elimination with a boundary growing like
    sqrt((c + log t)(t + 1)); exact ties never resolve, hence the default
    budget cap."""
    config.check_alpha_for(k)
    c = fhn_c(k, config.alpha)
    n0 = config.n0
    cap = config.budget_cap if config.budget_cap is not None else DEFAULT_FHN_BUDGET_CAP
    full_update = config.fhn_variance_update == "full"

    survivors = list(range(k))
    counts = [0] * k
    sums = [0.0] * k
    elim_log = []
    pair: dict = {}

    first = [draw_block(oracle, i, n0) for i in range(k)]
    for i in range(k):
        counts[i] = n0
        sums[i] = float(first[i].sum())
    for a in range(k):
        for b in range(a + 1, k):
            st = _PairStat()
            for d in first[a] - first[b]:
                st.push(float(d))
            pair[(a, b)] = st
    n = n0

    frozen_s2 = {} if full_update else {key: st.s2 for key, st in pair.items()}

    def pair_s2(a, b):
        key = (a, b) if a < b else (b, a)
        if full_update:
            return pair[key].s2
        return frozen_s2[key]

    while len(survivors) > 1:
        keep = []
        means = {j: sums[j] / n for j in survivors}
        for j in survivors:
            ok = True
            for i in survivors:
                if i == j:
                    continue
                s2 = pair_s2(j, i)
                if s2 <= 0.0:
                    continue  # indistinguishable pair: no elimination signal
                t = n / s2
                if not t * (means[j] - means[i]) >= -_fhn_boundary(t, c):
                    ok = False
                    break
            if ok:
                keep.append(j)
        kept = set(keep)
        for j in survivors:
            if j not in kept:
                elim_log.append((n, j))
        survivors = keep
        if len(survivors) == 1:
            break
        if sum(counts) + len(survivors) > cap:
            best = max(survivors, key=lambda j: (sums[j] / n, -j))
            return make_result(best, counts, elim_log, BUDGET_CAP)
        vals = {j: oracle.sample(j) for j in survivors}
        for j in survivors:
            sums[j] += vals[j]
            counts[j] += 1
        if full_update:
            for a_pos, a in enumerate(survivors):
                for b in survivors[a_pos + 1:]:
                    key = (a, b) if a < b else (b, a)
                    pair[key].push(vals[key[0]] - vals[key[1]])
        n += 1
    return make_result(survivors[0], counts, elim_log)
