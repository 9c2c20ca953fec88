"""Fixed-budget allocation procedures: OCBA, the expected-value-of-
information procedure for linear loss (EVI), the knowledge-gradient
policy (KG), and the asymptotically optimal static allocation used as
an analytical benchmark.

The staged procedures (OCBA, EVI) keep a bookkeeping allocation that
advances by tau per stage and exit once it reaches the total budget; the
realized sample counts are what lands in the SelectionResult (a final
stage may overshoot by at most tau - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernel
from .core import RunningStat, SelectionResult, make_result

__all__ = [
    "BudgetConfig", "KgPriors",
    "glynn_juneja_allocation", "largest_remainder_round",
    "ocba", "ocba_targets",
    "evi_ll", "evi_eta",
    "kg", "kg_factor",
]

_VAR_FLOOR = 1e-12  # sample-variance floor: the allocation rules divide by sigma-hat


@dataclass
class BudgetConfig:
    """Total budget, per-stage increment, and first-stage size."""

    total: int
    stage: int = 10
    n0: int = 10

    def __post_init__(self):
        if self.stage < 1:
            raise ValueError(f"stage increment must be >= 1, got {self.stage}")
        if self.n0 < 1:
            raise ValueError(f"n0 must be >= 1, got {self.n0}")

    def check_for(self, k: int, min_n0: int, label: str) -> None:
        if self.n0 < min_n0:
            raise ValueError(f"{label} requires n0 >= {min_n0}, got {self.n0}")
        if self.total < k * self.n0:
            raise ValueError(
                f"total budget {self.total} below first stage k*n0 = {k * self.n0}")


def glynn_juneja_allocation(means, variances, total: float) -> np.ndarray:
    """Asymptotically optimal static allocation for a unique best mean.

    Non-best alternatives receive budget proportional to
    sigma^2 / gap^2; the best receives
    sigma_best * sqrt(sum (n_j / sigma_j)^2).  The returned vector is
    real-valued and sums to ``total``.
    """
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    if mu.shape != var.shape or mu.ndim != 1:
        raise ValueError("means and variances must be 1-d and equally long")
    if np.any(var <= 0.0):
        raise ValueError("variances must be > 0")
    best = int(np.argmax(mu))
    gaps = mu[best] - mu
    if np.sum(mu == mu[best]) > 1:
        raise ValueError("tied best means: allocation gaps divide by zero")
    raw = np.zeros_like(mu)
    others = np.arange(len(mu)) != best
    raw[others] = var[others] / gaps[others] ** 2
    raw[best] = math.sqrt(var[best] * float(np.sum(raw[others] ** 2 / var[others])))
    return raw * (total / raw.sum())


def largest_remainder_round(targets, total: int) -> np.ndarray:
    """Round nonnegative real targets to integers of the given sum (floor
    everything, then hand out remaining units by largest fractional part,
    ties to the lowest index)."""
    t = np.asarray(targets, dtype=float)
    if t.min() < -1e-9:
        raise ValueError("targets must be nonnegative")
    t = np.maximum(t, 0.0)
    base = np.floor(t).astype(int)
    left = int(total) - int(base.sum())
    if left < 0:
        raise ValueError("floor already exceeds the requested total")
    if left > len(t):
        # degenerate scaling mismatch; distribute evenly from index 0
        base += left // len(t)
        left %= len(t)
    if left:
        frac = t - np.floor(t)
        order = np.lexsort((np.arange(len(t)), -frac))
        base[order[:left]] += 1
    return base


# ---------------------------------------------------------------------------
# OCBA


def ocba_targets(means, variances, budget: float) -> np.ndarray:
    """Stage allocation targets: proportional to (sigma/gap)^2 for the
    non-best, with the best set by the square-root coupling rule, scaled
    to sum to ``budget``.  A tied sample best (zero gap) takes the whole
    stage (lowest index on multiple ties)."""
    mu = np.asarray(means, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variances, dtype=float), _VAR_FLOOR))
    k = len(mu)
    best = int(np.argmax(mu))
    gaps = mu[best] - mu
    others = np.arange(k) != best
    zero_gap = others & (gaps == 0.0)
    raw = np.zeros(k)
    if np.any(zero_gap):
        raw[int(np.flatnonzero(zero_gap)[0])] = 1.0
    else:
        raw[others] = (sd[others] / gaps[others]) ** 2
        raw[best] = sd[best] * math.sqrt(float(np.sum(raw[others] ** 2 / sd[others] ** 2)))
    return raw * (budget / raw.sum())


def ocba(k: int, config: BudgetConfig, oracle, trace: list | None = None) -> SelectionResult:
    """Sequential OCBA: per stage, recompute the target allocation from
    sample estimates and grant each alternative its positive shortfall."""
    config.check_for(k, 5, "ocba")
    stats = [RunningStat() for _ in range(k)]
    for i in range(k):
        for _ in range(config.n0):
            stats[i].push(oracle.sample(i))
    granted = np.full(k, config.n0, dtype=int)
    book = np.full(k, config.n0, dtype=int)  # bookkeeping allocation n_{i,t}
    b = k * config.n0
    t = 0
    while b < config.total:
        b += config.stage
        means = [s.mean for s in stats]
        variances = [s.variance for s in stats]
        targets = largest_remainder_round(ocba_targets(means, variances, b), b)
        extra = np.maximum(0, targets - book)
        if trace is not None:
            for i in range(k):
                trace.append(("alloc", t, i, int(targets[i]), int(extra[i])))
        for i in range(k):
            for _ in range(int(extra[i])):
                stats[i].push(oracle.sample(i))
        granted += extra
        book = targets
        t += 1
    sel = int(np.argmax([s.mean for s in stats]))
    return make_result(sel, granted, [])


# ---------------------------------------------------------------------------
# EVI (linear loss, budget constraint)


def evi_eta(n_i: float, lam_ik: float, d_ik: float) -> float:
    """Marginal value weight of one more observation on a non-best
    alternative: lambda^(1/2) * (n-1+lambda d^2)/(n-2) * psi_{n-1}(lambda^(1/2) d)."""
    if n_i <= 2:
        raise ValueError(f"evi requires per-alternative counts > 2, got {n_i}")
    root = math.sqrt(lam_ik)
    return root * (n_i - 1.0 + lam_ik * d_ik * d_ik) / (n_i - 2.0) \
        * kernel.t_pdf(root * d_ik, n_i - 1.0)


def evi_stage_allocation(counts, means, variances, tau: int,
                         freeze_events: list | None = None):
    """One EVI stage: candidate allocations and the active set after the
    active-set loop.

    Starting from all alternatives active, candidates are proportional to
    sqrt(sigma^2 * eta) over the stage pool tau + sum of active counts;
    any candidate falling below its current count freezes (allocation
    pinned at the count, alternative dropped from the active set), and the
    pairwise precisions lose the best's variance term once the best itself
    froze.  Each pass removes at least one alternative, so the loop runs
    at most k times.
    """
    counts = np.asarray(counts, dtype=int)
    means = np.asarray(means, dtype=float)
    var = np.maximum(np.asarray(variances, dtype=float), _VAR_FLOOR)
    k = len(counts)
    best = int(np.argmax(means))
    d = means[best] - means
    active = list(range(k))
    candidate = counts.astype(float).copy()
    for _ in range(k + 1):
        eta = np.zeros(k)
        best_active = best in active
        for i in active:
            if i == best:
                continue
            if best_active:
                lam = 1.0 / (var[i] / counts[i] + var[best] / counts[best])
            else:
                lam = 1.0 / (var[i] / counts[i])
            eta[i] = evi_eta(counts[i], lam, d[i])
        if best_active:
            eta[best] = sum(eta[i] for i in active if i != best)
        weights = np.array([math.sqrt(var[i] * eta[i]) if i in active else 0.0
                            for i in range(k)])
        wsum = weights.sum()
        if wsum <= 0.0 or not active:
            # no informative direction left: the stage goes to the best
            candidate = counts.astype(float).copy()
            candidate[best] += tau
            active = [best]
            break
        pool = tau + counts[active].sum()
        candidate = counts.astype(float).copy()
        for i in active:
            candidate[i] = pool * weights[i] / wsum
        negative = [i for i in active if candidate[i] - counts[i] < 0.0]
        if not negative:
            break
        for i in negative:
            active.remove(i)
            candidate[i] = counts[i]
        if freeze_events is not None:
            freeze_events.append(tuple(negative))
    return candidate, active


def evi_ll(k: int, config: BudgetConfig, oracle, trace: list | None = None) -> SelectionResult:
    """EVI procedure for linear loss under a budget: per stage, solve the
    constrained allocation by the active-set loop and sample the rounded
    nonnegative increments."""
    config.check_for(k, 3, "evi")
    stats = [RunningStat() for _ in range(k)]
    for i in range(k):
        for _ in range(config.n0):
            stats[i].push(oracle.sample(i))
    counts = np.full(k, config.n0, dtype=int)
    b = k * config.n0
    t = 0
    tau = config.stage
    while b < config.total:
        b += tau
        means = np.array([s.mean for s in stats])
        var = np.array([s.variance for s in stats])
        best = int(np.argmax(means))
        freezes: list = []
        candidate, active = evi_stage_allocation(counts, means, var, tau, freezes)
        if trace is not None and any(best in ev for ev in freezes):
            trace.append(("evi_best_frozen", t))
        increments = np.zeros(k)
        for i in active:
            increments[i] = candidate[i] - counts[i]
        grants = largest_remainder_round(increments, tau)
        if trace is not None:
            for i in range(k):
                trace.append(("alloc", t, i, float(candidate[i]), int(grants[i])))
        for i in range(k):
            for _ in range(int(grants[i])):
                stats[i].push(oracle.sample(i))
        counts += grants
        t += 1
    sel = int(np.argmax([s.mean for s in stats]))
    return make_result(sel, counts, [])


# ---------------------------------------------------------------------------
# KG


@dataclass
class KgPriors:
    """Independent normal priors per alternative."""

    means: tuple
    variances: tuple

    @classmethod
    def diffuse(cls, k: int, precision: float = 1e-6) -> "KgPriors":
        return cls(means=tuple(0.0 for _ in range(k)),
                   variances=tuple(1.0 / precision for _ in range(k)))


def kg_factor(zeta: float) -> float:
    """zeta * Phi(zeta) + phi(zeta), the expected-improvement factor."""
    return zeta * kernel.normal_cdf(zeta) + kernel.normal_pdf(zeta)


def kg(k: int, total: int, sampling_variance: float,
       priors: KgPriors | None, oracle,
       trace: list | None = None) -> SelectionResult:
    """Knowledge-gradient policy: one observation per step on the
    alternative whose one-step posterior lookahead gains the most; the
    final selection is the largest posterior mean."""
    if total < 1:
        raise ValueError(f"budget must be >= 1, got {total}")
    if not sampling_variance > 0:
        raise ValueError(f"sampling variance must be > 0, got {sampling_variance}")
    if priors is None:
        priors = KgPriors.diffuse(k)
    if len(priors.means) != k or len(priors.variances) != k:
        raise ValueError("priors must cover all k alternatives")
    if any(v < 0 for v in priors.variances):
        raise ValueError("prior variances must be >= 0")
    beta = 1.0 / sampling_variance
    post_mean = [float(m) for m in priors.means]
    # zero prior variance => infinite precision: that alternative is never
    # informative and its posterior never moves
    post_prec = [math.inf if v == 0.0 else 1.0 / float(v) for v in priors.variances]
    counts = [0] * k
    for t in range(total):
        values = []
        for i in range(k):
            bp = post_prec[i]
            s2 = 0.0 if math.isinf(bp) else 1.0 / bp - 1.0 / (bp + beta)
            if s2 <= 0.0:
                values.append(0.0)
                continue
            s = math.sqrt(s2)
            gap = post_mean[i] - max(post_mean[j] for j in range(k) if j != i)
            zeta = -abs(gap / s)
            values.append(s * kg_factor(zeta))
        z = int(np.argmax(values))
        y = oracle.sample(z)
        counts[z] += 1
        if trace is not None:
            trace.append(("kg_step", t, z, values[z]))
        if not math.isinf(post_prec[z]):
            new_prec = post_prec[z] + beta
            post_mean[z] = (post_prec[z] * post_mean[z] + beta * y) / new_prec
            post_prec[z] = new_prec
    sel = int(np.argmax(post_mean))
    return make_result(sel, counts, [])
