"""Master/worker execution engine and the two parallel procedures:
APS (asynchronous screening driven by a phantom alternative) and KT+
(knockout tournament with a Rinott boosting stage).

Scheduling runs on a virtual clock: each job's completion time is its
worker's availability plus a modeled delay (constant or exponential,
drawn from a dedicated per-worker randomness channel), and the master
processes completions one at a time in virtual-time order.  The threads
backend computes observations on real OS threads but follows the same
virtual-time order, so both backends produce bit-identical results for a
given (config, seed) -- only the master ever touches statistics, and
workers never talk to each other.
"""

from __future__ import annotations

import heapq
import math
import queue
import threading
from dataclasses import dataclass

import numpy as np

from . import numerics
from .core import (BUDGET_CAP, DECISION, SelectionResult, Stream,
                   make_result, substream_id)
from .fixed_precision import KnMatch

__all__ = [
    "PHANTOM", "DelayModel", "PoolError",
    "WorkerPool", "SimulatedPool", "ThreadPool", "make_pool", "worker_loop",
    "aps", "aps_sequential_replay", "KtConfig", "kt_plus",
]

PHANTOM = -1
_CLOSE = object()


class PoolError(RuntimeError):
    """A worker failed; carries the message log gathered so far."""

    def __init__(self, message, log):
        super().__init__(message)
        self.messages = log


@dataclass(frozen=True)
class DelayModel:
    """Completion-time model: ``constant:<x>`` or ``exponential:<rate>``.

    Constant delays consume no randomness; exponential delays consume one
    uniform per sampled job from the worker's delay channel.
    """

    kind: str
    value: float

    @classmethod
    def parse(cls, text: str) -> "DelayModel":
        kind, _, arg = text.partition(":")
        kind = kind.strip()
        try:
            value = float(arg)
        except ValueError:
            raise ValueError(f"bad delay parameter in {text!r}") from None
        if kind == "constant":
            if value < 0:
                raise ValueError("constant delay must be >= 0")
        elif kind == "exponential":
            if value <= 0:
                raise ValueError("exponential delay rate must be > 0")
        else:
            raise ValueError(f"unknown delay model {kind!r}")
        return cls(kind, value)

    def draw(self, stream: Stream) -> float:
        if self.kind == "constant":
            return self.value
        return -math.log(stream.next_u01()) / self.value


class WorkerPool:
    """Virtual-time master/worker pool over a stateless sampler.

    ``sampler(alt, index)`` must be a pure function of its arguments (the
    master assigns observation indices at dispatch, so concurrent in-flight
    jobs on one alternative cannot race).  Subclasses decide where the
    sampler actually executes.
    """

    def __init__(self, m: int, delay: DelayModel, seed: int, rep: int,
                 delay_channel_base: int, record_messages: bool = False):
        if m < 1:
            raise ValueError(f"need at least one worker, got {m}")
        self.m = m
        self.delay = delay
        self.messages: list = []
        self.record = record_messages
        self._delay_streams = [
            Stream(seed, substream_id(rep, delay_channel_base + w))
            for w in range(m)
        ]

    # subclass surface -------------------------------------------------------

    def _start(self, sampler):
        pass

    def _compute(self, worker: int, alt: int, index: int) -> float:
        raise NotImplementedError

    def _shutdown(self):
        pass

    # driver -----------------------------------------------------------------

    def run(self, sampler, next_job, on_complete) -> None:
        """Drive the pool: ``next_job(worker) -> (alt, index) | None`` pulls
        dispatch decisions from the master, ``on_complete(alt, index, value,
        worker, time) -> bool`` digests one completion and returns True to
        stop (in-flight work is then abandoned)."""
        self._start(sampler)
        heap: list = []  # (virtual completion time, seq, worker, alt, index)
        avail = [0.0] * self.m
        seq = 0
        try:
            def dispatch(worker):
                nonlocal seq
                job = next_job(worker)
                if job is None:
                    return
                alt, index = job
                if alt == PHANTOM:
                    delay = 0.0
                else:
                    delay = self.delay.draw(self._delay_streams[worker])
                    self._submit(worker, alt, index)
                done_at = avail[worker] + delay
                avail[worker] = done_at
                if self.record:
                    self.messages.append(("dispatch", worker, alt, index, done_at))
                heapq.heappush(heap, (done_at, seq, worker, alt, index))
                seq += 1

            for w in range(self.m):
                dispatch(w)
            while heap:
                done_at, _, worker, alt, index = heapq.heappop(heap)
                if alt == PHANTOM:
                    value = None
                else:
                    value = self._collect(worker, alt, index)
                if self.record:
                    self.messages.append(("complete", worker, alt, index, done_at))
                if on_complete(alt, index, value, worker, done_at):
                    return
                dispatch(worker)
        finally:
            self._shutdown()

    def _submit(self, worker: int, alt: int, index: int) -> None:
        pass

    def _collect(self, worker: int, alt: int, index: int) -> float:
        return self._compute(worker, alt, index)


class SimulatedPool(WorkerPool):
    """Discrete-event backend: observations computed inline by the master's
    process at completion time."""

    def _start(self, sampler):
        self._sampler = sampler

    def _compute(self, worker, alt, index):
        return self._sampler(alt, index)


def worker_loop(jobs: "queue.Queue", completions: "queue.Queue", sampler) -> None:
    """Thread body: pull (alt, index) jobs until channel close, sample, and
    submit (alt, index, value) back; a phantom job completes immediately
    with no observation payload."""
    while True:
        job = jobs.get()
        if job is _CLOSE:
            return
        alt, index = job
        if alt == PHANTOM:
            completions.put((alt, index, None))
            continue
        try:
            completions.put((alt, index, sampler(alt, index)))
        except Exception as exc:  # surfaced to the master as a pool failure
            completions.put((alt, index, exc))
            return


class ThreadPool(WorkerPool):
    """OS-thread backend: one worker thread per worker id, communicating
    through per-worker job/completion queues; the master still consumes
    completions in virtual-time order."""

    def _start(self, sampler):
        self._jobs = [queue.Queue() for _ in range(self.m)]
        self._done = [queue.Queue() for _ in range(self.m)]
        self._threads = [
            threading.Thread(
                target=worker_loop, args=(self._jobs[w], self._done[w], sampler),
                name=f"rsel-worker-{w}", daemon=True)
            for w in range(self.m)
        ]
        for t in self._threads:
            t.start()

    def _submit(self, worker, alt, index):
        self._jobs[worker].put((alt, index))

    def _collect(self, worker, alt, index):
        got_alt, got_index, value = self._done[worker].get()
        if isinstance(value, Exception):
            raise PoolError(f"worker {worker} failed: {value!r}", self.messages)
        assert (got_alt, got_index) == (alt, index)
        return value

    def _shutdown(self):
        for q in self._jobs:
            q.put(_CLOSE)
        for t in self._threads:
            t.join(timeout=5.0)


def make_pool(backend: str, m: int, delay: DelayModel, seed: int, rep: int,
              delay_channel_base: int, record_messages: bool = False) -> WorkerPool:
    if backend == "simulated":
        cls = SimulatedPool
    elif backend == "threads":
        cls = ThreadPool
    else:
        raise ValueError(f"unknown pool backend {backend!r}")
    return cls(m, delay, seed, rep, delay_channel_base, record_messages)


# ---------------------------------------------------------------------------
# APS


def aps_a(k: int, alpha: float) -> float:
    """Screening intercept a = -log(2 alpha / (k - 1))."""
    return -math.log(2.0 * alpha / (k - 1))


def _aps_survivors(order, N, s1, s2, n0, a, delta):
    """All-pairwise screening over the surviving alternatives; equality on
    the boundary survives.  Pairs where either side is still below n0 get
    tau = 0 and cannot eliminate."""
    n = N[order]
    mean = np.where(n > 0, s1[order] / np.maximum(n, 1), 0.0)
    have = n >= n0
    var = np.zeros(len(order))
    idx = np.flatnonzero(have)
    if len(idx):
        nn = n[idx]
        var[idx] = np.maximum(
            (s2[order][idx] - nn * mean[idx] ** 2) / (nn - 1), 1e-300)
    with np.errstate(divide="ignore"):
        contrib = np.where(have, var / np.maximum(n, 1), np.inf)
    tau = 1.0 / (contrib[:, None] + contrib[None, :])  # 0 when either side is inf
    diff = mean[:, None] - mean[None, :]
    bound = np.minimum(0.0, -a / delta + 0.5 * delta * tau)
    ok = tau * diff >= bound
    np.fill_diagonal(ok, True)
    return ok.all(axis=1)


def aps(k: int, alpha: float, delta: float, n0: int, m: int, oracle,
        pool: WorkerPool) -> SelectionResult:
    """Asynchronous parallel screening: survivors are dispatched round-robin
    with one phantom per cycle; every phantom completion triggers
    all-pairwise screening on whatever observation counts have arrived.
    Observations of already-eliminated alternatives are dropped on receipt.
    The PCS guarantee is asymptotic."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if not 0.0 < alpha < 1.0 - 1.0 / k:
        raise ValueError(f"alpha must lie in (0, 1 - 1/k), got {alpha}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if n0 < 2:
        raise ValueError(f"n0 must be >= 2, got {n0}")
    a = aps_a(k, alpha)

    alive = [True] * k
    n_alive = k
    N = np.zeros(k, dtype=np.int64)       # accepted observations
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    dispatched = [0] * k                  # consumed stream indexes per alt
    cycle: list = []
    cycle_pos = 0
    stage = 1
    elim_log: list = []
    winner: list = []

    def next_job(worker):
        nonlocal cycle, cycle_pos
        if winner:
            return None
        while True:
            if cycle_pos >= len(cycle):
                cycle = [i for i in range(k) if alive[i]] + [PHANTOM]
                cycle_pos = 0
            item = cycle[cycle_pos]
            cycle_pos += 1
            if item == PHANTOM:
                return (PHANTOM, stage)
            if alive[item]:
                idx = dispatched[item]
                dispatched[item] += 1
                return (item, idx)

    def on_complete(alt, index, value, worker, t):
        nonlocal n_alive, stage
        if alt != PHANTOM:
            if alive[alt]:
                N[alt] += 1
                s1[alt] += value
                s2[alt] += value * value
            return False  # dropped on receipt when already eliminated
        order = [i for i in range(k) if alive[i]]
        keep = _aps_survivors(np.array(order), N, s1, s2, n0, a, delta)
        for pos, i in enumerate(order):
            if not keep[pos]:
                alive[i] = False
                n_alive -= 1
                elim_log.append((stage, i))
        stage += 1
        if n_alive == 1:
            winner.append(next(i for i in range(k) if alive[i]))
            return True
        return False

    pool.run(oracle.value_at, next_job, on_complete)
    if not winner:
        raise PoolError("pool drained before a selection", pool.messages)
    return make_result(winner[0], dispatched, elim_log)


def aps_sequential_replay(k: int, alpha: float, delta: float, n0: int,
                          oracle) -> SelectionResult:
    """Single-worker reference loop: one observation per survivor per cycle
    in index order, then the phantom screening.  With m = 1 and
    deterministic delays, ``aps`` must match this decision for decision."""
    a = aps_a(k, alpha)
    alive = [True] * k
    N = np.zeros(k, dtype=np.int64)
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    dispatched = [0] * k
    elim_log: list = []
    stage = 1
    while True:
        for i in range(k):
            if alive[i]:
                v = oracle.value_at(i, dispatched[i])
                dispatched[i] += 1
                N[i] += 1
                s1[i] += v
                s2[i] += v * v
        order = [i for i in range(k) if alive[i]]
        keep = _aps_survivors(np.array(order), N, s1, s2, n0, a, delta)
        for pos, i in enumerate(order):
            if not keep[pos]:
                alive[i] = False
                elim_log.append((stage, i))
        stage += 1
        if sum(alive) == 1:
            sel = next(i for i in range(k) if alive[i])
            return make_result(sel, dispatched, elim_log)


# ---------------------------------------------------------------------------
# KT+


@dataclass(frozen=True)
class KtConfig:
    """Knockout-tournament parameters: match size g, worker count m, and
    the Paulson-style lambda that the requirement list carries but no step
    consumes (KN decides matches and has no lambda)."""

    g: int = 2
    m: int = 1
    lam: float | None = None

    def __post_init__(self):
        if self.g < 2:
            raise ValueError(f"match size g must be >= 2, got {self.g}")
        if self.m < 1:
            raise ValueError(f"worker count m must be >= 1, got {self.m}")


def kt_rounds_to_boost(k: int, m: int, g: int) -> int:
    """Boosting stage index r = ceil(log_g(k/m)) + 1, in exact integer
    arithmetic."""
    j = 0
    size = m
    while size < k:
        size *= g
        j += 1
    return j + 1


class _Bracket:
    """Knockout bracket of one worker: rounds of KN matches (ascending
    index, leftovers form a short match), then the Rinott boosting stage
    on the local winner."""

    IN_MATCHES = "matches"
    BOOST_FIRST = "boost_first"
    BOOST_REST = "boost_rest"
    DONE = "done"

    def __init__(self, alts, alpha, delta, n0, g, boost_h):
        self.alpha = alpha
        self.delta = delta
        self.n0 = n0
        self.g = g
        self.boost_h = boost_h
        self.round = 1
        self.survivors = list(alts)
        self.elim_log: list = []
        self.counts: dict = {}
        self.match_trace: list = []  # (round, alpha_r, match members, winner)
        self.finalist = None
        self.boost_values: list = []
        self.boost_total = None
        self.mean = None
        self._queue: list = []
        self._match = None
        self._boost_left = 0
        if len(self.survivors) == 0:
            raise ValueError("bracket needs at least one alternative")
        self.state = self.IN_MATCHES
        self._next_match()

    def _alpha_r(self) -> float:
        return self.alpha / (2.0 ** self.round)

    def _next_match(self):
        while True:
            if len(self.survivors) == 1 and not self._queue:
                self.finalist = self.survivors[0]
                self.state = self.BOOST_FIRST
                self._boost_left = self.n0
                return
            if not self._queue:
                # split the round into groups of g in ascending index order
                s = sorted(self.survivors)
                self._queue = [s[i:i + self.g] for i in range(0, len(s), self.g)]
                self._round_winners: list = []
            group = self._queue.pop(0)
            if len(group) == 1:
                self._round_winners.extend(group)
            else:
                self._match = KnMatch(group, self._alpha_r(), self.delta, self.n0)
                return
            if not self._queue:
                self._end_round()

    def _end_round(self):
        self.survivors = self._round_winners
        self.round += 1
        self._queue = []

    def _finish_match(self):
        match = self._match
        self._match = None
        for alt, c in match.counts.items():
            self.counts[alt] = self.counts.get(alt, 0) + c
        for stage, alt in match.elim_log:
            self.elim_log.append((self.round, alt))
        self.match_trace.append(
            (self.round, self._alpha_r(), tuple(match.alts), match.winner))
        self._round_winners.append(match.winner)
        if not self._queue:
            self._end_round()
        self._next_match()

    # request/feed surface ---------------------------------------------------

    def next_request(self):
        if self.state == self.IN_MATCHES:
            return self._match.next_request()
        if self.state in (self.BOOST_FIRST, self.BOOST_REST):
            return self.finalist if self._boost_left > 0 else None
        return None

    def feed(self, alt, value):
        if self.state == self.IN_MATCHES:
            self._match.feed(alt, value)
            if self._match.done:
                self._finish_match()
            return
        assert alt == self.finalist and self._boost_left > 0
        self.counts[alt] = self.counts.get(alt, 0) + 1
        self.boost_values.append(value)
        self._boost_left -= 1
        if self._boost_left:
            return
        if self.state == self.BOOST_FIRST:
            first = np.array(self.boost_values)
            s2 = float(np.var(first, ddof=1))
            self.boost_total = max(
                self.n0,
                math.ceil((self.boost_h * math.sqrt(s2) / self.delta) ** 2))
            self._boost_left = self.boost_total - self.n0
            self.state = self.BOOST_REST
            if self._boost_left == 0:
                self._finish()
        else:
            self._finish()

    def _finish(self):
        self.mean = float(np.mean(self.boost_values))
        self.state = self.DONE

    @property
    def done(self):
        return self.state == self.DONE


def kt_plus(k: int, alpha: float, delta: float, n0: int, config: KtConfig,
            oracle, pool: WorkerPool,
            trace: list | None = None) -> SelectionResult:
    """Knockout tournament: alternatives are split round-robin over the m
    workers, each worker runs its own bracket of KN matches at per-round
    error alpha/2^r with no cross-worker traffic, and the m local winners
    are boosted to a Rinott sample size before the final mean comparison."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if not 0.0 < alpha < 1.0 - 1.0 / k:
        raise ValueError(f"alpha must lie in (0, 1 - 1/k), got {alpha}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if n0 < 2:
        raise ValueError(f"n0 must be >= 2, got {n0}")
    m = config.m
    if k < m:
        raise ValueError(f"need k >= m, got k={k}, m={m}")

    parts: list = [[] for _ in range(m)]
    for i in range(k):
        parts[i % m].append(i)
    r_boost = kt_rounds_to_boost(k, m, config.g)
    alpha_boost = alpha / (2.0 ** r_boost)
    # the defining screening equation is degenerate for a single finalist:
    # any h works, so take h = 0 (boosting reduces to the first stage)
    boost_h = numerics.rinott_h(m, n0, alpha_boost) if m >= 2 else 0.0

    brackets = [_Bracket(parts[s], alpha, delta, n0, config.g, boost_h)
                for s in range(m)]
    dispatched = [0] * k

    def next_job(worker):
        b = brackets[worker]
        alt = b.next_request()
        if alt is None:
            return None
        idx = dispatched[alt]
        dispatched[alt] += 1
        return (alt, idx)

    def on_complete(alt, index, value, worker, t):
        brackets[worker].feed(alt, value)
        return all(b.done for b in brackets)

    pool.run(oracle.value_at, next_job, on_complete)
    if not all(b.done for b in brackets):
        raise PoolError("pool drained before all brackets finished", pool.messages)

    final_r = r_boost
    elim_log: list = []
    for b in brackets:
        elim_log.extend(b.elim_log)
    means = [b.mean for b in brackets]
    win_pos = int(np.argmax(means))
    selected = brackets[win_pos].finalist
    for pos, b in enumerate(brackets):
        if pos != win_pos:
            elim_log.append((final_r, b.finalist))
    if trace is not None:
        for s, b in enumerate(brackets):
            for rnd, alpha_r, members, won in b.match_trace:
                trace.append(("match", s, rnd, alpha_r, members, won))
            trace.append(("boost", s, final_r, alpha_boost, b.finalist,
                          b.boost_total))
    return make_result(selected, dispatched, elim_log)
