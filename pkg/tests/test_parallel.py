"""Master/worker pools, APS, and KT+."""

import math
import queue

import numpy as np
import pytest

from rsel import parallel as par
from rsel.core import GaussianOracle, ProblemInstance
from rsel.parallel import PHANTOM, DelayModel, KtConfig


def slippage(k, delta, sigma2=1.0):
    return ProblemInstance(means=[0.0] * (k - 1) + [delta], variances=sigma2)


def new_pool(backend, m, delay, seed, rep, k, record=False):
    return par.make_pool(backend, m, DelayModel.parse(delay), seed, rep,
                         delay_channel_base=k, record_messages=record)


# ---------------------------------------------------------------------------
# delay models


def test_delay_model_parsing():
    assert DelayModel.parse("constant:0.5") == DelayModel("constant", 0.5)
    assert DelayModel.parse("exponential:2").kind == "exponential"
    for bad in ("poisson:1", "constant:-1", "exponential:0", "constant:x"):
        with pytest.raises(ValueError):
            DelayModel.parse(bad)


def test_exponential_delays_reproducible():
    from rsel.core import Stream
    d = DelayModel.parse("exponential:1.0")
    a = [d.draw(Stream(4, 9)) for _ in range(1)]
    b = [d.draw(Stream(4, 9)) for _ in range(1)]
    assert a == b
    s = Stream(4, 9)
    seq = [d.draw(s) for _ in range(100)]
    assert all(x > 0 for x in seq)
    assert abs(np.mean(seq) - 1.0) < 0.5


# ---------------------------------------------------------------------------
# pool mechanics


def _drive(pool, jobs, values):
    """Feed a fixed job list through a pool; returns completion order."""
    order = []
    it = iter(jobs)

    def next_job(worker):
        return next(it, None)

    def on_complete(alt, index, value, worker, t):
        order.append((alt, index, value, worker, round(t, 9)))
        return False

    pool.run(values, next_job, on_complete)
    return order


def test_constant_zero_delay_is_fifo():
    jobs = [(i % 3, i // 3) for i in range(12)]
    pool = new_pool("simulated", 2, "constant:0", 1, 0, 3)
    order = _drive(pool, list(jobs), lambda a, i: 100.0 * a + i)
    assert [(a, i) for a, i, *_ in order] == jobs


def test_thread_pool_matches_simulated():
    jobs = [(i % 4, i // 4) for i in range(40)]
    sampler = lambda a, i: math.sin(a + 1) * (i + 1)
    sim = _drive(new_pool("simulated", 3, "exponential:1.0", 7, 0, 4),
                 list(jobs), sampler)
    thr = _drive(new_pool("threads", 3, "exponential:1.0", 7, 0, 4),
                 list(jobs), sampler)
    assert sim == thr


def test_exponential_delays_permute_completions():
    jobs = [(i, 0) for i in range(8)]
    pool = new_pool("simulated", 4, "exponential:1.0", 3, 0, 8)
    order = _drive(pool, list(jobs), lambda a, i: 0.0)
    assert sorted(a for a, *_ in order) == list(range(8))
    assert [a for a, *_ in order] != list(range(8))  # reordering happened


def test_message_log_records_dispatch_and_completion():
    pool = new_pool("simulated", 2, "constant:1", 1, 0, 2, record=True)
    _drive(pool, [(0, 0), (1, 0), (0, 1)], lambda a, i: 1.0)
    kinds = [m[0] for m in pool.messages]
    assert kinds.count("dispatch") == 3
    assert kinds.count("complete") == 3


def test_worker_loop_contract():
    # phantom: immediate completion with no observation payload
    jobs, done = queue.Queue(), queue.Queue()
    jobs.put((PHANTOM, 0))
    jobs.put((3, 17))
    jobs.put(par._CLOSE)
    par.worker_loop(jobs, done, lambda a, i: a * 1000.0 + i)
    assert done.get() == (PHANTOM, 0, None)
    assert done.get() == (3, 17, 3017.0)
    assert done.empty()


def test_thread_pool_failure_aborts_with_log():
    def bad_sampler(a, i):
        if i >= 3:
            raise RuntimeError("sampler broke")
        return 0.0

    pool = new_pool("threads", 2, "constant:0", 1, 0, 2, record=True)
    with pytest.raises(par.PoolError) as err:
        _drive(pool, [(0, i) for i in range(10)], bad_sampler)
    assert err.value.messages is pool.messages


# ---------------------------------------------------------------------------
# APS


def test_aps_a_constant():
    assert par.aps_a(10, 0.05) == pytest.approx(4.4998, abs=1e-4)


def test_aps_zero_tau_pairs_cannot_eliminate():
    # both sides below n0: tau = 0, survivor condition holds automatically
    order = np.array([0, 1])
    N = np.array([1, 1]); s1 = np.array([0.0, 10.0]); s2 = np.array([0.0, 100.0])
    keep = par._aps_survivors(order, N, s1, s2, n0=5, a=4.5, delta=0.5)
    assert keep.all()


def test_aps_screening_boundary_equality_survives():
    # engineered so tau*diff == bound exactly
    order = np.array([0, 1])
    n0, a, delta = 2, 4.0, 1.0
    N = np.array([4, 4])
    # variances 1 on both sides: tau = 1/(1/4+1/4) = 2; bound = min(0,-4+1) = -3
    # want diff = -1.5 so tau*diff = -3 == bound
    m0, m1 = 0.0, 1.5
    s1 = np.array([m0 * 4, m1 * 4])
    s2 = np.array([3.0 + 4 * m0 ** 2, 3.0 + 4 * m1 ** 2])  # ssd 3 -> var 1
    keep = par._aps_survivors(order, N, s1, s2, n0, a, delta)
    assert keep.tolist() == [True, True]


def test_aps_sequential_equivalence_m1():
    inst = slippage(12, 0.5)
    for rep in range(10):
        oracle = GaussianOracle(inst, seed=31, rep=rep)
        pool = new_pool("simulated", 1, "constant:1", 31, rep, 12)
        got = par.aps(12, 0.05, 0.5, 8, 1, oracle, pool)
        want = par.aps_sequential_replay(12, 0.05, 0.5, 8,
                                         GaussianOracle(inst, seed=31, rep=rep))
        assert got == want


def test_aps_backends_bit_identical():
    inst = slippage(10, 0.5)
    results = []
    for backend in ("simulated", "threads"):
        oracle = GaussianOracle(inst, seed=32, rep=0)
        pool = new_pool(backend, 4, "exponential:1.0", 32, 0, 10)
        results.append(par.aps(10, 0.05, 0.5, 10, 4, oracle, pool))
    assert results[0] == results[1]


def test_aps_eliminations_only_at_phantom_completions():
    inst = slippage(8, 0.6)
    oracle = GaussianOracle(inst, seed=33, rep=0)
    pool = new_pool("simulated", 3, "exponential:1.0", 33, 0, 8, record=True)
    r = par.aps(8, 0.05, 0.6, 8, 3, oracle, pool)
    stages = [s for s, _ in r.elimination_log]
    assert stages == sorted(stages)
    phantom_count = sum(1 for m in pool.messages
                        if m[0] == "complete" and m[2] == PHANTOM)
    assert max(stages) <= phantom_count


def test_aps_drops_after_elimination_do_not_change_stats():
    # the winner must be reproducible regardless of in-flight drops: compare
    # m=2 constant-delay run against itself
    inst = slippage(6, 0.5)
    runs = []
    for _ in range(2):
        oracle = GaussianOracle(inst, seed=34, rep=0)
        pool = new_pool("simulated", 2, "constant:1", 34, 0, 6)
        runs.append(par.aps(6, 0.05, 0.5, 6, 2, oracle, pool))
    assert runs[0] == runs[1]


def test_aps_argument_validation():
    inst = slippage(3, 0.5)
    oracle = GaussianOracle(inst, 1, 0)
    pool = new_pool("simulated", 1, "constant:1", 1, 0, 3)
    with pytest.raises(ValueError):
        par.aps(3, 0.7, 0.5, 5, 1, oracle, pool)
    with pytest.raises(ValueError):
        par.aps(3, 0.05, -0.5, 5, 1, oracle, pool)
    with pytest.raises(ValueError):
        par.aps(3, 0.05, 0.5, 1, 1, oracle, pool)


# ---------------------------------------------------------------------------
# KT+


def test_kt_error_schedule():
    # alpha = 0.05: alpha_r halves per round
    assert [0.05 / 2 ** r for r in (1, 2, 3)] == [0.025, 0.0125, 0.00625]


def test_kt_rounds_to_boost_cases():
    assert par.kt_rounds_to_boost(8, 1, 2) == 4   # 3 knockout rounds, boost r=4
    assert par.kt_rounds_to_boost(10, 4, 2) == 3
    assert par.kt_rounds_to_boost(4, 4, 2) == 1   # k = m: no matches at all
    assert par.kt_rounds_to_boost(1024, 4, 2) == 9


def test_kt_k8_m1_g2_runs_three_rounds():
    inst = slippage(8, 0.5)
    oracle = GaussianOracle(inst, seed=41, rep=0)
    pool = new_pool("simulated", 1, "constant:1", 41, 0, 8)
    trace = []
    r = par.kt_plus(8, 0.05, 0.5, 15, KtConfig(g=2, m=1), oracle, pool, trace)
    rounds = sorted({row[2] for row in trace if row[0] == "match"})
    assert rounds == [1, 2, 3]
    boost_rows = [row for row in trace if row[0] == "boost"]
    assert len(boost_rows) == 1
    assert boost_rows[0][2] == 4
    assert boost_rows[0][3] == pytest.approx(0.05 / 16)
    # per-round error schedule carried into the matches
    for row in trace:
        if row[0] == "match":
            assert row[3] == pytest.approx(0.05 / 2 ** row[2])


def test_kt_k_equals_m_skips_matches():
    inst = slippage(5, 0.5)
    oracle = GaussianOracle(inst, seed=42, rep=0)
    pool = new_pool("simulated", 5, "constant:1", 42, 0, 5)
    trace = []
    r = par.kt_plus(5, 0.05, 0.5, 10, KtConfig(g=2, m=5), oracle, pool, trace)
    assert sum(1 for row in trace if row[0] == "match") == 0
    assert sum(1 for row in trace if row[0] == "boost") == 5
    assert all(c >= 10 for c in r.per_alt_samples)


def test_kt_workers_touch_only_their_partition():
    # no cross-worker communication before the finalist stage: every job the
    # pool carries for worker s concerns an alternative assigned to s
    k, m = 13, 4
    inst = slippage(k, 0.5)
    oracle = GaussianOracle(inst, seed=43, rep=0)
    pool = new_pool("simulated", m, "exponential:1.0", 43, 0, k, record=True)
    par.kt_plus(k, 0.05, 0.5, 10, KtConfig(g=2, m=m), oracle, pool)
    parts = [[] for _ in range(m)]
    for i in range(k):
        parts[i % m].append(i)
    for kind, worker, alt, index, t in pool.messages:
        assert alt in parts[worker]
    # and the only message endpoints are master<->worker (the log has no
    # worker-to-worker channel at all)
    assert {m[0] for m in pool.messages} <= {"dispatch", "complete"}


def test_kt_match_winners_come_from_kn(monkeypatch):
    # every match winner in the trace is the output of the KN match run
    calls = []
    import rsel.parallel as parmod
    orig = parmod.KnMatch

    class SpyMatch(orig):
        def __init__(self, alts, alpha, delta, n0, budget_cap=None):
            calls.append((tuple(alts), alpha))
            super().__init__(alts, alpha, delta, n0, budget_cap)

    monkeypatch.setattr(parmod, "KnMatch", SpyMatch)
    inst = slippage(9, 0.5)
    oracle = GaussianOracle(inst, seed=44, rep=0)
    pool = new_pool("simulated", 2, "constant:1", 44, 0, 9)
    trace = []
    par.kt_plus(9, 0.05, 0.5, 10, KtConfig(g=2, m=2), oracle, pool, trace)
    match_rows = [row for row in trace if row[0] == "match"]
    assert len(calls) == len(match_rows)
    # creation interleaves across workers; compare as multisets
    created = sorted((tuple(sorted(alts)), round(alpha, 12)) for alts, alpha in calls)
    traced = sorted((tuple(sorted(row[4])), round(row[3], 12)) for row in match_rows)
    assert created == traced


def test_kt_backends_bit_identical():
    inst = slippage(12, 0.5)
    results = []
    for backend in ("simulated", "threads"):
        oracle = GaussianOracle(inst, seed=45, rep=0)
        pool = new_pool(backend, 3, "exponential:2.0", 45, 0, 12)
        results.append(par.kt_plus(12, 0.05, 0.5, 10, KtConfig(g=2, m=3),
                                   oracle, pool))
    assert results[0] == results[1]


def test_kt_leftover_group_forms_short_match():
    # k=5, m=1, g=2: round 1 has groups {0,1}, {2,3}, {4} (a bye)
    inst = slippage(5, 0.5)
    oracle = GaussianOracle(inst, seed=46, rep=0)
    pool = new_pool("simulated", 1, "constant:1", 46, 0, 5)
    trace = []
    par.kt_plus(5, 0.05, 0.5, 10, KtConfig(g=2, m=1), oracle, pool, trace)
    round1 = [row for row in trace if row[0] == "match" and row[2] == 1]
    assert [set(row[4]) for row in round1] == [{0, 1}, {2, 3}]


def test_kt_validation():
    inst = slippage(3, 0.5)
    oracle = GaussianOracle(inst, 1, 0)
    pool = new_pool("simulated", 4, "constant:1", 1, 0, 3)
    with pytest.raises(ValueError):
        par.kt_plus(3, 0.05, 0.5, 10, KtConfig(g=2, m=4), oracle, pool)
    with pytest.raises(ValueError):
        KtConfig(g=1, m=1)
