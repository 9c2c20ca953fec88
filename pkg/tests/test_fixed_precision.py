"""Fixed-precision procedures: formula cases, elimination mechanics, and
the structural invariants (monotone survivor sets, antisymmetry,
determinism)."""

import math

import numpy as np
import pytest

from rsel import fixed_precision as fp
from rsel import numerics
from rsel.core import (BUDGET_CAP, DECISION, GaussianOracle, ProblemInstance,
                       SequenceOracle)

CFG = fp.FixedPrecisionConfig


def slippage(k, delta, sigma2=1.0):
    return ProblemInstance(means=[0.0] * (k - 1) + [delta], variances=sigma2)


# ---------------------------------------------------------------------------
# config validation


def test_config_validation():
    with pytest.raises(ValueError):
        CFG(alpha=0.0)
    with pytest.raises(ValueError):
        CFG(alpha=0.05, delta=-1.0)
    with pytest.raises(ValueError):
        CFG(alpha=0.05, n0=1)
    with pytest.raises(ValueError):
        CFG(alpha=0.05, fhn_variance_update="sometimes")
    with pytest.raises(ValueError):
        CFG(alpha=0.6).check_alpha_for(2)
    with pytest.raises(ValueError):
        CFG(alpha=0.05).require_delta()
    with pytest.raises(ValueError):
        CFG(alpha=0.05, delta=1.0, lam=1.5).require_lambda()


# ---------------------------------------------------------------------------
# Bechhofer


def test_bechhofer_sample_size_example():
    # k=2, sigma2=1, delta=0.5, alpha=0.05: n = ceil(2 * 1.6449^2 / 0.25) = 22
    assert fp.bechhofer_n(2, 1.0, 0.5, 0.05) == 22


def test_bechhofer_n_clamped_to_one():
    # alpha -> 0.5 at k=2 gives h ~ 0, ceil(0) clamps to 1
    assert fp.bechhofer_n(2, 1.0, 0.5, 0.499999) == 1


def test_bechhofer_scale_equivariance():
    # multiplying sigma^2 by c^2 and delta by c leaves n unchanged
    for c in (0.5, 2.0, 7.0):
        assert fp.bechhofer_n(5, 1.0 * c * c, 0.4 * c, 0.05) == \
            fp.bechhofer_n(5, 1.0, 0.4, 0.05)


def test_bechhofer_runs_exact_budget():
    inst = slippage(4, 0.5)
    r = fp.bechhofer(4, 1.0, CFG(alpha=0.05, delta=0.5),
                     GaussianOracle(inst, seed=1, rep=0))
    n = fp.bechhofer_n(4, 1.0, 0.5, 0.05)
    assert r.per_alt_samples == (n,) * 4
    assert r.total_samples == 4 * n
    assert r.terminated_by == DECISION


def test_bechhofer_rejects_bad_delta():
    with pytest.raises(ValueError):
        fp.bechhofer_n(2, 1.0, 0.0, 0.05)


# ---------------------------------------------------------------------------
# Rinott


def test_rinott_sample_size_formula():
    # h=3, S^2=4, delta=1, n0=20: N = max(20, ceil(36)) = 36
    assert fp.rinott_sample_size(3.0, 4.0, 1.0, 20) == 36
    assert fp.rinott_sample_size(3.0, 0.1, 1.0, 20) == 20


def test_rinott_sample_size_monotone_in_s2():
    sizes = [fp.rinott_sample_size(3.0, s2, 0.5, 10) for s2 in (0.5, 1.0, 2.0, 4.0)]
    assert sizes == sorted(sizes)
    assert all(n >= 10 for n in sizes)


def test_rinott_degenerate_oracle_stays_at_first_stage():
    # zero sample variance: N_i = n0, selection by first-stage means
    oracle = SequenceOracle([[1.0], [3.0], [2.0]])
    r = fp.rinott(3, CFG(alpha=0.05, delta=0.5, n0=5), oracle)
    assert r.per_alt_samples == (5, 5, 5)
    assert r.selected == 1


def test_rinott_counts_at_least_n0():
    inst = slippage(5, 0.5)
    r = fp.rinott(5, CFG(alpha=0.05, delta=0.5, n0=15),
                  GaussianOracle(inst, seed=2, rep=0))
    assert all(c >= 15 for c in r.per_alt_samples)


# ---------------------------------------------------------------------------
# Paulson


def test_paulson_a_formula():
    # k=10, alpha=0.05, sigma2=1, delta=1, lambda=0.5: ln(180)/0.5
    assert fp.paulson_a(10, 0.05, 1.0, 1.0, 0.5) == pytest.approx(10.386, abs=1e-3)


def test_paulson_constant_oracle_boundary_crossing():
    # constants 0 and 1: the inferior falls out at the first n with
    # -n <= -a + lambda*n, i.e. n = ceil(a / (1 + lambda))
    alpha, delta, lam = 0.05, 1.0, 0.5
    a = fp.paulson_a(2, alpha, 1.0, delta, lam)
    want_n = math.ceil(a / (1.0 + lam))
    r = fp.paulson(2, 1.0, CFG(alpha=alpha, delta=delta, lam=lam),
                   SequenceOracle([[0.0], [1.0]]))
    assert r.selected == 1
    assert r.elimination_log == ((want_n, 0),)
    assert r.per_alt_samples == (want_n, want_n)


def test_paulson_lambda_validation():
    with pytest.raises(ValueError):
        fp.paulson(2, 1.0, CFG(alpha=0.05, delta=0.5, lam=0.5),
                   SequenceOracle([[0.0], [1.0]]))


def test_paulson_default_lambda_is_half_delta():
    cfg = CFG(alpha=0.05, delta=0.8)
    assert cfg.require_lambda() == pytest.approx(0.4)


# ---------------------------------------------------------------------------
# KN


def test_kn_h2_matches_eta():
    assert numerics.kn_h2(10, 20, 0.05) == pytest.approx(
        2.0 * numerics.kn_eta(10, 20, 0.05) * 19)


def test_kn_match_singleton_zero_samples():
    oracle = SequenceOracle([[0.0], [1.0]])
    assert fp.kn_match([1], 0.05, 0.5, 20, oracle) == 1
    assert oracle._cursors == [0, 0]


def test_kn_zero_pair_variance_reduces_to_mean_comparison():
    # constant streams: S^2_ji = 0, so W = 0 and the smaller mean is out at n0
    r = fp.kn(2, CFG(alpha=0.05, delta=0.5, n0=4), SequenceOracle([[0.0], [1.0]]))
    assert r.selected == 1
    assert r.elimination_log == ((4, 0),)
    assert r.per_alt_samples == (4, 4)


def test_kn_survivor_set_monotone_and_log_consistent():
    inst = slippage(8, 0.4)
    r = fp.kn(8, CFG(alpha=0.05, delta=0.4, n0=12),
              GaussianOracle(inst, seed=3, rep=0))
    stages = [s for s, _ in r.elimination_log]
    assert stages == sorted(stages)
    assert len(r.elimination_log) == 7
    assert r.selected not in {i for _, i in r.elimination_log}


def test_kn_budget_cap_path():
    inst = ProblemInstance(means=[0.0, 0.0], variances=1.0)
    r = fp.kn(2, CFG(alpha=0.05, delta=1e-9, n0=10, budget_cap=500),
              GaussianOracle(inst, seed=4, rep=0))
    assert r.terminated_by == BUDGET_CAP
    assert r.total_samples <= 500


def test_kn_scalar_and_vector_screenings_agree():
    inst = slippage(6, 0.5)
    cfg = CFG(alpha=0.05, delta=0.5, n0=10)
    base = fp.kn(6, cfg, GaussianOracle(inst, seed=5, rep=0))
    old = fp._VECTOR_THRESHOLD
    try:
        fp._VECTOR_THRESHOLD = 1  # force the numpy path
        vec = fp.kn(6, cfg, GaussianOracle(inst, seed=5, rep=0))
    finally:
        fp._VECTOR_THRESHOLD = old
    assert base == vec


def test_kn_match_subset_and_winner():
    inst = ProblemInstance(means=[0.0, 1.0, 5.0], variances=1.0)
    oracle = GaussianOracle(inst, seed=6, rep=0)
    assert fp.kn_match([0, 1], 0.05, 0.5, 15, oracle) == 1


# ---------------------------------------------------------------------------
# FHN


def test_fhn_constants():
    # c = -2 ln(2*0.05/9) = 8.9996, boundary at t=0 is sqrt(c) ~ 3.0
    c = fp.fhn_c(10, 0.05)
    assert c == pytest.approx(8.9996, abs=1e-3)
    assert fp._fhn_boundary(0.0, c) == pytest.approx(math.sqrt(c))
    assert fp._fhn_boundary(0.0, c) == pytest.approx(3.0, abs=1e-3)


def test_fhn_boundary_grows():
    c = fp.fhn_c(5, 0.1)
    ts = [0.0, 1.0, 10.0, 100.0, 1e4]
    gs = [fp._fhn_boundary(t, c) for t in ts]
    assert gs == sorted(gs)


def test_fhn_selects_better_of_two():
    inst = ProblemInstance(means=[0.0, 0.3], variances=1.0)
    r = fp.fhn(2, CFG(alpha=0.05, n0=20), GaussianOracle(inst, seed=7, rep=0))
    assert r.terminated_by == DECISION
    assert r.selected in (0, 1)


def test_fhn_exact_ties_hit_budget_cap():
    inst = ProblemInstance(means=[0.0, 0.0], variances=1.0)
    r = fp.fhn(2, CFG(alpha=0.05, n0=20, budget_cap=4000),
               GaussianOracle(inst, seed=8, rep=0))
    assert r.terminated_by == BUDGET_CAP
    assert r.total_samples <= 4000


def test_fhn_variance_update_switch_changes_runs():
    inst = ProblemInstance(means=[0.0, 0.25], variances=1.0)
    full = fp.fhn(2, CFG(alpha=0.05, n0=15), GaussianOracle(inst, seed=9, rep=0))
    frozen = fp.fhn(2, CFG(alpha=0.05, n0=15, fhn_variance_update="first_stage"),
                    GaussianOracle(inst, seed=9, rep=0))
    # same data, same decision direction, but the boundary paths may differ
    assert full.selected == frozen.selected or full.total_samples != frozen.total_samples


def test_fhn_survivor_set_monotone():
    inst = ProblemInstance(means=[0.0, 0.2, 0.5, 0.9], variances=1.0)
    r = fp.fhn(4, CFG(alpha=0.1, n0=10), GaussianOracle(inst, seed=10, rep=0))
    stages = [s for s, _ in r.elimination_log]
    assert stages == sorted(stages)


# ---------------------------------------------------------------------------
# shared invariants


def test_pairwise_antisymmetry_kn_rule():
    # inside the open continuation region, i-eliminates-j and j-eliminates-i
    # cannot both hold: the region is symmetric about 0
    delta, n, h2, s2 = 0.5, 10, 11.5, 2.0
    w = max(0.0, (delta / (2 * n)) * (h2 * s2 / delta ** 2 - n))
    for diff in (-3.0, -w, -0.1, 0.0, 0.1, w, 3.0):
        j_elim = diff < -w
        i_elim = -diff < -w
        assert not (j_elim and i_elim)


def test_procedures_bit_identical_across_runs():
    inst = slippage(6, 0.5)
    cfg = CFG(alpha=0.05, delta=0.5, n0=10)
    runs = [
        ("bechhofer", lambda rep: fp.bechhofer(6, 1.0, cfg, GaussianOracle(inst, 99, rep))),
        ("rinott", lambda rep: fp.rinott(6, cfg, GaussianOracle(inst, 99, rep))),
        ("paulson", lambda rep: fp.paulson(6, 1.0, cfg, GaussianOracle(inst, 99, rep))),
        ("kn", lambda rep: fp.kn(6, cfg, GaussianOracle(inst, 99, rep))),
        ("fhn", lambda rep: fp.fhn(6, CFG(alpha=0.05, n0=10), GaussianOracle(inst, 99, rep))),
    ]
    for name, runner in runs:
        assert runner(0) == runner(0) == runner(0), name


def test_alpha_bound_enforced_per_k():
    inst = slippage(2, 0.5)
    with pytest.raises(ValueError):
        fp.kn(2, CFG(alpha=0.5, delta=0.5, n0=5), GaussianOracle(inst, 1, 0))
