"""Backend kernels: the compiled extension and the pure-Python fallback
must be interchangeable bit for bit."""

import math
import random

import numpy as np
import pytest

from rsel import backend
from rsel import _pykernel

try:
    from rsel import _ckernel
except ImportError:
    _ckernel = None

needs_compiled = pytest.mark.skipif(_ckernel is None,
                                    reason="compiled kernel not built")


def test_backend_selected():
    assert backend.BACKEND in ("pure", "compiled")


@needs_compiled
def test_stream_values_bit_identical_across_backends():
    rng = random.Random(101)
    for _ in range(5000):
        key = rng.getrandbits(64)
        idx = rng.getrandbits(40)
        assert _ckernel.u01_at(key, idx) == _pykernel.u01_at(key, idx)
        assert _ckernel.std_normal_at(key, idx) == _pykernel.std_normal_at(key, idx)


@needs_compiled
def test_distributions_bit_identical_across_backends():
    rng = random.Random(77)
    for _ in range(2000):
        x = rng.uniform(-9, 9)
        p = rng.uniform(1e-12, 1 - 1e-12)
        nu = rng.choice([1, 2, 3, 7, 19, 99, 9999])
        assert _ckernel.normal_cdf(x) == _pykernel.normal_cdf(x)
        assert _ckernel.normal_pdf(x) == _pykernel.normal_pdf(x)
        assert _ckernel.normal_quantile(p) == _pykernel.normal_quantile(p)
        assert _ckernel.t_cdf(x, nu) == _pykernel.t_cdf(x, nu)
        assert _ckernel.t_pdf(x, nu) == _pykernel.t_pdf(x, nu)


@needs_compiled
def test_batch_fill_matches_scalar_path():
    key = _pykernel.stream_key(42, 9)
    out_c = np.empty(257)
    _ckernel.fill_std_normals(key, 1000, out_c)
    scalars = np.array([_pykernel.std_normal_at(key, 1000 + j) for j in range(257)])
    assert np.array_equal(out_c, scalars)

    keys = np.array([_pykernel.stream_key(1, s) for s in range(64)], dtype=np.uint64)
    idx = np.arange(64, dtype=np.uint64) * 7
    out = np.empty(64)
    _ckernel.std_normals_at(keys, idx, out)
    expect = np.array([_pykernel.std_normal_at(int(k), int(i))
                       for k, i in zip(keys, idx)])
    assert np.array_equal(out, expect)


def test_stream_key_repeatable_and_distinct():
    k = backend.kernel
    assert k.stream_key(7, 3) == k.stream_key(7, 3)
    keys = {k.stream_key(s, t) for s in range(30) for t in range(30)}
    assert len(keys) == 900


def test_u01_open_interval_and_uniform():
    k = backend.kernel
    key = k.stream_key(2024, 0)
    vals = np.array([k.u01_at(key, i) for i in range(100_000)])
    assert vals.min() > 0.0 and vals.max() < 1.0
    # mean/variance within 5 standard errors
    assert abs(vals.mean() - 0.5) < 5 * math.sqrt(1 / 12 / len(vals))
    assert abs(vals.var() - 1 / 12) < 0.002


def test_substreams_look_independent():
    k = backend.kernel
    a = np.array([k.u01_at(k.stream_key(5, 0), i) for i in range(20_000)])
    b = np.array([k.u01_at(k.stream_key(5, 1), i) for i in range(20_000)])
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.02
