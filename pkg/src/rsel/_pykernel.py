"""Pure-Python twin of the compiled kernel (``rsel._ckernel``).

Same mixing constants, same polynomial evaluation order, same libm calls,
so both backends produce bit-identical uniform/normal streams and
distribution values.  ``rsel.backend`` picks this module when the compiled
extension is unavailable or when ``RSEL_BACKEND=pure`` is set.

Batch entry points here are plain Python loops over the scalar path; the
compiled backend exists precisely because these loops are hot.
"""

from __future__ import annotations

import math

BACKEND_NAME = "pure"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_SEED_SALT = 0x5DEECE66D

_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53
_INV_SQRT2 = 0.7071067811865475244
_INV_SQRT_2PI = 0.3989422804014326779


def mix64(z: int) -> int:
    """64-bit finalizer (splitmix64 output function)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def stream_key(seed: int, substream: int) -> int:
    """Derive the 64-bit key of one (seed, substream) observation stream."""
    h = mix64((seed ^ _SEED_SALT) & _MASK)
    return mix64((h + (substream & _MASK) * _GOLDEN) & _MASK)


def u64_at(key: int, index: int) -> int:
    return mix64((key + ((index + 1) & _MASK) * _GOLDEN) & _MASK)


def u01_at(key: int, index: int) -> float:
    """Uniform draw in the open interval (0, 1), addressed by index."""
    return ((u64_at(key, index) >> 11) + 0.5) * _INV_2_53


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) * _INV_SQRT_2PI


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x * _INV_SQRT2)


def normal_quantile(p: float) -> float:
    """Inverse standard-normal cdf (rational approximation plus one
    Halley correction against erfc, good to ~1e-15)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal_quantile requires 0 < p < 1, got {p!r}")
    q = p - 0.5
    if -0.425 <= q <= 0.425:
        r = 0.180625 - q * q
        x = q * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                      + 67265.770927008700853) * r + 45921.953931549871457) * r
                    + 13731.693765509461125) * r + 1971.5909503065514427) * r
                  + 133.14166789178437745) * r + 3.3871328727963666080) / \
            (((((((5226.4952788528545610 * r + 28729.085735721942674) * r
                  + 39307.895800092710610) * r + 21213.794301586595867) * r
                + 5394.1960214247511077) * r + 687.18700749205790830) * r
              + 42.313330701600911252) * r + 1.0)
    else:
        r = p if q < 0.0 else 1.0 - p
        r = math.sqrt(-math.log(r))
        if r <= 5.0:
            r -= 1.6
            x = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                      + 0.241780725177450611770) * r + 1.27045825245236838258) * r
                    + 3.64784832476320460504) * r + 5.76949722146069140550) * r
                  + 4.63033784615654529590) * r + 1.42343711074968357734) / \
                (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                      + 0.0151986665636164571966) * r + 0.148103976427480074590) * r
                    + 0.689767334985100004550) * r + 1.67638483018380384940) * r
                  + 2.05319162663775882187) * r + 1.0)
        else:
            r -= 5.0
            x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                      + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                    + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                  + 5.4637849111641143699) * r + 6.6579046435011037772) / \
                (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                      + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                    + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                  + 0.59983220655588793769) * r + 1.0)
        if q < 0.0:
            x = -x
    pdf = normal_pdf(x)
    if pdf > 1e-300:
        u = (normal_cdf(x) - p) / pdf
        x = x - u / (1.0 + 0.5 * u * x)
    return x


def std_normal_at(key: int, index: int) -> float:
    """Standard normal via inverse-cdf transform of the uniform stream."""
    return normal_quantile(u01_at(key, index))


# CPython's math.lgamma is its own implementation and disagrees with libm
# by ulps, so both kernels carry this Lanczos (g=7, 9-term) lgamma instead.
_LANCZOS = (676.5203681218851, -1259.1392167224028, 771.32342877765313,
            -176.61502916214059, 12.507343278686905, -0.13857109526572012,
            9.9843695780195716e-6, 1.5056327351493116e-7)
_LN_SQRT_2PI = 0.9189385332046727418


def lgamma(z: float) -> float:
    if z < 0.5:
        return math.log(math.pi / math.sin(math.pi * z)) - lgamma(1.0 - z)
    z -= 1.0
    x = 0.99999999999980993
    for i in range(8):
        x += _LANCZOS[i] / (z + i + 1.0)
    t = z + 7.5
    return _LN_SQRT_2PI + (z + 0.5) * math.log(t) - t + math.log(x)


_FPMIN = 1e-300
_CF_EPS = 3e-16


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if -_FPMIN < d < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if -_FPMIN < d < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if -_FPMIN < c < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if -_FPMIN < d < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if -_FPMIN < c < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if -_CF_EPS < delta - 1.0 < _CF_EPS:
            break
    return h


def reg_inc_beta(a: float, b: float, x: float, xc: float) -> float:
    """Regularized incomplete beta I_x(a, b); ``xc`` is 1 - x computed
    without cancellation by the caller."""
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    lbt = (lgamma(a + b) - lgamma(a) - lgamma(b)
           + a * math.log(x) + b * math.log(xc))
    bt = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, xc) / b


def t_pdf(x: float, nu: float) -> float:
    if nu <= 0.0:
        raise ValueError(f"t_pdf requires nu > 0, got {nu!r}")
    return math.exp(lgamma(0.5 * (nu + 1.0)) - lgamma(0.5 * nu)
                    - 0.5 * math.log(nu * math.pi)
                    - 0.5 * (nu + 1.0) * math.log1p(x * x / nu))


def t_cdf(x: float, nu: float) -> float:
    if nu <= 0.0:
        raise ValueError(f"t_cdf requires nu > 0, got {nu!r}")
    if x == 0.0:
        return 0.5
    xx = x * x
    z = nu / (nu + xx)
    zc = xx / (nu + xx)
    tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, z, zc)
    return tail if x < 0.0 else 1.0 - tail


def fill_std_normals(key: int, start: int, out) -> None:
    """out[j] = standard normal at stream position start + j."""
    for j in range(len(out)):
        out[j] = normal_quantile(u01_at(key, start + j))


def std_normals_at(keys, indices, out) -> None:
    """out[j] = standard normal of stream keys[j] at position indices[j]."""
    for j in range(len(out)):
        out[j] = normal_quantile(u01_at(int(keys[j]), int(indices[j])))
