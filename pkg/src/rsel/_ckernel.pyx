# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel: counter-based uniform/normal streams and the normal /
student-t distribution scalars.

Must stay bit-identical to ``rsel._pykernel``: same constants, same
operation order, same libm calls.  Any change here needs the mirror change
there (the cross-backend equality tests enforce this).
"""

from libc.math cimport exp, log, log1p, sqrt, erfc, sin, pi

BACKEND_NAME = "compiled"

cdef unsigned long long _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef unsigned long long _MIX1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long _MIX2 = 0x94D049BB133111EBULL
cdef unsigned long long _SEED_SALT = 0x5DEECE66DULL

cdef double _INV_2_53 = 1.0 / 9007199254740992.0
cdef double _INV_SQRT2 = 0.7071067811865475244
cdef double _INV_SQRT_2PI = 0.3989422804014326779


cdef inline unsigned long long _mix64(unsigned long long z) nogil:
    z = (z ^ (z >> 30)) * _MIX1
    z = (z ^ (z >> 27)) * _MIX2
    return z ^ (z >> 31)


cdef inline unsigned long long _u64_at(unsigned long long key,
                                       unsigned long long index) nogil:
    return _mix64(key + (index + 1) * _GOLDEN)


cdef inline double _u01_at(unsigned long long key,
                           unsigned long long index) nogil:
    return (<double> (_u64_at(key, index) >> 11) + 0.5) * _INV_2_53


cdef inline double _normal_pdf(double x) nogil:
    return exp(-0.5 * x * x) * _INV_SQRT_2PI


cdef inline double _normal_cdf(double x) nogil:
    return 0.5 * erfc(-x * _INV_SQRT2)


cdef double _normal_quantile(double p) nogil:
    cdef double q, r, x, u, pdf
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
        r = sqrt(-log(r))
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
    pdf = _normal_pdf(x)
    if pdf > 1e-300:
        u = (_normal_cdf(x) - p) / pdf
        x = x - u / (1.0 + 0.5 * u * x)
    return x


# libm's lgamma disagrees with CPython's by ulps; shared Lanczos instead
# (mirror of the table in _pykernel).
cdef double[8] _LANCZOS
_LANCZOS[0] = 676.5203681218851
_LANCZOS[1] = -1259.1392167224028
_LANCZOS[2] = 771.32342877765313
_LANCZOS[3] = -176.61502916214059
_LANCZOS[4] = 12.507343278686905
_LANCZOS[5] = -0.13857109526572012
_LANCZOS[6] = 9.9843695780195716e-6
_LANCZOS[7] = 1.5056327351493116e-7
cdef double _LN_SQRT_2PI = 0.9189385332046727418


cdef double _lgamma(double z) nogil:
    cdef double x, t
    cdef int i
    if z < 0.5:
        return log(pi / sin(pi * z)) - _lgamma(1.0 - z)
    z -= 1.0
    x = 0.99999999999980993
    for i in range(8):
        x += _LANCZOS[i] / (z + i + 1.0)
    t = z + 7.5
    return _LN_SQRT_2PI + (z + 0.5) * log(t) - t + log(x)


cdef double _FPMIN = 1e-300
cdef double _CF_EPS = 3e-16


cdef double _betacf(double a, double b, double x) nogil:
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
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


cdef double _reg_inc_beta(double a, double b, double x, double xc) nogil:
    cdef double lbt, bt
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    lbt = (_lgamma(a + b) - _lgamma(a) - _lgamma(b)
           + a * log(x) + b * log(xc))
    bt = exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, xc) / b


cdef double _t_pdf(double x, double nu) nogil:
    return exp(_lgamma(0.5 * (nu + 1.0)) - _lgamma(0.5 * nu)
               - 0.5 * log(nu * pi)
               - 0.5 * (nu + 1.0) * log1p(x * x / nu))


cdef double _t_cdf(double x, double nu) nogil:
    cdef double xx, z, zc, tail
    if x == 0.0:
        return 0.5
    xx = x * x
    z = nu / (nu + xx)
    zc = xx / (nu + xx)
    tail = 0.5 * _reg_inc_beta(0.5 * nu, 0.5, z, zc)
    return tail if x < 0.0 else 1.0 - tail


# Python-visible surface (mirrors rsel._pykernel).

def mix64(z):
    return _mix64(<unsigned long long> (z & 0xFFFFFFFFFFFFFFFF))


def stream_key(seed, substream):
    cdef unsigned long long h = _mix64(
        <unsigned long long> ((seed ^ _SEED_SALT) & 0xFFFFFFFFFFFFFFFF))
    return _mix64(h + <unsigned long long> (substream & 0xFFFFFFFFFFFFFFFF) * _GOLDEN)


def u64_at(key, index):
    return _u64_at(<unsigned long long> key, <unsigned long long> index)


def u01_at(key, index):
    return _u01_at(<unsigned long long> key, <unsigned long long> index)


def normal_pdf(double x):
    return _normal_pdf(x)


def normal_cdf(double x):
    return _normal_cdf(x)


def normal_quantile(double p):
    if not 0.0 < p < 1.0:
        raise ValueError(f"normal_quantile requires 0 < p < 1, got {p!r}")
    return _normal_quantile(p)


def std_normal_at(key, index):
    return _normal_quantile(_u01_at(<unsigned long long> key,
                                    <unsigned long long> index))


def reg_inc_beta(double a, double b, double x, double xc):
    return _reg_inc_beta(a, b, x, xc)


def t_pdf(double x, double nu):
    if nu <= 0.0:
        raise ValueError(f"t_pdf requires nu > 0, got {nu!r}")
    return _t_pdf(x, nu)


def t_cdf(double x, double nu):
    if nu <= 0.0:
        raise ValueError(f"t_cdf requires nu > 0, got {nu!r}")
    return _t_cdf(x, nu)


def fill_std_normals(key, start, double[::1] out):
    cdef unsigned long long k = <unsigned long long> key
    cdef unsigned long long s = <unsigned long long> start
    cdef Py_ssize_t j, n = out.shape[0]
    for j in range(n):
        out[j] = _normal_quantile(_u01_at(k, s + <unsigned long long> j))


def std_normals_at(unsigned long long[::1] keys,
                   unsigned long long[::1] indices,
                   double[::1] out):
    cdef Py_ssize_t j, n = out.shape[0]
    for j in range(n):
        out[j] = _normal_quantile(_u01_at(keys[j], indices[j]))
