"""Distribution functions, quadrature, root finding, and the procedure
constants: the Bechhofer constant h, the Rinott constant h_R, and the
KN constants (eta, h^2).

The Bechhofer constant solves

    integral  phi(w) * Phi(w + sqrt(2) h)^(k-1) dw  =  1 - alpha,

which is the probability that the maximum of k-1 equicorrelated
(correlation 1/2) standard normals stays below h, written through the
shared latent variable w.  The Rinott constant solves the analogous
equation with student-t cdf/pdf of n0 - 1 degrees of freedom.  Both are
evaluated in probability space, u = F(t), so the quadrature nodes are
quantiles and the integrand is bounded on (0, 1) for every df (a fixed
+-8 window is fine for the normal kernel but loses mass for heavy t
tails at small n0).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .backend import kernel

__all__ = [
    "DomainError", "NumericsError", "RootBracketError",
    "Quadrature", "DistParams",
    "normal_cdf", "normal_pdf", "normal_quantile",
    "t_cdf", "t_pdf", "t_quantile",
    "integrate", "find_root",
    "bechhofer_h", "rinott_h", "kn_eta", "kn_h2",
]


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class NumericsError(RuntimeError):
    """Quadrature or root finding failed to reach its tolerance."""


class RootBracketError(NumericsError):
    """Root not bracketed; carries the endpoint values."""

    def __init__(self, lo, hi, flo, fhi):
        super().__init__(
            f"root not bracketed: f({lo}) = {flo}, f({hi}) = {fhi}")
        self.lo, self.hi, self.flo, self.fhi = lo, hi, flo, fhi


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Legendre rule: node_count nodes over a symmetric window of
    +- truncation_halfwidth."""

    node_count: int = 256
    truncation_halfwidth: float = 8.0

    def __post_init__(self):
        if self.node_count < 16:
            raise DomainError(f"node_count must be >= 16, got {self.node_count}")
        if not self.truncation_halfwidth > 0:
            raise DomainError(
                f"truncation_halfwidth must be > 0, got {self.truncation_halfwidth}")


@dataclass(frozen=True)
class DistParams:
    """Student-t parameterization; dof = n0 - 1 in the two-stage procedures."""

    dof: int

    def __post_init__(self):
        if self.dof < 1:
            raise DomainError(f"dof must be >= 1, got {self.dof}")


DEFAULT_QUADRATURE = Quadrature()


def normal_pdf(x: float) -> float:
    return kernel.normal_pdf(x)


def normal_cdf(x: float) -> float:
    return kernel.normal_cdf(x)


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal_quantile requires 0 < p < 1, got {p!r}")
    return kernel.normal_quantile(p)


def _check_dof(nu) -> float:
    nu = float(nu)
    if nu <= 0.0:
        raise DomainError(f"degrees of freedom must be positive, got {nu!r}")
    return nu


def t_pdf(x: float, nu) -> float:
    return kernel.t_pdf(x, _check_dof(nu))


def t_cdf(x: float, nu) -> float:
    return kernel.t_cdf(x, _check_dof(nu))


def t_quantile(p: float, nu) -> float:
    nu = _check_dof(nu)
    if not 0.0 < p < 1.0:
        raise DomainError(f"t_quantile requires 0 < p < 1, got {p!r}")
    if p == 0.5:
        return 0.0
    # expand a bracket, then hand off to the bisection/secant root finder
    hi = 1.0
    while t_cdf(hi, nu) < p:
        hi *= 2.0
        if hi > 1e300:
            raise NumericsError(f"t_quantile bracket blew up at p={p}, nu={nu}")
    lo = -1.0
    while t_cdf(lo, nu) > p:
        lo *= 2.0
        if lo < -1e300:
            raise NumericsError(f"t_quantile bracket blew up at p={p}, nu={nu}")
    return find_root(lambda x: t_cdf(x, nu) - p, lo, hi, tol=1e-13)


@lru_cache(maxsize=32)
def _gl_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def integrate(f, quadrature: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Gauss-Legendre integral of a scalar function over the symmetric
    truncation window."""
    x, w = _gl_nodes(quadrature.node_count)
    h = quadrature.truncation_halfwidth
    t = x * h
    vals = np.fromiter((f(v) for v in t), dtype=float, count=len(t))
    if not np.all(np.isfinite(vals)):
        raise NumericsError("integrand not finite on the window")
    return h * float(np.dot(w, vals))


def find_root(f, lo: float, hi: float, tol: float = 1e-8,
              max_iter: int = 200) -> float:
    """Bracketing bisection refined by secant steps.

    Requires f(lo) * f(hi) <= 0; returns x with |f(x)| <= tol.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise RootBracketError(lo, hi, flo, fhi)
    a, fa, b, fb = lo, flo, hi, fhi
    x, fx = b, fb
    for it in range(max_iter):
        if abs(fx) <= tol:
            return x
        # secant through the bracket endpoints, fall back to bisection when
        # the step leaves the bracket or stalls
        denom = fb - fa
        if denom != 0.0:
            s = b - fb * (b - a) / denom
        else:
            s = 0.5 * (a + b)
        if not (min(a, b) < s < max(a, b)):
            s = 0.5 * (a + b)
        fs = f(s)
        if fs == 0.0:
            return s
        if fa * fs < 0.0:
            b, fb = s, fs
        else:
            a, fa = s, fs
        # keep a genuine bisection every other step so the bracket shrinks
        if it % 2 == 1:
            m = 0.5 * (a + b)
            fm = f(m)
            if fm == 0.0:
                return m
            if fa * fm < 0.0:
                b, fb = m, fm
            else:
                a, fa = m, fm
        x, fx = (a, fa) if abs(fa) < abs(fb) else (b, fb)
        if a == b:
            break
    if abs(fx) <= tol:
        return x
    raise NumericsError(f"root residual {fx:.3e} above tolerance {tol:.1e}")


# ---------------------------------------------------------------------------
# Procedure constants.
#
# Bechhofer: the latent integral over w uses the +-8 window, where the
# normal integrand is ~1e-15 at the edges.  Rinott: the same trick would
# lose real mass in the heavy t tails at small n0, so the integral is
# evaluated in probability space, u = Psi(t):
#   integral Psi(t + h)^(k-1) psi(t) dt = integral_0^1 Psi(Psi^{-1}(u) + h)^(k-1) du
# with quantile nodes cached per dof (t tails are polynomial, so the
# u-space integrand has bounded derivatives at both endpoints).

_WINDOW_NODES = 256
_PROB_NODES = 800


@lru_cache(maxsize=8)
def _normal_window_nodes(n: int = _WINDOW_NODES, halfwidth: float = 8.0):
    x, w = _gl_nodes(n)
    t = x * halfwidth
    pdf = np.array([kernel.normal_pdf(v) for v in t])
    return t, w * halfwidth * pdf


@lru_cache(maxsize=64)
def _t_quantile_nodes(dist: DistParams):
    x, w = _gl_nodes(_PROB_NODES)
    u = 0.5 * (x + 1.0)
    q = np.array([t_quantile(v, dist.dof) for v in u])
    return q, 0.5 * w


def _bechhofer_prob(h: float, k: int) -> float:
    """P(max of k-1 equicorrelated (rho = 1/2) standard normals <= h)."""
    t, wpdf = _normal_window_nodes()
    shift = math.sqrt(2.0) * h
    cdf_vals = np.array([kernel.normal_cdf(v + shift) for v in t])
    return float(np.dot(wpdf, cdf_vals ** (k - 1)))


def _rinott_prob(h: float, dist: DistParams, k: int) -> float:
    """integral Psi_dof(t + h)^(k-1) psi_dof(t) dt."""
    q, w = _t_quantile_nodes(dist)
    nu = float(dist.dof)
    cdf_vals = np.array([kernel.t_cdf(v + h, nu) for v in q])
    return float(np.dot(w, cdf_vals ** (k - 1)))


def _check_alpha_open(k: int, alpha: float) -> None:
    # The defining equations are valid on all of (0, 1); the stricter
    # alpha < 1 - 1/k bound of the selection guarantee is enforced by the
    # procedure configs, not here (h simply goes <= 0 past it).
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _solve_increasing(resid, lo: float, hi: float, tol: float) -> float:
    """Root of an increasing function, expanding the bracket as needed."""
    while resid(hi) < 0.0:
        hi *= 2.0
        if hi > 1024.0:
            raise NumericsError("bracket expansion failed (upper)")
    while resid(lo) > 0.0:
        lo *= 2.0
        if lo < -1024.0:
            raise NumericsError("bracket expansion failed (lower)")
    return find_root(resid, lo, hi, tol=tol)


_constant_lock = threading.Lock()


@lru_cache(maxsize=1024)
def _bechhofer_h_cached(k: int, alpha: float) -> float:
    target = 1.0 - alpha
    return _solve_increasing(lambda h: _bechhofer_prob(h, k) - target,
                             -1.0, 2.0, tol=1e-12)


def bechhofer_h(k: int, alpha: float) -> float:
    """(1-alpha) quantile of the max of k-1 equicorrelated standard
    normals (correlation 1/2)."""
    _check_alpha_open(k, alpha)
    with _constant_lock:
        return _bechhofer_h_cached(k, float(alpha))


@lru_cache(maxsize=1024)
def _rinott_h_cached(k: int, n0: int, alpha: float) -> float:
    dist = DistParams(dof=n0 - 1)
    target = 1.0 - alpha
    return _solve_increasing(lambda h: _rinott_prob(h, dist, k) - target,
                             -1.0, 4.0, tol=1e-8)


def rinott_h(k: int, n0: int, alpha: float) -> float:
    """Rinott constant: solves the t-based screening integral equation
    at first-stage size n0 (computed on demand and memoized; no tables)."""
    _check_alpha_open(k, alpha)
    if n0 < 2:
        raise DomainError(f"n0 must be >= 2, got {n0}")
    with _constant_lock:
        return _rinott_h_cached(k, int(n0), float(alpha))


def kn_eta(k: int, n0: int, alpha: float) -> float:
    """KN procedure eta = 0.5 * [(2 alpha / (k-1))^(-2/(n0-1)) - 1]."""
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    if n0 < 2:
        raise DomainError(f"n0 must be >= 2, got {n0}")
    if not 0.0 < alpha < (k - 1) / 2.0:
        raise DomainError(f"alpha must lie in (0, (k-1)/2), got {alpha}")
    return 0.5 * ((2.0 * alpha / (k - 1)) ** (-2.0 / (n0 - 1)) - 1.0)


def kn_h2(k: int, n0: int, alpha: float) -> float:
    """KN procedure h^2 = 2 eta (n0 - 1)."""
    return 2.0 * kn_eta(k, n0, alpha) * (n0 - 1)
