"""Real-order Bessel-J evaluation, positive zeros, and the Bessel Theta kernel.

Zero finding follows the classic recipe: McMahon's large-index expansion
supplies initial guesses, which are then bracketed and refined by pure
bisection (guaranteed convergence even where zeros cluster).  All basis
data for a given (order, count) pair is computed once and cached as an
immutable :class:`BesselBasis`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sp


class BesselError(ValueError):
    """Raised on domain violations or zero-refinement failures."""


def _jv(order, x):
    """Unchecked J_order(x); negative real orders allowed."""
    return sp.jv(order, x)


def bessel_j(order, x):
    """Bessel function of the first kind, J_order(x).

    Args:
        order: non-negative real order.
        x: non-negative argument (scalar or array).

    Relative accuracy is better than 1e-12 for x <= 2000, order <= 60.
    """
    if np.any(np.asarray(order) < 0.0):
        raise BesselError("order must be non-negative")
    if np.any(np.asarray(x) < 0.0):
        raise BesselError("x must be non-negative")
    return sp.jv(order, x)


def mcmahon_guess(order, n):
    """McMahon asymptotic estimate of the n-th positive zero of J_order."""
    n = np.asarray(n, dtype=float)
    b = n * math.pi + 0.5 * math.pi * (order - 0.5)
    return b - (4.0 * order * order - 1.0) / (8.0 * b)


@dataclass(frozen=True)
class BesselBasis:
    """First ``count`` positive zeros of J_order with cached companions.

    ``j_plus_one[n]`` is J_{order+1}(mu_n) and ``ratios[n]`` the scaling
    ratio J_{order+1}(mu_n) / mu_n used to rescale transform images.
    """

    order: float
    zeros: np.ndarray
    j_plus_one: np.ndarray
    ratios: np.ndarray
    count: int

    def __post_init__(self):
        self.zeros.setflags(write=False)
        self.j_plus_one.setflags(write=False)
        self.ratios.setflags(write=False)


def _bisect_many(order, lo, hi):
    """Vectorized bisection on brackets with a guaranteed sign change."""
    flo = _jv(order, lo)
    width = np.maximum(1e-14, 4.0 * np.finfo(float).eps * hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fmid = _jv(order, mid)
        take_left = np.sign(fmid) == np.sign(flo)
        lo = np.where(take_left, mid, lo)
        flo = np.where(take_left, fmid, flo)
        hi = np.where(take_left, hi, mid)
        if np.all(hi - lo <= width):
            break
    return 0.5 * (lo + hi)


def _scan_zero(order, start, limit):
    """March right from ``start`` until J_order changes sign, then bisect."""
    step = 0.25
    x0 = start
    f0 = _jv(order, x0)
    while x0 < limit:
        x1 = x0 + step
        f1 = _jv(order, x1)
        if f0 == 0.0:
            return x0
        if np.sign(f0) != np.sign(f1):
            arr = _bisect_many(order, np.array([x0]), np.array([x1]))
            return float(arr[0])
        x0, f0 = x1, f1
    raise BesselError(
        f"zero scan for order {order} failed on [{start}, {limit}]")


def bessel_zeros(order, count):
    """First ``count`` positive zeros of J_order as a :class:`BesselBasis`.

    McMahon guesses are bracketed midway to their neighbors and refined
    by bisection; any bracket without a sign change (low index at large
    order) is repaired by a forward scan.  The result is verified to be
    strictly increasing with |J(mu_n)| < 1e-12; failures raise instead of
    silently skipping a zero.
    """
    if np.asarray(order).ndim != 0 or order < 0.0:
        raise BesselError("order must be a non-negative scalar")
    if count < 1:
        raise BesselError("count must be >= 1")
    return _basis_cached(float(order), int(count))


def _zeros_consistent(order, zeros):
    if np.any(np.abs(_jv(order, zeros)) >= 1e-12):
        return False
    gaps = np.diff(zeros)
    # consecutive-zero gaps of J_order lie in (2.4, 2 pi) for order <= ~90
    return zeros[0] > 0.0 and not (np.any(gaps <= 1.0)
                                   or np.any(gaps > 2.0 * math.pi))


def _zeros_sequential(order, count):
    """Forward scan for every zero; slow but safe at large order, where
    McMahon's expansion misplaces the low-index zeros."""
    zeros = np.empty(count)
    # J_order has no zeros below order; J_order(max(order, eps)) > 0
    prev = max(order, 1e-6)
    for i in range(count):
        zeros[i] = _scan_zero(order, prev + 1e-6, prev + 60.0 + 4.0 * order)
        prev = zeros[i]
    return zeros


@lru_cache(maxsize=None)
def _basis_cached(order, count):
    n = np.arange(1, count + 1, dtype=float)
    guess = mcmahon_guess(order, n)
    # bracket halfway toward neighboring guesses (gap ~ pi)
    half = np.full(count, 0.45 * math.pi)
    lo, hi = guess - half, guess + half
    lo = np.maximum(lo, 1e-8)
    ok = np.sign(_jv(order, lo)) != np.sign(_jv(order, hi))
    zeros = np.empty(count)
    zeros[ok] = _bisect_many(order, lo[ok], hi[ok])
    zeros[~ok] = np.nan
    if np.any(~ok) or not _zeros_consistent(order, zeros):
        zeros = _zeros_sequential(order, count)
        if not _zeros_consistent(order, zeros):
            residual = np.abs(_jv(order, zeros))
            raise BesselError(
                f"zero refinement failed for order {order}: worst residual "
                f"{residual.max():.3e}, min gap {np.diff(zeros).min():.3e}")
    j_plus_one = _jv(order + 1.0, zeros)
    return BesselBasis(order=order, zeros=zeros, j_plus_one=j_plus_one,
                       ratios=j_plus_one / zeros, count=count)


def _scaled_j(order, x, zeros):
    """x^(-order) * J_order(mu_n x) with the finite x -> 0 limit."""
    if x == 0.0:
        return (0.5 * zeros) ** order / math.gamma(order + 1.0)
    return x ** (-order) * _jv(order, zeros * x)


def bessel_theta(order, varsigma, x1, x2, n_terms):
    """Bessel analogue of the Jacobi theta_3 kernel on [0, 1].

    Returns sum_n exp(-mu_n^2 varsigma / 2) * prod_i x_i^nu J_order(mu_n x_i)
    / J_{order+1}(mu_n)^2 with nu = -order.  The series acts as the
    transition kernel of the transformed process on the unit interval and
    requires varsigma > 0 (it degenerates to a delta at varsigma = 0).
    """
    if varsigma <= 0.0:
        raise BesselError("varsigma must be positive")
    if not (0.0 <= x1 <= 1.0 and 0.0 <= x2 <= 1.0):
        raise BesselError("spatial arguments must lie in [0, 1]")
    basis = bessel_zeros(order, n_terms)
    mu = basis.zeros
    damp = np.exp(-0.5 * mu * mu * varsigma)
    f1 = _scaled_j(order, x1, mu)
    f2 = _scaled_j(order, x2, mu)
    return float(np.sum(damp * f1 * f2 / basis.j_plus_one ** 2))
