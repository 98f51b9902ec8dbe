"""Time-dependent model coefficients and their integral reparameterizations.

The volatility clock ``tau(t)``, the drift accumulator ``g(t)`` and the
reaction coefficient ``eta(t, p)`` are the backbone of every transformed
equation in this package.  For the parametric-exponential family

    gamma(t) = gamma1 * exp(-gamma2 * t)
    kappa(t) = kappa1 * exp(-kappa2 * t)
    rate(t)  = r0

all integrals are evaluated in closed form; for piecewise-constant
coefficients they are exact segment sums.  Degenerate decay rates
(|gamma2| or |kappa2| below 1e-12) switch to the constant-coefficient
branch to avoid 0/0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EXPONENTIAL = "parametric-exponential"
PIECEWISE = "piecewise-constant"

_DEGENERATE_RATE = 1e-12


class CoefficientError(ValueError):
    """Raised when model coefficients violate their domain constraints."""


class DomainError(ValueError):
    """Raised when an evaluation point lies outside the supported range."""


@dataclass(frozen=True)
class ModelCoefficients:
    """Coefficients of the lambda-SABR dynamics with beta in (-1, 0).

    Use :meth:`exponential` or :meth:`piecewise` instead of the raw
    constructor; they fill in the representation tag and validate.
    """

    beta: float
    representation: str
    gamma1: float = math.nan
    gamma2: float = math.nan
    kappa1: float = math.nan
    kappa2: float = math.nan
    r0: float = math.nan
    rho0: float = 0.0
    times: tuple = field(default=())
    gammas: tuple = field(default=())
    kappas: tuple = field(default=())
    rates: tuple = field(default=())
    rhos: tuple = field(default=())

    @classmethod
    def exponential(cls, beta, gamma1, gamma2, kappa1, kappa2, r0, rho0=0.0):
        return cls(beta=float(beta), representation=EXPONENTIAL,
                   gamma1=float(gamma1), gamma2=float(gamma2),
                   kappa1=float(kappa1), kappa2=float(kappa2),
                   r0=float(r0), rho0=float(rho0))

    @classmethod
    def piecewise(cls, beta, times, gammas, kappas, rates, rhos=None):
        """Left-edge segments: value i applies on [times[i], times[i+1]).

        ``times[0]`` must be 0; the last segment extends to infinity.
        """
        times = tuple(float(t) for t in times)
        gammas = tuple(float(g) for g in gammas)
        kappas = tuple(float(k) for k in kappas)
        rates = tuple(float(r) for r in rates)
        if rhos is None:
            rhos = (0.0,) * len(times)
        else:
            rhos = tuple(float(r) for r in rhos)
        return cls(beta=float(beta), representation=PIECEWISE, times=times,
                   gammas=gammas, kappas=kappas, rates=rates, rhos=rhos)

    def __post_init__(self):
        if not -1.0 < self.beta < 0.0:
            raise CoefficientError(
                f"beta must lie in (-1, 0), got {self.beta}")
        if self.representation == EXPONENTIAL:
            if not self.gamma1 > 0.0:
                raise CoefficientError("gamma1 must be positive")
            if self.kappa1 < 0.0:
                raise CoefficientError("kappa1 must be non-negative")
            if abs(self.rho0) > 1.0:
                raise CoefficientError("|rho| must not exceed 1")
        elif self.representation == PIECEWISE:
            n = len(self.times)
            if n == 0:
                raise CoefficientError("piecewise coefficients need >= 1 segment")
            if any(len(a) != n for a in (self.gammas, self.kappas, self.rates, self.rhos)):
                raise CoefficientError("piecewise arrays must share one length")
            if self.times[0] != 0.0:
                raise CoefficientError("first segment must start at t = 0")
            if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
                raise CoefficientError("segment times must be strictly increasing")
            if any(g <= 0.0 for g in self.gammas):
                raise CoefficientError("gamma must be positive on every segment")
            if any(k < 0.0 for k in self.kappas):
                raise CoefficientError("kappa must be non-negative")
            if any(abs(r) > 1.0 for r in self.rhos):
                raise CoefficientError("|rho| must not exceed 1")
        else:
            raise CoefficientError(
                f"unknown representation {self.representation!r}")

    # -- pointwise evaluation -------------------------------------------------

    def _segment(self, t):
        # times are left edges; values extend flat on both sides
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return max(idx, 0)

    def gamma(self, t):
        if self.representation == EXPONENTIAL:
            return self.gamma1 * math.exp(-self.gamma2 * t)
        return self.gammas[self._segment(t)]

    def kappa(self, t):
        if self.representation == EXPONENTIAL:
            return self.kappa1 * math.exp(-self.kappa2 * t)
        return self.kappas[self._segment(t)]

    def rate(self, t):
        if self.representation == EXPONENTIAL:
            return self.r0
        return self.rates[self._segment(t)]

    def rho(self, t):
        if self.representation == EXPONENTIAL:
            return self.rho0
        return self.rhos[self._segment(t)]

    @property
    def is_zero_correlation(self):
        if self.representation == EXPONENTIAL:
            return self.rho0 == 0.0
        return all(r == 0.0 for r in self.rhos)


@dataclass(frozen=True)
class MarketState:
    """Initial forward price and instantaneous volatility."""

    forward: float
    sigma: float

    def __post_init__(self):
        if not self.forward > 0.0:
            raise CoefficientError("forward must be positive")
        if not self.sigma > 0.0:
            raise CoefficientError("sigma must be positive")


# -- exact piecewise integrals ------------------------------------------------

def _piecewise_integral(times, values, lo, hi):
    """Integral of a piecewise-constant function over [lo, hi], lo <= hi.

    The first segment extends flat to -inf and the last to +inf.
    """
    if hi <= lo:
        return 0.0
    total = 0.0
    edges = list(times) + [math.inf]
    # leading flat extension
    if lo < edges[0]:
        total += values[0] * (min(hi, edges[0]) - lo)
        lo = edges[0]
    for i, v in enumerate(values):
        a, b = edges[i], edges[i + 1]
        left = max(lo, a)
        right = min(hi, b)
        if right > left:
            total += v * (right - left)
        if b >= hi:
            break
    return total


def _check_range(t, T, extrapolate):
    if not extrapolate and (t < 0.0 or t > T):
        raise DomainError(f"t = {t} outside [0, T = {T}]")


def tau_of_t(coeffs, t, T, *, extrapolate=False):
    """Volatility clock tau(t) = 0.5 * int_t^T gamma^2(k) dk.

    Strictly decreasing in ``t`` (gamma > 0), with tau(T) = 0.

    Args:
        coeffs: model coefficients.
        t: evaluation time, 0 <= t <= T.
        T: option maturity in years.
        extrapolate: allow t outside [0, T] (used by collocation grids
            that place a node behind tau(0)).
    """
    _check_range(t, T, extrapolate)
    if coeffs.representation == EXPONENTIAL:
        g1, g2 = coeffs.gamma1, coeffs.gamma2
        if abs(g2) < _DEGENERATE_RATE:
            return 0.5 * g1 * g1 * (T - t)
        # expm1 keeps the difference of exponentials stable near g2 = 0
        return (-g1 * g1 / (4.0 * g2) * math.exp(-2.0 * g2 * t)
                * math.expm1(-2.0 * g2 * (T - t)))
    sq = tuple(g * g for g in coeffs.gammas)
    return 0.5 * _piecewise_integral(coeffs.times, sq, min(t, T), max(t, T)) * (1.0 if t <= T else -1.0)


def g_of_t(coeffs, t, T, *, extrapolate=False):
    """Drift accumulator g(t) = int_T^t kappa(k) dk - tau(t); g(T) = 0."""
    _check_range(t, T, extrapolate)
    tau = tau_of_t(coeffs, t, T, extrapolate=extrapolate)
    if coeffs.representation == EXPONENTIAL:
        k1, k2 = coeffs.kappa1, coeffs.kappa2
        if abs(k2) < _DEGENERATE_RATE:
            return -k1 * (T - t) - tau
        return k1 / k2 * math.exp(-k2 * t) * math.expm1(-k2 * (T - t)) - tau
    integral = _piecewise_integral(coeffs.times, coeffs.kappas, min(t, T), max(t, T))
    return (-integral if t <= T else integral) - tau


def rate_integral(coeffs, t0, t1):
    """int_{t0}^{t1} r(k) dk, exact for both representations."""
    if coeffs.representation == EXPONENTIAL:
        return coeffs.r0 * (t1 - t0)
    return _piecewise_integral(coeffs.times, coeffs.rates, t0, t1)


def t_of_tau(coeffs, tau, T, *, extrapolate=False):
    """Inverse of :func:`tau_of_t` in its time argument.

    Closed form for the exponential family; bracketed bisection (the map
    is strictly decreasing) to 1e-12 relative tolerance otherwise.
    """
    tau_max = tau_of_t(coeffs, 0.0, T)
    if not extrapolate and (tau < 0.0 or tau > tau_max * (1.0 + 1e-12) + 1e-300):
        raise DomainError(f"tau = {tau} outside [0, tau(0) = {tau_max}]")
    if tau == 0.0:
        return T
    if coeffs.representation == EXPONENTIAL:
        g1, g2 = coeffs.gamma1, coeffs.gamma2
        if abs(g2) < _DEGENERATE_RATE:
            return T - 2.0 * tau / (g1 * g1)
        arg_m1 = 4.0 * g2 * tau / (g1 * g1) + math.expm1(-2.0 * g2 * T)
        if arg_m1 <= -1.0:
            raise DomainError(f"tau = {tau} beyond the reachable range")
        return -math.log1p(arg_m1) / (2.0 * g2)
    # piecewise: bisection on a bracket that always contains the root
    lo = 0.0
    if tau > tau_max:
        # extend below t = 0 using the flat first segment
        lo = -2.0 * (tau - tau_max) / coeffs.gammas[0] ** 2 - 1.0
    hi = T
    f = lambda t: tau_of_t(coeffs, t, T, extrapolate=True) - tau
    flo = f(lo)
    if flo < 0.0:
        raise DomainError(f"tau = {tau} not bracketed; tau(0) = {tau_max}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, abs(T)):
            break
    return 0.5 * (lo + hi)


def eta(coeffs, t, p, T, *, extrapolate=False):
    """Reaction coefficient eta(t, p) = -p^2 / gamma^2(t) * exp(-2 g(t)).

    Negative for every p > 0.
    """
    gam = coeffs.gamma(t)
    if not gam > 0.0:
        raise DomainError(f"gamma({t}) must be positive")
    g = g_of_t(coeffs, t, T, extrapolate=extrapolate)
    return -(p * p) / (gam * gam) * math.exp(-2.0 * g)
