"""Integral-transform machinery for the barrier problem with beta in (-1, 0).

The forward map sends the CEV-type coordinate x = -F^(-beta)/beta on
[0, y(t)] to a Bessel image; the inverse map is a Fourier-Bessel series
over the positive zeros of J_|nu|.  The terminal image of the call payoff
is available in closed form and doubles as the right-hand side of the
collocation systems in :mod:`lambdasabr.lmvf`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate

from . import coeffs as cf
from .bessel import BesselBasis, BesselError, _jv, bessel_zeros


class ContractError(ValueError):
    """Raised when a barrier contract violates its invariants."""


class UnsupportedConfigurationError(ValueError):
    """Raised for model configurations outside the implemented scope."""


class AccuracyError(RuntimeError):
    """Raised when a quadrature cannot certify the requested accuracy."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class BarrierContract:
    """Up-and-out call: strike K, upper barrier H(t), maturity T.

    ``barrier`` is either a positive constant or a callable t -> level.
    """

    strike: float
    barrier: Union[float, Callable[[float], float]]
    maturity: float
    flavor: str = "up-and-out-call"

    def __post_init__(self):
        if self.flavor != "up-and-out-call":
            raise ContractError(f"unsupported flavor {self.flavor!r}")
        if not self.strike > 0.0:
            raise ContractError("strike must be positive")
        if not self.maturity > 0.0:
            raise ContractError("maturity must be positive")
        for t in (0.0, 0.5 * self.maturity, self.maturity):
            if not self.barrier_at(t) > 0.0:
                raise ContractError(f"barrier must be positive (H({t}) <= 0)")
        if self.barrier_at(self.maturity) < self.strike:
            raise ContractError("H(T) >= K is required for a non-trivial payoff")

    def barrier_at(self, t):
        if callable(self.barrier):
            return float(self.barrier(t))
        return float(self.barrier)

    @property
    def is_constant_barrier(self):
        return not callable(self.barrier)


@dataclass(frozen=True)
class TransformContext:
    """Derived quantities shared by every transform operation.

    nu = 1/(2 beta) < 0, b = nu + 1/2, a = -K^(-beta)/beta, and the
    moving right edge y(t) = -H(t)^(-beta)/beta.  ``basis`` holds the
    zeros of J_|nu| the inverse series runs over.
    """

    nu: float
    b_drift: float
    a_strike: float
    coeffs: cf.ModelCoefficients
    contract: BarrierContract
    basis: BesselBasis

    @property
    def beta(self):
        return self.coeffs.beta

    @property
    def order(self):
        return -self.nu

    def y(self, t):
        b = self.beta
        return -self.contract.barrier_at(t) ** (-b) / b

    def y_of_tau(self, tau, *, extrapolate=False):
        t = cf.t_of_tau(self.coeffs, tau, self.contract.maturity,
                        extrapolate=extrapolate)
        return self.y(t)

    def x_of_forward(self, forward):
        b = self.beta
        return -forward ** (-b) / b

    def forward_of_x(self, x):
        b = self.beta
        return (-b * x) ** (-1.0 / b)


def make_context(coefficients, contract, basis_size):
    """Build a :class:`TransformContext`; requires zero correlation."""
    if not coefficients.is_zero_correlation:
        raise UnsupportedConfigurationError(
            "the transform path requires rho identically 0")
    beta = coefficients.beta
    nu = 0.5 / beta
    basis = bessel_zeros(-nu, basis_size)
    a = -contract.strike ** (-beta) / beta
    return TransformContext(nu=nu, b_drift=nu + 0.5, a_strike=a,
                            coeffs=coefficients, contract=contract,
                            basis=basis)


def terminal_image(ctx, p):
    """Image of the call payoff at maturity, closed form.

    For p below 1e-6 / y(T) the 1/p prefactor cancels catastrophically,
    so a short power series in p takes over (validated against direct
    quadrature of the defining integral).
    """
    if p <= 0.0:
        raise ContractError("p must be positive")
    y_T = ctx.y(ctx.contract.maturity)
    if p < 1e-6 / y_T:
        return _terminal_image_series(ctx, p)
    nu, beta, K, a = ctx.nu, ctx.beta, ctx.contract.strike, ctx.a_strike
    fac = (-beta) ** (-1.0 / beta)
    t1 = fac * (y_T ** (1.0 - nu) * _jv(1.0 - nu, p * y_T)
                - a ** (1.0 - nu) * _jv(1.0 - nu, p * a))
    t2 = K * (y_T ** (1.0 + nu) * _jv(-1.0 - nu, p * y_T)
              - a ** (1.0 + nu) * _jv(-1.0 - nu, p * a))
    return (t1 + t2) / p


def _terminal_image_series(ctx, p, n_terms=40):
    # sum_k (-1)^k (p/2)^(2k+|nu|) / (k! Gamma(k+|nu|+1)) * moment_k
    nu, beta, K, a = ctx.nu, ctx.beta, ctx.contract.strike, ctx.a_strike
    y_T = ctx.y(ctx.contract.maturity)
    fac = (-beta) ** (-1.0 / beta)
    order = -nu
    total = 0.0
    for k in range(n_terms):
        e1 = 2.0 * k + 2.0 - 2.0 * nu
        e2 = 2.0 * k + 2.0
        moment = (fac * (y_T ** e1 - a ** e1) / e1 - K * (y_T ** e2 - a ** e2) / e2)
        coeff = ((-1.0) ** k * (0.5 * p) ** (2.0 * k + order)
                 / (math.factorial(k) * math.gamma(k + order + 1.0)))
        term = coeff * moment
        total += term
        if abs(term) < 1e-300 or (k > 3 and abs(term) < 1e-16 * abs(total)):
            break
    return total


def forward_git(ctx, u, t, p):
    """Forward transform of ``u`` on [0, y(t)] by adaptive quadrature.

    Testing utility, not on the pricing hot path.  Raises
    :class:`AccuracyError` (carrying the achieved estimate) when the
    quadrature cannot converge.
    """
    if p <= 0.0:
        raise ContractError("p must be positive")
    y_t = ctx.y(t)
    order = ctx.order
    nu = ctx.nu

    def integrand(x):
        return u(x) * x ** (nu + 1.0) * _jv(order, x * p)

    pts = [ctx.a_strike] if 0.0 < ctx.a_strike < y_t else None
    value, abserr, *rest = integrate.quad(
        integrand, 0.0, y_t, points=pts, limit=400, epsabs=1e-12,
        epsrel=1e-10, full_output=True)
    if len(rest) > 1:  # (info, warning message) -> non-convergence
        raise AccuracyError(
            f"forward transform quadrature did not converge: {rest[1]}",
            estimate=value)
    return value


def inverse_series(ctx, image_values, x, t, summation="plain"):
    """Inverse Fourier-Bessel series at the point (t, x).

    Args:
        image_values: transform image at p = mu_n / y(t), n = 1..N.
        summation: "plain" partial sum or "cesaro" (arithmetic mean of
            the partial sums, which damps Gibbs oscillation near tau=0).

    The representation is invalid at x = y(t); the boundary value 0 is
    returned there by the knock-out condition, and x beyond the barrier
    is a domain error.
    """
    values = np.asarray(image_values, dtype=float)
    if values.ndim != 1 or values.size < 1:
        raise ValueError("image_values must be a non-empty 1-d sequence")
    if values.size > ctx.basis.count:
        raise ValueError("more image values than basis zeros")
    if summation not in ("plain", "cesaro"):
        raise ValueError(f"unknown summation {summation!r}")
    y_t = ctx.y(t)
    if x == y_t or x == 0.0:
        return 0.0
    if x < 0.0 or x > y_t:
        raise ContractError(f"x = {x} outside [0, y(t) = {y_t}]")
    n = values.size
    mu = ctx.basis.zeros[:n]
    jp1 = ctx.basis.j_plus_one[:n]
    terms = values * _jv(ctx.order, mu * (x / y_t)) / (jp1 * jp1)
    if summation == "cesaro":
        weights = (n - np.arange(n, dtype=float)) / n
        series = float(np.sum(terms * weights))
    else:
        series = float(np.sum(terms))
    return 2.0 * x ** (-ctx.nu) / (y_t * y_t) * series


def barrier_gradient(ctx, image_values, t):
    """Half-gradient of the solution at the barrier (diagnostic only)."""
    values = np.asarray(image_values, dtype=float)
    n = values.size
    mu = ctx.basis.zeros[:n]
    jp1 = ctx.basis.j_plus_one[:n]
    y_t = ctx.y(t)
    return -float(np.sum(mu / jp1 * values)) / y_t ** (ctx.nu + 3.0)
