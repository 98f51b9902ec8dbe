"""End-to-end pricers: analytic constant-volatility series, the Bessel
Theta-kernel representation, and the full transform/collocation engine.

All prices are discounted with exp(-int_0^T r dk) per the change of
variables that removed the rate term from the transformed equation.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from . import coeffs as cf
from . import lmvf
from .bessel import bessel_theta
from .transform import (BarrierContract, ContractError,
                        UnsupportedConfigurationError, inverse_series,
                        make_context, terminal_image)


class PricingError(RuntimeError):
    """Raised when a pricing run fails its numerical sanity checks."""


@dataclass(frozen=True)
class PriceResult:
    """Price plus run diagnostics; serializes straight to JSON."""

    price: float
    modes_used: int
    iterations: int
    solver_residual: float
    elapsed: float
    method: str

    def __post_init__(self):
        if self.price < 0.0:
            raise PricingError(f"negative price {self.price} escaped clamping")

    def to_json(self):
        return asdict(self)


def price_to_contract_units(u_value, rate_integral):
    """Map a transformed-variable value to currency: multiply by the
    discount factor exp(-int_0^T r dk)."""
    return u_value * math.exp(-rate_integral)


def _const_sigma_context(contract, beta, n_terms):
    # gamma/kappa are irrelevant for the frozen-volatility series; any
    # valid placeholder works
    co = cf.ModelCoefficients.exponential(beta, 1.0, 0.0, 0.0, 0.0, 0.0)
    return make_context(co, contract, n_terms)


def price_analytic_const_sigma(market, contract, rate, beta, n_terms=250):
    """Closed-form series price for constant volatility, constant barrier.

    C = 2 e^(-rT) x^(-nu) sum_n u_bar(T, mu_n/y) exp(-mu_n^2 sigma^2 T
    / (2 y^2)) J_|nu|(mu_n x / y) / J_{|nu|+1}(mu_n)^2.
    """
    if not contract.is_constant_barrier:
        raise UnsupportedConfigurationError(
            "analytic pricer requires a constant barrier")
    start = time.perf_counter()
    ctx = _const_sigma_context(contract, beta, n_terms)
    T = contract.maturity
    y = ctx.y(T)
    x0 = ctx.x_of_forward(market.forward)
    if not 0.0 < x0 < y:
        raise ContractError("spot must lie strictly below the barrier")
    mu = ctx.basis.zeros
    images = np.array([terminal_image(ctx, m / y) for m in mu])
    damped = images * np.exp(-mu * mu * (market.sigma ** 2) * T / (2.0 * y * y))
    u0 = inverse_series(ctx, damped, x0, T, "plain")
    price = price_to_contract_units(u0, rate * T)
    price = _sanity_clamp(price, market.forward)
    return PriceResult(price=price, modes_used=n_terms, iterations=0,
                       solver_residual=0.0,
                       elapsed=time.perf_counter() - start,
                       method="analytic-const-sigma")


def price_theta_representation(market, contract, rate, beta, n_terms=250):
    """Constant-volatility price as a payoff integral against the Bessel
    Theta kernel.

    C = 2 e^(-rT) x^(-2 nu) y^(2 nu) int_0^1 [H xi^(-2 nu) - K]^+
    xi Theta_|nu|(sigma^2 T / y^2, xi, x/y) d xi.  Equivalent to the
    analytic series by the transform of the payoff; requires T > 0.
    """
    if not contract.is_constant_barrier:
        raise UnsupportedConfigurationError(
            "theta-kernel pricer requires a constant barrier")
    if not contract.maturity > 0.0:
        raise cf.DomainError("theta representation needs strictly positive T")
    start = time.perf_counter()
    ctx = _const_sigma_context(contract, beta, n_terms)
    T = contract.maturity
    nu = ctx.nu
    order = -nu
    y = ctx.y(T)
    x0 = ctx.x_of_forward(market.forward)
    if not 0.0 < x0 < y:
        raise ContractError("spot must lie strictly below the barrier")
    H = contract.barrier_at(T)
    K = contract.strike
    varsigma = (market.sigma ** 2) * T / (y * y)
    xi_k = (K / H) ** (-beta)  # payoff positive on (xi_k, 1]

    def integrand(xi):
        payoff = H * xi ** (-2.0 * nu) - K
        if payoff <= 0.0:
            return 0.0
        return payoff * xi * bessel_theta(order, varsigma, xi, x0 / y, n_terms)

    value, _ = integrate.quad(integrand, 0.0, 1.0, points=[xi_k], limit=200)
    u0 = 2.0 * x0 ** (-2.0 * nu) * y ** (2.0 * nu) * value
    price = _sanity_clamp(price_to_contract_units(u0, rate * T),
                          market.forward)
    return PriceResult(price=price, modes_used=n_terms, iterations=0,
                       solver_residual=0.0,
                       elapsed=time.perf_counter() - start,
                       method="theta-representation")


def _sanity_clamp(price, forward):
    if price < -1e-6 * forward:
        raise PricingError(f"price {price} is materially negative")
    if price < 0.0:
        warnings.warn(f"clamping small negative price {price:.3e} to zero")
        return 0.0
    if price > forward:
        raise PricingError(
            f"price {price} exceeds the forward {forward}; numerical failure")
    return price


def choose_summation(tau_max, z_spacing):
    """Pick plain vs Cesaro summation for the final inverse series.

    When the total volatility clock is so short that the heat spread
    sqrt(2 tau(0)) stays below one z-node spacing, the solve sits
    effectively at the payoff time and the series behaves like a raw
    payoff reconstruction (Gibbs oscillation): average the partial sums.
    Otherwise the images are genuinely damped and the plain sum is the
    unbiased choice.
    """
    return "cesaro" if math.sqrt(2.0 * tau_max) < z_spacing else "plain"


def prepare_git(coefficients, contract, numerics, sigma0):
    """Build (context, system) once; reusable across strikes that share
    the same shape parameter, barrier, and maturity."""
    ctx = make_context(coefficients, contract, numerics.modes)
    system = lmvf.assemble_system(ctx, numerics, sigma0)
    return ctx, system


def price_git(coefficients, market, contract, numerics=None, summation="auto",
              prepared=None):
    """Full transform-engine price of the up-and-out call.

    Solves the per-mode collocation systems, evaluates every image at
    (tau(0), z0 = log sigma0 + g(0)), un-rescales, and sums the inverse
    series at the spot coordinate.  ``summation`` is "plain", "cesaro"
    or "auto" (tail-decay test; see :func:`choose_summation`).
    """
    start = time.perf_counter()
    if numerics is None:
        numerics = lmvf.LmvfNumerics()
    if not -1.0 < coefficients.beta < 0.0:
        raise UnsupportedConfigurationError("beta must lie in (-1, 0)")
    numerics = lmvf.resolve_epsilon(numerics, coefficients.beta,
                                    contract.strike, market.forward)
    if prepared is None:
        ctx, system = prepare_git(coefficients, contract, numerics,
                                  market.sigma)
    else:
        # the collocation matrices are strike-independent and reusable;
        # the context carries the strike coordinate and must match
        ctx, system = prepared
        prev = ctx.contract
        if (prev.maturity != contract.maturity
                or prev.barrier_at(0.0) != contract.barrier_at(0.0)
                or prev.barrier_at(contract.maturity)
                != contract.barrier_at(contract.maturity)):
            raise ValueError(
                "prepared system was assembled for a different barrier or "
                "maturity")
        if prev.strike != contract.strike:
            ctx = make_context(coefficients, contract, numerics.modes)
    T = contract.maturity
    y0 = ctx.y(0.0)
    x0 = ctx.x_of_forward(market.forward)
    if not 0.0 < x0 < y0:
        raise ContractError("spot must start strictly below the barrier")

    outcome = lmvf.iterate(system, ctx, numerics.modes,
                           tol=numerics.iteration_tol,
                           max_iter=numerics.max_iterations)
    tau0 = cf.tau_of_t(coefficients, 0.0, T)
    z0 = math.log(market.sigma) + cf.g_of_t(coefficients, 0.0, T)
    images = np.empty(numerics.modes)
    for i, sol in enumerate(outcome.solutions):
        val = lmvf.evaluate_image(sol, system, tau0, z0)
        images[i] = val * ctx.basis.ratios[i] if system.rescale else val

    if summation == "auto":
        zn = system.z_nodes
        spacing = float(zn[1] - zn[0]) if zn.size > 1 else math.inf
        summation = choose_summation(tau0, spacing)
    u0 = inverse_series(ctx, images, x0, 0.0, summation)
    price = price_to_contract_units(u0, cf.rate_integral(coefficients, 0.0, T))
    price = _sanity_clamp(price, market.forward)
    residual = max(sol.residual_norm for sol in outcome.solutions)
    return PriceResult(price=price, modes_used=numerics.modes,
                       iterations=outcome.iterations,
                       solver_residual=residual,
                       elapsed=time.perf_counter() - start, method="git")
