"""Command-line front end: config parsing, pricing/benchmark subcommands,
CSV and JSON emission.

Subcommands: price, price-fd, compare, converge, bench, zeros.  Every
subcommand takes --config <yaml> and --out <path>; unknown config keys
are hard errors so typos cannot silently change a run.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import coeffs as cf
from . import fdref, lmvf, pricer
from .bessel import bessel_zeros
from .transform import (BarrierContract, ContractError,
                        UnsupportedConfigurationError, inverse_series,
                        make_context, terminal_image)


class ConfigError(ValueError):
    pass


_METHODS = ("git", "analytic", "theta", "fd-1d", "fd-2d")

_MODEL_KEYS = {"representation", "beta", "gamma1", "gamma2", "kappa1",
               "kappa2", "r0", "rho0", "times", "gammas", "kappas", "rates",
               "rhos"}
_MARKET_KEYS = {"forward", "sigma"}
_CONTRACT_KEYS = {"strike", "strikes", "barrier", "barrier_growth",
                  "maturity", "maturities"}
_NUMERICS_KEYS = {"methods", "n_tau", "n_z", "z_halfwidth", "epsilon",
                  "quadrature_nodes", "modes", "solver", "solver_tol",
                  "max_iterations", "iteration_tol", "rescale",
                  "atm_extra_node", "summation", "analytic_terms",
                  "fd_nf", "fd_nsigma", "fd_dt", "fd_rannacher",
                  "fd_stretch", "converge_betas", "converge_eta",
                  "converge_max_terms"}
_OUTPUT_KEYS = {"format", "path"}


@dataclass
class RunConfig:
    """Validated run configuration (model/market/contract/numerics/output)."""

    coefficients: cf.ModelCoefficients
    market: cf.MarketState
    strikes: list
    barrier_level: float
    barrier_growth: float
    maturities: list
    methods: list
    numerics: lmvf.LmvfNumerics
    summation: str
    analytic_terms: int
    fd_nf: int
    fd_nsigma: int
    fd_dt: Optional[float]
    fd_rannacher: int
    fd_stretch: float
    converge_betas: list
    converge_eta: float
    converge_max_terms: int
    out_format: str
    out_path: Optional[str]

    def contract(self, strike, maturity):
        if self.barrier_growth != 0.0:
            level, growth = self.barrier_level, self.barrier_growth
            barrier = lambda t: level * math.exp(growth * t)
        else:
            barrier = self.barrier_level
        return BarrierContract(strike=strike, barrier=barrier,
                               maturity=maturity)


def _check_keys(section, mapping, allowed):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def _require(mapping, section, key):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in [{section}]")
    return mapping[key]


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_keys("top-level", raw, {"model", "market", "contract", "numerics",
                                   "output"})
    for section in ("model", "market", "contract"):
        if section not in raw:
            raise ConfigError(f"missing [{section}] section")
    model = raw["model"] or {}
    market = raw["market"] or {}
    contract = raw["contract"] or {}
    numerics = raw.get("numerics") or {}
    output = raw.get("output") or {}
    _check_keys("model", model, _MODEL_KEYS)
    _check_keys("market", market, _MARKET_KEYS)
    _check_keys("contract", contract, _CONTRACT_KEYS)
    _check_keys("numerics", numerics, _NUMERICS_KEYS)
    _check_keys("output", output, _OUTPUT_KEYS)

    rep = model.get("representation", cf.EXPONENTIAL)
    try:
        if rep == cf.EXPONENTIAL:
            coefficients = cf.ModelCoefficients.exponential(
                beta=_require(model, "model", "beta"),
                gamma1=_require(model, "model", "gamma1"),
                gamma2=model.get("gamma2", 0.0),
                kappa1=model.get("kappa1", 0.0),
                kappa2=model.get("kappa2", 0.0),
                r0=model.get("r0", 0.0),
                rho0=model.get("rho0", 0.0))
        elif rep == cf.PIECEWISE:
            coefficients = cf.ModelCoefficients.piecewise(
                beta=_require(model, "model", "beta"),
                times=_require(model, "model", "times"),
                gammas=_require(model, "model", "gammas"),
                kappas=_require(model, "model", "kappas"),
                rates=_require(model, "model", "rates"),
                rhos=model.get("rhos"))
        else:
            raise ConfigError(f"unknown representation {rep!r}")
        market_state = cf.MarketState(
            forward=float(_require(market, "market", "forward")),
            sigma=float(_require(market, "market", "sigma")))
    except cf.CoefficientError as exc:
        raise ConfigError(str(exc)) from exc

    strikes = contract.get("strikes")
    if strikes is None:
        strikes = [_require(contract, "contract", "strike")]
    strikes = [float(k) for k in strikes]
    maturities = contract.get("maturities")
    if maturities is None:
        maturities = [_require(contract, "contract", "maturity")]
    maturities = [float(t) for t in maturities]
    if not strikes or not maturities:
        raise ConfigError("strike and maturity lists must be non-empty")

    methods = numerics.get("methods", ["git"])
    if isinstance(methods, str):
        methods = [methods]
    for m in methods:
        if m not in _METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {_METHODS}")

    try:
        num = lmvf.LmvfNumerics(
            n_tau=int(numerics.get("n_tau", 10)),
            n_z=int(numerics.get("n_z", 20)),
            z_halfwidth=float(numerics.get("z_halfwidth", 0.5)),
            epsilon=(numerics.get("epsilon", "auto")
                     if isinstance(numerics.get("epsilon", "auto"), str)
                     else float(numerics.get("epsilon"))),
            quadrature_nodes=int(numerics.get("quadrature_nodes", 350)),
            modes=int(numerics.get("modes", 350)),
            solver=numerics.get("solver", "direct"),
            solver_tol=numerics.get("solver_tol"),
            max_iterations=int(numerics.get("max_iterations", 8)),
            iteration_tol=float(numerics.get("iteration_tol", 5e-3)),
            rescale=bool(numerics.get("rescale", True)),
            atm_extra_node=bool(numerics.get("atm_extra_node", False)))
    except lmvf.ConfigError as exc:
        raise ConfigError(str(exc)) from exc

    summation = numerics.get("summation", "auto")
    if summation not in ("auto", "plain", "cesaro"):
        raise ConfigError("summation must be auto, plain, or cesaro")
    out_format = output.get("format", "csv")
    if out_format not in ("csv", "json"):
        raise ConfigError("output format must be csv or json")

    return RunConfig(
        coefficients=coefficients, market=market_state, strikes=strikes,
        barrier_level=float(_require(contract, "contract", "barrier")),
        barrier_growth=float(contract.get("barrier_growth", 0.0)),
        maturities=maturities, methods=methods, numerics=num,
        summation=summation,
        analytic_terms=int(numerics.get("analytic_terms", 250)),
        fd_nf=int(numerics.get("fd_nf", 76)),
        fd_nsigma=int(numerics.get("fd_nsigma", 79)),
        fd_dt=(None if numerics.get("fd_dt") is None
               else float(numerics.get("fd_dt"))),
        fd_rannacher=int(numerics.get("fd_rannacher", 2)),
        fd_stretch=float(numerics.get("fd_stretch", fdref.DEFAULT_STRETCH)),
        converge_betas=[float(b) for b in numerics.get(
            "converge_betas", [-0.1, -0.4, -0.9])],
        converge_eta=float(numerics.get("converge_eta", 0.3)),
        converge_max_terms=int(numerics.get("converge_max_terms", 500)),
        out_format=out_format, out_path=output.get("path"))


def _is_gamma_time_dependent(co):
    if co.representation == cf.EXPONENTIAL:
        return co.gamma2 != 0.0
    return len(set(co.gammas)) > 1


def _check_capability(config, method):
    if method in ("analytic", "theta", "fd-1d"):
        if _is_gamma_time_dependent(config.coefficients):
            raise ConfigError(
                f"method {method!r} requires a constant volatility model "
                "(time-dependent gamma configured)")
        if config.barrier_growth != 0.0:
            raise ConfigError(f"method {method!r} requires a constant barrier")
    if method in ("fd-1d", "fd-2d") and config.barrier_growth != 0.0:
        raise ConfigError("finite-difference methods require a constant barrier")


def _price_one(config, method, strike, maturity, git_cache):
    co = config.coefficients
    mkt = config.market
    contract = config.contract(strike, maturity)
    if method == "git":
        num = lmvf.resolve_epsilon(config.numerics, co.beta, strike,
                                   mkt.forward)
        key = (num.epsilon, maturity)
        if key not in git_cache:
            git_cache[key] = pricer.prepare_git(co, contract, num, mkt.sigma)
        return pricer.price_git(co, mkt, contract, num,
                                summation=config.summation,
                                prepared=git_cache[key])
    if method == "analytic":
        rate = co.rate(0.0)
        return pricer.price_analytic_const_sigma(
            mkt, contract, rate, co.beta, config.analytic_terms)
    if method == "theta":
        rate = co.rate(0.0)
        return pricer.price_theta_representation(
            mkt, contract, rate, co.beta, config.analytic_terms)
    grid = fdref.build_grid(mkt, contract, config.fd_nf, config.fd_nsigma,
                            stretch=config.fd_stretch, dt=config.fd_dt,
                            rannacher_steps=config.fd_rannacher)
    if method == "fd-1d":
        return fdref.solve_fd_1d(mkt, contract, co.rate(0.0), co.beta, grid)
    return fdref.solve_fd_2d(co, mkt, contract, grid)


def _fmt(x):
    if x is None:
        return "NA"
    return f"{x:.12g}"


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_table(config, methods):
    """Price every (method, K, T) cell; failures become None prices."""
    rows = []
    failures = 0
    git_cache = {}
    for method in methods:
        _check_capability(config, method)
    for method in methods:
        for strike in config.strikes:
            for maturity in config.maturities:
                try:
                    res = _price_one(config, method, strike, maturity,
                                     git_cache)
                    rows.append((method, strike, maturity, res))
                except (pricer.PricingError, fdref.NumericalFailure,
                        lmvf.SolverError, lmvf.IterationError,
                        ContractError) as exc:
                    failures += 1
                    print(f"warning: {method} K={strike} T={maturity} "
                          f"failed: {exc}", file=sys.stderr)
                    rows.append((method, strike, maturity, None))
    return rows, failures


def cmd_price(config, methods=None):
    methods = methods or config.methods
    rows, failures = _run_table(config, methods)
    if all(r[3] is None for r in rows):
        print("error: every cell failed", file=sys.stderr)
        return 3
    if config.out_format == "json":
        payload = []
        for m, k, t, r in rows:
            entry = {"method": m, "strike": k, "maturity": t}
            entry.update(r.to_json() if r is not None else {"price": None})
            entry["method"] = m
            payload.append(entry)
        _emit(json.dumps(payload, indent=2) + "\n", config.out_path)
    else:
        buf = io.StringIO()
        buf.write("method,K,T,price,elapsed_s,modes,iterations,residual\n")
        for m, k, t, r in rows:
            if r is None:
                buf.write(f"{m},{_fmt(k)},{_fmt(t)},NA,NA,NA,NA,NA\n")
            else:
                buf.write(f"{m},{_fmt(k)},{_fmt(t)},{_fmt(r.price)},"
                          f"{r.elapsed:.4f},{r.modes_used},{r.iterations},"
                          f"{r.solver_residual:.3e}\n")
        _emit(buf.getvalue(), config.out_path)
    if failures:
        print(f"warning: {failures} cell(s) marked NA", file=sys.stderr)
    return 0


def cmd_price_fd(config, dump_surface=None):
    methods = [m for m in config.methods if m.startswith("fd-")] or ["fd-2d"]
    code = cmd_price(config, methods)
    if code == 0 and dump_surface:
        if len(config.strikes) != 1 or len(config.maturities) != 1:
            print("error: --dump-surface needs a single (K, T) pair",
                  file=sys.stderr)
            return 2
        contract = config.contract(config.strikes[0], config.maturities[0])
        grid = fdref.build_grid(config.market, contract, config.fd_nf,
                                config.fd_nsigma, stretch=config.fd_stretch,
                                dt=config.fd_dt,
                                rannacher_steps=config.fd_rannacher)
        _, f, s, values = fdref.solve_fd_2d(
            config.coefficients, config.market, contract, grid,
            return_surface=True)
        buf = io.StringIO()
        buf.write("f,sigma,price\n")
        for i, fi in enumerate(f):
            for q, sq in enumerate(s):
                buf.write(f"{_fmt(fi)},{_fmt(sq)},{_fmt(values[i, q])}\n")
        with open(dump_surface, "w") as fh:
            fh.write(buf.getvalue())
    return code


def cmd_compare(config):
    if len(config.methods) < 2:
        raise ConfigError("compare needs at least two methods")
    a_name, b_name = config.methods[0], config.methods[1]
    rows, failures = _run_table(config, [a_name, b_name])
    values = {(m, k, t): (r.price if r is not None else None)
              for m, k, t, r in rows}
    buf = io.StringIO()
    buf.write("K," + ",".join(_fmt(t) for t in config.maturities) + "\n")
    for k in config.strikes:
        cells = []
        for t in config.maturities:
            a = values[(a_name, k, t)]
            b = values[(b_name, k, t)]
            if a is None or b is None or a == 0.0:
                cells.append("NA")
            else:
                cells.append(f"{100.0 * (a - b) / a:.6g}")
        buf.write(_fmt(k) + "," + ",".join(cells) + "\n")
    _emit(buf.getvalue(), config.out_path)
    if failures:
        print(f"warning: {failures} cell(s) marked NA", file=sys.stderr)
    return 0


def _converge_payoff_error(config, beta, n_max):
    co = cf.ModelCoefficients.exponential(beta, 1.0, 0.0, 0.0, 0.0, 0.0)
    contract = config.contract(config.strikes[0], config.maturities[0])
    ctx = make_context(co, contract, n_max)
    T = contract.maturity
    y = ctx.y(T)
    x0 = ctx.x_of_forward(config.market.forward)
    target = max(config.market.forward - contract.strike, 0.0)
    images = np.array([terminal_image(ctx, m / y) for m in ctx.basis.zeros])
    out = []
    for n in range(10, n_max + 1, 10):
        plain = inverse_series(ctx, images[:n], x0, T, "plain")
        ces = inverse_series(ctx, images[:n], x0, T, "cesaro")
        out.append((n, 100.0 * (plain - target) / target,
                    100.0 * (ces - target) / target))
    return out


def cmd_converge(config):
    prefix = config.out_path or "converge"
    n_max = config.converge_max_terms
    lines_ratio = ["n,beta,r_n"]
    lines_partial = ["m,beta,z_m"]
    for beta in config.converge_betas:
        order = abs(0.5 / beta)
        basis = bessel_zeros(order, n_max)
        for n in range(1, n_max + 1):
            lines_ratio.append(
                f"{n},{_fmt(beta)},{_fmt(basis.ratios[n - 1])}")
        eta = config.converge_eta
        from .bessel import _jv
        terms = (_jv(order, basis.zeros * eta)
                 / (basis.j_plus_one * basis.zeros))
        partial = np.cumsum(terms)
        for m in range(1, n_max + 1):
            lines_partial.append(f"{m},{_fmt(beta)},{_fmt(partial[m - 1])}")
    lines_err = ["n_terms,beta,plain_rel_err_pct,cesaro_rel_err_pct"]
    for beta in config.converge_betas:
        for n, p, c in _converge_payoff_error(config, beta, n_max):
            lines_err.append(f"{n},{_fmt(beta)},{_fmt(p)},{_fmt(c)}")
    with open(prefix + "_ratio.csv", "w") as fh:
        fh.write("\n".join(lines_ratio) + "\n")
    with open(prefix + "_partial_sum.csv", "w") as fh:
        fh.write("\n".join(lines_partial) + "\n")
    with open(prefix + "_payoff_error.csv", "w") as fh:
        fh.write("\n".join(lines_err) + "\n")
    return 0


def cmd_bench(config):
    buf = io.StringIO()
    buf.write(f"# platform: {platform.platform()}\n")
    buf.write(f"# python: {platform.python_version()} numpy: {np.__version__}\n")
    buf.write("method,K,T,elapsed_s\n")
    git_cache = {}
    for method in config.methods:
        _check_capability(config, method)
        # warm-up on the first cell, excluded from timings
        try:
            _price_one(config, method, config.strikes[0],
                       config.maturities[0], dict())
        except Exception as exc:  # warm-up failures reported once
            print(f"warning: warm-up {method} failed: {exc}", file=sys.stderr)
        for strike in config.strikes:
            for maturity in config.maturities:
                t0 = time.perf_counter()
                try:
                    _price_one(config, method, strike, maturity, git_cache)
                    elapsed = time.perf_counter() - t0
                    buf.write(f"{method},{_fmt(strike)},{_fmt(maturity)},"
                              f"{elapsed:.4f}\n")
                except Exception:
                    buf.write(f"{method},{_fmt(strike)},{_fmt(maturity)},NA\n")
    _emit(buf.getvalue(), config.out_path)
    return 0


def cmd_zeros(config):
    order = abs(0.5 / config.coefficients.beta)
    basis = bessel_zeros(order, config.numerics.modes)
    buf = io.StringIO()
    buf.write("n,mu_n,j_plus_one,r_n\n")
    for n in range(basis.count):
        buf.write(f"{n + 1},{_fmt(basis.zeros[n])},"
                  f"{_fmt(basis.j_plus_one[n])},{_fmt(basis.ratios[n])}\n")
    _emit(buf.getvalue(), config.out_path)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lambdasabr",
        description="Barrier-option pricing under the time-dependent "
                    "lambda-SABR model")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("price", "price-fd", "compare", "converge", "bench", "zeros"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        if name == "price-fd":
            p.add_argument("--dump-surface", default=None)
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.out is not None:
            config.out_path = args.out
        if args.command == "price":
            return cmd_price(config)
        if args.command == "price-fd":
            return cmd_price_fd(config, args.dump_surface)
        if args.command == "compare":
            return cmd_compare(config)
        if args.command == "converge":
            return cmd_converge(config)
        if args.command == "bench":
            return cmd_bench(config)
        return cmd_zeros(config)
    except (ConfigError, cf.CoefficientError,
            UnsupportedConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (pricer.PricingError, fdref.NumericalFailure, lmvf.SolverError,
            lmvf.IterationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
