"""Render one figure kind from its CSV contract.

Supported kinds and their expected headers:

    ratio          n,beta,r_n               (log-|ratio| decay per beta)
    partial_sum    m,beta,z_m               (series flattening per beta)
    payoff_error   n_terms,beta,plain_rel_err_pct,cesaro_rel_err_pct
    price_fan      method,K,T,price,...     (price vs maturity per strike)
    surface        f,sigma,price            (price surface)

Rendering is read-only over its input; an empty or mismatched CSV is an
error, never a blank figure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class SchemaError(ValueError):
    """Input CSV does not match the figure kind's header contract."""


_HEADERS = {
    "ratio": ["n", "beta", "r_n"],
    "partial_sum": ["m", "beta", "z_m"],
    "payoff_error": ["n_terms", "beta", "plain_rel_err_pct",
                     "cesaro_rel_err_pct"],
    "price_fan": ["method", "K", "T", "price"],
    "surface": ["f", "sigma", "price"],
}


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    figure_kind: str
    output_image: str

    def __post_init__(self):
        if self.figure_kind not in _HEADERS:
            raise SchemaError(f"unknown figure kind {self.figure_kind!r}")


def _read_rows(spec):
    path = Path(spec.input_csv)
    if not path.exists():
        raise SchemaError(f"input {spec.input_csv} does not exist")
    with path.open() as fh:
        # tolerate comment lines (the bench command writes them)
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    need = _HEADERS[spec.figure_kind]
    got = reader.fieldnames or []
    if got[:len(need)] != need and set(need) - set(got):
        raise SchemaError(
            f"{spec.figure_kind} needs columns {need}, found {got}")
    rows = [r for r in reader if any(v not in (None, "") for v in r.values())]
    if not rows:
        raise SchemaError(f"{spec.input_csv} has no data rows")
    return rows


def _by_group(rows, key):
    groups = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return groups


def _plot_ratio(rows, ax):
    for beta, grp in sorted(_by_group(rows, "beta").items()):
        n = np.array([float(r["n"]) for r in grp])
        vals = np.abs([float(r["r_n"]) for r in grp])
        ax.semilogy(n, vals, label=f"beta = {beta}")
    ax.set_xlabel("n")
    ax.set_ylabel("|ratio|")
    ax.set_title("Basis scaling ratio decay")


def _plot_partial_sum(rows, ax):
    for beta, grp in sorted(_by_group(rows, "beta").items()):
        m = np.array([float(r["m"]) for r in grp])
        z = np.array([float(r["z_m"]) for r in grp])
        ax.plot(m, z, label=f"beta = {beta}")
    ax.set_xlabel("M")
    ax.set_ylabel("partial sum")
    ax.set_title("Series partial-sum flattening")


def _plot_payoff_error(rows, ax):
    for beta, grp in sorted(_by_group(rows, "beta").items()):
        n = np.array([float(r["n_terms"]) for r in grp])
        plain = np.array([float(r["plain_rel_err_pct"]) for r in grp])
        ces = np.array([float(r["cesaro_rel_err_pct"]) for r in grp])
        ax.plot(n, plain, linestyle="--", label=f"plain, beta = {beta}")
        ax.plot(n, ces, label=f"cesaro, beta = {beta}")
    ax.axhline(0.0, color="k", linewidth=0.5)
    ax.set_xlabel("terms")
    ax.set_ylabel("relative error, %")
    ax.set_title("Payoff reconstruction error")


def _plot_price_fan(rows, ax):
    rows = [r for r in rows if r["price"] not in ("NA", "", None)]
    if not rows:
        raise SchemaError("price fan input holds no priced cells")
    for (method, strike), grp in sorted(
            _by_group([dict(r, _k=(r["method"], r["K"])) for r in rows],
                      "_k").items()):
        grp = sorted(grp, key=lambda r: float(r["T"]))
        t = [float(r["T"]) for r in grp]
        p = [float(r["price"]) for r in grp]
        ax.plot(t, p, marker="o", markersize=3,
                label=f"{method}, K = {strike}")
    ax.set_xlabel("maturity, years")
    ax.set_ylabel("price")
    ax.set_title("Knock-out call prices")


def _plot_surface(rows, fig, ax):
    f = sorted({float(r["f"]) for r in rows})
    s = sorted({float(r["sigma"]) for r in rows})
    grid = np.full((len(f), len(s)), np.nan)
    fi = {v: i for i, v in enumerate(f)}
    si = {v: i for i, v in enumerate(s)}
    for r in rows:
        grid[fi[float(r["f"])], si[float(r["sigma"])]] = float(r["price"])
    if np.isnan(grid).any():
        raise SchemaError("surface input is not a full (f, sigma) grid")
    mesh = ax.pcolormesh(np.array(s), np.array(f), grid, shading="auto")
    fig.colorbar(mesh, ax=ax, label="price")
    ax.set_xlabel("sigma")
    ax.set_ylabel("forward")
    ax.set_title("Knock-out call price surface")


def render(spec):
    """Write the figure for ``spec``; returns 0 on success, 2 on schema
    problems (matching the CLI exit-code convention)."""
    try:
        rows = _read_rows(spec)
        fig, ax = plt.subplots(figsize=(7.0, 4.6), dpi=130)
        if spec.figure_kind == "ratio":
            _plot_ratio(rows, ax)
        elif spec.figure_kind == "partial_sum":
            _plot_partial_sum(rows, ax)
        elif spec.figure_kind == "payoff_error":
            _plot_payoff_error(rows, ax)
        elif spec.figure_kind == "price_fan":
            _plot_price_fan(rows, ax)
        else:
            _plot_surface(rows, fig, ax)
        if spec.figure_kind != "surface":
            ax.legend(fontsize=8)
            ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(spec.output_image)
        plt.close(fig)
        return 0
    except SchemaError as exc:
        import sys
        print(f"error: {exc}", file=sys.stderr)
        plt.close("all")
        return 2
