"""One entry point per figure kind, each taking --input/--output."""

import argparse
import sys

from .render import FigureSpec, render


def _run(kind, argv=None):
    parser = argparse.ArgumentParser(prog=f"plot-{kind.replace('_', '-')}")
    parser.add_argument("--input", required=True, help="source CSV")
    parser.add_argument("--output", required=True, help="image file to write")
    args = parser.parse_args(argv)
    return render(FigureSpec(input_csv=args.input, figure_kind=kind,
                             output_image=args.output))


def main_ratio(argv=None):
    return _run("ratio", argv)


def main_partial_sum(argv=None):
    return _run("partial_sum", argv)


def main_payoff_error(argv=None):
    return _run("payoff_error", argv)


def main_price_fan(argv=None):
    return _run("price_fan", argv)


def main_surface(argv=None):
    return _run("surface", argv)


if __name__ == "__main__":
    sys.exit(_run(sys.argv[1], sys.argv[2:]))
