"""Figure regeneration from the pricing engine's CSV outputs.

The scripts are decoupled from the engine on purpose: they read the CSV
contracts of the CLI subcommands and never recompute numerics.
"""

from .render import FigureSpec, SchemaError, render

__all__ = ["FigureSpec", "SchemaError", "render"]
