"""Barrier-option pricing under the time-dependent lambda-SABR model.

Semi-analytical Fourier-Bessel pricing engine (transform + collocation
solver for the underlying Volterra-Fredholm equation), an analytic
constant-volatility benchmark, and finite-difference reference solvers.
"""

from .coeffs import MarketState, ModelCoefficients
from .transform import BarrierContract

__all__ = ["BarrierContract", "MarketState", "ModelCoefficients"]
__version__ = "0.1.0"
