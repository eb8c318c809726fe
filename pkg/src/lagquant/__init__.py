"""Quantization of Lagrangian torus fibrations on Bohr-Sommerfeld lattices.

Submodules: ``fields`` (fibered functions), ``hilbert`` (lattices and band
operators), ``quantizer`` (real-polarization quantizers), ``star`` (star-product
coefficients), ``toeplitz`` (Berezin-Toeplitz operators) and ``experiments``
(convergence scans behind the ``lagquant`` command).
"""
from .fields import (Bump, FiberedFunction, Gaussian, PolyGaussian, Trig, cos_theta, evaluate,
                     jet, multiply, poisson_bracket, pullback, real_from_modes, sin_theta,
                     single_mode)
from .hilbert import BandOperator, Lattice, band_norm_bound, op_norm
from .quantizer import (HorizontalField, PlaneCover, Scheme, TorusCover, WindowTooSmallError,
                        horizontal_phase, quantize, quantize_general, quantize_model,
                        quantize_torus)
from .star import (christoffel, expansion_residual, moyal_coefficient, star_coefficient_H,
                   theta_tensor)
from .toeplitz import (CoherentFrame, SiegelForm, bt_matrix_element, bt_operator,
                       dq_bt_distance, theta_bt_operator)

__version__ = "0.1.0"
