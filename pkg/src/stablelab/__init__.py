"""Numerical potential theory of symmetric alpha-stable processes.

Modules: ``geometry`` (domains, corkscrews, Stolz regions), ``kernels``
(closed-form ball kernels), ``sampler`` (walk-on-balls Monte Carlo and
conditioned chains), ``feynman_kac`` (nonlocal Feynman-Kac transforms),
``fatou_lab`` (relative Fatou limits of Martin integrals) and ``cli``.
"""
from .errors import StableLabError
from .kernels import BallSpec, StableParams
from .rng import MCEstimate, RngState

__version__ = "0.1.0"

__all__ = ["BallSpec", "MCEstimate", "RngState", "StableLabError", "StableParams", "__version__"]
