"""Tracking-free MSD estimation from microscopy stacks.

Submodules
----------
stackio    image stack / table I/O and normalization
simulate   stochastic particle models, video rendering, closed-form MSDs
spectral   FFT rings, image structure functions, direct-inversion baseline
toeplitz   Levinson-Durbin engine for Toeplitz Gaussian densities
gpr        Matern-5/2 Gaussian process interpolation
estimator  marginal-likelihood MSD estimation with uncertainty
rheology   generalized Stokes-Einstein moduli and MSD smoothing
cli        simulate / analyze / moduli subcommands
"""

__version__ = "0.1.0"

from .curves import ModuliCurve, MsdCurve  # noqa: E402,F401
from .estimator import MsdEstimate, SubsampleSpec, optimize, rmse_log10  # noqa: E402,F401
from .rheology import MaterialSpec, gser, log_slope, mc_moduli  # noqa: E402,F401
from .simulate import (  # noqa: E402,F401
    BrownianModel,
    FractionalBrownianModel,
    OrnsteinUhlenbeckModel,
    OuFbmModel,
    RenderSpec,
    simulate_stack,
    true_msd,
)
from .spectral import ddm_uq_baseline, fft_stack, structure_function  # noqa: E402,F401
from .stackio import ImageStack, normalize, read_stack, write_stack  # noqa: E402,F401
