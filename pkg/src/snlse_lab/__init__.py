"""Spectral simulation and benchmark harness for the stochastic cubic
Schroedinger equation with additive Q-Wiener noise on the torus."""

from .spectral import (
    GridMismatchError,
    SobolevIndex,
    SpectralGrid,
    SpectralState,
    add_states,
    conjugate_state,
    forward_transform,
    free_group_apply,
    phi1_operator_apply,
    phi1_scalar,
    pointwise_product,
    project_low_modes,
    scale_state,
    smooth_rational_coeffs,
    sobolev_norm,
)
from .noise import BrownianPath, QWienerSpec, exact_convolution_sample, sample_path, wiener_increment
from .integrators import (
    EXACT_LINEAR,
    SLI1,
    SNRLI1,
    DivergenceError,
    SchemeParams,
    Trajectory,
    exact_linear_step,
    g_term,
    h_term,
    integrate,
    sli1_step,
    snrli1_step,
    snrli1_twisted_step,
)

__version__ = "0.1.0"
