"""Heat kernels, critical exponents and Gaussian-bound checks on plane wedges."""
from .exponents import (
    SpdMatrix2,
    kappa_tilde_closed_form,
    lambda_c_constant,
    lambda_c_heat_2d,
    first_dirichlet_eigenvalue_cap,
)
from .geometry import Point2, Wedge2D, SphericalCap3D
from .kernels import heat_kernel_wedge, heat_kernel_halfplane, heat_kernel_free

__version__ = "0.1.0"

__all__ = [
    "SpdMatrix2",
    "kappa_tilde_closed_form",
    "lambda_c_constant",
    "lambda_c_heat_2d",
    "first_dirichlet_eigenvalue_cap",
    "Point2",
    "Wedge2D",
    "SphericalCap3D",
    "heat_kernel_wedge",
    "heat_kernel_halfplane",
    "heat_kernel_free",
]
