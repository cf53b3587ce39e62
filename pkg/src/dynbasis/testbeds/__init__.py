"""Exactly solvable and chaotic testbeds."""

from .advection import AdvectionConfig, generate_advection_series
from .kernels import KernelSpec, kl_decompose_kernel, sample_random_field
from .ks import KsConfig, generate_ks_series, ks_solve
from .quadrature import gauss_legendre, legendre

__all__ = [
    "AdvectionConfig",
    "KernelSpec",
    "KsConfig",
    "gauss_legendre",
    "generate_advection_series",
    "generate_ks_series",
    "kl_decompose_kernel",
    "ks_solve",
    "legendre",
    "sample_random_field",
]
