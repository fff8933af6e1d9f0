"""Discrete approximations of Gaussians and Gaussian mixtures with certified
2-Wasserstein error bounds."""

from .discretize import (QuantizationResult, W2Certificate, discretize, discretize_gaussian_cross,
                         discretize_gaussian_grid, discretize_mixture, weighted_kmeans)
from .distributions import (DiscreteDistribution, GaussianComponent, GaussianMixture, GridDiscrete,
                            SpectralDecomposition, log_density_grad_hess, mixture_moments, spectral)
from .errors import GmquantError, InputError, MathError
from .generate import (ModeCluster, cluster_modes, generate_scheme, generate_scheme_gaussian,
                       generate_scheme_mixture, homogeneity_check, laplace_approximation, select_layout)
from .quantize1d import (LookupTable1D, Quantizer1D, build_table, cell_cost, cell_prob, default_table,
                         load_table, optimal_quantizer, save_table)
from .schemes import Axes, CrossScheme, GridScheme, SchemeEntry, SchemeSet, alignment_check

__all__ = [
    "Axes", "CrossScheme", "DiscreteDistribution", "GaussianComponent", "GaussianMixture", "GmquantError",
    "GridDiscrete", "GridScheme", "InputError", "LookupTable1D", "MathError", "ModeCluster",
    "QuantizationResult", "Quantizer1D", "SchemeEntry", "SchemeSet", "SpectralDecomposition", "W2Certificate",
    "alignment_check", "build_table", "cell_cost", "cell_prob", "cluster_modes", "default_table", "discretize",
    "discretize_gaussian_cross", "discretize_gaussian_grid", "discretize_mixture", "generate_scheme",
    "generate_scheme_gaussian", "generate_scheme_mixture", "homogeneity_check", "laplace_approximation",
    "load_table", "log_density_grad_hess", "mixture_moments", "optimal_quantizer", "save_table", "select_layout",
    "spectral", "weighted_kmeans",
]
