"""Unbiased random features for stationary, possibly indefinite kernels.

The main entry points are the kernels in :mod:`gorf.kernels`, the feature
builders and :class:`GeneralizedRandomFeatures` in :mod:`gorf.features`,
and the variance tools in :mod:`gorf.variance`.
"""

from .baselines import RandomMaclaurin, TensorSketch
from .features import (
    FeatureModel,
    GeneralizedRandomFeatures,
    approx_gram,
    approx_kernel,
    build_gorf,
    build_grff,
    build_orf,
    build_rff,
    lift,
)
from .kernels import DeltaGaussian, Gaussian, PolynomialSphere, gram_matrix, kernel_eval
from .spectrum import spectrum_for

__version__ = "0.1.0"

__all__ = [
    "DeltaGaussian",
    "FeatureModel",
    "Gaussian",
    "GeneralizedRandomFeatures",
    "PolynomialSphere",
    "RandomMaclaurin",
    "TensorSketch",
    "approx_gram",
    "approx_kernel",
    "build_gorf",
    "build_grff",
    "build_orf",
    "build_rff",
    "gram_matrix",
    "kernel_eval",
    "lift",
    "spectrum_for",
]
