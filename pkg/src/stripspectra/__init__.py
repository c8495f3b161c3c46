"""Spectral numerics for bent and twisted strips over curves in R^{n+1}."""

__version__ = "0.1.0"

from .curves import Curve, CurvatureVector, SGrid, make_analytic_curve, synthesize_from_curvature
from .discretize import DiscreteForm, Mesh1D, Mesh2D, assemble_2d, assemble_effective_1d
from .effective import effective_potential, lambda_profile, projection_defect, thin_transform_data
from .eigensolve import ConvergenceError, SpectrumResult, lobpcg, smallest_eigs, solve_shifted
from .frames import Frame, build_rpaf
from .stripgeom import AssumptionError, StripModel, TwistProfile, make_strip, validate

__all__ = [
    "AssumptionError", "ConvergenceError", "CurvatureVector", "Curve", "DiscreteForm", "Frame",
    "Mesh1D", "Mesh2D", "SGrid", "SpectrumResult", "StripModel", "TwistProfile", "assemble_2d",
    "assemble_effective_1d", "build_rpaf", "effective_potential", "lambda_profile", "lobpcg",
    "make_analytic_curve", "make_strip", "projection_defect", "smallest_eigs", "solve_shifted",
    "synthesize_from_curvature", "thin_transform_data", "validate",
]
