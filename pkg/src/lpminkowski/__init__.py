"""Numerical L_p Minkowski problem on S^1 and S^2 via a Gauss curvature flow."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .spheregrid import SphereGrid, make_grid
from .convexbody import SupportField, NonConvexError, ball, ellipsoid
from .measures import DensityField, MeasureSpec, Subspace, check_hypothesis, mollify
from .flow import FlowConfig, FlowState, run
from .solver import SolveConfig, SolveReport, solve

__all__ = [
    "BACKEND", "SphereGrid", "make_grid", "SupportField", "NonConvexError", "ball",
    "ellipsoid", "DensityField", "MeasureSpec", "Subspace", "check_hypothesis", "mollify",
    "FlowConfig", "FlowState", "run", "SolveConfig", "SolveReport", "solve",
]
