"""Numerical bifurcation loops for Neumann problems with indefinite concave-convex nonlinearities."""
from .mesh import ConfigError, Frame, Grid, ProblemParams, build_grid, check_hypotheses, make_weights, sample_weights
from .spectra import parameter_cap, principal_eigenpair_neumann
from .system import Problem, SolutionPoint, cstar, newton_solve

__all__ = [
    "ConfigError", "Frame", "Grid", "ProblemParams", "build_grid", "check_hypotheses", "make_weights",
    "sample_weights", "parameter_cap", "principal_eigenpair_neumann", "Problem", "SolutionPoint", "cstar",
    "newton_solve",
]
