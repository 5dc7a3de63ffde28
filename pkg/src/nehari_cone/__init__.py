"""Radial nondecreasing solutions of a supercritical Neumann p-Laplacian problem, 1 < p < 2."""
from .energy import EnergyModel, NehariProjectionError
from .flow import FlowState, NewtonError, descend, dirichlet_limit_profile, solve_T, tilde_T
from .mountain_pass import PathSurface, choose_box, estimate_dq, miranda_check, mountain_pass, refine_vq
from .nehari import SolutionRecord, asymptotic_study, check_local_min_at_1, minimize_on_nehari
from .nonlinearity import TruncatedNonlinearity
from .params import (
    ParameterError,
    ProblemParams,
    RadialGrid,
    SolverConfig,
    cone_project,
    in_cone,
    integrate,
    make_params,
)
from .shooting import Branch, ShotResult, find_neumann_roots, shoot, solve_G, trace_branch

__version__ = "0.1.0"
