"""TV-regularized identification of the spatial source in a time-fractional diffusion equation.

P1 finite elements in space, the L1 scheme in time, and a linearized
primal-dual iteration with box constraints and a discrepancy stop.
"""
from .adjoint import ObservedData, adjoint_solve, misfit, misfit_gradient
from .errors import (
    AlignmentError, ConfigError, DivergenceError, InvalidArgument, StepConditionError, UndefinedRatio,
)
from .forward import Discretization, SourceGeneral, SourceSeparable, Trajectory, forward_solve, stability_check
from .fracstep import L1Scheme, TimeGrid, gamma, l1_weights
from .harness import ExperimentConfig, ResultRow, run_experiment
from .mesh_fem import Mesh, ObservationDomain, assemble_mass, assemble_stiffness, build_uniform_mesh
from .pdsolver import InverseProblem, PDConfig, PDState, estimate_forward_norm, pd_run, pd_step
from .tvreg import BoxBounds, project_ball, project_box, tv_value

__version__ = "0.1.0"
