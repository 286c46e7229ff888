"""Distributed pose graph optimization by majorization minimization.

Subpackages and modules
-----------------------
kernels     robust loss kernels (trivial, Huber, Welsch)
graph       poses, measurements, centralized and distributed pose graphs
objective   objective value, edge weights, Euclidean/Riemannian gradients
surrogate   decoupling surrogates G and H and their minimizers
solvers     MM-PGO, AMM-PGO* and AMM-PGO# iterations
netsim      synchronous neighbor bus with communication accounting
datasets    g2o I/O, partitioning, Cube generator, initializations
metrics     trace CSV and performance profiles
estimator   estimator-style front end
cli         command-line interface
"""

from .estimator import DistributedPGO
from .graph import DistributedPoseGraph, EdgeSet, Measurement, Pose, PoseGraph, Poses
from .kernels import Huber, LossKernel, Trivial, Welsch, parse_kernel
from .objective import euclidean_gradient, objective_value, riemannian_gradient_norm
from .solvers import Method, SolverConfig, run

__version__ = "0.1.0"

__all__ = [
    "DistributedPGO",
    "DistributedPoseGraph",
    "EdgeSet",
    "Huber",
    "LossKernel",
    "Measurement",
    "Method",
    "Pose",
    "PoseGraph",
    "Poses",
    "SolverConfig",
    "Trivial",
    "Welsch",
    "euclidean_gradient",
    "objective_value",
    "parse_kernel",
    "riemannian_gradient_norm",
    "run",
]
