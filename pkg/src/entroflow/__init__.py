"""Entropic incompressible optimal transport on the flat torus.

A solver and verification harness for the entropy-regularized variational
model of incompressible fluids: minimize the relative entropy of a discrete
path law with respect to the reversible Brownian chain, under a prescribed
endpoint coupling and prescribed (by default uniform) time marginals.  The
package extracts the per-phase kinematics of the optimizer and the scalar
pressure field that acts as the Lagrange multiplier of incompressibility,
and checks the duality/envelope behaviour of the optimal value numerically.
"""

from .torus import GridSpec, HeatKernel, gradient, divergence, heat_kernel, make_grid, poisson_solve, semigroup_compose
from .entropy import Coupling, Density, TrajectoryFields, fisher_information, h_nu, kinetic_action, multiphase_h_nu, relative_entropy
from .path_measure import BridgeFactors, FactoredPathMeasure, bridge_factors, reference_measure
from .solver import MarginalTargets, SolverConfig, SolverReport, h_star, optimal_value, solve_bro

__all__ = [
    "GridSpec",
    "HeatKernel",
    "make_grid",
    "heat_kernel",
    "semigroup_compose",
    "gradient",
    "divergence",
    "poisson_solve",
    "Density",
    "Coupling",
    "TrajectoryFields",
    "relative_entropy",
    "kinetic_action",
    "fisher_information",
    "h_nu",
    "multiphase_h_nu",
    "FactoredPathMeasure",
    "BridgeFactors",
    "reference_measure",
    "bridge_factors",
    "SolverConfig",
    "MarginalTargets",
    "SolverReport",
    "solve_bro",
    "optimal_value",
    "h_star",
]

__version__ = "0.1.0"
