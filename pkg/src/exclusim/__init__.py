"""exclusim: kinetic Monte Carlo and numerical verification for the
symmetric long-jump exclusion process with a slow hyperplane barrier.

The package simulates the accelerated process exactly (per-particle Poisson
clocks with thinning), measures empirical pairings and martingale
functionals on trajectories, verifies the discrete-to-continuum operator
convergences behind the hydrodynamic limit, and compares Monte Carlo output
against closed-form heat-equation references with or without Neumann
decoupling at the hyperplane.
"""

from .model import (
    BarrierSpec,
    BondKind,
    JumpKernel,
    LatticeBox,
    ModelConstants,
    bond_class,
    bond_rate_factor,
    in_region_R0,
    jump_probability,
    kappa_gamma,
    normalization_constant,
    sigma_squared,
    theta,
)
from .pde import (
    AnalyticSolution,
    Equation,
    PDESelector,
    Profile,
    UnsupportedRegimeError,
    heat_solution_free,
    heat_solution_neumann,
    select_hydrodynamic_pde,
    weak_residual_dif,
    weak_residual_neu,
)
from .sampling import DisplacementTable, build_displacement_table, replica_rng, sample_displacement
from .simulation import Configuration, ExclusionModel, HookSpec, Trajectory, init_from_profile, simulate, step
from .testfunctions import TestFunctionPair, TimePoly, discontinuous_pair, neumann_pair, smooth_pair

__version__ = "0.1.0"
