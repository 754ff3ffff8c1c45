//! Solver and verifier for regional optimal control problems: deterministic
//! control systems whose dynamics and running cost switch across a smooth
//! interface, including motion along the interface itself.
//!
//! The pipeline:
//!
//! 1. Describe a problem ([`problem::RegionalProblem`]) with per-region
//!    dynamics in a small expression language ([`expr`]) and a smooth
//!    interface ([`geometry::Interface`]).
//! 2. Enumerate candidate trajectory structures ([`structures`]) — words over
//!    {1, H, 2} describing the region sequence.
//! 3. Lift each structure to a classical multi-arc problem on a fixed
//!    pseudo-time grid ([`lift`]) and solve it by direct shooting with an
//!    augmented Lagrangian outer loop ([`solve`]).
//! 4. Verify necessary optimality conditions along the winner
//!    ([`pmp`]): Hamiltonian continuity, adjoint jumps at interface
//!    junctions, and value sensitivities.
//! 5. Cross-check the value against an independent grid solver ([`hjb`]) or,
//!    for the tramway family, against closed-form results
//!    ([`tramway`]).

pub mod error;
pub mod expr;
pub mod geometry;
pub mod hjb;
pub mod lift;
pub mod pmp;
pub mod problem;
pub mod solve;
pub mod structures;
pub mod tol;
pub mod tramway;

pub use error::{Error, Result};
pub use expr::{Expr, Var};
pub use geometry::{Interface, RegionLabel};
pub use hjb::{compare, solve_grid, GridDomain, GridValueFunction, HjbComparison, SweepMode, TargetBall};
pub use lift::{pullback_time, ArcTrajectory, ConstraintBlock, LiftedProblem};
pub use pmp::{
    hamiltonian_constancy, reconstruct_adjoint, verify_junctions, verify_sensitivity, AdjointArc,
    AdjointSolution, ConstancyReport, JunctionJump, JunctionReport, SensitivityReport,
};
pub use problem::{
    Bounds, ControlSet, CostMode, HamiltonianEval, RegionDynamics, RegionalProblem, TerminalTime,
};
pub use solve::{
    integrate_arc, solve_regional, solve_structure, ArcGeometry, ArcResult, ConvergenceReport,
    Discretization, RegionalSolution, SolveStatus, StructureSolution,
};
pub use structures::{enumerate, StructureWord};
pub use tramway::{TramwayInstance, TramwayOptimal};
