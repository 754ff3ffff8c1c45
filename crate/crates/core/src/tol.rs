//! Centralized numeric tolerances.
//!
//! Every tolerance that shapes observable behavior lives here with a note on
//! why it has the value it has. Code elsewhere refers to these constants
//! instead of scattering magic numbers.

/// Default half-width of the interface band: |psi(x)| <= ETA_H classifies as H.
/// Small enough that only points deliberately placed on the interface (by the
/// Newton projection, which drives |psi| to ~1e-12) land in the band; large
/// enough to absorb round-off from evaluating psi.
pub const ETA_H: f64 = 1e-9;

/// Interface dynamics must satisfy |<f_H, grad psi>| / |grad psi| <= this at
/// every sampled point. 1e-8 leaves two digits of slack over ETA_H so that a
/// trajectory following tangent dynamics stays inside the band over unit time.
pub const TANGENCY_TOL: f64 = 1e-8;

/// |grad psi| below this is treated as a degenerate normal.
pub const DEGENERATE_NORMAL_TOL: f64 = 1e-12;

/// Newton projection onto the interface stops when |psi| falls below this.
pub const PROJECTION_TOL: f64 = 1e-12;

/// Newton projection iteration cap.
pub const PROJECTION_MAX_ITER: usize = 20;

/// Projected-gradient ascent on the Hamiltonian refines until the projected
/// control-gradient norm drops below this. The Hamiltonian is evaluated to
/// full precision, so the argmax can be located essentially to round-off.
pub const HAMILTONIAN_GRAD_TOL: f64 = 1e-10;

/// Number of multi-start initializations for the Hamiltonian maximizer:
/// box corners (up to 8), the box center, and uniform-random fills.
pub const HAMILTONIAN_STARTS: usize = 16;

/// Equality-constraint residual (sup norm) at which a structure solve counts
/// as converged. Junction and endpoint mismatches below 1e-6 are invisible at
/// the 2e-3 verification tolerances with two orders of margin.
pub const CONSTRAINT_TOL: f64 = 1e-6;

/// Residual at which a solve still counts as feasible-but-unconverged
/// (MAX_ITER); anything above this is INFEASIBLE.
pub const FEASIBLE_TOL: f64 = 1e-4;

/// Cost window within which two structures count as tied; ties go to the
/// shorter word, then to enumeration order.
pub const TIE_TOL: f64 = 1e-9;

/// Central finite-difference step for shooting gradients.
pub const FD_STEP: f64 = 1e-6;

/// Augmented-Lagrangian penalty growth factor per outer iteration.
pub const PENALTY_GROWTH: f64 = 10.0;

/// Cap on outer augmented-Lagrangian iterations.
pub const OUTER_MAX_ITER: usize = 12;

/// Pseudo-time clock bounds: every arc's clock (time-dilation) variable lives
/// in [CLOCK_MIN, CLOCK_MAX]. The lower bound keeps arcs from collapsing to
/// zero duration (a degenerate reparameterization); the upper bound keeps the
/// lifted dynamics Lipschitz.
pub const CLOCK_MIN: f64 = 1e-3;
pub const CLOCK_MAX: f64 = 1e3;

/// Junction transversality guard: |<grad psi, f>| / |grad psi| at or below
/// this flags a tangential crossing, where the jump formulas divide by ~0.
pub const TANGENTIAL_CROSSING_TOL: f64 = 1e-6;

/// Verification tolerances for solver-produced trajectories: Hamiltonian
/// continuity gaps and costate-jump residuals inherit the shooting
/// discretization error, so they are checked at 2e-3.
pub const VERIFY_TOL_SOLVER: f64 = 2e-3;

/// Verification tolerance for analytically constructed trajectories, where
/// the only error sources are round-off and the quadrature.
pub const VERIFY_TOL_ANALYTIC: f64 = 1e-9;

/// Jump-vector tangential residual tolerance (the jump must be parallel to
/// grad psi up to this, componentwise).
pub const JUMP_TANGENTIAL_TOL: f64 = 1e-3;

/// Finite-difference step for value-sensitivity checks. Larger than FD_STEP
/// because each sample is a full re-solve whose own error must be divided
/// down by the step.
pub const SENSITIVITY_FD_STEP: f64 = 1e-3;

/// Sensitivity comparisons (finite differences of U against costates) pass at
/// this tolerance.
pub const SENSITIVITY_TOL: f64 = 1e-3;

/// Grid solver: sweeps stop when the sup-norm change of a full sweep drops
/// below this.
pub const HJB_SUP_TOL: f64 = 1e-8;

/// Grid solver sweep cap.
pub const HJB_MAX_SWEEPS: usize = 100_000;

/// Control samples per region for the grid solver's minimization.
pub const HJB_CONTROL_SAMPLES: usize = 64;

/// Grid-vs-solver value comparisons pass at this tolerance (first-order
/// scheme on the coarsest acceptance grid).
pub const HJB_COMPARE_TOL: f64 = 5e-2;

/// Terminal-costate least squares: candidates whose residual is within this
/// of the best are considered tied and the smallest-norm one wins (resolves
/// the scale-degenerate fixed-horizon case without biasing pinned cases).
pub const COSTATE_LS_TIE: f64 = 1e-10;

/// State blow-up guard for the integrator.
pub const BLOWUP_NORM: f64 = 1e9;

/// Seeded multi-start count per structure solve: one deterministic base
/// start plus seven randomized perturbations of it.
pub const MULTI_STARTS: usize = 8;

/// A clock node is reported as bound-active when it sits within this of
/// CLOCK_MIN or CLOCK_MAX at the solution.
pub const CLOCK_ACTIVE_TOL: f64 = 1e-9;

/// A node whose clock is below CLOCK_MIN times this factor is treated as a
/// degenerate (vanishing-duration) node by the adjoint verifier. The solver
/// parks clocks exactly at the floor when the optimal parameterization wants
/// a node gone; the control stored there carries no time measure, so
/// pointwise optimality conditions do not apply to it.
pub const CLOCK_DEGENERATE_FACTOR: f64 = 1.5;

/// Terminal-costate fits whose rms residual exceeds this mark the extremal
/// as abnormal-suspect and trigger a refit with p0 = 0.
pub const ABNORMAL_RESIDUAL: f64 = 1e-3;

/// Multi-start count for the terminal-costate least-squares fit.
pub const COSTATE_FIT_STARTS: usize = 16;
