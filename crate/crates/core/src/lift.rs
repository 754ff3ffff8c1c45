//! Lifting a structure word to a classical multi-arc problem.
//!
//! Every arc of a structure word gets its own copy of the state on a shared
//! pseudo-time interval [0, 1], plus a clock variable `rho_k` that recovers
//! original time. The clock's derivative is an extra control `w_k` (the time
//! dilation), bounded in `[CLOCK_MIN, CLOCK_MAX]` so each arc is a genuine
//! increasing time reparameterization with a minimum duration. Arc dynamics
//! become `Y_k' = f(Y_k, v_k) * w_k`, `rho_k' = w_k`, and the Bolza integrand
//! becomes `l(Y_k, v_k) * w_k`, so costs are preserved exactly under the
//! reparameterization.
//!
//! Junctions between consecutive arcs impose state and clock continuity plus
//! interface membership `Psi = 0` (every transition in a {1, H, 2} word
//! touches the interface: entering H, leaving H, or crossing it
//! transversally). H arcs additionally stay on the interface pointwise; the
//! integrator enforces that invariance by Newton re-projection each step
//! rather than by an explicit constraint row.

use crate::error::Result;
use crate::geometry::RegionLabel;
use crate::problem::{RegionDynamics, RegionalProblem};
use crate::structures::StructureWord;
use crate::tol;
use serde::{Deserialize, Serialize};

/// Pseudo-time horizon start. Fixed to remove a gauge freedom.
pub const PSEUDO_T0: f64 = 0.0;
/// Pseudo-time horizon end.
pub const PSEUDO_T1: f64 = 1.0;

/// One constraint block of the lifted problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintBlock {
    /// `Y_k(T1) = Y_{k+1}(T0)` and `rho_k(T1) = rho_{k+1}(T0)` at junction
    /// `junction` (0-based index of the left arc).
    JunctionContinuity { junction: usize },
    /// `Psi(Y_k(tau)) = 0` for all tau along H arc `arc`.
    InterfaceInvariance { arc: usize },
    /// `Psi(Y_k(T1)) = 0` at junction `junction`.
    InterfaceMembership { junction: usize },
}

/// The duplicated classical problem for one structure word.
#[derive(Debug, Clone)]
pub struct LiftedProblem<'a> {
    problem: &'a RegionalProblem,
    pub word: StructureWord,
    blocks: Vec<ConstraintBlock>,
    /// Time-dilation control bounds applied to every arc clock.
    pub clock_lo: f64,
    pub clock_hi: f64,
}

impl<'a> LiftedProblem<'a> {
    /// Build the lift, validating the word against the boundary
    /// classifications of the problem.
    pub fn build(problem: &'a RegionalProblem, word: StructureWord) -> Result<Self> {
        let start = problem.interface.classify(&problem.x0)?;
        let end = problem.interface.classify(&problem.xf)?;
        word.validate_for(start, end)?;
        let k = word.arc_count();
        let mut blocks = Vec::new();
        for j in 0..k.saturating_sub(1) {
            blocks.push(ConstraintBlock::JunctionContinuity { junction: j });
        }
        for (i, &label) in word.labels().iter().enumerate() {
            if label == RegionLabel::H {
                blocks.push(ConstraintBlock::InterfaceInvariance { arc: i });
            }
        }
        for j in 0..k.saturating_sub(1) {
            blocks.push(ConstraintBlock::InterfaceMembership { junction: j });
        }
        Ok(LiftedProblem {
            problem,
            word,
            blocks,
            clock_lo: tol::CLOCK_MIN,
            clock_hi: tol::CLOCK_MAX,
        })
    }

    pub fn problem(&self) -> &RegionalProblem {
        self.problem
    }

    pub fn word(&self) -> &StructureWord {
        &self.word
    }

    pub fn arc_count(&self) -> usize {
        self.word.arc_count()
    }

    /// Lifted state dimension: per arc, the state copy plus its clock.
    pub fn lifted_dim(&self) -> usize {
        self.arc_count() * (self.problem.n + 1)
    }

    pub fn label(&self, arc: usize) -> RegionLabel {
        self.word.labels()[arc]
    }

    pub fn dynamics(&self, arc: usize) -> &RegionDynamics {
        self.problem.dynamics(self.label(arc))
    }

    /// All constraint blocks (continuity, invariance, membership).
    pub fn blocks(&self) -> &[ConstraintBlock] {
        &self.blocks
    }

    /// Equality blocks tying arcs together: continuity at each junction plus
    /// the pointwise interface invariance of each H arc.
    pub fn junction_equality_blocks(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| {
                matches!(
                    b,
                    ConstraintBlock::JunctionContinuity { .. }
                        | ConstraintBlock::InterfaceInvariance { .. }
                )
            })
            .count()
    }

    /// Scalar interface-membership constraints `Psi(Y_k(T1)) = 0`, one per
    /// junction — every transition touches the interface.
    pub fn membership_constraint_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b, ConstraintBlock::InterfaceMembership { .. }))
            .count()
    }
}

/// One solved (or candidate) arc of a lifted trajectory, sampled on a
/// uniform pseudo-time grid with `nodes * substeps + 1` knots. Controls and
/// clocks are piecewise constant per node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcTrajectory {
    pub label: RegionLabel,
    /// Knot pseudo-times, uniform over [PSEUDO_T0, PSEUDO_T1].
    pub tau: Vec<f64>,
    /// Knot states (ambient coordinates), one vector per knot.
    pub states: Vec<Vec<f64>>,
    /// Knot clock values rho (original time at the knot).
    pub rho: Vec<f64>,
    /// Per-node control values (length = nodes).
    pub controls: Vec<Vec<f64>>,
    /// Per-node time-dilation values (length = nodes).
    pub clocks: Vec<f64>,
}

impl ArcTrajectory {
    pub fn nodes(&self) -> usize {
        self.controls.len()
    }

    pub fn substeps(&self) -> usize {
        (self.tau.len() - 1) / self.nodes().max(1)
    }

    pub fn start_time(&self) -> f64 {
        self.rho[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.rho.last().expect("non-empty knot grid")
    }

    /// Arc duration in original time.
    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn start_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn end_state(&self) -> &[f64] {
        self.states.last().expect("non-empty knot grid")
    }

    /// Index of the control node covering pseudo-time tau.
    pub fn node_of(&self, tau: f64) -> usize {
        let span = PSEUDO_T1 - PSEUDO_T0;
        let rel = ((tau - PSEUDO_T0) / span * self.nodes() as f64).floor() as isize;
        rel.clamp(0, self.nodes() as isize - 1) as usize
    }

    pub fn control_at(&self, tau: f64) -> &[f64] {
        &self.controls[self.node_of(tau)]
    }

    pub fn clock_at(&self, tau: f64) -> f64 {
        self.clocks[self.node_of(tau)]
    }

    fn knot_below(&self, tau: f64) -> usize {
        let span = self.tau.len() - 1;
        let rel = ((tau - PSEUDO_T0) / (PSEUDO_T1 - PSEUDO_T0) * span as f64).floor() as isize;
        rel.clamp(0, span as isize - 1) as usize
    }

    /// Original time at pseudo-time tau: linear interpolation between knots,
    /// which is exact because the clock control is constant within a node.
    pub fn time_at(&self, tau: f64) -> f64 {
        let i = self.knot_below(tau);
        let (t0, t1) = (self.tau[i], self.tau[i + 1]);
        let s = ((tau - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.rho[i] + s * (self.rho[i + 1] - self.rho[i])
    }

    /// State at pseudo-time tau, linearly interpolated between knots.
    pub fn state_at(&self, tau: f64) -> Vec<f64> {
        let i = self.knot_below(tau);
        let (t0, t1) = (self.tau[i], self.tau[i + 1]);
        let s = ((tau - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.states[i]
            .iter()
            .zip(&self.states[i + 1])
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    /// Pseudo-time at original time t within this arc (inverse of
    /// [`ArcTrajectory::time_at`], using that rho is strictly increasing).
    pub fn tau_at_time(&self, t: f64) -> f64 {
        let first = self.start_time();
        let last = self.end_time();
        if t <= first {
            return self.tau[0];
        }
        if t >= last {
            return *self.tau.last().expect("non-empty");
        }
        // Knots are uniform in tau and rho is increasing: binary search.
        let mut lo = 0;
        let mut hi = self.rho.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.rho[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = (t - self.rho[lo]) / (self.rho[hi] - self.rho[lo]);
        self.tau[lo] + s * (self.tau[hi] - self.tau[lo])
    }
}

/// Original time reached by arc `arc` of a solved trajectory at pseudo-time
/// tau: `t = rho_arc(tau)`, strictly increasing in tau.
pub fn pullback_time(arcs: &[ArcTrajectory], arc: usize, tau: f64) -> f64 {
    arcs[arc].time_at(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::Interface;
    use crate::problem::{Bounds, ControlSet, CostMode, TerminalTime};

    fn walk(n: usize) -> RegionDynamics {
        RegionDynamics::new(
            vec![Expr::parse("cos(a1)").unwrap(), Expr::parse("sin(a1)").unwrap()],
            Expr::Const(1.0),
            ControlSet::new(&[(-std::f64::consts::PI, std::f64::consts::PI)]).unwrap(),
            n,
        )
        .unwrap()
    }

    fn tram(n: usize) -> RegionDynamics {
        RegionDynamics::new(
            vec![Expr::parse("10").unwrap(), Expr::parse("0").unwrap()],
            Expr::Const(1.0),
            ControlSet::empty(),
            n,
        )
        .unwrap()
    }

    fn tramway() -> RegionalProblem {
        RegionalProblem::new(
            Interface::new(Expr::parse("x2").unwrap(), 2).unwrap(),
            walk(2),
            walk(2),
            tram(2),
            vec![0.0, -1.0],
            0.0,
            vec![2.0, 1.0],
            TerminalTime::Free,
            CostMode::MinTime,
            Bounds::default(),
        )
        .unwrap()
    }

    #[test]
    fn lift_dimensions_and_blocks() {
        let p = tramway();
        let lift = LiftedProblem::build(&p, "1-H-2".parse().unwrap()).unwrap();
        assert_eq!(lift.lifted_dim(), 9);
        assert_eq!(lift.junction_equality_blocks(), 3);
        assert_eq!(lift.membership_constraint_count(), 2);

        let lift = LiftedProblem::build(&p, "1-2".parse().unwrap()).unwrap();
        assert_eq!(lift.lifted_dim(), 6);
        assert_eq!(lift.junction_equality_blocks(), 1);
        assert_eq!(lift.membership_constraint_count(), 1);
    }

    #[test]
    fn lift_single_arc_has_no_junctions() {
        let p = RegionalProblem::new(
            Interface::new(Expr::parse("x2+5").unwrap(), 2).unwrap(),
            walk(2),
            walk(2),
            tram(2),
            vec![0.0, 0.0],
            0.0,
            vec![1.0, 0.5],
            TerminalTime::Free,
            CostMode::MinTime,
            Bounds::default(),
        )
        .unwrap();
        let lift = LiftedProblem::build(&p, "2".parse().unwrap()).unwrap();
        assert_eq!(lift.lifted_dim(), 3);
        assert_eq!(lift.junction_equality_blocks(), 0);
        assert_eq!(lift.membership_constraint_count(), 0);
        assert!(lift.blocks().is_empty());
    }

    #[test]
    fn lift_rejects_boundary_mismatch() {
        let p = tramway();
        assert!(LiftedProblem::build(&p, "2-1".parse().unwrap()).is_err());
        assert!(LiftedProblem::build(&p, "1-H".parse().unwrap()).is_err());
    }

    #[test]
    fn constant_clock_pullback_is_linear() {
        // Hand-built arc: 2 nodes, 2 substeps, w == 0.5 throughout.
        let knots = 5;
        let tau: Vec<f64> = (0..knots).map(|i| i as f64 / (knots - 1) as f64).collect();
        let rho: Vec<f64> = tau.iter().map(|t| 3.0 + 0.5 * t).collect();
        let arc = ArcTrajectory {
            label: RegionLabel::H,
            tau: tau.clone(),
            states: vec![vec![0.0, 0.0]; knots],
            rho,
            controls: vec![vec![], vec![]],
            clocks: vec![0.5, 0.5],
        };
        for &t in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            assert!((arc.time_at(t) - (3.0 + 0.5 * t)).abs() < 1e-15);
        }
        assert_eq!(pullback_time(&[arc.clone()], 0, 0.0), 3.0);
        assert!((arc.duration() - 0.5).abs() < 1e-15);
        assert!((arc.tau_at_time(3.25) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn switch_time_is_arc_start() {
        let knots = 3;
        let tau: Vec<f64> = (0..knots).map(|i| i as f64 / (knots - 1) as f64).collect();
        let rho = vec![1.5, 1.75, 2.0];
        let arc = ArcTrajectory {
            label: RegionLabel::R2,
            tau,
            states: vec![vec![1.0, 1.0]; knots],
            rho,
            controls: vec![vec![0.0]],
            clocks: vec![0.5],
        };
        assert_eq!(arc.time_at(PSEUDO_T0), 1.5);
        assert_eq!(arc.start_time(), 1.5);
        assert_eq!(arc.end_time(), 2.0);
    }
}
