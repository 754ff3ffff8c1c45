//! Direct multiple-arc shooting for lifted structure problems.
//!
//! One structure word becomes a finite-dimensional program: per arc, a mesh
//! of piecewise-constant control nodes and time-dilation (clock) nodes. Arcs
//! are integrated sequentially, so junction continuity and interface
//! invariance hold by construction; what remains as equality constraints is
//! interface membership at each junction, the terminal state match, and the
//! terminal clock when the horizon is fixed. The constrained program is
//! solved by an augmented-Lagrangian loop around box-projected L-BFGS with
//! central finite-difference gradients, restarted from eight seeded initial
//! guesses. `solve_regional` enumerates all admissible words up to a length
//! cap and keeps the cheapest converged structure.
//!
//! Gradient evaluations reuse the unperturbed rollout: each arc stores
//! per-node checkpoints (state, clock integral, cost and penalty prefixes),
//! and the finite-difference probe for a variable re-integrates only from
//! the checkpoint of the node it perturbs.

mod auglag;
mod integrate;

pub use integrate::{integrate_arc, ArcGeometry, ArcResult};

pub(crate) use auglag::AlParams;

use auglag::{solve_auglag, AlOutcome, Multipliers, Objective, ShootingObjective};
use integrate::{advance_arc_flat, StepAccum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm2, RegionLabel};
use crate::lift::{ArcTrajectory, LiftedProblem};
use crate::problem::{RegionalProblem, TerminalTime};
use crate::structures::{enumerate, StructureWord};
use crate::tol;

/// Mesh parameters for the shooting discretization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Discretization {
    /// Control/clock nodes per arc.
    pub nodes_per_arc: usize,
    /// RK4 substeps per node.
    pub substeps: usize,
    /// Base seed for the multi-start initializations.
    pub seed: u64,
}

impl Discretization {
    pub fn new(nodes_per_arc: usize, substeps: usize, seed: u64) -> Result<Self> {
        if nodes_per_arc < 4 {
            return Err(Error::invalid("need at least 4 control nodes per arc"));
        }
        if substeps < 2 {
            return Err(Error::invalid("need at least 2 integration substeps per node"));
        }
        Ok(Discretization { nodes_per_arc, substeps, seed })
    }
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { nodes_per_arc: 20, substeps: 4, seed: 0 }
    }
}

/// Outcome classification of one structure solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    /// Constraints met at the working tolerance.
    Converged,
    /// Feasible to 1e-4 but the outer loop ran out of iterations.
    MaxIter,
    /// No start reached the feasibility threshold (or the solution left its
    /// regions away from the junctions).
    Infeasible,
    /// The costate reconstruction could not match the maximization
    /// conditions with p0 = 1; set during verification, never by the solver.
    AbnormalSuspect,
}

/// Numerical diagnostics of one structure solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Sup-norm of the equality constraints at the returned point.
    pub constraint_residual: f64,
    /// Projected-gradient sup-norm of the augmented Lagrangian.
    pub gradient_norm: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub starts_attempted: usize,
    /// Starts that reached the 1e-4 feasibility threshold.
    pub starts_feasible: usize,
    /// Some clock variable ended on its bound, so the time scaling is
    /// saturated and the reported optimum may sit on that artificial edge.
    pub clock_bound_active: bool,
    /// The converged trajectory left its labeled regions away from the
    /// junction windows (forces INFEASIBLE).
    pub region_mismatch: bool,
}

/// One solved structure word.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureSolution {
    pub word: StructureWord,
    pub arcs: Vec<ArcTrajectory>,
    /// Original-time instants of the junctions (arc boundaries).
    pub switch_times: Vec<f64>,
    /// States at the junctions.
    pub switch_points: Vec<Vec<f64>>,
    /// Total cost (NaN when infeasible).
    pub cost: f64,
    pub status: SolveStatus,
    pub report: ConvergenceReport,
}

impl StructureSolution {
    /// Terminal original time of the trajectory.
    pub fn terminal_time(&self) -> f64 {
        self.arcs.last().map(|a| a.end_time()).unwrap_or(f64::NAN)
    }
}

/// All structures tried for one problem, with the selected optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionalSolution {
    pub structures: Vec<StructureSolution>,
    pub best_index: usize,
    /// Cost of the selected structure.
    pub value: f64,
}

impl RegionalSolution {
    pub fn best(&self) -> &StructureSolution {
        &self.structures[self.best_index]
    }
}

// ---------------------------------------------------------------------------
// Decision-vector layout
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct ArcVars {
    ctrl_off: usize,
    m: usize,
    clock_off: usize,
}

/// Per-node integration checkpoint (prefix sums from trajectory start).
struct Checkpoint {
    y: Vec<f64>,
    rho: f64,
    cost: f64,
    penalty: f64,
}

struct BaseRollout {
    obj: Objective,
    /// `[arc][node]`, `nodes_per_arc + 1` entries per arc.
    checkpoints: Vec<Vec<Checkpoint>>,
    /// psi at each junction (end of arcs `0..K-1`).
    junction_psi: Vec<f64>,
}

/// Merit value substituted when a finite-difference probe blows up; the
/// resulting steep uphill gradient steers the line search away from the
/// unstable region instead of aborting the whole start.
const FD_FAIL_MERIT: f64 = 1e12;

pub(crate) struct Shooter<'p> {
    lift: &'p LiftedProblem<'p>,
    disc: Discretization,
    vars: Vec<ArcVars>,
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    n_constraints: usize,
    /// Translation-exact mode for single-arc words with state-free dynamics:
    /// integrate in displacement coordinates so the terminal residual
    /// depends on the boundary data only through `xf - x0`.
    displacement: bool,
    d_target: Vec<f64>,
}

impl<'p> Shooter<'p> {
    pub(crate) fn new(lift: &'p LiftedProblem<'p>, disc: Discretization) -> Self {
        let problem = lift.problem();
        let n = problem.n;
        let k = lift.arc_count();
        let m_nodes = disc.nodes_per_arc;
        let mut vars = Vec::with_capacity(k);
        let mut off = 0;
        for a in 0..k {
            let m = lift.dynamics(a).control_dim();
            vars.push(ArcVars { ctrl_off: off, m, clock_off: off + m_nodes * m });
            off += m_nodes * (m + 1);
        }
        let dim = off;
        let mut lo = vec![0.0; dim];
        let mut hi = vec![0.0; dim];
        for (a, v) in vars.iter().enumerate() {
            let cs = &lift.dynamics(a).controls;
            for i in 0..m_nodes {
                for j in 0..v.m {
                    lo[v.ctrl_off + i * v.m + j] = cs.lo()[j];
                    hi[v.ctrl_off + i * v.m + j] = cs.hi()[j];
                }
                lo[v.clock_off + i] = tol::CLOCK_MIN;
                hi[v.clock_off + i] = tol::CLOCK_MAX;
            }
        }
        let displacement = k == 1
            && lift.label(0) != RegionLabel::H
            && lift.dynamics(0).is_state_free();
        let d_target: Vec<f64> = problem.xf.iter().zip(&problem.x0).map(|(f, s)| f - s).collect();
        let n_constraints = (k - 1) + n + matches!(problem.tf, TerminalTime::Fixed(_)) as usize;
        Shooter {
            lift,
            disc,
            vars,
            dim,
            lo,
            hi,
            n_constraints,
            displacement,
            d_target,
        }
    }

    fn problem(&self) -> &RegionalProblem {
        self.lift.problem()
    }

    fn geometry(&self, arc: usize) -> ArcGeometry<'_> {
        let interface = &self.problem().interface;
        match self.lift.label(arc) {
            RegionLabel::H => ArcGeometry::OnInterface { interface },
            l => ArcGeometry::Region { interface, sign: l.side_sign() },
        }
    }

    fn ctrl_slice<'z>(&self, z: &'z [f64], arc: usize) -> &'z [f64] {
        let v = self.vars[arc];
        &z[v.ctrl_off..v.ctrl_off + self.disc.nodes_per_arc * v.m]
    }

    fn clock_slice<'z>(&self, z: &'z [f64], arc: usize) -> &'z [f64] {
        let v = self.vars[arc];
        &z[v.clock_off..v.clock_off + self.disc.nodes_per_arc]
    }

    fn initial_accum(&self) -> StepAccum {
        let problem = self.problem();
        let y = if self.displacement { vec![0.0; problem.n] } else { problem.x0.clone() };
        StepAccum::new(y, problem.t0)
    }

    /// Absolute coordinates of an accumulator state.
    fn absolute(&self, y: &[f64]) -> Vec<f64> {
        if self.displacement {
            y.iter().zip(&self.problem().x0).map(|(a, b)| a + b).collect()
        } else {
            y.to_vec()
        }
    }

    fn offset(&self) -> Option<&[f64]> {
        self.displacement.then(|| self.problem().x0.as_slice())
    }

    /// Append the membership residual for the junction at the end of `arc`.
    fn push_junction(&self, acc: &StepAccum, constraints: &mut Vec<f64>) -> Result<()> {
        let abs = self.absolute(&acc.y);
        constraints.push(self.problem().interface.psi(&abs)?);
        Ok(())
    }

    /// Append terminal-state (and fixed-horizon clock) residuals.
    fn push_terminal(&self, acc: &StepAccum, constraints: &mut Vec<f64>) {
        let problem = self.problem();
        if self.displacement {
            for (yi, di) in acc.y.iter().zip(&self.d_target) {
                constraints.push(yi - di);
            }
        } else {
            for (yi, fi) in acc.y.iter().zip(&problem.xf) {
                constraints.push(yi - fi);
            }
        }
        if let TerminalTime::Fixed(tf) = problem.tf {
            constraints.push(acc.rho - tf);
        }
    }

    /// Plain rollout: cost, penalty, constraints.
    fn rollout(&self, z: &[f64]) -> Result<Objective> {
        let k = self.lift.arc_count();
        let mut acc = self.initial_accum();
        let mut constraints = Vec::with_capacity(self.n_constraints);
        for arc in 0..k {
            advance_arc_flat(
                self.lift.dynamics(arc),
                self.geometry(arc),
                &mut acc,
                self.ctrl_slice(z, arc),
                self.vars[arc].m,
                self.clock_slice(z, arc),
                self.disc.substeps,
                0,
                self.disc.nodes_per_arc,
                self.offset(),
                None,
            )?;
            if arc + 1 < k {
                self.push_junction(&acc, &mut constraints)?;
            }
        }
        self.push_terminal(&acc, &mut constraints);
        Ok(Objective { cost: acc.cost, stay_penalty: acc.penalty, constraints })
    }

    /// Rollout recording per-node checkpoints for gradient reuse.
    fn rollout_base(&self, z: &[f64]) -> Result<BaseRollout> {
        let k = self.lift.arc_count();
        let m_nodes = self.disc.nodes_per_arc;
        let mut acc = self.initial_accum();
        let mut constraints = Vec::with_capacity(self.n_constraints);
        let mut checkpoints = Vec::with_capacity(k);
        let mut junction_psi = Vec::with_capacity(k.saturating_sub(1));
        for arc in 0..k {
            let mut cps = Vec::with_capacity(m_nodes + 1);
            for node in 0..m_nodes {
                cps.push(Checkpoint {
                    y: acc.y.clone(),
                    rho: acc.rho,
                    cost: acc.cost,
                    penalty: acc.penalty,
                });
                advance_arc_flat(
                    self.lift.dynamics(arc),
                    self.geometry(arc),
                    &mut acc,
                    self.ctrl_slice(z, arc),
                    self.vars[arc].m,
                    self.clock_slice(z, arc),
                    self.disc.substeps,
                    node,
                    node + 1,
                    self.offset(),
                    None,
                )?;
            }
            cps.push(Checkpoint {
                y: acc.y.clone(),
                rho: acc.rho,
                cost: acc.cost,
                penalty: acc.penalty,
            });
            checkpoints.push(cps);
            if arc + 1 < k {
                self.push_junction(&acc, &mut constraints)?;
                junction_psi.push(*constraints.last().unwrap());
            }
        }
        self.push_terminal(&acc, &mut constraints);
        Ok(BaseRollout {
            obj: Objective { cost: acc.cost, stay_penalty: acc.penalty, constraints },
            checkpoints,
            junction_psi,
        })
    }

    /// Merit of a perturbed decision vector, re-integrating only from the
    /// checkpoint at (`arc`, `node`) of the base rollout.
    fn tail_merit(
        &self,
        z: &[f64],
        arc: usize,
        node: usize,
        base: &BaseRollout,
        mult: &Multipliers,
    ) -> Result<f64> {
        let k = self.lift.arc_count();
        let cp = &base.checkpoints[arc][node];
        let mut acc = StepAccum {
            y: cp.y.clone(),
            rho: cp.rho,
            cost: cp.cost,
            penalty: cp.penalty,
        };
        let mut constraints = Vec::with_capacity(self.n_constraints);
        constraints.extend_from_slice(&base.junction_psi[..arc.min(base.junction_psi.len())]);
        for a in arc..k {
            advance_arc_flat(
                self.lift.dynamics(a),
                self.geometry(a),
                &mut acc,
                self.ctrl_slice(z, a),
                self.vars[a].m,
                self.clock_slice(z, a),
                self.disc.substeps,
                if a == arc { node } else { 0 },
                self.disc.nodes_per_arc,
                self.offset(),
                None,
            )?;
            if a + 1 < k {
                self.push_junction(&acc, &mut constraints)?;
            }
        }
        self.push_terminal(&acc, &mut constraints);
        let obj = Objective { cost: acc.cost, stay_penalty: acc.penalty, constraints };
        Ok(obj.merit(mult))
    }

    // -- initial guesses ----------------------------------------------------

    fn word_hash(&self) -> u64 {
        fnv1a(self.lift.word().to_string().as_bytes())
    }

    /// Median speed |f| over 100 random (state, control) probes, sampled from
    /// the labels the word visits over the padded x0/xf bounding box.
    fn median_speed(&self) -> f64 {
        let problem = self.problem();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.disc.seed ^ self.word_hash() ^ 0x6d65_6469_616e_5f73,
        );
        let mut labels: Vec<RegionLabel> = Vec::new();
        for a in 0..self.lift.arc_count() {
            let l = self.lift.label(a);
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
        let mut lo = vec![0.0; problem.n];
        let mut hi = vec![0.0; problem.n];
        for i in 0..problem.n {
            lo[i] = problem.x0[i].min(problem.xf[i]) - 1.0;
            hi[i] = problem.x0[i].max(problem.xf[i]) + 1.0;
        }
        let mut speeds = Vec::with_capacity(100);
        let mut x = vec![0.0; problem.n];
        'outer: loop {
            for &label in &labels {
                if speeds.len() >= 100 {
                    break 'outer;
                }
                for i in 0..problem.n {
                    x[i] = rng.gen_range(lo[i]..=hi[i]);
                }
                let dynamics = problem.dynamics(label);
                let a = dynamics.controls.sample(&mut rng);
                if let Ok(f) = dynamics.f_at(&x, &a) {
                    let s = norm2(&f);
                    if s.is_finite() {
                        speeds.push(s);
                    }
                }
            }
            if speeds.is_empty() {
                return 1.0;
            }
        }
        speeds.sort_by(|a, b| a.total_cmp(b));
        speeds[speeds.len() / 2].max(1e-9)
    }

    /// Deterministic base guess: box-center controls, uniform clocks sized
    /// so the arcs together span the fixed horizon or a median-speed travel
    /// time estimate.
    fn base_start(&self) -> Vec<f64> {
        let problem = self.problem();
        let k = self.lift.arc_count();
        let m_nodes = self.disc.nodes_per_arc;
        let horizon = match problem.tf {
            TerminalTime::Fixed(tf) => tf - problem.t0,
            TerminalTime::Free => {
                let dist = norm2(&self.d_target);
                (dist / self.median_speed()).max(10.0 * tol::CLOCK_MIN)
            }
        };
        let w = (horizon / k as f64).clamp(tol::CLOCK_MIN, tol::CLOCK_MAX);
        let mut z = vec![0.0; self.dim];
        for (a, v) in self.vars.iter().enumerate() {
            let center = self.lift.dynamics(a).controls.center();
            for i in 0..m_nodes {
                for j in 0..v.m {
                    z[v.ctrl_off + i * v.m + j] = center[j];
                }
                z[v.clock_off + i] = w;
            }
        }
        z
    }

    /// Start `s` of the multi-start schedule: the base guess for s = 0,
    /// seeded perturbations of it otherwise.
    fn start(&self, base: &[f64], s: usize) -> Vec<f64> {
        if s == 0 {
            return base.to_vec();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.disc
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(self.word_hash())
                .wrapping_add(s as u64),
        );
        let mut z = base.to_vec();
        let m_nodes = self.disc.nodes_per_arc;
        for v in &self.vars {
            for i in 0..m_nodes {
                for j in 0..v.m {
                    let idx = v.ctrl_off + i * v.m + j;
                    let width = self.hi[idx] - self.lo[idx];
                    z[idx] = (z[idx] + width * rng.gen_range(-0.35..0.35))
                        .clamp(self.lo[idx], self.hi[idx]);
                }
                let idx = v.clock_off + i;
                z[idx] = (z[idx] * rng.gen_range(-0.8f64..0.8).exp())
                    .clamp(self.lo[idx], self.hi[idx]);
            }
        }
        z
    }

    /// Materialize the knot-level trajectories for a decision vector,
    /// chaining arcs in absolute coordinates.
    fn materialize(&self, z: &[f64]) -> Result<Vec<ArcTrajectory>> {
        let k = self.lift.arc_count();
        let m_nodes = self.disc.nodes_per_arc;
        let mut arcs = Vec::with_capacity(k);
        let mut y = self.problem().x0.clone();
        let mut rho = self.problem().t0;
        for arc in 0..k {
            let v = self.vars[arc];
            let ctrl = self.ctrl_slice(z, arc);
            let controls: Vec<Vec<f64>> =
                (0..m_nodes).map(|i| ctrl[i * v.m..(i + 1) * v.m].to_vec()).collect();
            let clocks = self.clock_slice(z, arc).to_vec();
            let res = integrate_arc(
                self.lift.dynamics(arc),
                self.lift.label(arc),
                self.geometry(arc),
                &y,
                rho,
                &controls,
                &clocks,
                self.disc.substeps,
            )?;
            y = res.arc.end_state().to_vec();
            rho = res.arc.end_time();
            arcs.push(res.arc);
        }
        Ok(arcs)
    }

    fn clock_bound_active(&self, z: &[f64]) -> bool {
        self.vars.iter().any(|v| {
            (0..self.disc.nodes_per_arc).any(|i| {
                let w = z[v.clock_off + i];
                w - tol::CLOCK_MIN <= tol::CLOCK_ACTIVE_TOL
                    || tol::CLOCK_MAX - w <= tol::CLOCK_ACTIVE_TOL
            })
        })
    }
}

impl ShootingObjective for Shooter<'_> {
    fn constraint_count(&self) -> usize {
        self.n_constraints
    }

    fn lower(&self) -> &[f64] {
        &self.lo
    }

    fn upper(&self) -> &[f64] {
        &self.hi
    }

    fn eval(&self, z: &[f64]) -> Result<Objective> {
        self.rollout(z)
    }

    fn merit_grad(&self, z: &[f64], mult: &Multipliers) -> Result<(f64, Vec<f64>)> {
        let base = self.rollout_base(z)?;
        let merit = base.obj.merit(mult);
        let mut grad = vec![0.0; self.dim];
        let mut zp = z.to_vec();
        let h = tol::FD_STEP;
        let m_nodes = self.disc.nodes_per_arc;
        for (arc, v) in self.vars.iter().enumerate() {
            for node in 0..m_nodes {
                let mut indices: Vec<usize> =
                    (0..v.m).map(|j| v.ctrl_off + node * v.m + j).collect();
                indices.push(v.clock_off + node);
                for idx in indices {
                    let orig = z[idx];
                    zp[idx] = orig + h;
                    let plus = self
                        .tail_merit(&zp, arc, node, &base, mult)
                        .unwrap_or(FD_FAIL_MERIT);
                    zp[idx] = orig - h;
                    let minus = self
                        .tail_merit(&zp, arc, node, &base, mult)
                        .unwrap_or(FD_FAIL_MERIT);
                    zp[idx] = orig;
                    grad[idx] = (plus - minus) / (2.0 * h);
                }
            }
        }
        Ok((merit, grad))
    }
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

/// Feasibility class of an outcome: 0 converged, 1 feasible-but-loose, 2 out.
fn feasibility_class(cmax: f64) -> u8 {
    if cmax <= tol::CONSTRAINT_TOL {
        0
    } else if cmax <= tol::FEASIBLE_TOL {
        1
    } else {
        2
    }
}

/// Solve one structure word by seeded multi-start shooting.
pub fn solve_structure(
    problem: &RegionalProblem,
    word: &StructureWord,
    disc: &Discretization,
) -> Result<StructureSolution> {
    let lift = LiftedProblem::build(problem, word.clone())?;
    let shooter = Shooter::new(&lift, *disc);
    let params = AlParams::standard();
    let base = shooter.base_start();

    let mut best: Option<AlOutcome> = None;
    let mut starts_feasible = 0usize;
    for s in 0..tol::MULTI_STARTS {
        let z0 = shooter.start(&base, s);
        let outcome = match solve_auglag(&shooter, z0, &params) {
            Ok(o) => o,
            Err(_) => continue, // this start blew up outright; others may not
        };
        if outcome.cmax <= tol::FEASIBLE_TOL {
            starts_feasible += 1;
        }
        let replace = match &best {
            None => true,
            Some(b) => {
                let (ca, cb) = (feasibility_class(outcome.cmax), feasibility_class(b.cmax));
                ca < cb
                    || (ca == cb && ca < 2 && outcome.cost < b.cost)
                    || (ca == cb && ca == 2 && outcome.cmax < b.cmax)
            }
        };
        if replace {
            best = Some(outcome);
        }
    }

    let Some(outcome) = best else {
        // Every start failed to even evaluate.
        return Ok(StructureSolution {
            word: word.clone(),
            arcs: Vec::new(),
            switch_times: Vec::new(),
            switch_points: Vec::new(),
            cost: f64::NAN,
            status: SolveStatus::Infeasible,
            report: ConvergenceReport {
                constraint_residual: f64::INFINITY,
                gradient_norm: f64::NAN,
                outer_iterations: 0,
                inner_iterations: 0,
                starts_attempted: tol::MULTI_STARTS,
                starts_feasible: 0,
                clock_bound_active: false,
                region_mismatch: false,
            },
        });
    };

    let arcs = shooter.materialize(&outcome.z)?;
    let mut status = match feasibility_class(outcome.cmax) {
        0 => SolveStatus::Converged,
        1 => SolveStatus::MaxIter,
        _ => SolveStatus::Infeasible,
    };
    let mut region_mismatch = false;
    if status != SolveStatus::Infeasible {
        region_mismatch = !trajectory_matches_labels(problem, &arcs, disc);
        if region_mismatch {
            status = SolveStatus::Infeasible;
        }
    }
    let cost = if status == SolveStatus::Infeasible { f64::NAN } else { outcome.cost };
    let switch_times: Vec<f64> =
        arcs.iter().take(arcs.len() - 1).map(|a| a.end_time()).collect();
    let switch_points: Vec<Vec<f64>> =
        arcs.iter().take(arcs.len() - 1).map(|a| a.end_state().to_vec()).collect();

    Ok(StructureSolution {
        word: word.clone(),
        arcs,
        switch_times,
        switch_points,
        cost,
        status,
        report: ConvergenceReport {
            constraint_residual: outcome.cmax,
            gradient_norm: outcome.pg_norm,
            outer_iterations: outcome.outer_iterations,
            inner_iterations: outcome.inner_iterations,
            starts_attempted: tol::MULTI_STARTS,
            starts_feasible,
            clock_bound_active: shooter.clock_bound_active(&outcome.z),
            region_mismatch,
        },
    })
}

/// Post-solve label audit: every knot must classify as its arc's label,
/// except inside a two-node window at each arc end where the trajectory is
/// legitimately inside the interface band or swapping sides.
fn trajectory_matches_labels(
    problem: &RegionalProblem,
    arcs: &[ArcTrajectory],
    disc: &Discretization,
) -> bool {
    let window = 2 * disc.substeps;
    for arc in arcs {
        let last = arc.states.len() - 1;
        for (idx, state) in arc.states.iter().enumerate() {
            if idx.min(last - idx) <= window {
                continue;
            }
            match problem.interface.classify(state) {
                Ok(label) if label == arc.label => {}
                // Region arcs may graze the band; only a hard side swap or an
                // interface arc leaving the band counts as a mismatch.
                Ok(RegionLabel::H) if arc.label != RegionLabel::H => {}
                _ => return false,
            }
        }
    }
    true
}

/// Enumerate admissible structures and keep the cheapest converged one.
///
/// Ties within 1e-9 go to the shorter word, then to enumeration order.
/// Structures that only reached MAX_ITER are eligible when nothing
/// converged; if nothing is even feasible the problem is reported as such.
pub fn solve_regional(
    problem: &RegionalProblem,
    max_arcs: usize,
    disc: &Discretization,
) -> Result<RegionalSolution> {
    let start = problem.interface.classify(&problem.x0)?;
    let end = problem.interface.classify(&problem.xf)?;
    let words = enumerate(start, end, max_arcs);
    if words.is_empty() {
        return Err(Error::AllStructuresInfeasible { count: 0 });
    }
    let structures: Vec<StructureSolution> = words
        .par_iter()
        .map(|w| solve_structure(problem, w, disc))
        .collect::<Result<Vec<_>>>()?;

    let pick = |status: SolveStatus| -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, s) in structures.iter().enumerate() {
            if s.status != status {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    let cur = &structures[b];
                    if s.cost < cur.cost - tol::TIE_TOL
                        || ((s.cost - cur.cost).abs() <= tol::TIE_TOL
                            && s.word.arc_count() < cur.word.arc_count())
                    {
                        best = Some(i);
                    }
                }
            }
        }
        best
    };

    let best_index = pick(SolveStatus::Converged)
        .or_else(|| pick(SolveStatus::MaxIter))
        .ok_or(Error::AllStructuresInfeasible { count: structures.len() })?;
    let value = structures[best_index].cost;
    Ok(RegionalSolution { structures, best_index, value })
}

/// Re-solve a word from a warm start without multi-start, at the given
/// augmented-Lagrangian settings. Used by the sensitivity verifier, where
/// the perturbed problems must be solved to well below the differencing
/// step from the unperturbed optimum.
pub(crate) fn resolve_warm(
    problem: &RegionalProblem,
    word: &StructureWord,
    disc: &Discretization,
    z0: &[f64],
    params: &AlParams,
) -> Result<AlOutcome> {
    let lift = LiftedProblem::build(problem, word.clone())?;
    let shooter = Shooter::new(&lift, *disc);
    solve_auglag(&shooter, z0.to_vec(), params)
}

/// Flatten solved arcs back into the decision-vector layout (controls flat,
/// then clocks, per arc in order).
pub(crate) fn pack_decision_vector(arcs: &[ArcTrajectory]) -> Vec<f64> {
    let mut z = Vec::new();
    for arc in arcs {
        for a in &arc.controls {
            z.extend_from_slice(a);
        }
        z.extend_from_slice(&arc.clocks);
    }
    z
}
