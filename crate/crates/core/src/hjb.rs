//! Independent grid cross-check: a semi-Lagrangian solver for the
//! minimum-time value function of 2-D regional problems.
//!
//! The grid knows nothing about structure words, lifts, or shooting — it
//! discretizes the dynamic programming principle directly, so agreement
//! with the structure-enumeration solver is evidence for both.
//!
//! Scheme: on a uniform grid over a rectangle, value iteration
//! `u(x) <- min_a [ dt*l(x,a) + u(x + dt*f(x,a)) ]` with bilinear
//! interpolation of the foot point and a fixed step `dt = h / max(M, 1)`
//! (M a bound on |f|). When the foot point falls back into the cell of the
//! node itself, the self-weight is moved to the left-hand side (the update
//! solves `u = c + w*u + rest` for `u`), which keeps slow controls usable
//! without shrinking the step. Nodes within distance h/2 of the interface
//! offer the union of both regional control sets and the interface set;
//! everywhere else a node offers its own region's controls. The target is
//! a ball around `xf` frozen at value zero. Sweeps are Gauss-Seidel over
//! four alternating orders (a Jacobi mode exists for order-independence
//! checks); values start at +inf and only ever decrease, so convergence is
//! monotone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm2, RegionLabel};
use crate::problem::{CostMode, RegionDynamics, RegionalProblem};
use crate::solve::RegionalSolution;
use crate::tol;

/// Rectangular grid domain `[x1_min, x1_max] x [x2_min, x2_max]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridDomain {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl GridDomain {
    pub fn new(x1_min: f64, x1_max: f64, x2_min: f64, x2_max: f64) -> Result<Self> {
        if !(x1_min.is_finite() && x1_max.is_finite() && x2_min.is_finite() && x2_max.is_finite())
        {
            return Err(Error::invalid("grid domain bounds must be finite"));
        }
        if x1_min >= x1_max || x2_min >= x2_max {
            return Err(Error::invalid(format!(
                "grid domain is empty: [{x1_min}, {x1_max}] x [{x2_min}, {x2_max}]"
            )));
        }
        Ok(GridDomain { x1_min, x1_max, x2_min, x2_max })
    }

    /// True when `x` lies inside the rectangle (boundary included).
    pub fn contains(&self, x: &[f64]) -> bool {
        x[0] >= self.x1_min && x[0] <= self.x1_max && x[1] >= self.x2_min && x[1] <= self.x2_max
    }
}

/// Target descriptor: the ball `|x - center| <= radius` frozen at value 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Sweep discipline for the value iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// In-place updates, four alternating node orders. The default.
    GaussSeidel,
    /// Two-buffer updates; order-independent, slower to converge. Must
    /// reach the same fixed point as Gauss-Seidel to within the sweep
    /// tolerance — used to check that the result does not depend on the
    /// sweep order.
    Jacobi,
}

/// Tabulated minimum-time value function on a uniform rectangular grid.
///
/// `values` is row-major: index `iy * nx + ix` holds the node
/// `(x1_min + ix*h, x2_min + iy*h)`; unreached nodes hold `+inf`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridValueFunction {
    pub domain: GridDomain,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Region label of each node (H within distance h/2 of the interface).
    /// Empty when the grid was loaded from CSV rather than solved.
    pub labels: Vec<RegionLabel>,
    /// Target ball used by the solve; absent when loaded from CSV.
    pub target: Option<TargetBall>,
    /// Sweeps performed until the sup-norm change fell below tolerance.
    pub sweeps: usize,
}

impl GridValueFunction {
    /// Bilinear interpolation of the value at an arbitrary point. Points
    /// outside the grid, and points whose interpolation touches an
    /// unreached node with positive weight, evaluate to `+inf`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let fx = (x[0] - self.domain.x1_min) / self.h;
        let fy = (x[1] - self.domain.x2_min) / self.h;
        if fx < -1e-9 || fy < -1e-9 || fx > (self.nx - 1) as f64 + 1e-9
            || fy > (self.ny - 1) as f64 + 1e-9
        {
            return f64::INFINITY;
        }
        let ix = (fx.floor() as isize).clamp(0, self.nx as isize - 2) as usize;
        let iy = (fy.floor() as isize).clamp(0, self.ny as isize - 2) as usize;
        let dx = (fx - ix as f64).clamp(0.0, 1.0);
        let dy = (fy - iy as f64).clamp(0.0, 1.0);
        let w = [(1.0 - dx) * (1.0 - dy), dx * (1.0 - dy), (1.0 - dx) * dy, dx * dy];
        let idx = [
            iy * self.nx + ix,
            iy * self.nx + ix + 1,
            (iy + 1) * self.nx + ix,
            (iy + 1) * self.nx + ix + 1,
        ];
        let mut acc = 0.0;
        for (wi, ii) in w.iter().zip(&idx) {
            if *wi > 0.0 {
                let v = self.values[*ii];
                if !v.is_finite() {
                    return f64::INFINITY;
                }
                acc += wi * v;
            }
        }
        acc
    }

    /// Serialize the grid as CSV: two comment lines (field names, then
    /// their values), followed by one comma-separated row of values per
    /// grid row (`x2` fixed along a row, `x1` increasing). Values print in
    /// shortest round-trip form; unreached nodes print as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# x1_min x1_max x2_min x2_max h\n");
        out.push_str(&format!(
            "# {} {} {} {} {}\n",
            self.domain.x1_min, self.domain.x1_max, self.domain.x2_min, self.domain.x2_max, self.h
        ));
        for iy in 0..self.ny {
            let row: Vec<String> =
                (0..self.nx).map(|ix| self.values[iy * self.nx + ix].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse a grid written by [`GridValueFunction::to_csv`]. Labels and
    /// target are not stored in the CSV and come back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty grid CSV"))?;
        if header.trim() != "# x1_min x1_max x2_min x2_max h" {
            return Err(Error::invalid(format!("unexpected grid CSV header: {header:?}")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| Error::invalid("grid CSV is missing the metadata line"))?;
        let nums: Vec<f64> = meta
            .trim_start_matches('#')
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::invalid(format!("bad grid metadata token {t:?}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 5 {
            return Err(Error::invalid(format!(
                "grid metadata line must hold 5 numbers, got {}",
                nums.len()
            )));
        }
        let domain = GridDomain::new(nums[0], nums[1], nums[2], nums[3])?;
        let h = nums[4];
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {h}")));
        }
        let mut values = Vec::new();
        let mut nx = 0usize;
        let mut ny = 0usize;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad grid value {t:?}")))
                })
                .collect::<Result<_>>()?;
            if nx == 0 {
                nx = row.len();
            } else if row.len() != nx {
                return Err(Error::invalid(format!(
                    "ragged grid CSV: row {} has {} values, expected {nx}",
                    ny + 1,
                    row.len()
                )));
            }
            values.extend(row);
            ny += 1;
        }
        if nx < 2 || ny < 2 {
            return Err(Error::invalid("grid CSV must hold at least a 2 x 2 grid"));
        }
        Ok(GridValueFunction {
            domain,
            h,
            nx,
            ny,
            values,
            labels: Vec::new(),
            target: None,
            sweeps: 0,
        })
    }
}

/// Initial value for non-target nodes. A finite ceiling (rather than
/// `+inf`) lets the iteration improve a node whose foot stencil still
/// touches unreached corners — with `+inf` corners the minimization could
/// stall on a front where every sampled direction grazes one unknown
/// diagonal node. Values that never fall below [`UNREACHED_CUTOFF`] are
/// reported as `+inf`.
const UNREACHED_INIT: f64 = 1e30;

/// Converged values above this are dominated by the initialization
/// ceiling, not by accumulated running cost (any genuine minimum time on
/// these grids is many orders of magnitude smaller), and are reported as
/// unreached.
const UNREACHED_CUTOFF: f64 = 1e15;

// ---------------------------------------------------------------------------
// Control sampling
// ---------------------------------------------------------------------------

/// Uniform grid over the control box with roughly
/// [`tol::HJB_CONTROL_SAMPLES`] points: per-axis count `k` chosen so that
/// `k^m` stays near the budget, endpoints included.
fn sample_controls(dynamics: &RegionDynamics) -> Vec<Vec<f64>> {
    let m = dynamics.control_dim();
    if m == 0 {
        return vec![Vec::new()];
    }
    let budget = tol::HJB_CONTROL_SAMPLES as f64;
    let k = budget.powf(1.0 / m as f64).floor().max(2.0) as usize;
    let lo = dynamics.controls.lo();
    let hi = dynamics.controls.hi();
    let mut samples = vec![Vec::with_capacity(m)];
    for c in 0..m {
        let mut next = Vec::with_capacity(samples.len() * k);
        for base in &samples {
            for j in 0..k {
                let t = if k == 1 { 0.5 } else { j as f64 / (k - 1) as f64 };
                let mut s = base.clone();
                s.push(lo[c] + t * (hi[c] - lo[c]));
                next.push(s);
            }
        }
        samples = next;
    }
    samples
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// One admissible move, ready for the hot loop.
enum Move {
    /// State-independent dynamics: displacement and cost are the same at
    /// every node, so the interpolation stencil is precomputed. `base`
    /// offsets address the lower-left corner of the foot cell relative to
    /// the node; `weights` are the four bilinear weights; `self_corner`
    /// marks the corner that is the node itself (its weight goes to the
    /// denominator).
    Frozen {
        cost: f64,
        base: (isize, isize),
        weights: [f64; 4],
        self_corner: Option<usize>,
        denom: f64,
    },
    /// State-dependent dynamics: evaluated at each node.
    Dynamic { label: RegionLabel, control: Vec<f64> },
}

struct Stencil {
    base: (isize, isize),
    weights: [f64; 4],
    self_corner: Option<usize>,
    denom: f64,
}

/// Build the interpolation stencil for a foot displacement `d` on spacing
/// `h`. Returns None when the move is useless (the foot never leaves the
/// node to first order: denominator below 1e-12).
fn stencil(d: [f64; 2], h: f64) -> Option<Stencil> {
    let gx = d[0] / h;
    let gy = d[1] / h;
    let kx = gx.floor();
    let ky = gy.floor();
    let dx = gx - kx;
    let dy = gy - ky;
    let weights = [(1.0 - dx) * (1.0 - dy), dx * (1.0 - dy), (1.0 - dx) * dy, dx * dy];
    let (kx, ky) = (kx as isize, ky as isize);
    let mut self_corner = None;
    for (c, (ox, oy)) in [(0isize, 0isize), (1, 0), (0, 1), (1, 1)].iter().enumerate() {
        if kx + ox == 0 && ky + oy == 0 {
            self_corner = Some(c);
        }
    }
    let denom = match self_corner {
        Some(c) => 1.0 - weights[c],
        None => 1.0,
    };
    if denom <= 1e-12 {
        return None;
    }
    Some(Stencil { base: (kx, ky), weights, self_corner, denom })
}

struct Solver<'p> {
    problem: &'p RegionalProblem,
    domain: GridDomain,
    h: f64,
    nx: usize,
    ny: usize,
    delta: f64,
    labels: Vec<RegionLabel>,
    frozen: Vec<bool>,
    /// Moves per region label, indexed by `RegionLabel as usize` via
    /// `move_set`; H nodes get the union of all three.
    moves_r1: Vec<Move>,
    moves_r2: Vec<Move>,
    moves_h: Vec<Move>,
}

impl<'p> Solver<'p> {
    fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.domain.x1_min + ix as f64 * self.h, self.domain.x2_min + iy as f64 * self.h]
    }

    fn move_set(&self, label: RegionLabel) -> &[Move] {
        match label {
            RegionLabel::R1 => &self.moves_r1,
            RegionLabel::R2 => &self.moves_r2,
            RegionLabel::H => &self.moves_h,
        }
    }

    /// Best candidate value at one node given the current table (`values`
    /// may alias the table being written in Gauss-Seidel mode).
    fn update(&self, ix: usize, iy: usize, current: f64, values: &[f64]) -> Result<f64> {
        let mut best = current;
        let x = self.node(ix, iy);
        for mv in self.move_set(self.labels[iy * self.nx + ix]) {
            let cand = match mv {
                Move::Frozen { cost, base, weights, self_corner, denom } => self.gather(
                    ix,
                    iy,
                    values,
                    *cost,
                    *base,
                    weights,
                    *self_corner,
                    *denom,
                ),
                Move::Dynamic { label, control } => {
                    let dynamics = self.problem.dynamics(*label);
                    let f = dynamics.f_at(&x, control)?;
                    let l = dynamics.l_at(&x, control)?;
                    match stencil([self.delta * f[0], self.delta * f[1]], self.h) {
                        Some(s) => self.gather(
                            ix,
                            iy,
                            values,
                            self.delta * l,
                            s.base,
                            &s.weights,
                            s.self_corner,
                            s.denom,
                        ),
                        None => f64::INFINITY,
                    }
                }
            };
            if cand < best {
                best = cand;
            }
        }
        Ok(best)
    }

    #[allow(clippy::too_many_arguments)]
    fn gather(
        &self,
        ix: usize,
        iy: usize,
        values: &[f64],
        cost: f64,
        base: (isize, isize),
        weights: &[f64; 4],
        self_corner: Option<usize>,
        denom: f64,
    ) -> f64 {
        let bx = ix as isize + base.0;
        let by = iy as isize + base.1;
        let mut acc = cost;
        for (c, (ox, oy)) in [(0isize, 0isize), (1, 0), (0, 1), (1, 1)].iter().enumerate() {
            let w = weights[c];
            if w <= 0.0 || Some(c) == self_corner {
                continue;
            }
            let cx = bx + ox;
            let cy = by + oy;
            if cx < 0 || cy < 0 || cx >= self.nx as isize || cy >= self.ny as isize {
                return f64::INFINITY;
            }
            let v = values[cy as usize * self.nx + cx as usize];
            if !v.is_finite() {
                return f64::INFINITY;
            }
            acc += w * v;
        }
        acc / denom
    }
}

/// Build the move list for one region's dynamics at step `delta`.
fn build_moves(
    label: RegionLabel,
    dynamics: &RegionDynamics,
    delta: f64,
    h: f64,
    probe: &[f64],
) -> Result<Vec<Move>> {
    let mut moves = Vec::new();
    for control in sample_controls(dynamics) {
        if dynamics.is_state_free() {
            let f = dynamics.f_at(probe, &control)?;
            let l = dynamics.l_at(probe, &control)?;
            if let Some(s) = stencil([delta * f[0], delta * f[1]], h) {
                moves.push(Move::Frozen {
                    cost: delta * l,
                    base: s.base,
                    weights: s.weights,
                    self_corner: s.self_corner,
                    denom: s.denom,
                });
            }
        } else {
            moves.push(Move::Dynamic { label, control });
        }
    }
    Ok(moves)
}

/// Largest sampled speed |f|, used for the step rule when the problem
/// declares no bound. State-dependent dynamics are probed on a coarse
/// subgrid of the domain.
fn probe_speed(
    problem: &RegionalProblem,
    domain: &GridDomain,
) -> Result<f64> {
    let mut m: f64 = 0.0;
    for label in RegionLabel::ALL {
        let dynamics = problem.dynamics(label);
        let samples = sample_controls(dynamics);
        let probes: Vec<[f64; 2]> = if dynamics.is_state_free() {
            vec![[domain.x1_min, domain.x2_min]]
        } else {
            let mut p = Vec::new();
            for i in 0..5 {
                for j in 0..5 {
                    p.push([
                        domain.x1_min + (domain.x1_max - domain.x1_min) * i as f64 / 4.0,
                        domain.x2_min + (domain.x2_max - domain.x2_min) * j as f64 / 4.0,
                    ]);
                }
            }
            p
        };
        for x in &probes {
            for a in &samples {
                let f = dynamics.f_at(x, a)?;
                m = m.max(norm2(&f));
            }
        }
    }
    Ok(m)
}

/// Solve the minimum-time value function on a uniform grid over `domain`
/// with spacing `h`, target ball of `radius` around the problem's `xf`.
///
/// Only minimum-time problems are supported (the fixed-horizon comparison
/// via time-augmentation is disabled). Returns [`Error::NonConvergence`]
/// if the sup-norm change has not fallen below [`tol::HJB_SUP_TOL`] within
/// [`tol::HJB_MAX_SWEEPS`] sweeps.
pub fn solve_grid(
    problem: &RegionalProblem,
    domain: &GridDomain,
    h: f64,
    radius: f64,
    mode: SweepMode,
) -> Result<GridValueFunction> {
    if problem.n != 2 {
        return Err(Error::invalid(format!(
            "grid solver handles 2-D problems only, state dimension is {}",
            problem.n
        )));
    }
    if problem.mode != CostMode::MinTime {
        return Err(Error::invalid(
            "grid solver supports minimum-time problems only (time-augmented Bolza is disabled)",
        ));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("grid spacing must be positive, got {h}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!("target radius must be positive, got {radius}")));
    }
    let nx = ((domain.x1_max - domain.x1_min) / h + 1e-9).floor() as usize + 1;
    let ny = ((domain.x2_max - domain.x2_min) / h + 1e-9).floor() as usize + 1;
    if nx < 2 || ny < 2 {
        return Err(Error::invalid("grid must hold at least 2 nodes per axis"));
    }

    let speed_bound = match problem.bounds.speed {
        Some(m) if m.is_finite() && m > 0.0 => m,
        _ => probe_speed(problem, domain)?,
    };
    let delta = h / speed_bound.max(1.0);

    // Classify nodes; the H band is geometric: distance to the interface
    // at most h/2, estimated as |psi| / |grad psi|.
    let mut labels = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let x = [domain.x1_min + ix as f64 * h, domain.x2_min + iy as f64 * h];
            let psi = problem.interface.psi(&x)?;
            let grad = problem.interface.grad_psi(&x)?;
            let gn = norm2(&grad);
            let label = if gn > tol::DEGENERATE_NORMAL_TOL && psi.abs() / gn <= 0.5 * h {
                RegionLabel::H
            } else {
                problem.interface.classify(&x)?
            };
            labels.push(label);
        }
    }

    let probe = [domain.x1_min, domain.x2_min];
    let moves_r1 = build_moves(RegionLabel::R1, &problem.r1, delta, h, &probe)?;
    let moves_r2 = build_moves(RegionLabel::R2, &problem.r2, delta, h, &probe)?;
    let mut moves_h = build_moves(RegionLabel::H, &problem.h, delta, h, &probe)?;
    // On-H nodes choose from the union of all three control families.
    moves_h.extend(build_moves(RegionLabel::R1, &problem.r1, delta, h, &probe)?);
    moves_h.extend(build_moves(RegionLabel::R2, &problem.r2, delta, h, &probe)?);

    let solver = Solver {
        problem,
        domain: *domain,
        h,
        nx,
        ny,
        delta,
        labels,
        frozen: Vec::new(),
        moves_r1,
        moves_r2,
        moves_h,
    };

    // Freeze the target ball at zero.
    let mut values = vec![UNREACHED_INIT; nx * ny];
    let mut frozen = vec![false; nx * ny];
    let mut hit = 0usize;
    for iy in 0..ny {
        for ix in 0..nx {
            let x = solver.node(ix, iy);
            let d = ((x[0] - problem.xf[0]).powi(2) + (x[1] - problem.xf[1]).powi(2)).sqrt();
            if d <= radius {
                values[iy * nx + ix] = 0.0;
                frozen[iy * nx + ix] = true;
                hit += 1;
            }
        }
    }
    if hit == 0 {
        return Err(Error::invalid(format!(
            "target ball of radius {radius} around ({}, {}) contains no grid node at h = {h}",
            problem.xf[0], problem.xf[1]
        )));
    }
    let solver = Solver { frozen, ..solver };

    let mut sweeps = 0usize;
    let mut change = f64::INFINITY;
    let mut scratch = if mode == SweepMode::Jacobi { values.clone() } else { Vec::new() };
    while sweeps < tol::HJB_MAX_SWEEPS {
        change = 0.0f64;
        let order = sweeps % 4;
        match mode {
            SweepMode::GaussSeidel => {
                for row in 0..ny {
                    let iy = if order >= 2 { ny - 1 - row } else { row };
                    for col in 0..nx {
                        let ix = if order % 2 == 1 { nx - 1 - col } else { col };
                        let idx = iy * nx + ix;
                        if solver.frozen[idx] {
                            continue;
                        }
                        let old = values[idx];
                        let new = solver.update(ix, iy, old, &values)?;
                        debug_assert!(new <= old);
                        if new < old {
                            change = change.max(old - new);
                            values[idx] = new;
                        }
                    }
                }
            }
            SweepMode::Jacobi => {
                for iy in 0..ny {
                    for ix in 0..nx {
                        let idx = iy * nx + ix;
                        if solver.frozen[idx] {
                            scratch[idx] = values[idx];
                            continue;
                        }
                        let old = values[idx];
                        let new = solver.update(ix, iy, old, &values)?;
                        debug_assert!(new <= old);
                        if new < old {
                            change = change.max(old - new);
                        }
                        scratch[idx] = new;
                    }
                }
                std::mem::swap(&mut values, &mut scratch);
            }
        }
        sweeps += 1;
        if change <= tol::HJB_SUP_TOL {
            break;
        }
    }
    if change > tol::HJB_SUP_TOL {
        return Err(Error::NonConvergence { sweeps, change });
    }
    for v in &mut values {
        if *v >= UNREACHED_CUTOFF {
            *v = f64::INFINITY;
        }
    }

    Ok(GridValueFunction {
        domain: *domain,
        h,
        nx,
        ny,
        values,
        labels: solver.labels,
        target: Some(TargetBall { center: problem.xf.clone(), radius }),
        sweeps,
    })
}

// ---------------------------------------------------------------------------
// Comparison against the structure solver
// ---------------------------------------------------------------------------

/// Outcome of cross-checking the grid value against the structure minimum.
#[derive(Debug, Clone, Serialize)]
pub struct HjbComparison {
    /// Grid value interpolated at the problem's initial state.
    pub grid_value: f64,
    /// Structure-enumeration optimum U.
    pub solver_value: f64,
    /// Reach-time shortening from stopping at the target ball boundary:
    /// radius over the terminal speed of the optimal trajectory.
    pub r_correction: f64,
    pub discrepancy: f64,
    pub pass: bool,
}

/// Terminal speed along the final arc, estimated from the last knot pair
/// with measurable duration.
fn terminal_speed(rs: &RegionalSolution) -> f64 {
    let best = &rs.structures[rs.best_index];
    let Some(arc) = best.arcs.last() else { return 0.0 };
    for j in (1..arc.states.len()).rev() {
        let dt = arc.rho[j] - arc.rho[j - 1];
        if dt > 1e-12 {
            let dx: f64 = arc.states[j]
                .iter()
                .zip(&arc.states[j - 1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            return dx / dt;
        }
    }
    0.0
}

/// Compare the grid value at `x0` with the structure minimum, corrected
/// for the time the grid saves by stopping at the target ball boundary.
pub fn compare(gvf: &GridValueFunction, rs: &RegionalSolution, radius: f64) -> HjbComparison {
    let best = &rs.structures[rs.best_index];
    let grid_value = match best.arcs.first() {
        Some(arc) => gvf.value_at(arc.start_state()),
        None => f64::INFINITY,
    };
    let speed = terminal_speed(rs);
    let r_correction = if speed > 1e-9 { radius / speed } else { 0.0 };
    let discrepancy = (grid_value - (rs.value - r_correction)).abs();
    HjbComparison {
        grid_value,
        solver_value: rs.value,
        r_correction,
        discrepancy,
        pass: discrepancy <= tol::HJB_COMPARE_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::Interface;
    use crate::problem::{Bounds, ControlSet, TerminalTime};

    fn unit_speed(scale: &str) -> RegionDynamics {
        RegionDynamics::new(
            vec![
                Expr::parse(&format!("{scale}*cos(a1)")).unwrap(),
                Expr::parse(&format!("{scale}*sin(a1)")).unwrap(),
            ],
            Expr::parse("1").unwrap(),
            ControlSet::new(&[(-4.0, 4.0)]).unwrap(),
            2,
        )
        .unwrap()
    }

    fn h_dynamics(fx: &str) -> RegionDynamics {
        RegionDynamics::new(
            vec![Expr::parse(fx).unwrap(), Expr::parse("0").unwrap()],
            Expr::parse("1").unwrap(),
            ControlSet::empty(),
            2,
        )
        .unwrap()
    }

    fn tramway(xf: Vec<f64>) -> RegionalProblem {
        RegionalProblem::new(
            Interface::new(Expr::parse("x2").unwrap(), 2).unwrap(),
            unit_speed("1"),
            unit_speed("1"),
            h_dynamics("10"),
            vec![0.0, -1.0],
            0.0,
            xf,
            TerminalTime::Free,
            CostMode::MinTime,
            Bounds { speed: Some(10.0), ..Bounds::default() },
        )
        .unwrap()
    }

    #[test]
    fn free_space_value_is_distance_to_ball() {
        // Interface far outside the domain: a single-region unit-speed
        // problem whose value is max(0, |x - xf| - r).
        let problem = RegionalProblem::new(
            Interface::new(Expr::parse("x2 - 50").unwrap(), 2).unwrap(),
            unit_speed("1"),
            unit_speed("1"),
            h_dynamics("1"),
            vec![-0.5, -0.5],
            0.0,
            vec![0.5, 0.5],
            TerminalTime::Free,
            CostMode::MinTime,
            Bounds { speed: Some(1.0), ..Bounds::default() },
        )
        .unwrap();
        let domain = GridDomain::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let h = 0.05;
        let gvf = solve_grid(&problem, &domain, h, 0.1, SweepMode::GaussSeidel).unwrap();
        for (ix, iy) in [(0, 0), (5, 12), (20, 20), (37, 3), (40, 40), (8, 33)] {
            let x = [domain.x1_min + ix as f64 * h, domain.x2_min + iy as f64 * h];
            let d = ((x[0] - 0.5f64).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
            let expect = (d - 0.1).max(0.0);
            let got = gvf.values[iy * gvf.nx + ix];
            assert!(
                (got - expect).abs() <= 2.0 * h,
                "node ({ix},{iy}): value {got}, distance {expect}"
            );
        }
        assert!(gvf.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn tramway_grid_value_matches_analytic_optimum() {
        let problem = tramway(vec![2.0, 1.0]);
        let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
        let r = 0.05;
        let gvf = solve_grid(&problem, &domain, 0.02, r, SweepMode::GaussSeidel).unwrap();
        let u = gvf.value_at(&[0.0, -1.0]);
        // Terminal leg moves at unit speed, so the ball shortens the time
        // by r; the analytic optimum is 2.1899748742.
        let expect = 2.189_974_874_2 - r;
        assert!(
            (u - expect).abs() <= 5e-2,
            "grid value {u}, expected about {expect}"
        );
    }

    #[test]
    fn interface_ride_dominates_walking() {
        // Both endpoints on the interface, far apart: the tram at speed 10
        // beats any unit-speed walk by an order of magnitude.
        let problem = tramway(vec![2.0, 0.0]);
        let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
        let h = 0.04;
        let r = 0.05;
        let gvf = solve_grid(&problem, &domain, h, r, SweepMode::GaussSeidel).unwrap();
        let u = gvf.value_at(&[-0.5, 0.0]);
        let expect = (2.5 - r) / 10.0;
        assert!((u - expect).abs() <= 2.0 * h, "ride value {u}, expected about {expect}");
    }

    #[test]
    fn extra_interface_controls_never_hurt() {
        // Disabling the tram (f_H = 0 is tangent and goes nowhere) can only
        // raise values: the H-node control set shrinks.
        let with_tram = tramway(vec![2.0, 1.0]);
        let without = RegionalProblem::new(
            Interface::new(Expr::parse("x2").unwrap(), 2).unwrap(),
            unit_speed("1"),
            unit_speed("1"),
            h_dynamics("0"),
            vec![0.0, -1.0],
            0.0,
            vec![2.0, 1.0],
            TerminalTime::Free,
            CostMode::MinTime,
            Bounds { speed: Some(10.0), ..Bounds::default() },
        )
        .unwrap();
        let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
        let a = solve_grid(&with_tram, &domain, 0.1, 0.15, SweepMode::GaussSeidel).unwrap();
        let b = solve_grid(&without, &domain, 0.1, 0.15, SweepMode::GaussSeidel).unwrap();
        for (va, vb) in a.values.iter().zip(&b.values) {
            if vb.is_finite() {
                assert!(va.is_finite());
                assert!(*va <= vb + 1e-9, "with tram {va} > without {vb}");
            }
        }
    }

    #[test]
    fn jacobi_reaches_the_gauss_seidel_fixed_point() {
        let problem = tramway(vec![2.0, 1.0]);
        let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
        let gs = solve_grid(&problem, &domain, 0.1, 0.15, SweepMode::GaussSeidel).unwrap();
        let ja = solve_grid(&problem, &domain, 0.1, 0.15, SweepMode::Jacobi).unwrap();
        assert!(ja.sweeps >= gs.sweeps);
        for (a, b) in gs.values.iter().zip(&ja.values) {
            if a.is_finite() || b.is_finite() {
                assert!(
                    (a - b).abs() <= 1e-8,
                    "sweep orders disagree: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let problem = tramway(vec![2.0, 1.0]);
        let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
        let gvf = solve_grid(&problem, &domain, 0.25, 0.3, SweepMode::GaussSeidel).unwrap();
        let text = gvf.to_csv();
        let back = GridValueFunction::from_csv(&text).unwrap();
        assert_eq!(back.nx, gvf.nx);
        assert_eq!(back.ny, gvf.ny);
        assert_eq!(back.domain, gvf.domain);
        assert_eq!(back.h, gvf.h);
        for (a, b) in gvf.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bolza_mode_is_rejected() {
        let effort = RegionDynamics::new(
            vec![Expr::parse("a1").unwrap(), Expr::parse("a2").unwrap()],
            Expr::parse("a1^2 + a2^2").unwrap(),
            ControlSet::new(&[(-4.0, 4.0), (-4.0, 4.0)]).unwrap(),
            2,
        )
        .unwrap();
        let problem = RegionalProblem::new(
            Interface::new(Expr::parse("x2").unwrap(), 2).unwrap(),
            effort.clone(),
            effort,
            h_dynamics("1"),
            vec![0.0, -1.0],
            0.0,
            vec![1.0, -0.5],
            TerminalTime::Fixed(2.0),
            CostMode::Bolza,
            Bounds::default(),
        )
        .unwrap();
        let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
        let err = solve_grid(&problem, &domain, 0.1, 0.1, SweepMode::GaussSeidel).unwrap_err();
        assert!(err.to_string().contains("minimum-time"), "{err}");
    }
}
