//! Augmented-Lagrangian outer loop over a box-projected L-BFGS inner solver.
//!
//! The shooting objective exposes box bounds, a smooth cost with a soft
//! stay-in-region penalty, and an equality-constraint vector. The outer loop
//! carries multiplier estimates, grows the quadratic penalty tenfold whenever
//! the constraint residual stalls, and tightens the inner stationarity
//! tolerance as it goes. The soft penalty weight rides the same schedule as
//! the quadratic penalty so region violations die together with the
//! constraint residual.

use crate::error::Result;
use crate::tol;

/// What the inner solver needs from a shooting problem.
pub(crate) trait ShootingObjective {
    fn constraint_count(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// Cost, stay-penalty and constraint vector at `z`.
    fn eval(&self, z: &[f64]) -> Result<Objective>;
    /// Merit value and gradient of the augmented Lagrangian at `z`.
    fn merit_grad(&self, z: &[f64], mult: &Multipliers) -> Result<(f64, Vec<f64>)>;
}

/// Raw objective pieces at a point.
pub(crate) struct Objective {
    pub cost: f64,
    pub stay_penalty: f64,
    pub constraints: Vec<f64>,
}

impl Objective {
    pub(crate) fn cmax(&self) -> f64 {
        self.constraints.iter().map(|c| c.abs()).fold(0.0, f64::max)
    }

    /// Augmented-Lagrangian merit for this point under `mult`.
    pub(crate) fn merit(&self, mult: &Multipliers) -> f64 {
        let mut m = self.cost + mult.stay_weight * self.stay_penalty;
        for (c, l) in self.constraints.iter().zip(&mult.lambda) {
            m += l * c + 0.5 * mult.mu * c * c;
        }
        m
    }
}

/// Multiplier / penalty state carried across outer iterations.
pub(crate) struct Multipliers {
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub stay_weight: f64,
}

/// Tunables for one augmented-Lagrangian run.
pub(crate) struct AlParams {
    /// Feasibility target on the sup-norm of the constraint vector.
    pub constraint_tol: f64,
    /// Inner projected-gradient tolerance at the first outer iteration...
    pub inner_tol0: f64,
    /// ...tightened tenfold per outer iteration down to this floor.
    pub inner_tol_floor: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub mu0: f64,
}

impl AlParams {
    /// Defaults for structure solves.
    pub(crate) fn standard() -> Self {
        AlParams {
            constraint_tol: tol::CONSTRAINT_TOL,
            inner_tol0: 1e-3,
            inner_tol_floor: 1e-8,
            max_outer: tol::OUTER_MAX_ITER,
            max_inner: 400,
            mu0: 10.0,
        }
    }

    /// Tighter settings for warm-started re-solves behind value-sensitivity
    /// finite differences, where the value itself is differenced at step
    /// ~1e-3 and must be resolved well below that.
    pub(crate) fn sensitivity() -> Self {
        AlParams {
            constraint_tol: 1e-8,
            inner_tol0: 1e-6,
            inner_tol_floor: 1e-9,
            max_outer: tol::OUTER_MAX_ITER,
            max_inner: 600,
            mu0: 10.0,
        }
    }
}

/// Result of one augmented-Lagrangian run from a single start.
pub(crate) struct AlOutcome {
    pub z: Vec<f64>,
    pub cost: f64,
    pub cmax: f64,
    pub pg_norm: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Run the augmented-Lagrangian loop from `z0`. Returns the best iterate
/// seen: feasible ones (cmax <= constraint_tol) ranked by cost, infeasible
/// ones by residual.
pub(crate) fn solve_auglag<O: ShootingObjective>(
    obj: &O,
    z0: Vec<f64>,
    params: &AlParams,
) -> Result<AlOutcome> {
    let mut mult = Multipliers {
        lambda: vec![0.0; obj.constraint_count()],
        mu: params.mu0,
        stay_weight: params.mu0,
    };
    let mut z = clamped(&z0, obj.lower(), obj.upper());
    let mut inner_tol = params.inner_tol0;
    let mut inner_total = 0;
    let mut prev_cmax = f64::INFINITY;
    let mut best: Option<AlOutcome> = None;

    for outer in 1..=params.max_outer {
        let inner = lbfgs_box(
            |p| Ok(obj.eval(p)?.merit(&mult)),
            |p| obj.merit_grad(p, &mult),
            z,
            obj.lower(),
            obj.upper(),
            inner_tol,
            params.max_inner,
        )?;
        inner_total += inner.iterations;
        z = inner.z;
        let out = obj.eval(&z)?;
        let cmax = out.cmax();
        let candidate = AlOutcome {
            z: z.clone(),
            cost: out.cost,
            cmax,
            pg_norm: inner.pg_norm,
            outer_iterations: outer,
            inner_iterations: inner_total,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                let cand_feasible = cmax <= params.constraint_tol;
                let best_feasible = b.cmax <= params.constraint_tol;
                match (cand_feasible, best_feasible) {
                    (true, true) => candidate.cost < b.cost,
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => cmax < b.cmax,
                }
            }
        };
        if better {
            best = Some(candidate);
        }
        if cmax <= params.constraint_tol && inner_tol <= 10.0 * params.inner_tol_floor {
            break;
        }
        // First-order multiplier update, then grow the penalty if the
        // residual is not shrinking fast enough.
        for (l, c) in mult.lambda.iter_mut().zip(&out.constraints) {
            *l += mult.mu * c;
        }
        if cmax > 0.25 * prev_cmax {
            mult.mu = (mult.mu * tol::PENALTY_GROWTH).min(1e12);
            mult.stay_weight = mult.mu;
        }
        prev_cmax = prev_cmax.min(cmax);
        inner_tol = (inner_tol * 0.1).max(params.inner_tol_floor);
    }
    Ok(best.expect("at least one outer iteration ran"))
}

fn clamped(z: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(lo)
        .zip(hi)
        .map(|((v, l), h)| v.clamp(*l, *h))
        .collect()
}

pub(crate) struct InnerResult {
    pub z: Vec<f64>,
    pub pg_norm: f64,
    pub iterations: usize,
}

/// Box-constrained L-BFGS (history 8) with projected backtracking line
/// search. `value` is cheap (used in the line search); `value_grad` is the
/// expensive combined evaluation. Function-evaluation failures inside the
/// line search reject the trial step instead of aborting.
pub(crate) fn lbfgs_box<F, G>(
    mut value: F,
    mut value_grad: G,
    z0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InnerResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const HISTORY: usize = 8;
    let dim = z0.len();
    let mut z = z0;
    let (mut fz, mut gz) = value_grad(&z)?;
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, 1/<y,s>)
    let mut gamma = 1.0;
    let mut iterations = 0;
    let mut pg_norm = projected_gradient_norm(&z, &gz, lo, hi);

    while iterations < max_iter {
        if pg_norm <= tol {
            break;
        }
        iterations += 1;

        // Two-loop recursion for d = -H g.
        let mut d: Vec<f64> = gz.iter().map(|g| -g).collect();
        let mut alphas = vec![0.0; pairs.len()];
        for (idx, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alphas[idx] = a;
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for (idx, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (alphas[idx] - b) * si;
            }
        }
        // On coordinates pinned at a bound with the gradient pushing outward,
        // quasi-Newton curvature is meaningless; fall back to the (projected)
        // steepest-descent component there.
        for i in 0..dim {
            let at_lo = z[i] <= lo[i] && gz[i] > 0.0;
            let at_hi = z[i] >= hi[i] && gz[i] < 0.0;
            if at_lo || at_hi {
                d[i] = 0.0;
            }
        }

        let mut accepted = false;
        let mut t = 1.0;
        let mut trial = vec![0.0; dim];
        for _ in 0..40 {
            for i in 0..dim {
                trial[i] = (z[i] + t * d[i]).clamp(lo[i], hi[i]);
            }
            let pred: f64 = trial
                .iter()
                .zip(&z)
                .zip(&gz)
                .map(|((ti, zi), gi)| gi * (ti - zi))
                .sum();
            if pred >= 0.0 {
                // Projection killed the descent direction at this step size.
                t *= 0.5;
                if t < 1e-16 {
                    break;
                }
                continue;
            }
            let ft = value(&trial).unwrap_or(f64::INFINITY);
            if ft <= fz + 1e-4 * pred {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if pairs.is_empty() {
                break; // steepest descent already failed; stationary enough
            }
            pairs.clear();
            gamma = 1.0;
            continue;
        }

        let (ft, gt) = value_grad(&trial)?;
        let s: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&gz).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) && yy > 0.0 {
            gamma = sy / yy;
            pairs.push((s, y, 1.0 / sy));
            if pairs.len() > HISTORY {
                pairs.remove(0);
            }
        }
        z = trial.clone();
        fz = ft;
        gz = gt;
        pg_norm = projected_gradient_norm(&z, &gz, lo, hi);
    }

    Ok(InnerResult { z, pg_norm, iterations })
}

fn projected_gradient_norm(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((zi, gi), (l, h))| (zi - (zi - gi).clamp(*l, *h)).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
