//! Fixed-step arc integration for the lifted dynamics.
//!
//! Controls and time dilations are piecewise constant on a uniform
//! pseudo-time mesh of `nodes` intervals over [0, 1], each integrated with
//! `substeps` classical RK4 steps. Arcs on the interface are re-projected
//! onto `Psi = 0` by a Newton step after every substep; region arcs
//! accumulate a soft penalty for leaving their open region (the squared
//! wrong-side excess, integrated in original time).
//!
//! Dynamics whose `f` and `l` never read the state integrate exactly: the
//! stage values coincide, so each substep is a single linear advance. That
//! fast path also keeps the terminal displacement a pure function of the
//! controls, which the solver exploits for translation-exact sensitivity
//! checks (see `offset` on [`advance_arc_raw`]).

use crate::error::{Error, Result};
use crate::geometry::{Interface, RegionLabel};
use crate::lift::ArcTrajectory;
use crate::problem::RegionDynamics;
use crate::tol;

/// How an arc interacts with the interface while integrating.
#[derive(Clone, Copy)]
pub enum ArcGeometry<'a> {
    /// No interface bookkeeping (single-region problems, tests).
    Free,
    /// Open-region arc: accumulate the stay-in-region penalty
    /// `max(0, -sign * Psi)^2` integrated in original time.
    Region { interface: &'a Interface, sign: f64 },
    /// Interface arc: Newton re-projection onto `Psi = 0` after each substep.
    OnInterface { interface: &'a Interface },
}

/// Result of integrating one arc.
#[derive(Debug, Clone)]
pub struct ArcResult {
    pub arc: ArcTrajectory,
    /// Integral of `l * w` over the arc (original-time running cost).
    pub cost: f64,
    /// Integral of the stay-in-region violation, squared, times `w`.
    pub penalty: f64,
}

/// Running accumulator for a partially integrated arc.
#[derive(Clone, Debug)]
pub(crate) struct StepAccum {
    /// Current state (local coordinates when an offset is in use).
    pub y: Vec<f64>,
    pub rho: f64,
    pub cost: f64,
    pub penalty: f64,
}

impl StepAccum {
    pub(crate) fn new(y: Vec<f64>, rho: f64) -> Self {
        StepAccum { y, rho, cost: 0.0, penalty: 0.0 }
    }
}

/// Integrate nodes `node_start..node_end` of an arc, mutating `acc`. The
/// control values come flat (`m` components per node over the *whole* arc of
/// `clocks.len()` nodes, so callers can pass decision-vector sub-slices
/// without re-packing). When `offset` is `Some`, `acc.y` holds local
/// coordinates and geometry (penalty, projection) and recorded knots see
/// `acc.y + offset`; dynamics must then be state-free, which the caller
/// guarantees.
///
/// `sink`, when present, receives one `(state, rho)` pair per substep (the
/// caller records the initial knot itself).
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance_arc_flat(
    dynamics: &RegionDynamics,
    geometry: ArcGeometry<'_>,
    acc: &mut StepAccum,
    ctrl_flat: &[f64],
    m: usize,
    clocks: &[f64],
    substeps: usize,
    node_start: usize,
    node_end: usize,
    offset: Option<&[f64]>,
    mut sink: Option<&mut Vec<(Vec<f64>, f64)>>,
) -> Result<()> {
    debug_assert_eq!(ctrl_flat.len(), m * clocks.len());
    debug_assert!(offset.is_none() || dynamics.is_state_free());
    let n = acc.y.len();
    let nodes = clocks.len();
    let h_node = 1.0 / nodes as f64;
    let h_sub = h_node / substeps as f64;
    let state_free = dynamics.is_state_free();

    let mut fval = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut abs = vec![0.0; n];

    let absolute = |y: &[f64], abs: &mut [f64]| {
        match offset {
            Some(off) => {
                for ((a, yi), oi) in abs.iter_mut().zip(y).zip(off) {
                    *a = yi + oi;
                }
            }
            None => abs.copy_from_slice(y),
        }
    };

    let violation_rate = |interface: &Interface, sign: f64, abs: &[f64]| -> Result<f64> {
        let psi = interface.psi(abs)?;
        let excess = (-sign * psi).max(0.0);
        Ok(excess * excess)
    };

    for node in node_start..node_end {
        let a = &ctrl_flat[node * m..(node + 1) * m];
        let w = clocks[node];
        if state_free {
            dynamics.eval_f(&acc.y, a, &mut fval)?;
            let lval = dynamics.l_at(&acc.y, a)?;
            for sub in 0..substeps {
                let _ = sub;
                let mut rate0 = 0.0;
                if let ArcGeometry::Region { interface, sign } = geometry {
                    absolute(&acc.y, &mut abs);
                    rate0 = violation_rate(interface, sign, &abs)?;
                }
                for (yi, fi) in acc.y.iter_mut().zip(&fval) {
                    *yi += fi * w * h_sub;
                }
                acc.rho += w * h_sub;
                acc.cost += lval * w * h_sub;
                match geometry {
                    ArcGeometry::Free => {}
                    ArcGeometry::Region { interface, sign } => {
                        absolute(&acc.y, &mut abs);
                        let rate1 = violation_rate(interface, sign, &abs)?;
                        acc.penalty += 0.5 * (rate0 + rate1) * w * h_sub;
                    }
                    ArcGeometry::OnInterface { interface } => {
                        // offset is None on interface arcs (state-dependent
                        // projection), so acc.y is absolute here.
                        acc.y = interface.snap(&acc.y)?;
                    }
                }
                if let Some(sink) = sink.as_deref_mut() {
                    absolute(&acc.y, &mut abs);
                    sink.push((abs.clone(), acc.rho));
                }
            }
        } else {
            for _ in 0..substeps {
                let mut rate0 = 0.0;
                if let ArcGeometry::Region { interface, sign } = geometry {
                    rate0 = violation_rate(interface, sign, &acc.y)?;
                }
                // RK4 on (y, cost) with constant control and dilation.
                dynamics.eval_f(&acc.y, a, &mut k1)?;
                let l1 = dynamics.l_at(&acc.y, a)?;
                for ((s, yi), ki) in stage.iter_mut().zip(&acc.y).zip(&k1) {
                    *s = yi + 0.5 * h_sub * w * ki;
                }
                dynamics.eval_f(&stage, a, &mut k2)?;
                let l2 = dynamics.l_at(&stage, a)?;
                for ((s, yi), ki) in stage.iter_mut().zip(&acc.y).zip(&k2) {
                    *s = yi + 0.5 * h_sub * w * ki;
                }
                dynamics.eval_f(&stage, a, &mut k3)?;
                let l3 = dynamics.l_at(&stage, a)?;
                for ((s, yi), ki) in stage.iter_mut().zip(&acc.y).zip(&k3) {
                    *s = yi + h_sub * w * ki;
                }
                dynamics.eval_f(&stage, a, &mut k4)?;
                let l4 = dynamics.l_at(&stage, a)?;
                for ((((yi, a1), a2), a3), a4) in
                    acc.y.iter_mut().zip(&k1).zip(&k2).zip(&k3).zip(&k4)
                {
                    *yi += h_sub * w / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
                }
                acc.cost += h_sub * w / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
                acc.rho += w * h_sub;
                match geometry {
                    ArcGeometry::Free => {}
                    ArcGeometry::Region { interface, sign } => {
                        let rate1 = violation_rate(interface, sign, &acc.y)?;
                        acc.penalty += 0.5 * (rate0 + rate1) * w * h_sub;
                    }
                    ArcGeometry::OnInterface { interface } => {
                        acc.y = interface.snap(&acc.y)?;
                    }
                }
                if let Some(sink) = sink.as_deref_mut() {
                    sink.push((acc.y.clone(), acc.rho));
                }
            }
        }
        let norm = acc.y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !norm.is_finite() || norm > tol::BLOWUP_NORM {
            return Err(Error::BlowUp { norm });
        }
    }
    Ok(())
}

/// Integrate a complete arc on pseudo-time [0, 1] and record its knot grid.
///
/// `controls` has one value per node, `clocks` the matching time dilations;
/// the resulting trajectory has `controls.len() * substeps + 1` knots.
pub fn integrate_arc(
    dynamics: &RegionDynamics,
    label: RegionLabel,
    geometry: ArcGeometry<'_>,
    y0: &[f64],
    rho0: f64,
    controls: &[Vec<f64>],
    clocks: &[f64],
    substeps: usize,
) -> Result<ArcResult> {
    if controls.is_empty() {
        return Err(Error::invalid("integrate_arc needs at least one control node"));
    }
    if controls.len() != clocks.len() {
        return Err(Error::invalid("integrate_arc needs one clock per control node"));
    }
    let nodes = controls.len();
    let m = dynamics.control_dim();
    let mut flat = Vec::with_capacity(nodes * m);
    for a in controls {
        if a.len() != m {
            return Err(Error::invalid(format!(
                "control node has {} components, dynamics expect {m}",
                a.len()
            )));
        }
        flat.extend_from_slice(a);
    }
    let mut acc = StepAccum::new(y0.to_vec(), rho0);
    let mut knots: Vec<(Vec<f64>, f64)> = Vec::with_capacity(nodes * substeps);
    advance_arc_flat(
        dynamics,
        geometry,
        &mut acc,
        &flat,
        m,
        clocks,
        substeps,
        0,
        nodes,
        None,
        Some(&mut knots),
    )?;
    let total = nodes * substeps;
    let tau: Vec<f64> = (0..=total).map(|i| i as f64 / total as f64).collect();
    let mut states = Vec::with_capacity(total + 1);
    let mut rho = Vec::with_capacity(total + 1);
    states.push(y0.to_vec());
    rho.push(rho0);
    for (y, r) in knots {
        states.push(y);
        rho.push(r);
    }
    Ok(ArcResult {
        arc: ArcTrajectory {
            label,
            tau,
            states,
            rho,
            controls: controls.to_vec(),
            clocks: clocks.to_vec(),
        },
        cost: acc.cost,
        penalty: acc.penalty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::problem::ControlSet;

    fn dynamics(f: &[&str], l: &str, controls: &[(f64, f64)], n: usize) -> RegionDynamics {
        RegionDynamics::new(
            f.iter().map(|s| Expr::parse(s).unwrap()).collect(),
            Expr::parse(l).unwrap(),
            ControlSet::new(controls).unwrap(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn constant_walk_reaches_unit_point() {
        let d = dynamics(&["cos(a1)", "sin(a1)"], "1", &[(-4.0, 4.0)], 2);
        let controls = vec![vec![0.0]; 10];
        let clocks = vec![1.0; 10];
        let r = integrate_arc(
            &d,
            RegionLabel::R1,
            ArcGeometry::Free,
            &[0.0, 0.0],
            0.0,
            &controls,
            &clocks,
            4,
        )
        .unwrap();
        let end = r.arc.end_state();
        assert!((end[0] - 1.0).abs() < 1e-12, "x {}", end[0]);
        assert!(end[1].abs() < 1e-12);
        assert!((r.cost - 1.0).abs() < 1e-12);
        assert!((r.arc.end_time() - 1.0).abs() < 1e-12);
        assert_eq!(r.arc.states.len(), 41);
    }

    #[test]
    fn interface_tram_with_half_dilation() {
        let interface = Interface::new(Expr::parse("x2").unwrap(), 2).unwrap();
        let d = dynamics(&["10", "0"], "1", &[], 2);
        let controls = vec![vec![]; 8];
        let clocks = vec![0.5; 8];
        let r = integrate_arc(
            &d,
            RegionLabel::H,
            ArcGeometry::OnInterface { interface: &interface },
            &[0.0, 0.0],
            0.0,
            &controls,
            &clocks,
            4,
        )
        .unwrap();
        let end = r.arc.end_state();
        assert!((end[0] - 5.0).abs() < 1e-12);
        assert!(end[1].abs() < 1e-12);
        assert!((r.arc.duration() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let d = dynamics(&["x2", "-x1"], "1", &[], 2);
        let nodes = 40;
        let w = 2.0 * std::f64::consts::PI;
        let controls = vec![vec![]; nodes];
        let clocks = vec![w; nodes];
        let r = integrate_arc(
            &d,
            RegionLabel::R1,
            ArcGeometry::Free,
            &[1.0, 0.0],
            0.0,
            &controls,
            &clocks,
            8,
        )
        .unwrap();
        let end = r.arc.end_state();
        assert!((end[0] - 1.0).abs() < 1e-6, "x {}", end[0]);
        assert!(end[1].abs() < 1e-6, "y {}", end[1]);
    }

    #[test]
    fn region_penalty_accumulates_on_wrong_side() {
        let interface = Interface::new(Expr::parse("x2").unwrap(), 2).unwrap();
        // Straight up through the interface: region-1 arc (sign -1) spends
        // half its time at psi > 0. Violation rate at time t>0.5 is
        // (t-0.5)^2, integral over [0.5, 1] = 1/24 in arc time.
        let d = dynamics(&["0", "1"], "1", &[], 2);
        let controls = vec![vec![]; 10];
        let clocks = vec![1.0; 10];
        let r = integrate_arc(
            &d,
            RegionLabel::R1,
            ArcGeometry::Region { interface: &interface, sign: -1.0 },
            &[0.0, -0.5],
            0.0,
            &controls,
            &clocks,
            4,
        )
        .unwrap();
        assert!((r.penalty - 1.0 / 24.0).abs() < 1e-4, "penalty {}", r.penalty);
        let r2 = integrate_arc(
            &d,
            RegionLabel::R2,
            ArcGeometry::Region { interface: &interface, sign: 1.0 },
            &[0.0, 0.5],
            0.0,
            &controls,
            &clocks,
            4,
        )
        .unwrap();
        assert_eq!(r2.penalty, 0.0);
    }

    #[test]
    fn blowup_is_detected() {
        let d = dynamics(&["x1*x1", "0"], "1", &[], 2);
        let controls = vec![vec![]; 10];
        let clocks = vec![100.0; 10];
        let r = integrate_arc(
            &d,
            RegionLabel::R1,
            ArcGeometry::Free,
            &[2.0, 0.0],
            0.0,
            &controls,
            &clocks,
            4,
        );
        assert!(matches!(r, Err(Error::BlowUp { .. }) | Err(Error::Eval(_))), "{r:?}");
    }

    #[test]
    fn snapped_arc_stays_on_curved_interface() {
        let interface = Interface::new(Expr::parse("x1^2+x2^2-1").unwrap(), 2).unwrap();
        // Rotation field is tangent to the circle.
        let d = dynamics(&["0-x2", "x1"], "1", &[], 2);
        let controls = vec![vec![]; 20];
        let clocks = vec![1.0; 20];
        let r = integrate_arc(
            &d,
            RegionLabel::H,
            ArcGeometry::OnInterface { interface: &interface },
            &[1.0, 0.0],
            0.0,
            &controls,
            &clocks,
            4,
        )
        .unwrap();
        for s in &r.arc.states {
            let psi = (s[0] * s[0] + s[1] * s[1] - 1.0).abs();
            assert!(psi < 1e-9, "drifted off the circle: {psi}");
        }
    }
}
