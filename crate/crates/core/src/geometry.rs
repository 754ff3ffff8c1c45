//! Interface geometry: region classification, normals, tangential projection.
//!
//! The state space splits into two open regions separated by the zero set of
//! a C^1 function psi: region 1 is `psi < 0`, region 2 is `psi > 0`, and the
//! interface H is a thin band `|psi| <= eta` around the zero set. All
//! geometric queries (normal direction, tangential projection, Newton
//! projection onto H) go through [`Interface`], which pre-differentiates psi
//! once at construction.

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::tol;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which piece of the partitioned state space a point belongs to.
///
/// Ordered `R1 < H < R2`; enumeration of structure words relies on this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    R1,
    H,
    R2,
}

impl RegionLabel {
    /// The sign sigma such that sigma * psi > 0 on the region's interior.
    /// Zero for the interface itself.
    pub fn side_sign(self) -> f64 {
        match self {
            RegionLabel::R1 => -1.0,
            RegionLabel::H => 0.0,
            RegionLabel::R2 => 1.0,
        }
    }

    /// All labels in order.
    pub const ALL: [RegionLabel; 3] = [RegionLabel::R1, RegionLabel::H, RegionLabel::R2];
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionLabel::R1 => write!(f, "1"),
            RegionLabel::H => write!(f, "H"),
            RegionLabel::R2 => write!(f, "2"),
        }
    }
}

/// The interface `{psi = 0}` with its classification band half-width `eta`.
#[derive(Debug, Clone)]
pub struct Interface {
    psi: Expr,
    /// Pre-differentiated gradient trees, one per state component.
    grad: Vec<Expr>,
    /// Half-width of the band classified as H.
    pub eta: f64,
    /// State dimension.
    pub state_dim: usize,
}

impl Interface {
    /// Build an interface from a psi expression over `n` state components.
    ///
    /// Validates that psi references states only (no controls) and that every
    /// referenced component exists; pre-differentiates psi for gradient
    /// queries. `eta` defaults to [`tol::ETA_H`].
    pub fn new(psi: Expr, n: usize) -> Result<Self> {
        Self::with_eta(psi, n, tol::ETA_H)
    }

    /// Same as [`Interface::new`] with an explicit band half-width.
    pub fn with_eta(psi: Expr, n: usize, eta: f64) -> Result<Self> {
        if psi.references_control() {
            return Err(Error::invalid("psi must not reference control variables"));
        }
        if let Some(max) = psi.max_state_index() {
            if max >= n {
                return Err(Error::invalid(format!(
                    "psi references x{} but the state dimension is {n}",
                    max + 1
                )));
            }
        }
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("eta must be positive, got {eta}")));
        }
        let grad = (0..n)
            .map(|i| psi.diff(Var::State(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Interface { psi, grad, eta, state_dim: n })
    }

    /// The interface function itself.
    pub fn psi_expr(&self) -> &Expr {
        &self.psi
    }

    /// Evaluate psi at a state.
    pub fn psi(&self, x: &[f64]) -> Result<f64> {
        self.psi.eval(x, &[])
    }

    /// Evaluate the gradient of psi at a state.
    pub fn grad_psi(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.grad.iter().map(|g| g.eval(x, &[])).collect()
    }

    /// Classify a state: H inside the band `|psi| <= eta`, otherwise the
    /// region matching the sign of psi.
    pub fn classify(&self, x: &[f64]) -> Result<RegionLabel> {
        let v = self.psi(x)?;
        Ok(if v.abs() <= self.eta {
            RegionLabel::H
        } else if v < 0.0 {
            RegionLabel::R1
        } else {
            RegionLabel::R2
        })
    }

    /// Unit normal `grad psi / |grad psi|` at a state.
    pub fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.grad_psi(x)?;
        let norm = norm2(&g);
        if norm <= tol::DEGENERATE_NORMAL_TOL {
            return Err(Error::DegenerateNormal { norm });
        }
        Ok(g.iter().map(|v| v / norm).collect())
    }

    /// Project a vector onto the tangent space of H at `x`:
    /// `v - <v, n> n` with `n` the unit normal.
    ///
    /// Requires `x` to classify as H.
    pub fn tangent_project(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let psi = self.psi(x)?;
        if psi.abs() > self.eta {
            return Err(Error::NotOnInterface { psi });
        }
        let n = self.normal(x)?;
        let vn = dot(v, &n);
        Ok(v.iter().zip(&n).map(|(vi, ni)| vi - vn * ni).collect())
    }

    /// Newton projection of a state onto `{psi = 0}` along the gradient
    /// direction; at most [`tol::PROJECTION_MAX_ITER`] iterations.
    pub fn snap(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        for _ in 0..tol::PROJECTION_MAX_ITER {
            let v = self.psi(&y)?;
            if v.abs() <= tol::PROJECTION_TOL {
                return Ok(y);
            }
            let g = self.grad_psi(&y)?;
            let g2 = dot(&g, &g);
            if g2.sqrt() <= tol::DEGENERATE_NORMAL_TOL {
                return Err(Error::DegenerateNormal { norm: g2.sqrt() });
            }
            for (yi, gi) in y.iter_mut().zip(&g) {
                *yi -= v * gi / g2;
            }
        }
        let psi = self.psi(&y)?;
        if psi.abs() <= self.eta {
            // Good enough for classification even if not at full precision.
            return Ok(y);
        }
        Err(Error::ProjectionFailed { iterations: tol::PROJECTION_MAX_ITER, psi })
    }

    /// Check that interface dynamics are tangent to H over a set of sampled
    /// `(state, control)` pairs: `max |<f_H, grad psi>| / |grad psi|` must not
    /// exceed [`tol::TANGENCY_TOL`].
    pub fn check_tangency(
        &self,
        f_h: &[Expr],
        samples: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<TangencyReport> {
        let mut max_violation = 0.0f64;
        for (x, a) in samples {
            let g = self.grad_psi(x)?;
            let gn = norm2(&g);
            if gn <= tol::DEGENERATE_NORMAL_TOL {
                return Err(Error::DegenerateNormal { norm: gn });
            }
            let mut inner = 0.0;
            for (fi, gi) in f_h.iter().zip(&g) {
                inner += fi.eval(x, a)? * gi;
            }
            max_violation = max_violation.max(inner.abs() / gn);
        }
        Ok(TangencyReport {
            samples: samples.len(),
            max_violation,
            pass: max_violation <= tol::TANGENCY_TOL,
        })
    }
}

/// Result of a tangency check of interface dynamics against the interface.
#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    pub samples: usize,
    pub max_violation: f64,
    pub pass: bool,
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> Interface {
        Interface::new(Expr::parse("x2").unwrap(), 2).unwrap()
    }

    #[test]
    fn classify_flat_interface() {
        let h = flat();
        assert_eq!(h.classify(&[0.3, -0.5]).unwrap(), RegionLabel::R1);
        assert_eq!(h.classify(&[0.3, 0.5]).unwrap(), RegionLabel::R2);
        assert_eq!(h.classify(&[0.3, 0.0]).unwrap(), RegionLabel::H);
        assert_eq!(h.classify(&[0.3, 0.5e-9]).unwrap(), RegionLabel::H);
        assert_eq!(h.classify(&[0.3, 2e-9]).unwrap(), RegionLabel::R2);
        assert_eq!(h.classify(&[0.3, -2e-9]).unwrap(), RegionLabel::R1);
    }

    #[test]
    fn classify_curved_interface() {
        // psi = x1^2 + x2^2 - 1: region 1 inside the unit circle.
        let h = Interface::new(Expr::parse("x1^2+x2^2-1").unwrap(), 2).unwrap();
        assert_eq!(h.classify(&[0.0, 0.0]).unwrap(), RegionLabel::R1);
        assert_eq!(h.classify(&[2.0, 0.0]).unwrap(), RegionLabel::R2);
        assert_eq!(h.classify(&[1.0, 0.0]).unwrap(), RegionLabel::H);
    }

    #[test]
    fn normal_and_projection() {
        let h = flat();
        let n = h.normal(&[0.0, 0.0]).unwrap();
        assert_eq!(n, vec![0.0, 1.0]);
        let v = [3.0, 4.0];
        let t = h.tangent_project(&[1.0, 0.0], &v).unwrap();
        assert_eq!(t, vec![3.0, 0.0]);
        // Idempotent.
        let t2 = h.tangent_project(&[1.0, 0.0], &t).unwrap();
        assert_eq!(t, t2);
        // Off-interface points are rejected.
        assert!(matches!(
            h.tangent_project(&[1.0, 0.5], &v),
            Err(Error::NotOnInterface { .. })
        ));
    }

    #[test]
    fn degenerate_normal_detected() {
        // psi = x1^2 has vanishing gradient on the zero set itself.
        let h = Interface::new(Expr::parse("x1^2").unwrap(), 2).unwrap();
        assert!(matches!(
            h.normal(&[0.0, 0.0]),
            Err(Error::DegenerateNormal { .. })
        ));
    }

    #[test]
    fn snap_converges_on_curved_interface() {
        let h = Interface::new(Expr::parse("x1^2+x2^2-1").unwrap(), 2).unwrap();
        let y = h.snap(&[1.4, 0.7]).unwrap();
        assert!(h.psi(&y).unwrap().abs() <= 1e-12);
        // The projection moves along the gradient, so the direction is kept.
        assert!((y[0] / y[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn psi_with_controls_rejected() {
        assert!(Interface::new(Expr::parse("x1+a1").unwrap(), 2).is_err());
        assert!(Interface::new(Expr::parse("x3").unwrap(), 2).is_err());
    }

    #[test]
    fn tangency_check() {
        let h = flat();
        let f_tangent = [Expr::parse("10").unwrap(), Expr::parse("0").unwrap()];
        let samples = vec![(vec![0.0, 0.0], vec![]), (vec![5.0, 0.0], vec![])];
        let rep = h.check_tangency(&f_tangent, &samples).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_violation, 0.0);

        let f_bad = [Expr::parse("10").unwrap(), Expr::parse("1e-6").unwrap()];
        let rep = h.check_tangency(&f_bad, &samples).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_violation - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn label_order_and_display() {
        assert!(RegionLabel::R1 < RegionLabel::H);
        assert!(RegionLabel::H < RegionLabel::R2);
        assert_eq!(RegionLabel::R1.to_string(), "1");
        assert_eq!(RegionLabel::H.to_string(), "H");
        assert_eq!(RegionLabel::R2.to_string(), "2");
    }
}
