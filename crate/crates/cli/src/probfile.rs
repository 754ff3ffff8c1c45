//! Problem file loading: TOML documents describing a regional problem.
//!
//! A file holds the state dimension, cost mode, the interface function,
//! the three region blocks (`"1"`, `"2"`, `"H"`), boundary data, and
//! optional growth bounds:
//!
//! ```toml
//! state_dim = 2
//! mode = "min_time"
//!
//! [interface]
//! psi = "x2"
//!
//! [regions."1"]
//! f = ["cos(a1)", "sin(a1)"]
//! controls = [[-4.0, 4.0]]
//!
//! # ... regions."2", regions."H", [boundary], optional [bounds]
//! ```
//!
//! Errors carry positions: TOML syntax problems report line/column from
//! the parser, and expression errors report their own line/column inside
//! the offending field, prefixed with the field path.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use regional_core::expr::Expr;
use regional_core::geometry::Interface;
use regional_core::problem::{
    Bounds, ControlSet, CostMode, RegionDynamics, RegionalProblem, TerminalTime,
};
use regional_core::tol;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    state_dim: usize,
    mode: ModeField,
    interface: InterfaceSection,
    regions: RegionsSection,
    boundary: BoundarySection,
    bounds: Option<BoundsSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
enum ModeField {
    #[serde(rename = "min_time")]
    MinTime,
    #[serde(rename = "bolza")]
    Bolza,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterfaceSection {
    psi: String,
    eta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionsSection {
    #[serde(rename = "1")]
    r1: RegionSection,
    #[serde(rename = "2")]
    r2: RegionSection,
    #[serde(rename = "H")]
    h: RegionSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSection {
    f: Vec<String>,
    /// Running cost; defaults to "1" (the only value minimum-time allows).
    l: Option<String>,
    controls: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundarySection {
    x0: Vec<f64>,
    t0: f64,
    xf: Vec<f64>,
    tf: TfField,
}

/// `tf` is either a number or the string `"free"`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TfField {
    Number(f64),
    Keyword(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    #[serde(rename = "M")]
    m: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
    #[serde(rename = "L1")]
    l1: Option<f64>,
}

/// A parsed problem together with the raw document it came from (reports
/// embed the source so a run can be reproduced from the report alone).
pub struct LoadedProblem {
    pub problem: RegionalProblem,
    pub source: String,
}

/// Read and parse a problem file. The error string is ready to print.
pub fn load(path: &Path) -> Result<LoadedProblem, String> {
    let source = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let problem = from_source(&source)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(LoadedProblem { problem, source })
}

/// Parse a problem document from its text.
pub fn from_source(source: &str) -> Result<RegionalProblem, String> {
    let doc: ProblemDoc = toml::from_str(source).map_err(|e| e.to_string())?;
    build(doc)
}

fn parse_expr(field: &str, text: &str) -> Result<Expr, String> {
    Expr::parse(text).map_err(|e| format!("in {field}: {e}"))
}

fn build_region(which: &str, section: &RegionSection, n: usize) -> Result<RegionDynamics, String> {
    if section.f.len() != n {
        return Err(format!(
            "in regions.\"{which}\".f: expected {n} components, got {}",
            section.f.len()
        ));
    }
    let f = section
        .f
        .iter()
        .enumerate()
        .map(|(i, text)| parse_expr(&format!("regions.\"{which}\".f[{i}]"), text))
        .collect::<Result<Vec<_>, _>>()?;
    let l = match &section.l {
        Some(text) => parse_expr(&format!("regions.\"{which}\".l"), text)?,
        None => Expr::Const(1.0),
    };
    let controls = if section.controls.is_empty() {
        ControlSet::empty()
    } else {
        let boxes: Vec<(f64, f64)> = section.controls.iter().map(|b| (b[0], b[1])).collect();
        ControlSet::new(&boxes)
            .map_err(|e| format!("in regions.\"{which}\".controls: {e}"))?
    };
    RegionDynamics::new(f, l, controls, n).map_err(|e| format!("in regions.\"{which}\": {e}"))
}

fn build(doc: ProblemDoc) -> Result<RegionalProblem, String> {
    let n = doc.state_dim;
    if n == 0 {
        return Err("state_dim must be at least 1".into());
    }
    let psi = parse_expr("interface.psi", &doc.interface.psi)?;
    let eta = doc.interface.eta.unwrap_or(tol::ETA_H);
    let interface =
        Interface::with_eta(psi, n, eta).map_err(|e| format!("in interface: {e}"))?;
    let r1 = build_region("1", &doc.regions.r1, n)?;
    let r2 = build_region("2", &doc.regions.r2, n)?;
    let h = build_region("H", &doc.regions.h, n)?;
    let tf = match doc.boundary.tf {
        TfField::Number(v) => TerminalTime::Fixed(v),
        TfField::Keyword(ref k) if k == "free" => TerminalTime::Free,
        TfField::Keyword(k) => {
            return Err(format!(
                "in boundary.tf: expected a number or \"free\", got {k:?}"
            ))
        }
    };
    let mode = match doc.mode {
        ModeField::MinTime => CostMode::MinTime,
        ModeField::Bolza => CostMode::Bolza,
    };
    let bounds = match doc.bounds {
        Some(b) => Bounds { speed: b.m, lip: b.l, cost_lip: b.l1 },
        None => Bounds::default(),
    };
    RegionalProblem::new(
        interface,
        r1,
        r2,
        h,
        doc.boundary.x0,
        doc.boundary.t0,
        doc.boundary.xf,
        tf,
        mode,
        bounds,
    )
    .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRAM: &str = r#"
state_dim = 2
mode = "min_time"

[interface]
psi = "x2"

[regions."1"]
f = ["cos(a1)", "sin(a1)"]
controls = [[-4.0, 4.0]]

[regions."2"]
f = ["cos(a1)", "sin(a1)"]
controls = [[-4.0, 4.0]]

[regions."H"]
f = ["10", "0"]
controls = []

[boundary]
x0 = [0.0, -1.0]
t0 = 0.0
xf = [2.0, 1.0]
tf = "free"

[bounds]
M = 10.0
"#;

    #[test]
    fn parses_the_tramway_document() {
        let problem = from_source(TRAM).unwrap();
        assert_eq!(problem.n, 2);
        assert_eq!(problem.mode, CostMode::MinTime);
        assert_eq!(problem.tf, TerminalTime::Free);
        assert_eq!(problem.bounds.speed, Some(10.0));
        assert_eq!(problem.x0, vec![0.0, -1.0]);
        assert_eq!(problem.h.control_dim(), 0);
    }

    #[test]
    fn toml_errors_carry_line_and_column() {
        let bad = TRAM.replace("t0 = 0.0", "t0 = = 0.0");
        let err = from_source(&bad).unwrap_err();
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("column"), "{err}");
    }

    #[test]
    fn expression_errors_name_the_field() {
        let bad = TRAM.replace("\"cos(a1)\", \"sin(a1)\"", "\"cos(a1\", \"sin(a1)\"");
        let err = from_source(&bad).unwrap_err();
        assert!(err.contains("regions.\"1\".f[0]"), "{err}");
        assert!(err.contains("1:"), "{err}");
    }

    #[test]
    fn tf_keyword_is_validated() {
        let bad = TRAM.replace("tf = \"free\"", "tf = \"whenever\"");
        let err = from_source(&bad).unwrap_err();
        assert!(err.contains("boundary.tf"), "{err}");
    }

    #[test]
    fn min_time_rejects_fixed_horizon() {
        let bad = TRAM.replace("tf = \"free\"", "tf = 2.0");
        let err = from_source(&bad).unwrap_err();
        assert!(err.contains("free tf"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{TRAM}\nextra = 1\n");
        let err = from_source(&bad).unwrap_err();
        assert!(err.contains("extra"), "{err}");
    }
}
