//! Report and artifact serialization.
//!
//! `report.json` is the machine-readable run record: configuration,
//! per-structure results, the selected optimum, and — once `verify` or
//! `hjb --compare` have run — the junction, Hamiltonian, sensitivity, and
//! grid-comparison sections. Key order is fixed (struct declaration
//! order) and every float is rounded to 12 significant digits before
//! writing, so identical inputs produce byte-identical reports.
//!
//! `solution.json` stores the winning trajectory at full precision plus
//! the problem source and discretization — everything `verify` and
//! `hjb --compare` need to rerun without the original file. Trajectory
//! CSVs (`traj_<word>.csv`) carry one knot per row for plotting.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use regional_core::pmp::{
    AdjointSolution, ConstancyReport, JunctionReport, SensitivityReport,
};
use regional_core::problem::RegionalProblem;
use regional_core::solve::{Discretization, RegionalSolution, StructureSolution};
use regional_core::tol;

/// Round to 12 significant digits (the serialization precision).
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        x
    } else {
        format!("{x:.11e}").parse().expect("formatted float parses")
    }
}

/// Format a float for CSV output at the serialization precision.
pub fn fmt_csv(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.11e}")
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub config: Config,
    pub structures: Vec<StructureRow>,
    pub best_word: String,
    pub value: f64,
    /// Filled by `verify`.
    pub verification: Option<Verification>,
    /// Filled by `hjb --compare`.
    pub hjb: Option<HjbRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Config {
    pub problem_file: String,
    pub max_arcs: usize,
    pub nodes: usize,
    pub substeps: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// The raw problem document, embedded so the run is reproducible from
    /// the report alone.
    pub problem_source: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Tolerances {
    pub constraint: f64,
    pub feasible: f64,
    pub verify_hamiltonian: f64,
    pub verify_jump: f64,
    pub sensitivity: f64,
    pub hjb_compare: f64,
}

impl Tolerances {
    pub fn current() -> Self {
        Tolerances {
            constraint: tol::CONSTRAINT_TOL,
            feasible: tol::FEASIBLE_TOL,
            verify_hamiltonian: tol::VERIFY_TOL_SOLVER,
            verify_jump: tol::JUMP_TANGENTIAL_TOL,
            sensitivity: tol::SENSITIVITY_TOL,
            hjb_compare: tol::HJB_COMPARE_TOL,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StructureRow {
    pub word: String,
    pub status: String,
    /// Total cost; absent when the structure is infeasible.
    pub cost: Option<f64>,
    pub switch_times: Vec<f64>,
    pub switch_points: Vec<Vec<f64>>,
}

/// Verification outcome appended by `verify`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Verification {
    pub pass: bool,
    /// Set when the adjoint reconstruction itself failed (for example a
    /// tangential crossing); the remaining sections are then absent.
    pub error: Option<String>,
    pub abnormal_suspect: Option<bool>,
    pub terminal_fit_residual: Option<f64>,
    pub junctions: Vec<JunctionRow>,
    pub hamiltonian: Option<HamiltonianRow>,
    pub sensitivity: Option<SensitivityRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JunctionRow {
    pub junction: usize,
    pub time: f64,
    pub point: Vec<f64>,
    pub from: String,
    pub to: String,
    pub h_left: f64,
    pub h_right: f64,
    pub h_gap: f64,
    pub max_defect_left: f64,
    pub max_defect_right: f64,
    pub nu: f64,
    pub jump_residual: f64,
    pub tangential_residual: f64,
    pub transversality_left: f64,
    pub transversality_right: f64,
    pub snell_ratio: Option<f64>,
    pub pass: bool,
}

impl JunctionRow {
    pub fn from_report(r: &JunctionReport) -> Self {
        JunctionRow {
            junction: r.junction,
            time: r.time,
            point: r.point.clone(),
            from: r.labels.0.to_string(),
            to: r.labels.1.to_string(),
            h_left: r.h_left,
            h_right: r.h_right,
            h_gap: r.h_gap,
            max_defect_left: r.max_defect_left,
            max_defect_right: r.max_defect_right,
            nu: r.nu,
            jump_residual: r.jump_residual,
            tangential_residual: r.tangential_residual,
            transversality_left: r.transversality_left,
            transversality_right: r.transversality_right,
            snell_ratio: r.snell_ratio,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HamiltonianRow {
    pub per_arc_spread: Vec<f64>,
    pub global_spread: f64,
    pub max_abs: f64,
    pub pass: bool,
}

impl HamiltonianRow {
    pub fn from_report(r: &ConstancyReport) -> Self {
        let pass = r.per_arc_spread.iter().all(|s| *s <= tol::VERIFY_TOL_SOLVER);
        HamiltonianRow {
            per_arc_spread: r.per_arc_spread.clone(),
            global_spread: r.global_spread,
            max_abs: r.max_abs,
            pass,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub fd_step: f64,
    pub grad_x0: Vec<f64>,
    pub grad_xf: Vec<f64>,
    pub p_t0: Vec<f64>,
    pub p_tf: Vec<f64>,
    pub x0_residual: f64,
    pub xf_residual: f64,
    pub translation_residual: f64,
    pub du_dt0: f64,
    pub h_t0: f64,
    pub t0_residual: f64,
    pub du_dtf: Option<f64>,
    pub h_tf: f64,
    pub tf_residual: Option<f64>,
    pub resolves: usize,
    pub resolve_failures: usize,
    pub pass: bool,
}

impl SensitivityRow {
    pub fn from_report(r: &SensitivityReport) -> Self {
        SensitivityRow {
            fd_step: r.fd_step,
            grad_x0: r.grad_x0.clone(),
            grad_xf: r.grad_xf.clone(),
            p_t0: r.p_t0.clone(),
            p_tf: r.p_tf.clone(),
            x0_residual: r.x0_residual,
            xf_residual: r.xf_residual,
            translation_residual: r.translation_residual,
            du_dt0: r.du_dt0,
            h_t0: r.h_t0,
            t0_residual: r.t0_residual,
            du_dtf: r.du_dtf,
            h_tf: r.h_tf,
            tf_residual: r.tf_residual,
            resolves: r.resolves,
            resolve_failures: r.resolve_failures,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HjbRow {
    pub h: f64,
    pub domain: [f64; 4],
    pub radius: f64,
    pub sweeps: usize,
    pub grid_value: Option<f64>,
    pub solver_value: f64,
    pub r_correction: f64,
    pub discrepancy: Option<f64>,
    pub pass: bool,
}

/// Full-precision sidecar holding what verification and comparison need.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub problem_source: String,
    pub discretization: Discretization,
    pub best: StructureSolution,
}

impl Report {
    pub fn from_solution(
        problem_file: &str,
        source: &str,
        max_arcs: usize,
        disc: &Discretization,
        solution: &RegionalSolution,
    ) -> Self {
        let structures = solution
            .structures
            .iter()
            .map(|s| StructureRow {
                word: s.word.to_string(),
                status: serde_json::to_value(s.status)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_else(|| format!("{:?}", s.status)),
                cost: s.cost.is_finite().then_some(s.cost),
                switch_times: s.switch_times.clone(),
                switch_points: s.switch_points.clone(),
            })
            .collect();
        Report {
            config: Config {
                problem_file: problem_file.to_string(),
                max_arcs,
                nodes: disc.nodes_per_arc,
                substeps: disc.substeps,
                seed: disc.seed,
                tolerances: Tolerances::current(),
                problem_source: source.to_string(),
            },
            structures,
            best_word: solution.best().word.to_string(),
            value: solution.value,
            verification: None,
            hjb: None,
        }
    }
}

/// Recursively round every float in a JSON tree to 12 significant digits.
fn round_tree(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("checked f64");
                *value = match serde_json::Number::from_f64(round_sig(x)) {
                    Some(rounded) => serde_json::Value::Number(rounded),
                    None => serde_json::Value::Null,
                };
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_tree),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_tree),
        _ => {}
    }
}

/// Serialize with fixed key order and rounded floats, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, String> {
    let mut tree = serde_json::to_value(value).map_err(|e| e.to_string())?;
    round_tree(&mut tree);
    let mut text = serde_json::to_string_pretty(&tree).map_err(|e| e.to_string())?;
    text.push('\n');
    Ok(text)
}

pub fn write_report(dir: &Path, report: &Report) -> Result<(), String> {
    let text = to_canonical_json(report)?;
    fs::write(dir.join("report.json"), text)
        .map_err(|e| format!("cannot write report.json: {e}"))
}

pub fn read_report(dir: &Path) -> Result<Report, String> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn write_solution(dir: &Path, bundle: &SolutionFile) -> Result<(), String> {
    let mut text =
        serde_json::to_string_pretty(bundle).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(dir.join("solution.json"), text)
        .map_err(|e| format!("cannot write solution.json: {e}"))
}

pub fn read_solution(dir: &Path) -> Result<SolutionFile, String> {
    let path = dir.join("solution.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Write one trajectory CSV: columns `t, x1..xN, region, a1..am, P1..PN`
/// with one knot per row. `m` is the largest control dimension over the
/// regions (arcs with fewer controls pad with zeros). The costate columns
/// are zero until `verify` recomputes the file with the reconstructed
/// adjoint.
pub fn write_trajectory_csv(
    dir: &Path,
    problem: &RegionalProblem,
    sol: &StructureSolution,
    adjoint: Option<&AdjointSolution>,
) -> Result<(), String> {
    let n = problem.n;
    let m = [&problem.r1, &problem.r2, &problem.h]
        .iter()
        .map(|d| d.control_dim())
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("region".into());
    header.extend((1..=m).map(|i| format!("a{i}")));
    header.extend((1..=n).map(|i| format!("P{i}")));
    let mut out = header.join(",");
    out.push('\n');

    for (k, arc) in sol.arcs.iter().enumerate() {
        let substeps = arc.substeps();
        for (j, state) in arc.states.iter().enumerate() {
            let mut row: Vec<String> = vec![fmt_csv(arc.rho[j])];
            row.extend(state.iter().map(|v| fmt_csv(*v)));
            row.push(arc.label.to_string());
            let node = (j / substeps.max(1)).min(arc.nodes().saturating_sub(1));
            let controls = &arc.controls[node];
            for c in 0..m {
                row.push(fmt_csv(controls.get(c).copied().unwrap_or(0.0)));
            }
            let costate = adjoint.map(|adj| &adj.arcs[k].costate[j]);
            for i in 0..n {
                row.push(fmt_csv(costate.map(|p| p[i]).unwrap_or(0.0)));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    let path = dir.join(format!("traj_{}.csv", sol.word));
    fs::write(&path, out).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_idempotent_at_twelve_digits() {
        let x = 2.189974874213244567;
        let once = round_sig(x);
        assert_eq!(once, round_sig(once));
        assert_eq!(once, 2.18997487421);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(-1.5), -1.5);
    }

    #[test]
    fn canonical_json_rounds_nested_floats() {
        #[derive(Serialize)]
        struct T {
            a: f64,
            b: Vec<f64>,
            c: Option<f64>,
        }
        let text = to_canonical_json(&T {
            a: 0.1234567890123456,
            b: vec![1.0, f64::NAN],
            c: None,
        })
        .unwrap();
        assert!(text.contains("0.123456789012"), "{text}");
        assert!(text.contains("null"), "{text}");
        assert!(text.ends_with('\n'));
    }
}
