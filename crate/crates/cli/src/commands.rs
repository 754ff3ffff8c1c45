//! The three pipelines behind the subcommands.
//!
//! Exit codes: 0 success, 1 parse/usage/IO error, 2 every enumerated
//! structure infeasible, 3 verification failure, 4 grid non-convergence
//! or a failed grid/solver comparison.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use regional_core::error::Error;
use regional_core::hjb::{self, GridDomain, SweepMode};
use regional_core::pmp;
use regional_core::solve::{solve_regional, Discretization, RegionalSolution};
use regional_core::tol;

use crate::probfile;
use crate::report::{
    read_report, read_solution, write_report, write_solution, write_trajectory_csv,
    HamiltonianRow, HjbRow, JunctionRow, Report, SensitivityRow, SolutionFile, Verification,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARSE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;
pub const EXIT_HJB: u8 = 4;

fn append_log(dir: &Path, line: &str) {
    if let Ok(mut file) = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("solve.log"))
    {
        let _ = writeln!(file, "{line}");
    }
}

pub fn cmd_solve(
    problem_path: &Path,
    max_arcs: usize,
    nodes: usize,
    seed: u64,
    out: &Path,
) -> u8 {
    let loaded = match probfile::load(problem_path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let disc = match Discretization::new(nodes, 4, seed) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };

    let started = Instant::now();
    let solution = match solve_regional(&loaded.problem, max_arcs, &disc) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                Error::AllStructuresInfeasible { .. } => EXIT_INFEASIBLE,
                // Any other solve-phase failure also means no usable
                // solution was produced.
                _ => EXIT_INFEASIBLE,
            };
        }
    };
    let wall = started.elapsed();

    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_PARSE;
    }
    let report = Report::from_solution(
        &problem_path.display().to_string(),
        &loaded.source,
        max_arcs,
        &disc,
        &solution,
    );
    let bundle = SolutionFile {
        problem_source: loaded.source.clone(),
        discretization: disc,
        best: solution.best().clone(),
    };
    for step in [
        write_report(out, &report),
        write_solution(out, &bundle),
    ] {
        if let Err(e) = step {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    }
    for s in &solution.structures {
        if !s.arcs.is_empty() && s.cost.is_finite() {
            if let Err(e) = write_trajectory_csv(out, &loaded.problem, s, None) {
                eprintln!("error: {e}");
                return EXIT_PARSE;
            }
        }
    }

    append_log(
        out,
        &format!(
            "solve: {} max_arcs={max_arcs} nodes={nodes} seed={seed} wall={:.3}s",
            problem_path.display(),
            wall.as_secs_f64()
        ),
    );
    for s in &solution.structures {
        append_log(
            out,
            &format!(
                "  {}: {:?} cost={} outer={} inner={} feasible_starts={}/{}{}{}",
                s.word,
                s.status,
                s.cost,
                s.report.outer_iterations,
                s.report.inner_iterations,
                s.report.starts_feasible,
                s.report.starts_attempted,
                if s.report.clock_bound_active { " clock_bound" } else { "" },
                if s.report.region_mismatch { " region_mismatch" } else { "" },
            ),
        );
    }

    println!(
        "best {} with U = {:.9} ({} structures tried, {:.1}s)",
        solution.best().word,
        solution.value,
        solution.structures.len(),
        wall.as_secs_f64()
    );
    EXIT_OK
}

pub fn cmd_verify(dir: &Path) -> u8 {
    let mut report = match read_report(dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let bundle = match read_solution(dir) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let problem = match probfile::from_source(&bundle.problem_source) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: embedded problem source does not parse: {e}");
            return EXIT_PARSE;
        }
    };
    let best = &bundle.best;

    // Any reconstruction/verification error becomes a failing verification
    // section so the report records what went wrong.
    let fail = |report: &mut Report, message: String| -> u8 {
        eprintln!("verification failed: {message}");
        report.verification = Some(Verification {
            pass: false,
            error: Some(message.clone()),
            abnormal_suspect: None,
            terminal_fit_residual: None,
            junctions: Vec::new(),
            hamiltonian: None,
            sensitivity: None,
        });
        if let Err(e) = write_report(dir, report) {
            eprintln!("error: {e}");
        }
        append_log(dir, &format!("verify: FAIL ({message})"));
        EXIT_VERIFY
    };

    let adj = match pmp::reconstruct_adjoint(&problem, best) {
        Ok(a) => a,
        Err(e) => return fail(&mut report, e.to_string()),
    };
    let junctions = match pmp::verify_junctions(
        &problem,
        best,
        &adj,
        tol::VERIFY_TOL_SOLVER,
        tol::JUMP_TANGENTIAL_TOL,
    ) {
        Ok(j) => j,
        Err(e) => return fail(&mut report, e.to_string()),
    };
    let constancy = pmp::hamiltonian_constancy(&adj);
    let sensitivity = match pmp::verify_sensitivity(
        &problem,
        best,
        &adj,
        &bundle.discretization,
        tol::SENSITIVITY_FD_STEP,
    ) {
        Ok(s) => s,
        Err(e) => return fail(&mut report, e.to_string()),
    };

    let hamiltonian = HamiltonianRow::from_report(&constancy);
    let pass = junctions.iter().all(|j| j.pass) && hamiltonian.pass && sensitivity.pass;

    for j in &junctions {
        println!(
            "junction {} at t = {:.6} ({} -> {}): |dH| = {:.3e}, nu = {:+.6}, jump residual {:.3e}, tangential {:.3e}{} -> {}",
            j.junction,
            j.time,
            j.labels.0,
            j.labels.1,
            j.h_gap.abs(),
            j.nu,
            j.jump_residual,
            j.tangential_residual,
            j.snell_ratio
                .map(|r| format!(", snell {r:.6}"))
                .unwrap_or_default(),
            if j.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "hamiltonian constancy: spread {:.3e}, |H| max {:.3e} -> {}",
        constancy.global_spread,
        constancy.max_abs,
        if hamiltonian.pass { "pass" } else { "FAIL" }
    );
    println!(
        "sensitivity: |dU/dx0 + P(t0)| = {:.3e}, translation {:.3e} -> {}",
        sensitivity.x0_residual,
        sensitivity.translation_residual,
        if sensitivity.pass { "pass" } else { "FAIL" }
    );
    if adj.abnormal_suspect {
        println!(
            "warning: abnormal multiplier suspected (terminal fit residual {:.3e})",
            adj.terminal_residual
        );
    }

    report.verification = Some(Verification {
        pass,
        error: None,
        abnormal_suspect: Some(adj.abnormal_suspect),
        terminal_fit_residual: Some(adj.terminal_residual),
        junctions: junctions.iter().map(JunctionRow::from_report).collect(),
        hamiltonian: Some(hamiltonian),
        sensitivity: Some(SensitivityRow::from_report(&sensitivity)),
    });
    if let Err(e) = write_report(dir, &report) {
        eprintln!("error: {e}");
        return EXIT_PARSE;
    }
    // Refresh the best trajectory's CSV with the reconstructed costate.
    if let Err(e) = write_trajectory_csv(dir, &problem, best, Some(&adj)) {
        eprintln!("error: {e}");
        return EXIT_PARSE;
    }
    append_log(dir, &format!("verify: {}", if pass { "pass" } else { "FAIL" }));

    if pass {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}

/// Parse `--domain x1min,x1max,x2min,x2max`.
pub fn parse_domain(text: &str) -> Result<GridDomain, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!(
            "--domain expects x1min,x1max,x2min,x2max (got {} values)",
            parts.len()
        ));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("--domain: {p:?} is not a number"))
        })
        .collect::<Result<_, _>>()?;
    GridDomain::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_hjb(
    problem_path: &Path,
    h: f64,
    domain: &str,
    radius: f64,
    compare: Option<&Path>,
    out: &Path,
) -> u8 {
    let loaded = match probfile::load(problem_path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let domain = match parse_domain(domain) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };

    let started = Instant::now();
    let gvf = match hjb::solve_grid(&loaded.problem, &domain, h, radius, SweepMode::GaussSeidel)
    {
        Ok(g) => g,
        Err(e @ Error::NonConvergence { .. }) => {
            eprintln!("error: {e}");
            return EXIT_HJB;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let wall = started.elapsed();

    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_PARSE;
    }
    let grid_path = out.join("grid.csv");
    if let Err(e) = fs::write(&grid_path, gvf.to_csv()) {
        eprintln!("error: cannot write {}: {e}", grid_path.display());
        return EXIT_PARSE;
    }
    println!(
        "grid {} x {} at h = {h}: {} sweeps, {:.1}s, written to {}",
        gvf.nx,
        gvf.ny,
        gvf.sweeps,
        wall.as_secs_f64(),
        grid_path.display()
    );

    let Some(compare_dir) = compare else {
        return EXIT_OK;
    };
    let bundle = match read_solution(compare_dir) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let rs = RegionalSolution {
        value: bundle.best.cost,
        structures: vec![bundle.best],
        best_index: 0,
    };
    let cmp = hjb::compare(&gvf, &rs, radius);
    println!(
        "discrepancy = {:.6e} (grid {:.9} vs solver {:.9}, ball correction {:.9}) -> {}",
        cmp.discrepancy,
        cmp.grid_value,
        cmp.solver_value,
        cmp.r_correction,
        if cmp.pass { "PASS" } else { "FAIL" }
    );

    match read_report(compare_dir) {
        Ok(mut report) => {
            report.hjb = Some(HjbRow {
                h,
                domain: [domain.x1_min, domain.x1_max, domain.x2_min, domain.x2_max],
                radius,
                sweeps: gvf.sweeps,
                grid_value: cmp.grid_value.is_finite().then_some(cmp.grid_value),
                solver_value: cmp.solver_value,
                r_correction: cmp.r_correction,
                discrepancy: cmp.discrepancy.is_finite().then_some(cmp.discrepancy),
                pass: cmp.pass,
            });
            if let Err(e) = write_report(compare_dir, &report) {
                eprintln!("error: {e}");
                return EXIT_PARSE;
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    }
    append_log(
        compare_dir,
        &format!(
            "hjb: h={h} radius={radius} discrepancy={:.6e} {}",
            cmp.discrepancy,
            if cmp.pass { "pass" } else { "FAIL" }
        ),
    );

    if cmp.pass {
        EXIT_OK
    } else {
        EXIT_HJB
    }
}
