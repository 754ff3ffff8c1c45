//! Hot paths of the solve/verify pipeline: expression evaluation, arc
//! rollouts, pointwise Hamiltonian maximization, adjoint reconstruction,
//! and a small grid solve.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use regional_core::{
    integrate_arc, reconstruct_adjoint, solve_grid, ArcGeometry, Bounds, ControlSet,
    ConvergenceReport, CostMode, Expr, GridDomain, Interface, RegionDynamics, RegionLabel,
    RegionalProblem, SolveStatus, StructureSolution, SweepMode, TerminalTime,
};

fn steering(speed: &str) -> RegionDynamics {
    RegionDynamics::new(
        vec![
            Expr::parse(&format!("{speed}*cos(a1)")).unwrap(),
            Expr::parse(&format!("{speed}*sin(a1)")).unwrap(),
        ],
        Expr::parse("1").unwrap(),
        ControlSet::new(&[(-4.0, 4.0)]).unwrap(),
        2,
    )
    .unwrap()
}

fn tramway() -> RegionalProblem {
    RegionalProblem::new(
        Interface::new(Expr::parse("x2").unwrap(), 2).unwrap(),
        steering("1"),
        steering("1"),
        RegionDynamics::new(
            vec![Expr::parse("10").unwrap(), Expr::parse("0").unwrap()],
            Expr::parse("1").unwrap(),
            ControlSet::empty(),
            2,
        )
        .unwrap(),
        vec![0.0, -1.0],
        0.0,
        vec![2.0, 1.0],
        TerminalTime::Free,
        CostMode::MinTime,
        Bounds::default(),
    )
    .unwrap()
}

/// The analytic interface-ride optimum on an exact control mesh, used as a
/// realistic input for the adjoint reconstruction benchmark.
fn analytic_solution(problem: &RegionalProblem) -> StructureSolution {
    let a_star = 1.0 / (3.0 * 11.0f64.sqrt());
    let nodes = 10;
    let theta = 1.0f64.atan2(a_star);
    let leg = (1.0 + a_star * a_star).sqrt();
    let ride = (2.0 - 2.0 * a_star) / 10.0;

    let arc1 = integrate_arc(
        &problem.r1,
        RegionLabel::R1,
        ArcGeometry::Region { interface: &problem.interface, sign: -1.0 },
        &[0.0, -1.0],
        0.0,
        &vec![vec![theta]; nodes],
        &vec![leg; nodes],
        4,
    )
    .unwrap()
    .arc;
    let arc_h = integrate_arc(
        &problem.h,
        RegionLabel::H,
        ArcGeometry::OnInterface { interface: &problem.interface },
        arc1.end_state(),
        arc1.end_time(),
        &vec![vec![]; nodes],
        &vec![ride; nodes],
        4,
    )
    .unwrap()
    .arc;
    let arc2 = integrate_arc(
        &problem.r2,
        RegionLabel::R2,
        ArcGeometry::Region { interface: &problem.interface, sign: 1.0 },
        arc_h.end_state(),
        arc_h.end_time(),
        &vec![vec![std::f64::consts::PI - theta]; nodes],
        &vec![leg; nodes],
        4,
    )
    .unwrap()
    .arc;

    StructureSolution {
        word: "1-H-2".parse().unwrap(),
        switch_times: vec![arc1.end_time(), arc_h.end_time()],
        switch_points: vec![arc1.end_state().to_vec(), arc_h.end_state().to_vec()],
        cost: arc2.end_time(),
        arcs: vec![arc1, arc_h, arc2],
        status: SolveStatus::Converged,
        report: ConvergenceReport {
            constraint_residual: 0.0,
            gradient_norm: 0.0,
            outer_iterations: 0,
            inner_iterations: 0,
            starts_attempted: 0,
            starts_feasible: 0,
            clock_bound_active: false,
            region_mismatch: false,
        },
    }
}

fn bench_expr(c: &mut Criterion) {
    let expr =
        Expr::parse("x1*sin(a1) + exp(0.3*x2)*cos(x1) - a2*a2/(1 + x2*x2) + sqrt(1 + a1*a1)")
            .unwrap();
    let x = [0.7, -0.4];
    let a = [0.3, 1.2];
    c.bench_function("expr_eval", |b| {
        b.iter(|| expr.eval(black_box(&x), black_box(&a)).unwrap())
    });
    c.bench_function("expr_grad_state", |b| {
        b.iter(|| expr.grad_state(black_box(&x), black_box(&a)).unwrap())
    });
}

fn bench_integrate_arc(c: &mut Criterion) {
    let problem = tramway();
    let theta = 1.0f64.atan2(0.1);
    let controls = vec![vec![theta]; 20];
    let clocks = vec![1.01f64.sqrt(); 20];
    c.bench_function("integrate_arc_m20_s4", |b| {
        b.iter(|| {
            integrate_arc(
                &problem.r1,
                RegionLabel::R1,
                ArcGeometry::Region { interface: &problem.interface, sign: -1.0 },
                black_box(&[0.0, -1.0]),
                0.0,
                black_box(&controls),
                black_box(&clocks),
                4,
            )
            .unwrap()
        })
    });
}

fn bench_hamiltonian(c: &mut Criterion) {
    let problem = tramway();
    let x = [0.3, -0.7];
    let p = [0.1, 0.99498743710662];
    c.bench_function("hamiltonian_region_max", |b| {
        b.iter(|| {
            problem
                .hamiltonian_region(RegionLabel::R1, black_box(&x), black_box(&p), -1.0)
                .unwrap()
        })
    });
}

fn bench_adjoint(c: &mut Criterion) {
    let problem = tramway();
    let sol = analytic_solution(&problem);
    c.bench_function("reconstruct_adjoint_1h2", |b| {
        b.iter(|| reconstruct_adjoint(black_box(&problem), black_box(&sol)).unwrap())
    });
}

fn bench_grid(c: &mut Criterion) {
    let problem = tramway();
    let domain = GridDomain::new(-1.0, 3.0, -2.0, 2.0).unwrap();
    c.bench_function("hjb_grid_h02", |b| {
        b.iter(|| solve_grid(&problem, &domain, 0.2, 0.25, SweepMode::GaussSeidel).unwrap())
    });
}

criterion_group!(
    hotpaths,
    bench_expr,
    bench_integrate_arc,
    bench_hamiltonian,
    bench_adjoint,
    bench_grid
);
criterion_main!(hotpaths);
