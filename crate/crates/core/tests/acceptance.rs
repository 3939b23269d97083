//! Acceptance criteria, one printed line each. Exits nonzero if any fails.

use std::time::{Duration, Instant};

use dynbc::energy::variational_consistency_check;
use dynbc::mobility::{antisymmetric_dissipation_check, check_onsager_psd, Entry, Source};
use dynbc::{
    assemble_surface_mobility, initial_condition, BulkField, Grid, Integrator, LinearSolver, MemorySink, ModelKind,
    PhysicalParams, SchemeConfig, SimState, SurfaceField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;
const BETAS: [f64; 3] = [1e-3, 1.0, 10.0];
const N_LONG: usize = 64;
const DT_LONG: f64 = 1e-3;
const STEPS_LONG: u64 = 5000;

const MASS_TOL: f64 = 1e-8;
const RUNTIME_TARGET: Duration = Duration::from_secs(120);
const SOLVER_TOL: f64 = 1e-10;
const E_TOTAL_TOL: f64 = 1e-6;
const SURFACE_DRIFT_TOL: f64 = 1e-3;
const PLATEAU_TOL: f64 = 1e-3;
const BULK_OVER_SURFACE: f64 = 10.0;
const REDUCTION_STEPS: u64 = 1000;
const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;
const PSD_TOL: f64 = 1e-12;
const ANTISYM_TOL: f64 = 1e-12;
const ANTISYM_TRIALS: usize = 100;
const ROBIN_TOL: f64 = 1e-9;
const MIN_ORDER: f64 = 1.8;
const PATTERN_DIFF: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct LongRun {
    kind: ModelKind,
    beta: f64,
    grid: Grid,
    reports: Vec<dynbc::StepReport>,
    /// States at t = 0, 0.8 T and T.
    snapshots: Vec<SimState>,
    elapsed: Duration,
}

impl LongRun {
    fn label(&self) -> String {
        format!("{} beta={}", self.kind, self.beta)
    }

    fn final_state(&self) -> &SimState {
        self.snapshots.last().expect("final snapshot")
    }
}

fn long_config() -> SchemeConfig {
    let t_end = STEPS_LONG as f64 * DT_LONG;
    SchemeConfig {
        order: 2,
        dt: DT_LONG,
        linear_solver: LinearSolver::Iterative,
        solver_tol: SOLVER_TOL,
        max_steps: STEPS_LONG,
        snapshot_times: vec![0.8 * t_end, t_end],
    }
}

fn long_run(kind: ModelKind, beta: f64) -> LongRun {
    let grid = Grid::reference(N_LONG).unwrap();
    let p = PhysicalParams::defaults_for(kind).with_beta(beta);
    let s0 = initial_condition(&grid, &p, SEED).unwrap();
    let mut sink = MemorySink::default();
    let start = Instant::now();
    Integrator::new(&grid, &p, kind, &long_config())
        .unwrap()
        .run(&s0, &mut sink)
        .unwrap_or_else(|e| panic!("model {kind} beta={beta}: {e}"));
    let elapsed = start.elapsed();
    assert_eq!(sink.snapshots.len(), 3);
    LongRun {
        kind,
        beta,
        grid,
        reports: sink.reports,
        snapshots: sink.snapshots,
        elapsed,
    }
}

fn bulk_l2(g: &Grid, v: &BulkField) -> f64 {
    (g.h() * g.h() * v.values().iter().map(|x| x * x).sum::<f64>()).sqrt()
}

fn surface_l2(g: &Grid, v: &SurfaceField) -> f64 {
    (g.h() * v.values().iter().map(|x| x * x).sum::<f64>()).sqrt()
}

fn criterion_1(runs: &[LongRun]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for r in runs {
        let m0 = r.reports[0].mass.total;
        for rep in &r.reports {
            worst = worst.max(((rep.mass.total - m0) / m0).abs());
        }
        slowest = slowest.max(r.elapsed);
    }
    Outcome::new(
        worst <= MASS_TOL && slowest <= RUNTIME_TARGET,
        format!(
            "worst relative drift {worst:.3e} (tol {MASS_TOL:e}); slowest run {:.1} s (target {} s)",
            slowest.as_secs_f64(),
            RUNTIME_TARGET.as_secs()
        ),
    )
}

fn criterion_2(runs: &[LongRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let (mut dq, mut de): (f64, f64) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in r.reports.windows(2) {
            dq = dq.max(w[1].e_quadratized - w[0].e_quadratized);
            de = de.max(w[1].e_total - w[0].e_total);
        }
        let ok = dq <= SOLVER_TOL && de <= E_TOTAL_TOL;
        pass &= ok;
        parts.push(format!(
            "{}: max dE_q {dq:.2e}, max dE_total {de:.2e}{}",
            r.label(),
            if ok { "" } else { " [violated]" }
        ));
    }
    Outcome::new(
        pass,
        format!("tolerances {SOLVER_TOL:e} / {E_TOTAL_TOL:e}; {}", parts.join("; ")),
    )
}

fn criterion_3(runs: &[LongRun]) -> Outcome {
    let r = runs.iter().find(|r| r.kind == ModelKind::B && r.beta == 10.0).unwrap();
    let (mut bulk_up, mut total_down, mut both) = (0, 0, 0);
    for w in r.reports.windows(2) {
        let up = w[1].e_bulk > w[0].e_bulk;
        let down = w[1].e_total < w[0].e_total;
        bulk_up += up as usize;
        total_down += down as usize;
        both += (up && down) as usize;
    }
    Outcome::new(
        bulk_up > 0 && total_down > 0 && both > 0,
        format!("{}: E_bulk rises in {bulk_up} steps, E_total falls in {total_down}, both in {both}", r.label()),
    )
}

fn criterion_4(runs: &[LongRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs.iter().filter(|r| r.beta == 1e-3) {
        let m0 = r.reports[0].mass.surface;
        let drift = r
            .reports
            .iter()
            .map(|rep| ((rep.mass.surface - m0) / m0).abs())
            .fold(0.0, f64::max);
        let ok = drift <= SURFACE_DRIFT_TOL;
        pass &= ok;
        parts.push(format!("{}: surface drift {drift:.2e} (tol {SURFACE_DRIFT_TOL:e})", r.label()));
    }
    for r in runs.iter().filter(|r| r.beta == 10.0) {
        let window = r.reports.len() / 5;
        let tail = &r.reports[r.reports.len() - 1 - window..];
        let (m_start, m_end) = (tail[0].mass.surface, tail[window].mass.surface);
        let plateau = ((m_end - m_start) / m_start).abs();
        let (s_start, s_end) = (&r.snapshots[1], r.final_state());
        let g = &r.grid;
        let bulk_change = bulk_l2(g, &s_end.phi.axpy(-1.0, &s_start.phi));
        let surf_change = surface_l2(g, &s_end.psi.axpy(-1.0, &s_start.psi));
        let ok = plateau <= PLATEAU_TOL && bulk_change > BULK_OVER_SURFACE * surf_change;
        pass &= ok;
        parts.push(format!(
            "{}: surface mass change over final 20% {plateau:.2e} (tol {PLATEAU_TOL:e}), bulk L2 change {bulk_change:.2e} vs surface {surf_change:.2e}",
            r.label()
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let grid = Grid::reference(32).unwrap();
    let p = PhysicalParams {
        m13_s: 0.0,
        m23_2: 0.0,
        ..PhysicalParams::model_b()
    };
    let cfg = SchemeConfig {
        max_steps: REDUCTION_STEPS,
        snapshot_times: Vec::new(),
        ..long_config()
    };
    let run = |kind| {
        let s0 = initial_condition(&grid, &p, SEED).unwrap();
        let mut it = Integrator::new(&grid, &p, kind, &cfg).unwrap();
        let mut s = s0;
        let mut traj = Vec::new();
        for _ in 0..REDUCTION_STEPS {
            let (next, _) = it.step(&s).unwrap();
            traj.push(
                [next.phi.values(), next.phi_gamma.values(), next.psi.values(), next.q_b.values(), next.q_s.values()]
                    .concat()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<u64>>(),
            );
            s = next;
        }
        traj
    };
    let (a, b) = (run(ModelKind::A), run(ModelKind::B));
    let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
    Outcome::new(
        first_diff.is_none() && a.len() == REDUCTION_STEPS as usize,
        match first_diff {
            None => format!("A and B bit-identical over {REDUCTION_STEPS} steps on 32^2"),
            Some(k) => format!("trajectories diverge at step {}", k + 1),
        },
    )
}

fn criterion_6() -> Outcome {
    let grid = Grid::reference(16).unwrap();
    let mut worst: f64 = 0.0;
    for (k, kind) in ModelKind::ALL.into_iter().enumerate() {
        let p = PhysicalParams::defaults_for(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
        let phi = BulkField::from_fn(&grid, |_| rng.random_range(0.05..0.95));
        let phi_gamma = SurfaceField::from_fn(&grid, |_| rng.random_range(0.05..0.95));
        let psi = SurfaceField::from_fn(&grid, |_| rng.random_range(0.05..0.95));
        let mut s = SimState::from_fields(&grid, &p, phi, phi_gamma, psi).unwrap();
        s.rng_seed = 7 + k as u64;
        worst = worst.max(variational_consistency_check(&s, &grid, &p, FD_EPS).unwrap());
    }
    Outcome::new(
        worst <= FD_TOL,
        format!("worst directional error {worst:.2e} over 4 random states x 3 blocks x 10 directions (tol {FD_TOL:e})"),
    )
}

fn criterion_7() -> Outcome {
    let grid = Grid::reference(16).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in ModelKind::ALL {
        let spec = assemble_surface_mobility(&PhysicalParams::defaults_for(kind), kind).unwrap();
        let r = check_onsager_psd(&spec, &grid, PSD_TOL).unwrap();
        pass &= r.pass;
        parts.push(format!("{kind} min eig {:.3e}", r.min_eig));
    }
    let p = PhysicalParams::model_a();
    let mut rigged = assemble_surface_mobility(&p, ModelKind::A).unwrap();
    let c = 10.0 * (p.m_c * p.m22_2).sqrt();
    rigged.set(0, 1, Entry::scalar(c, Source::Custom));
    rigged.set(1, 0, Entry::scalar(c, Source::Custom));
    let r = check_onsager_psd(&rigged, &grid, PSD_TOL).unwrap();
    pass &= !r.pass;
    parts.push(format!("rigged min eig {:.3e} ({})", r.min_eig, if r.pass { "accepted" } else { "rejected" }));
    Outcome::new(pass, format!("n_gamma = 16, tol {PSD_TOL:e}; {}", parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let grid = Grid::reference(N_LONG).unwrap();
    let mut worst: f64 = 0.0;
    for kind in [ModelKind::B, ModelKind::D] {
        let spec = assemble_surface_mobility(&PhysicalParams::defaults_for(kind), kind).unwrap();
        worst = worst.max(antisymmetric_dissipation_check(&spec, &grid, ANTISYM_TRIALS, SEED).unwrap());
    }
    Outcome::new(
        worst <= ANTISYM_TOL,
        format!("max |u.M_a u|/|u|^2 = {worst:.2e} over {ANTISYM_TRIALS} vectors for B and D (tol {ANTISYM_TOL:e})"),
    )
}

fn criterion_9(runs: &[LongRun]) -> Outcome {
    let worst = runs
        .iter()
        .flat_map(|r| r.reports.iter().skip(1))
        .map(|rep| rep.robin_residual)
        .fold(0.0, f64::max);
    Outcome::new(
        worst <= ROBIN_TOL,
        format!("max residual {worst:.2e} over every step of the six runs (tol {ROBIN_TOL:e})"),
    )
}

fn smooth_state(grid: &Grid, p: &PhysicalParams) -> SimState {
    use std::f64::consts::PI;
    let f = |x: f64, y: f64| 0.3 + 0.05 * (PI * x).cos() * (0.5 * PI * (y + 1.0)).cos() + 0.03 * (PI * x).cos();
    let phi = BulkField::from_fn(grid, |c| {
        let (ix, iy) = (c % grid.nx(), c / grid.nx());
        let (x, y) = grid.cell_center(ix, iy);
        f(x, y)
    });
    let trace = SurfaceField::from_fn(grid, |i| {
        let (x, y) = grid.gamma_point(i);
        f(x, y)
    });
    SimState::from_fields(grid, p, phi, trace.clone(), trace).unwrap()
}

fn criterion_10() -> Outcome {
    let grid = Grid::reference(32).unwrap();
    let p = PhysicalParams::model_b();
    let t_end = 0.01;
    let s0 = smooth_state(&grid, &p);
    let solve = |dt: f64| {
        let cfg = SchemeConfig {
            order: 2,
            dt,
            linear_solver: LinearSolver::Direct,
            solver_tol: SOLVER_TOL,
            max_steps: (t_end / dt).round() as u64,
            snapshot_times: Vec::new(),
        };
        let mut sink = MemorySink::default();
        Integrator::new(&grid, &p, ModelKind::B, &cfg).unwrap().run(&s0, &mut sink).unwrap()
    };
    let base = 1e-3;
    let reference = solve(base / 64.0);
    let errors: Vec<f64> = [base, base / 2.0, base / 4.0]
        .iter()
        .map(|&dt| {
            let s = solve(dt);
            (bulk_l2(&grid, &s.phi.axpy(-1.0, &reference.phi)).powi(2)
                + surface_l2(&grid, &s.psi.axpy(-1.0, &reference.psi)).powi(2))
            .sqrt()
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(
        min_order >= MIN_ORDER,
        format!(
            "L2 errors {:.3e}, {:.3e}, {:.3e} for dt = 1e-3, 5e-4, 2.5e-4; observed orders {:.3}, {:.3} (min {MIN_ORDER})",
            errors[0], errors[1], errors[2], orders[0], orders[1]
        ),
    )
}

/// Mean `|φ − 0.3|` in the two cell rows next to Γ and in the remaining cells.
fn boundary_and_interior(r: &LongRun) -> (f64, f64) {
    let g = &r.grid;
    let s = r.final_state();
    let mut near = 0.0;
    let mut n_near = 0;
    let mut marked = vec![false; g.n_cells()];
    for layer in 0..2 {
        for i in 0..g.n_gamma() {
            let c = g.gamma_cell_at(i, layer);
            near += (s.phi[c] - 0.3).abs();
            n_near += 1;
            marked[c] = true;
        }
    }
    let (mut inner, mut n_inner) = (0.0, 0);
    for (v, _) in s.phi.values().iter().zip(&marked).filter(|(_, m)| !**m) {
        inner += (v - 0.3).abs();
        n_inner += 1;
    }
    (near / n_near as f64, inner / n_inner as f64)
}

fn criterion_11(runs: &[LongRun]) -> Outcome {
    let a = runs.iter().find(|r| r.kind == ModelKind::A && r.beta == 1.0).unwrap();
    let b = runs.iter().find(|r| r.kind == ModelKind::B && r.beta == 1.0).unwrap();
    let g = &a.grid;
    let diff = bulk_l2(g, &b.final_state().phi.axpy(-1.0, &a.final_state().phi));
    let norm = bulk_l2(g, &a.final_state().phi);
    let rel = diff / norm;
    let (near_a, inner_a) = boundary_and_interior(a);
    let (near_b, inner_b) = boundary_and_interior(b);
    Outcome::new(
        rel > PATTERN_DIFF && near_a > inner_a && near_b > inner_b,
        format!(
            "relative L2 difference A vs B {rel:.3e} (needs > {PATTERN_DIFF}); near-Gamma vs interior mean |phi-0.3|: A {near_a:.3e} vs {inner_a:.3e}, B {near_b:.3e} vs {inner_b:.3e}"
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut runs = Vec::new();
    for kind in [ModelKind::A, ModelKind::B] {
        for beta in BETAS {
            let r = long_run(kind, beta);
            eprintln!("  run {} done in {:.1} s", r.label(), r.elapsed.as_secs_f64());
            runs.push(r);
        }
    }
    let results = [
        ("mass conservation", criterion_1(&runs)),
        ("energy law", criterion_2(&runs)),
        ("bulk energy non-monotonicity", criterion_3(&runs)),
        ("beta limits", criterion_4(&runs)),
        ("model reduction", criterion_5()),
        ("variational consistency", criterion_6()),
        ("Onsager PSD", criterion_7()),
        ("antisymmetric no-dissipation", criterion_8()),
        ("Robin residual", criterion_9(&runs)),
        ("temporal self-convergence", criterion_10()),
        ("dynamic boundary effect on patterns", criterion_11(&runs)),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        failed += !o.pass as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
