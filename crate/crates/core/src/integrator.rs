//! Linear, energy-stable time stepping by invariant energy quadratization.
//!
//! With `X = (φ, φ_Γ, ψ)` and forces `Q = (μ_b, μ_c, μ_s)` the semi-discrete
//! system is the gradient flow `X_t = −𝕄 Q`, where `𝕄` holds the bulk
//! diffusion, the Robin exchange and the surface mobility rows of the model.
//! The potentials are replaced by `q² − C0` with `q = √(F + C0)` and
//! `q_t = H φ_t`, `H = F′/(2√(F + C0))`. Evaluating `Q` at
//! `X^θ = Xⁿ − θ 𝕄 Q` (θ = Δt for backward Euler, Δt/2 for Crank–Nicolson)
//! gives one linear system per step,
//!
//! ```text
//! (I + θ (A + 2H²) 𝕄) Q = A Xⁿ + 2 H qⁿ,
//! ```
//!
//! with `A` the Hessian of the quadratic part of the energy. Conservation
//! follows from the structure of `𝕄` regardless of how accurately `Q` is
//! found; the energy law holds up to the solver residual.

use faer::sparse::linalg::matmul::sparse_sparse_matmul;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use faer::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{mass_report, MassTriple};
use crate::energy::{quadratized_energy, total_energy, FloryHuggins};
use crate::error::{Error, Result};
use crate::grid_ops::{div_flux, BulkField, SurfaceField};
use crate::linalg::{csc_matvec, csc_position, gmres, norm2, GmresOutcome, Preconditioner};
use crate::mobility::{assemble_surface_mobility, MobilitySpec};
use crate::model::{validate_params, Grid, History, ModelKind, PhysicalParams, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    /// Sparse LU every step; the symbolic analysis is computed once.
    #[default]
    Direct,
    /// Restarted GMRES preconditioned by an LU factorisation from an earlier
    /// step, refreshed when the iteration count grows.
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// 1 (backward Euler) or 2 (Crank–Nicolson with extrapolated `H`).
    pub order: u8,
    pub dt: f64,
    #[serde(default)]
    pub linear_solver: LinearSolver,
    pub solver_tol: f64,
    pub max_steps: u64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            order: 2,
            dt: 1e-4,
            linear_solver: LinearSolver::Direct,
            solver_tol: 1e-10,
            max_steps: 1000,
            snapshot_times: Vec::new(),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.order, 1 | 2) {
            return Err(Error::InvalidScheme(format!("order must be 1 or 2, got {}", self.order)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidScheme(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-4) {
            return Err(Error::InvalidScheme(format!(
                "solver_tol must lie in (0, 1e-4], got {}",
                self.solver_tol
            )));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidScheme(format!("invalid snapshot time {t}")));
        }
        Ok(())
    }

    /// Implicitness weight θ such that `X^θ = Xⁿ − θ 𝕄 Q`.
    pub fn theta(&self) -> f64 {
        if self.order == 1 {
            self.dt
        } else {
            0.5 * self.dt
        }
    }

    /// Number of steps [`Integrator::run`] takes.
    pub fn planned_steps(&self) -> u64 {
        let last = self.snapshot_times.iter().copied().fold(0.0, f64::max);
        if last > 0.0 {
            self.max_steps.min((last / self.dt).round() as u64)
        } else {
            self.max_steps
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub t: f64,
    pub e_total: f64,
    pub e_bulk: f64,
    pub e_surface: f64,
    pub e_quadratized: f64,
    pub mass: MassTriple,
    /// Rounding level for order 2. For order 1 it also contains the
    /// scheme's own numerical dissipation.
    pub dissipation_residual: f64,
    pub robin_residual: f64,
    pub linear_iterations: usize,
    /// Relative residual of the linear solve.
    pub solver_residual: f64,
}

impl StepReport {
    pub fn all_finite(&self) -> bool {
        [
            self.t,
            self.e_total,
            self.e_bulk,
            self.e_surface,
            self.e_quadratized,
            self.mass.total,
            self.mass.bulk_weighted,
            self.mass.bulk_raw,
            self.mass.surface,
            self.dissipation_residual,
            self.robin_residual,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn check_radicand(pot: &FloryHuggins, c0: f64, field: &'static str) -> Result<()> {
    let (_, fmin) = pot.minimum();
    if c0 + fmin > 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeRadicand {
            field,
            min_potential: fmin,
            min_radicand: c0 + fmin,
        })
    }
}

/// `q_b = √(F_b(φ) + C0b)`, `q_s = √(F_s(ψ) + C0s)`.
pub fn quadratize_fields(
    phi: &BulkField,
    psi: &SurfaceField,
    p: &PhysicalParams,
) -> Result<(BulkField, SurfaceField)> {
    let fb = p.bulk_potential();
    let fs = p.surface_potential();
    check_radicand(&fb, p.c0_bulk, "bulk")?;
    check_radicand(&fs, p.c0_surface, "surface")?;
    Ok((
        phi.map(|v| (fb.value(v) + p.c0_bulk).sqrt()),
        psi.map(|v| (fs.value(v) + p.c0_surface).sqrt()),
    ))
}

pub fn quadratize(state: &SimState, p: &PhysicalParams) -> Result<(BulkField, SurfaceField)> {
    quadratize_fields(&state.phi, &state.psi, p)
}

/// `F′/(2√(F + C0))`.
fn ieq_coefficient(pot: &FloryHuggins, c0: f64, x: f64) -> f64 {
    pot.deriv(x) / (2.0 * (pot.value(x) + c0).sqrt())
}

/// Receives the output of [`Integrator::run`].
pub trait Sink {
    fn report(&mut self, report: &StepReport) -> Result<()>;
    fn snapshot(&mut self, state: &SimState) -> Result<()>;
}

/// Collects everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub reports: Vec<StepReport>,
    pub snapshots: Vec<SimState>,
}

impl Sink for MemorySink {
    fn report(&mut self, report: &StepReport) -> Result<()> {
        self.reports.push(*report);
        Ok(())
    }

    fn snapshot(&mut self, state: &SimState) -> Result<()> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

struct LuPreconditioner(Lu<usize, f64>);

impl Preconditioner for LuPreconditioner {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut m = Mat::from_fn(r.len(), 1, |i, _| r[i]);
        self.0.solve_in_place(m.as_mut());
        Ok((0..r.len()).map(|i| m[(i, 0)]).collect())
    }
}

const GMRES_RESTART: usize = 40;
const GMRES_MAX_ITER: usize = 400;
/// GMRES iteration count above which the preconditioner is refactored.
const REFACTOR_ITERATIONS: usize = 8;
const REFINEMENT_ROUNDS: usize = 4;

/// Prebuilt operators for one grid, parameter set, model and scheme.
pub struct Integrator {
    grid: Grid,
    params: PhysicalParams,
    spec: MobilitySpec,
    cfg: SchemeConfig,
    n_cells: usize,
    n_gamma: usize,
    mob: SparseColMat<usize, f64>,
    hess: SparseColMat<usize, f64>,
    weights: Vec<f64>,
    /// `I + θ A 𝕄` on the pattern of the system matrix.
    base_vals: Vec<f64>,
    /// `(position, row, 𝕄 value)` for the rows scaled by `2H²`.
    diag_coupling: Vec<(usize, usize, f64)>,
    pattern: SparseColMat<usize, f64>,
    symbolic_lu: SymbolicLu<usize>,
    preconditioner: Option<LuPreconditioner>,
    fb: FloryHuggins,
    fs: FloryHuggins,
}

impl Integrator {
    /// Validates the inputs and assembles the model's operators.
    pub fn new(grid: &Grid, p: &PhysicalParams, kind: ModelKind, cfg: &SchemeConfig) -> Result<Self> {
        let report = validate_params(p, kind);
        if !report.passed() {
            let msgs: Vec<String> = report
                .failures()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            return Err(Error::InvalidParams(msgs.join("; ")));
        }
        let spec = assemble_surface_mobility(p, kind)?;
        Self::with_spec(grid, p, spec, cfg)
    }

    /// Uses a caller-supplied mobility instead of the model assembly.
    pub fn with_spec(grid: &Grid, p: &PhysicalParams, spec: MobilitySpec, cfg: &SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let fb = p.bulk_potential();
        let fs = p.surface_potential();
        check_radicand(&fb, p.c0_bulk, "bulk")?;
        check_radicand(&fs, p.c0_surface, "surface")?;
        let n_cells = grid.n_cells();
        let n_gamma = grid.n_gamma();
        let dim = n_cells + 2 * n_gamma;
        let h = grid.h();
        let mob = build_mobility(grid, &spec)?;
        let hess = build_hessian(grid, p)?;
        let mut weights = vec![h * h; n_cells];
        weights.resize(dim, h);

        let theta = cfg.theta();
        let prod = sparse_sparse_matmul(hess.as_ref(), mob.as_ref(), theta, faer::Par::Seq)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let mut trips: Vec<Triplet<usize, usize, f64>> = (0..dim).map(|i| Triplet::new(i, i, 1.0)).collect();
        for_each_nz(&prod, |i, j, v| trips.push(Triplet::new(i, j, v)));
        for_each_nz(&mob, |i, j, _| trips.push(Triplet::new(i, j, 0.0)));
        let pattern = SparseColMat::try_new_from_triplets(dim, dim, &trips)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let base_vals = pattern.val().to_vec();
        let mut diag_coupling = Vec::new();
        let is_scaled = |row: usize| row < n_cells || row >= n_cells + n_gamma;
        let sym = pattern.symbolic();
        let mut missing = false;
        for_each_nz(&mob, |i, j, v| {
            if is_scaled(i) {
                match csc_position(sym, i, j) {
                    Some(k) => diag_coupling.push((k, i, v)),
                    None => missing = true,
                }
            }
        });
        if missing {
            return Err(Error::Factorization("system pattern lost a mobility entry".into()));
        }
        let symbolic_lu = SymbolicLu::try_new(pattern.symbolic())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            grid: grid.clone(),
            params: p.clone(),
            spec,
            cfg: cfg.clone(),
            n_cells,
            n_gamma,
            mob,
            hess,
            weights,
            base_vals,
            diag_coupling,
            pattern,
            symbolic_lu,
            preconditioner: None,
            fb,
            fs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn spec(&self) -> &MobilitySpec {
        &self.spec
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// The assembled `𝕄` over `(φ, φ_Γ, ψ)`.
    pub fn mobility_matrix(&self) -> &SparseColMat<usize, f64> {
        &self.mob
    }

    fn dim(&self) -> usize {
        self.n_cells + 2 * self.n_gamma
    }

    fn pack(&self, state: &SimState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(state.phi.values());
        x.extend_from_slice(state.phi_gamma.values());
        x.extend_from_slice(state.psi.values());
        x
    }

    fn unpack(&self, x: &[f64]) -> Result<(BulkField, SurfaceField, SurfaceField)> {
        let (nc, ng) = (self.n_cells, self.n_gamma);
        Ok((
            BulkField::from_vec(&self.grid, x[..nc].to_vec())?,
            SurfaceField::from_vec(&self.grid, x[nc..nc + ng].to_vec())?,
            SurfaceField::from_vec(&self.grid, x[nc + ng..].to_vec())?,
        ))
    }

    /// `H` for the bulk and surface at the extrapolated level of the scheme.
    fn ieq_coefficients(&self, state: &SimState) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let star = |now: &[f64], prev: Option<&[f64]>| -> Vec<f64> {
            match (self.cfg.order, prev) {
                (2, Some(prev)) => now.iter().zip(prev).map(|(a, b)| 1.5 * a - 0.5 * b).collect(),
                _ => now.to_vec(),
            }
        };
        let hist = state.history.as_ref();
        let phi_star = star(state.phi.values(), hist.map(|h| h.phi.values()));
        let psi_star = star(state.psi.values(), hist.map(|h| h.psi.values()));
        (
            phi_star.iter().map(|&x| ieq_coefficient(&self.fb, p.c0_bulk, x)).collect(),
            psi_star.iter().map(|&x| ieq_coefficient(&self.fs, p.c0_surface, x)).collect(),
        )
    }

    fn system_matrix(&self, hb: &[f64], hs: &[f64]) -> Result<SparseColMat<usize, f64>> {
        let theta = self.cfg.theta();
        let (nc, ng) = (self.n_cells, self.n_gamma);
        let mut vals = self.base_vals.clone();
        for &(k, row, m) in &self.diag_coupling {
            let hh = if row < nc { hb[row] } else { hs[row - nc - ng] };
            vals[k] += theta * 2.0 * hh * hh * m;
        }
        Ok(SparseColMat::new(self.pattern.symbolic().to_owned().map_err(|e| Error::Factorization(format!("{e:?}")))?, vals))
    }

    fn factor(&self, s: &SparseColMat<usize, f64>) -> Result<Lu<usize, f64>> {
        Lu::try_new_with_symbolic(self.symbolic_lu.clone(), s.as_ref())
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }

    fn solve(&mut self, s: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<(Vec<f64>, usize, f64)> {
        let tol = self.cfg.solver_tol;
        let bnorm = norm2(rhs).max(f64::MIN_POSITIVE);
        match self.cfg.linear_solver {
            LinearSolver::Direct => {
                let lu = LuPreconditioner(self.factor(s)?);
                let mut x = lu.apply(rhs)?;
                let mut rel = 0.0;
                // Iterative refinement pushes the residual to rounding level.
                for round in 0..=REFINEMENT_ROUNDS {
                    let ax = csc_matvec(s, &x);
                    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    rel = norm2(&r) / bnorm;
                    if rel <= 1e-3 * tol || round == REFINEMENT_ROUNDS {
                        break;
                    }
                    let dx = lu.apply(&r)?;
                    x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                }
                if rel > tol {
                    return Err(Error::SolverDiverged {
                        iterations: REFINEMENT_ROUNDS,
                        residual: rel,
                    });
                }
                Ok((x, 1, rel))
            }
            LinearSolver::Iterative => {
                if self.preconditioner.is_none() {
                    self.preconditioner = Some(LuPreconditioner(self.factor(s)?));
                }
                let mut x = vec![0.0; rhs.len()];
                let pre = self.preconditioner.as_ref().expect("preconditioner set above");
                let out = match gmres(s, rhs, &mut x, pre, 1e-3 * tol, GMRES_RESTART, GMRES_MAX_ITER) {
                    Ok(out) => out,
                    Err(Error::SolverDiverged { .. }) => {
                        // Stale preconditioner or a rounding floor: refactor and retry once.
                        let fresh = LuPreconditioner(self.factor(s)?);
                        x.iter_mut().for_each(|v| *v = 0.0);
                        let out = match gmres(s, rhs, &mut x, &fresh, 1e-3 * tol, GMRES_RESTART, GMRES_MAX_ITER) {
                            Ok(out) => out,
                            Err(Error::SolverDiverged { iterations, residual }) if residual <= tol => {
                                GmresOutcome { iterations, relative_residual: residual }
                            }
                            Err(e) => return Err(e),
                        };
                        self.preconditioner = Some(fresh);
                        return Ok((x, GMRES_MAX_ITER + out.iterations, out.relative_residual));
                    }
                    Err(e) => return Err(e),
                };
                if out.iterations > REFACTOR_ITERATIONS {
                    self.preconditioner = Some(LuPreconditioner(self.factor(s)?));
                }
                Ok((x, out.iterations, out.relative_residual))
            }
        }
    }

    /// `A x` plus the IEQ term `2 H q` on the bulk and surface blocks.
    fn forces(&self, x: &[f64], qb: &[f64], qs: &[f64], hb: &[f64], hs: &[f64]) -> Vec<f64> {
        let (nc, ng) = (self.n_cells, self.n_gamma);
        let mut f = csc_matvec(&self.hess, x);
        for c in 0..nc {
            f[c] += 2.0 * hb[c] * qb[c];
        }
        for i in 0..ng {
            f[nc + ng + i] += 2.0 * hs[i] * qs[i];
        }
        f
    }

    /// `⟨Q, 𝕄 Q⟩_W`: the dissipation rate of the discrete flow.
    pub fn dissipation_rate(&self, q: &[f64]) -> f64 {
        let mq = csc_matvec(&self.mob, q);
        q.iter()
            .zip(&mq)
            .zip(&self.weights)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }

    /// Forces at the scheme's quadrature level reconstructed from two
    /// consecutive states.
    pub fn scheme_forces(&self, prev: &SimState, next: &SimState) -> Vec<f64> {
        let (hb, hs) = self.ieq_coefficients(prev);
        let w = self.cfg.theta() / self.cfg.dt;
        let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect() };
        let x = lerp(&self.pack(prev), &self.pack(next));
        let qb = lerp(prev.q_b.values(), next.q_b.values());
        let qs = lerp(prev.q_s.values(), next.q_s.values());
        self.forces(&x, &qb, &qs, &hb, &hs)
    }

    /// `|ΔE_q/Δt + ⟨Q, 𝕄 Q⟩_W|` for a pair of consecutive states.
    pub fn dissipation_residual(&self, prev: &SimState, next: &SimState) -> Result<f64> {
        let e0 = quadratized_energy(prev, &self.grid, &self.params)?;
        let e1 = quadratized_energy(next, &self.grid, &self.params)?;
        let q = self.scheme_forces(prev, next);
        Ok(((e1 - e0) / self.cfg.dt + self.dissipation_rate(&q)).abs())
    }

    /// `‖α f_m − β μ_s + μ_b|_Γ‖_∞` with `f_m` recovered from the bulk update
    /// of the cells next to Γ.
    pub fn robin_residual(&self, prev: &SimState, next: &SimState) -> Result<f64> {
        let grid = &self.grid;
        let p = &self.params;
        let (nc, ng) = (self.n_cells, self.n_gamma);
        let h = grid.h();
        let q = self.scheme_forces(prev, next);
        let mu_b = BulkField::from_vec(grid, q[..nc].to_vec())?;
        let interior = div_flux(&mu_b, self.spec.m_b2, &SurfaceField::zeros(grid), grid)?;
        let mut worst: f64 = 0.0;
        for i in 0..ng {
            let c = grid.gamma_cell(i);
            let rate = (next.phi[c] - prev.phi[c]) / self.cfg.dt;
            let f_m = h * (rate + self.spec.m_b1 * mu_b[c] - interior[c]);
            let r = p.alpha * f_m - p.beta * q[nc + ng + i] + mu_b[c];
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }

    /// Diagnostics of a single state; residual fields are zero.
    pub fn report_for(&self, state: &SimState) -> Result<StepReport> {
        let e = total_energy(state, &self.grid, &self.params)?;
        Ok(StepReport {
            step: state.step,
            t: state.t,
            e_total: e.total,
            e_bulk: e.bulk,
            e_surface: e.surface,
            e_quadratized: quadratized_energy(state, &self.grid, &self.params)?,
            mass: mass_report(state, &self.params, &self.grid),
            dissipation_residual: 0.0,
            robin_residual: 0.0,
            linear_iterations: 0,
            solver_residual: 0.0,
        })
    }

    /// Advances one time step.
    pub fn step(&mut self, state: &SimState) -> Result<(SimState, StepReport)> {
        let grid = self.grid.clone();
        let x0 = self.pack(state);
        let (hb, hs) = self.ieq_coefficients(state);
        if hb.iter().chain(&hs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ieq coefficient", state.step));
        }
        let rhs = self.forces(&x0, state.q_b.values(), state.q_s.values(), &hb, &hs);
        let s = self.system_matrix(&hb, &hs)?;
        let (q, iterations, solver_residual) = self.solve(&s, &rhs)?;

        let dt = self.cfg.dt;
        let mq = csc_matvec(&self.mob, &q);
        let x1: Vec<f64> = x0.iter().zip(&mq).map(|(x, m)| x - dt * m).collect();
        let (phi, phi_gamma, psi) = self.unpack(&x1)?;
        let q_b = BulkField::from_fn(&grid, |c| state.q_b[c] + hb[c] * (phi[c] - state.phi[c]));
        let q_s = SurfaceField::from_fn(&grid, |i| state.q_s[i] + hs[i] * (psi[i] - state.psi[i]));

        let next = SimState {
            phi,
            phi_gamma,
            psi,
            q_b,
            q_s,
            t: (state.step + 1) as f64 * dt,
            step: state.step + 1,
            rng_seed: state.rng_seed,
            history: (self.cfg.order == 2).then(|| History {
                phi: state.phi.clone(),
                psi: state.psi.clone(),
            }),
        };
        for (name, ok) in [
            ("phi", next.phi.all_finite()),
            ("phi_gamma", next.phi_gamma.all_finite()),
            ("psi", next.psi.all_finite()),
            ("q_b", next.q_b.all_finite()),
            ("q_s", next.q_s.all_finite()),
        ] {
            if !ok {
                return Err(Error::NonFinite(name, next.step));
            }
        }
        let mut report = self.report_for(&next)?;
        report.dissipation_residual = self.dissipation_residual(state, &next)?;
        report.robin_residual = self.robin_residual(state, &next)?;
        report.linear_iterations = iterations;
        report.solver_residual = solver_residual;
        if !report.all_finite() {
            return Err(Error::NonFinite("step report", next.step));
        }
        Ok((next, report))
    }

    /// Steps until `max_steps` or the last snapshot time, reporting every step.
    ///
    /// The initial state is always reported and snapshotted. Snapshots are
    /// taken at the steps nearest to each requested time.
    pub fn run(&mut self, state0: &SimState, sink: &mut dyn Sink) -> Result<SimState> {
        let dt = self.cfg.dt;
        let snap_steps: Vec<u64> = self
            .cfg
            .snapshot_times
            .iter()
            .map(|t| (t / dt).round() as u64)
            .filter(|&k| k > 0)
            .collect();
        let n = self.cfg.planned_steps();
        sink.report(&self.report_for(state0)?)?;
        sink.snapshot(state0)?;
        let mut state = state0.clone();
        for _ in 0..n {
            let (next, report) = self.step(&state)?;
            sink.report(&report)?;
            if snap_steps.contains(&next.step) {
                sink.snapshot(&next)?;
            }
            state = next;
        }
        Ok(state)
    }
}

fn for_each_nz(m: &SparseColMat<usize, f64>, mut f: impl FnMut(usize, usize, f64)) {
    let cp = m.symbolic().col_ptr();
    let ri = m.symbolic().row_idx();
    let v = m.val();
    for j in 0..m.ncols() {
        for k in cp[j]..cp[j + 1] {
            f(ri[k], j, v[k]);
        }
    }
}

/// Adds the `(s·I + d·(−L))` stencil of one surface entry.
#[allow(clippy::too_many_arguments)]
fn push_surface_stencil(
    trips: &mut Vec<Triplet<usize, usize, f64>>,
    n: usize,
    inv_h2: f64,
    s: f64,
    d: f64,
    row: impl Fn(usize) -> usize,
    col: impl Fn(usize) -> usize,
) {
    if s == 0.0 && d == 0.0 {
        return;
    }
    for i in 0..n {
        let nb = usize::from(i > 0) + usize::from(i + 1 < n);
        trips.push(Triplet::new(row(i), col(i), s + d * nb as f64 * inv_h2));
        if i > 0 {
            trips.push(Triplet::new(row(i), col(i - 1), -d * inv_h2));
        }
        if i + 1 < n {
            trips.push(Triplet::new(row(i), col(i + 1), -d * inv_h2));
        }
    }
}

/// Pushes `c·(e_a − e_b)(e_a − e_b)ᵀ` for every interior cell face.
fn push_face_couplings(trips: &mut Vec<Triplet<usize, usize, f64>>, grid: &Grid, c: f64) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut face = |a: usize, b: usize| {
        trips.push(Triplet::new(a, a, c));
        trips.push(Triplet::new(a, b, -c));
        trips.push(Triplet::new(b, b, c));
        trips.push(Triplet::new(b, a, -c));
    };
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            let a = grid.cell_index(ix, iy);
            face(a, a + 1);
        }
    }
    for iy in 0..ny - 1 {
        for ix in 0..nx {
            let a = grid.cell_index(ix, iy);
            face(a, a + nx);
        }
    }
}

/// `𝕄` over `(φ, φ_Γ, ψ)` acting on `(μ_b, μ_c, μ_s)`.
fn build_mobility(grid: &Grid, spec: &MobilitySpec) -> Result<SparseColMat<usize, f64>> {
    let nc = grid.n_cells();
    let ng = grid.n_gamma();
    let dim = nc + 2 * ng;
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let mut trips = Vec::new();
    for c in 0..nc {
        if spec.m_b1 != 0.0 {
            trips.push(Triplet::new(c, c, spec.m_b1));
        }
    }
    if spec.m_b2 != 0.0 {
        push_face_couplings(&mut trips, grid, spec.m_b2 * inv_h2);
    }
    // Exchange flux f_m = (β μ_s − μ_b|_Γ)/α enters the adjacent cells.
    let (a, b) = (spec.alpha, spec.beta);
    for i in 0..ng {
        let c = grid.gamma_cell(i);
        trips.push(Triplet::new(c, c, 1.0 / (a * h)));
        if b != 0.0 {
            trips.push(Triplet::new(c, nc + ng + i, -b / (a * h)));
        }
    }
    let col_of = |block: usize, i: usize| match block {
        0 => nc + i,
        1 => nc + ng + i,
        _ => grid.gamma_cell(i),
    };
    for (r, row_off) in [(0usize, nc), (1, nc + ng)] {
        for blk in 0..3 {
            let e = &spec.entries[r][blk];
            push_surface_stencil(
                &mut trips,
                ng,
                inv_h2,
                e.scalar_part(),
                e.diffusion_part(),
                |i| row_off + i,
                |i| col_of(blk, i),
            );
        }
    }
    SparseColMat::try_new_from_triplets(dim, dim, &trips).map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// Hessian of the quadratic part of the energy, divided by the quadrature
/// weights: `−γ₁Δ_h` with the Γ ghost closure, `γ₁·2(φ_Γ − φ₁)/h`, `−γ₂ L`.
fn build_hessian(grid: &Grid, p: &PhysicalParams) -> Result<SparseColMat<usize, f64>> {
    let nc = grid.n_cells();
    let ng = grid.n_gamma();
    let dim = nc + 2 * ng;
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let mut trips = Vec::new();
    push_face_couplings(&mut trips, grid, p.gamma1 * inv_h2);
    for i in 0..ng {
        let c = grid.gamma_cell(i);
        let t = nc + i;
        trips.push(Triplet::new(c, c, 2.0 * p.gamma1 * inv_h2));
        trips.push(Triplet::new(c, t, -2.0 * p.gamma1 * inv_h2));
        trips.push(Triplet::new(t, t, 2.0 * p.gamma1 / h));
        trips.push(Triplet::new(t, c, -2.0 * p.gamma1 / h));
    }
    push_surface_stencil(&mut trips, ng, inv_h2, 0.0, p.gamma2, |i| nc + ng + i, |i| nc + ng + i);
    SparseColMat::try_new_from_triplets(dim, dim, &trips).map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// One step with a freshly built [`Integrator`].
pub fn step(
    state: &SimState,
    grid: &Grid,
    p: &PhysicalParams,
    kind: ModelKind,
    cfg: &SchemeConfig,
) -> Result<(SimState, StepReport)> {
    Integrator::new(grid, p, kind, cfg)?.step(state)
}

/// Runs a simulation with a freshly built [`Integrator`].
pub fn run(
    state0: &SimState,
    grid: &Grid,
    p: &PhysicalParams,
    kind: ModelKind,
    cfg: &SchemeConfig,
    sink: &mut dyn Sink,
) -> Result<SimState> {
    Integrator::new(grid, p, kind, cfg)?.run(state0, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::initial_condition;

    fn quick(order: u8, solver: LinearSolver) -> SchemeConfig {
        SchemeConfig {
            order,
            dt: 1e-3,
            linear_solver: solver,
            max_steps: 20,
            ..SchemeConfig::default()
        }
    }

    fn trajectory(kind: ModelKind, p: &PhysicalParams, cfg: &SchemeConfig) -> (MemorySink, SimState) {
        let g = Grid::reference(16).unwrap();
        let s0 = initial_condition(&g, p, 3).unwrap();
        let mut sink = MemorySink::default();
        let last = Integrator::new(&g, p, kind, cfg).unwrap().run(&s0, &mut sink).unwrap();
        (sink, last)
    }

    #[test]
    fn uniform_half_is_a_fixed_point() {
        let g = Grid::reference(8).unwrap();
        let p = PhysicalParams::model_b();
        let s0 = SimState::uniform(&g, &p, 0.5).unwrap();
        let mut it = Integrator::new(&g, &p, ModelKind::B, &quick(2, LinearSolver::Direct)).unwrap();
        let (s1, r) = it.step(&s0).unwrap();
        for (a, b) in s1.phi.values().iter().zip(s0.phi.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(s1.psi.values().iter().all(|v| (v - 0.5).abs() < 1e-14));
        assert!(r.robin_residual < 1e-12);
        assert_eq!(s1.step, 1);
    }

    #[test]
    fn conservation_and_energy_law() {
        for kind in [ModelKind::A, ModelKind::B] {
            let p = PhysicalParams::defaults_for(kind);
            let (sink, _) = trajectory(kind, &p, &quick(2, LinearSolver::Direct));
            let m0 = sink.reports[0].mass.total;
            for w in sink.reports.windows(2) {
                assert!(((w[1].mass.total - m0) / m0).abs() < 1e-12);
                assert!(w[1].e_quadratized <= w[0].e_quadratized + 1e-12);
                assert!(w[1].dissipation_residual < 1e-8, "{}", w[1].dissipation_residual);
                assert!(w[1].robin_residual < 1e-9);
            }
        }
    }

    #[test]
    fn first_order_dissipates_at_least_the_flow_rate() {
        let p = PhysicalParams::model_a();
        let (sink, _) = trajectory(ModelKind::A, &p, &quick(1, LinearSolver::Direct));
        for w in sink.reports.windows(2) {
            assert!(w[1].e_quadratized < w[0].e_quadratized);
        }
    }

    #[test]
    fn reduction_is_bit_identical() {
        let p = PhysicalParams::model_a();
        let cfg = quick(2, LinearSolver::Direct);
        let (a, la) = trajectory(ModelKind::A, &p, &cfg);
        let (b, lb) = trajectory(ModelKind::B, &p, &cfg);
        assert_eq!(a.reports, b.reports);
        assert_eq!(la, lb);
    }

    #[test]
    fn direct_and_iterative_agree() {
        let p = PhysicalParams::model_b();
        let (_, d) = trajectory(ModelKind::B, &p, &quick(2, LinearSolver::Direct));
        let (_, i) = trajectory(ModelKind::B, &p, &quick(2, LinearSolver::Iterative));
        for (a, b) in d.phi.values().iter().zip(i.phi.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in d.psi.values().iter().zip(i.psi.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn snapshots_at_requested_times() {
        let p = PhysicalParams::model_a();
        let cfg = SchemeConfig {
            snapshot_times: vec![0.005, 0.01],
            max_steps: 1000,
            ..quick(2, LinearSolver::Direct)
        };
        assert_eq!(cfg.planned_steps(), 10);
        let (sink, last) = trajectory(ModelKind::A, &p, &cfg);
        let steps: Vec<u64> = sink.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 5, 10]);
        assert_eq!(last.step, 10);
        assert_eq!(sink.reports.len(), 11);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::reference(8).unwrap();
        let p = PhysicalParams::model_a();
        for cfg in [
            SchemeConfig { order: 3, ..SchemeConfig::default() },
            SchemeConfig { dt: 0.0, ..SchemeConfig::default() },
            SchemeConfig { solver_tol: 1.0, ..SchemeConfig::default() },
            SchemeConfig { snapshot_times: vec![f64::NAN], ..SchemeConfig::default() },
        ] {
            assert!(matches!(Integrator::new(&g, &p, ModelKind::A, &cfg), Err(Error::InvalidScheme(_))));
        }
        let shallow = PhysicalParams { c0_bulk: 0.0, ..p.clone() };
        assert!(matches!(
            Integrator::new(&g, &shallow, ModelKind::A, &SchemeConfig::default()),
            Err(Error::InvalidParams(_))
        ));
        let spec = assemble_surface_mobility(&shallow, ModelKind::A).unwrap();
        assert!(matches!(
            Integrator::with_spec(&g, &shallow, spec, &SchemeConfig::default()),
            Err(Error::NegativeRadicand { field: "bulk", .. })
        ));
        assert!(Integrator::new(&g, &PhysicalParams::model_b(), ModelKind::A, &SchemeConfig::default()).is_err());
    }
}
