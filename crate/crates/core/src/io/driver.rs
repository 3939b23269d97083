//! `run`, `sweep` and `check` as library calls returning process exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diagnostics::MassTriple;
use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::io::config::{RunConfig, SweepPoint};
use crate::io::output::{fmt_f64, write_snapshot, FileSink, RunExtremes};
use crate::mobility::{assemble_surface_mobility, check_conservation_compat, check_onsager_psd};
use crate::model::{initial_condition, validate_params};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Tolerance on the smallest eigenvalue of the symmetric surface operator.
pub const PSD_TOL: f64 = 1e-12;

/// Exit code for an error: 2 for anything wrong with the input, 3 for
/// failures while integrating or writing.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidGrid(_)
        | Error::ShapeMismatch { .. }
        | Error::Gating { .. }
        | Error::InvalidParams(_)
        | Error::NegativeRadicand { .. }
        | Error::InvalidScheme(_)
        | Error::Config(_) => EXIT_CONFIG,
        Error::SolverDiverged { .. } | Error::Factorization(_) | Error::NonFinite(..) | Error::Io(_) => EXIT_SOLVER,
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Overrides {
    fn apply(&self, mut c: RunConfig) -> RunConfig {
        if let Some(dir) = &self.out_dir {
            c.out_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub t: f64,
    pub e_total: f64,
    pub e_quadratized: f64,
    pub initial_mass: MassTriple,
    pub final_mass: MassTriple,
    pub extremes: RunExtremes,
}

impl RunSummary {
    pub fn mass_drift(&self) -> f64 {
        rel_change(self.final_mass.total, self.initial_mass.total)
    }

    pub fn surface_drift(&self) -> f64 {
        rel_change(self.final_mass.surface, self.initial_mass.surface)
    }

    pub fn bulk_drift(&self) -> f64 {
        rel_change(self.final_mass.bulk_weighted, self.initial_mass.bulk_weighted)
    }
}

fn rel_change(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        (a - b).abs()
    } else {
        ((a - b) / b).abs()
    }
}

/// Runs one configuration into `dir`.
///
/// Operators and the initial state are built before the directory is
/// created, so input errors leave nothing behind.
pub fn run_to_dir(config: &RunConfig, dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let grid = config.grid.build()?;
    let mut integrator = Integrator::new(&grid, &config.params, config.model, &config.scheme)?;
    let state0 = initial_condition(&grid, &config.params, config.seed)?;
    let resolved = config.to_toml_string()?;

    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), resolved)?;
    let mut sink = FileSink::create(dir, &grid, config.report_interval)?;
    let last = integrator.run(&state0, &mut sink)?;
    sink.finish()?;
    let snap = (last.t / config.scheme.dt).round();
    let already = config.scheme.snapshot_times.iter().any(|t| (t / config.scheme.dt).round() == snap);
    if !already && last.step > 0 {
        write_snapshot(dir, &last, &grid)?;
    }
    let first = sink.first.expect("initial report");
    let fin = *sink.last().expect("final report");
    Ok(RunSummary {
        steps: fin.step,
        t: fin.t,
        e_total: fin.e_total,
        e_quadratized: fin.e_quadratized,
        initial_mass: first.mass,
        final_mass: fin.mass,
        extremes: sink.extremes,
    })
}

fn fail(log: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(log, "error: {e}");
    exit_code(e)
}

/// `run`: one simulation into the configured output directory.
pub fn cli_run(config_path: &Path, ov: &Overrides, log: &mut dyn Write) -> i32 {
    let config = match RunConfig::load(config_path) {
        Ok(c) => ov.apply(c),
        Err(e) => return fail(log, &e),
    };
    match run_to_dir(&config, &config.out_dir) {
        Ok(s) => {
            if !ov.quiet {
                let _ = writeln!(
                    log,
                    "model {} finished {} steps at t = {}: E_total = {:e}, mass drift = {:e}, max robin residual = {:e}",
                    config.model,
                    s.steps,
                    s.t,
                    s.e_total,
                    s.mass_drift(),
                    s.extremes.max_robin_residual
                );
                let _ = writeln!(log, "output in {}", config.out_dir.display());
            }
            EXIT_OK
        }
        Err(e) => fail(log, &e),
    }
}

pub const SUMMARY_COLUMNS: &str = "steps,t,E_total,E_quadratized,mass_total,mass_bulk_weighted,mass_surface,mass_drift,surface_drift,bulk_drift,max_robin_residual,max_dissipation_residual";

fn summary_row(p: &SweepPoint, outcome: &Result<RunSummary>) -> String {
    let mut row = vec![p.dir_name()];
    row.extend(p.coords.iter().map(|(_, v)| v.to_string()));
    match outcome {
        Ok(s) => {
            row.push("ok".into());
            row.push(s.steps.to_string());
            for v in [
                s.t,
                s.e_total,
                s.e_quadratized,
                s.final_mass.total,
                s.final_mass.bulk_weighted,
                s.final_mass.surface,
                s.mass_drift(),
                s.surface_drift(),
                s.bulk_drift(),
                s.extremes.max_robin_residual,
                s.extremes.max_dissipation_residual,
            ] {
                row.push(fmt_f64(v));
            }
            row.push(String::new());
        }
        Err(e) => {
            row.push("failed".into());
            row.extend(std::iter::repeat_n(String::new(), SUMMARY_COLUMNS.split(',').count()));
            row.push(format!("\"{}\"", e.to_string().replace('"', "'")));
        }
    }
    row.join(",")
}

/// `sweep`: every point of the Cartesian product in its own subdirectory,
/// plus `summary.csv`. Points run concurrently, at most `jobs` at a time.
pub fn cli_sweep(config_path: &Path, ov: &Overrides, jobs: usize, log: &mut dyn Write) -> i32 {
    let config = match RunConfig::load(config_path) {
        Ok(c) => ov.apply(c),
        Err(e) => return fail(log, &e),
    };
    let points = match config.sweep_points().and_then(|pts| {
        pts.iter().try_for_each(|p| p.config.validate())?;
        Ok(pts)
    }) {
        Ok(p) => p,
        Err(e) => return fail(log, &e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => return fail(log, &Error::Config(format!("thread pool: {e}"))),
    };
    let root = config.out_dir.clone();
    let outcomes: Vec<Result<RunSummary>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| run_to_dir(&p.config, &root.join(p.dir_name())))
            .collect()
    });

    let axes: Vec<&str> = config.sweep.keys().map(String::as_str).collect();
    let mut text = format!("point,{},status,{SUMMARY_COLUMNS},error\n", axes.join(","));
    for (p, o) in points.iter().zip(&outcomes) {
        text.push_str(&summary_row(p, o));
        text.push('\n');
    }
    if let Err(e) = std::fs::create_dir_all(&root).and_then(|_| std::fs::write(root.join("summary.csv"), text)) {
        return fail(log, &Error::Io(e));
    }
    let failed: Vec<(&SweepPoint, &Error)> = points
        .iter()
        .zip(&outcomes)
        .filter_map(|(p, o)| o.as_ref().err().map(|e| (p, e)))
        .collect();
    for (p, e) in &failed {
        let _ = writeln!(log, "point {} failed: {e}", p.dir_name());
    }
    if !ov.quiet {
        let _ = writeln!(
            log,
            "{} of {} points succeeded; summary in {}",
            points.len() - failed.len(),
            points.len(),
            root.join("summary.csv").display()
        );
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_SOLVER
    }
}

/// Outcome of the static checks on one configuration.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub params_ok: bool,
    pub psd_ok: bool,
    pub min_eig: Option<f64>,
    pub conservation_ok: bool,
    pub conserving: bool,
    pub report: String,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.params_ok && self.psd_ok && self.conservation_ok
    }
}

/// Parameter validation, PSD of the symmetric surface operator and
/// conservation compatibility. Non-conservation is advisory for C and D.
pub fn check_config(config: &RunConfig) -> Result<CheckOutcome> {
    use std::fmt::Write as _;
    let grid = config.grid.build()?;
    let validation = validate_params(&config.params, config.model);
    let mut report = format!("model {}\n{validation}", config.model);
    let params_ok = validation.passed();
    let (psd_ok, min_eig, conservation_ok, conserving) = match assemble_surface_mobility(&config.params, config.model) {
        Ok(spec) => {
            let psd = check_onsager_psd(&spec, &grid, PSD_TOL)?;
            let _ = writeln!(
                report,
                "[{}] onsager_psd: min eigenvalue {:e} on n_gamma = {}",
                if psd.pass { "pass" } else { "FAIL" },
                psd.min_eig,
                grid.n_gamma()
            );
            let cons = check_conservation_compat(&spec, Some(config.model));
            let tag = match (cons.conserving, cons.expected) {
                (true, _) => "pass",
                (false, false) => "advisory",
                (false, true) => "FAIL",
            };
            let _ = writeln!(report, "[{tag}] conservation: single-species mass conserved = {}", cons.conserving);
            for o in &cons.offenders {
                let _ = writeln!(report, "    {o}");
            }
            (psd.pass, Some(psd.min_eig), cons.passed(), cons.conserving)
        }
        Err(e) => {
            let _ = writeln!(report, "[FAIL] mobility assembly: {e}");
            (false, None, false, false)
        }
    };
    Ok(CheckOutcome {
        params_ok,
        psd_ok,
        min_eig,
        conservation_ok,
        conserving,
        report,
    })
}

/// `check`: exit 0 iff every check passes.
pub fn cli_check(config_path: &Path, ov: &Overrides, log: &mut dyn Write) -> i32 {
    let config = match RunConfig::load(config_path) {
        Ok(c) => ov.apply(c),
        Err(e) => return fail(log, &e),
    };
    match check_config(&config) {
        Ok(out) => {
            if !ov.quiet || !out.passed() {
                let _ = write!(log, "{}", out.report);
            }
            if out.passed() {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => fail(log, &e),
    }
}
