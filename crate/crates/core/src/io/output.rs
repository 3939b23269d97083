//! Time series and field snapshot files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::integrator::{Sink, StepReport};
use crate::model::{Grid, SimState};

pub const TIMESERIES_HEADER: &str = "step,t,E_total,E_bulk,E_surface,E_quadratized,mass_total,mass_bulk_weighted,mass_bulk_raw,mass_surface,dissipation_residual,robin_residual";

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn timeseries_row(r: &StepReport) -> String {
    let vals = [
        r.t,
        r.e_total,
        r.e_bulk,
        r.e_surface,
        r.e_quadratized,
        r.mass.total,
        r.mass.bulk_weighted,
        r.mass.bulk_raw,
        r.mass.surface,
        r.dissipation_residual,
        r.robin_residual,
    ];
    let mut row = r.step.to_string();
    for v in vals {
        row.push(',');
        row.push_str(&fmt_f64(v));
    }
    row
}

/// Snapshot file tag from the simulated time.
pub fn snapshot_tag(t: f64) -> String {
    format!("{t:.6}")
}

/// `ny` rows of `nx` values, row 0 at the bottom of the domain.
pub fn phi_csv(state: &SimState, grid: &Grid) -> String {
    let mut out = String::new();
    for iy in 0..grid.ny() {
        let row: Vec<String> = (0..grid.nx()).map(|ix| fmt_f64(state.phi[grid.cell_index(ix, iy)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn psi_csv(state: &SimState) -> String {
    let row: Vec<String> = state.psi.values().iter().map(|&v| fmt_f64(v)).collect();
    row.join(",") + "\n"
}

/// Plain `P2` image. The first image row is the top of the domain.
pub fn phi_pgm(state: &SimState, grid: &Grid) -> String {
    let mut out = format!("P2\n{} {}\n255\n", grid.nx(), grid.ny());
    for iy in (0..grid.ny()).rev() {
        let row: Vec<String> = (0..grid.nx())
            .map(|ix| {
                let v = state.phi[grid.cell_index(ix, iy)].clamp(0.0, 1.0);
                ((255.0 * v).round() as u8).to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_snapshot(dir: &Path, state: &SimState, grid: &Grid) -> Result<()> {
    let tag = snapshot_tag(state.t);
    std::fs::write(dir.join(format!("phi_t{tag}.csv")), phi_csv(state, grid))?;
    std::fs::write(dir.join(format!("psi_t{tag}.csv")), psi_csv(state))?;
    std::fs::write(dir.join(format!("phi_t{tag}.pgm")), phi_pgm(state, grid))?;
    Ok(())
}

/// Worst per-step diagnostics seen during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunExtremes {
    pub max_dissipation_residual: f64,
    pub max_robin_residual: f64,
    /// Largest per-step increase of `E_quadratized`. Negative when it always fell.
    pub max_quadratized_increase: f64,
    pub max_total_increase: f64,
}

/// Writes every `interval`-th report plus the last one, and snapshots.
pub struct FileSink {
    dir: PathBuf,
    grid: Grid,
    interval: u64,
    out: BufWriter<File>,
    pending: Option<StepReport>,
    prev: Option<StepReport>,
    pub first: Option<StepReport>,
    pub extremes: RunExtremes,
}

impl FileSink {
    pub fn create(dir: &Path, grid: &Grid, interval: u64) -> Result<Self> {
        let mut out = BufWriter::new(File::create(dir.join("timeseries.csv"))?);
        writeln!(out, "{TIMESERIES_HEADER}")?;
        Ok(Self {
            dir: dir.to_owned(),
            grid: grid.clone(),
            interval: interval.max(1),
            out,
            pending: None,
            prev: None,
            first: None,
            extremes: RunExtremes {
                max_quadratized_increase: f64::NEG_INFINITY,
                max_total_increase: f64::NEG_INFINITY,
                ..RunExtremes::default()
            },
        })
    }

    /// Last report received.
    pub fn last(&self) -> Option<&StepReport> {
        self.prev.as_ref()
    }

    /// Flushes the final row if it fell between intervals.
    pub fn finish(&mut self) -> Result<()> {
        if let Some(r) = self.pending.take() {
            writeln!(self.out, "{}", timeseries_row(&r))?;
        }
        self.out.flush()?;
        Ok(())
    }
}

impl Sink for FileSink {
    fn report(&mut self, r: &StepReport) -> Result<()> {
        let x = &mut self.extremes;
        x.max_dissipation_residual = x.max_dissipation_residual.max(r.dissipation_residual);
        x.max_robin_residual = x.max_robin_residual.max(r.robin_residual);
        if let Some(p) = &self.prev {
            x.max_quadratized_increase = x.max_quadratized_increase.max(r.e_quadratized - p.e_quadratized);
            x.max_total_increase = x.max_total_increase.max(r.e_total - p.e_total);
        }
        if self.first.is_none() {
            self.first = Some(*r);
        }
        if r.step.is_multiple_of(self.interval) {
            writeln!(self.out, "{}", timeseries_row(r))?;
            self.pending = None;
        } else {
            self.pending = Some(*r);
        }
        self.prev = Some(*r);
        Ok(())
    }

    fn snapshot(&mut self, state: &SimState) -> Result<()> {
        write_snapshot(&self.dir, state, &self.grid)
    }
}
