//! Mass and energy bookkeeping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{Integrator, SchemeConfig, Sink, StepReport};
use crate::model::{initial_condition, Grid, ModelKind, PhysicalParams, SimState};

/// `β∫φ + ∫_Γ ψ` and its parts. `bulk_raw` is `∫φ` without the β weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassTriple {
    pub total: f64,
    pub bulk_weighted: f64,
    pub bulk_raw: f64,
    pub surface: f64,
}

/// Midpoint-rule masses on the staggered layout.
pub fn mass_report(state: &SimState, p: &PhysicalParams, grid: &Grid) -> MassTriple {
    let h = grid.h();
    let bulk_raw = h * h * state.phi.sum();
    let bulk_weighted = p.beta * bulk_raw;
    let surface = h * state.psi.sum();
    MassTriple {
        total: bulk_weighted + surface,
        bulk_weighted,
        bulk_raw,
        surface,
    }
}

/// `|ΔE_q/Δt + ⟨Q, 𝕄 Q⟩_W|` for two consecutive accepted states.
pub fn dissipation_residual(
    state: &SimState,
    next: &SimState,
    grid: &Grid,
    p: &PhysicalParams,
    kind: ModelKind,
    cfg: &SchemeConfig,
) -> Result<f64> {
    Integrator::new(grid, p, kind, cfg)?.dissipation_residual(state, next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRow {
    pub beta: f64,
    /// `|m_s(T) − m_s(0)| / |m_s(0)|`.
    pub surface_drift: f64,
    /// Same for the β-weighted bulk mass.
    pub bulk_drift: f64,
    pub total_drift: f64,
    pub final_mass: MassTriple,
}

struct Endpoints {
    first: Option<MassTriple>,
    last: Option<MassTriple>,
}

impl Sink for Endpoints {
    fn report(&mut self, r: &StepReport) -> Result<()> {
        if self.first.is_none() {
            self.first = Some(r.mass);
        }
        self.last = Some(r.mass);
        Ok(())
    }

    fn snapshot(&mut self, _: &SimState) -> Result<()> {
        Ok(())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        (a - b).abs()
    } else {
        ((a - b) / b).abs()
    }
}

/// Short runs per β from the same quench, reporting how far each reservoir's
/// mass drifts. Points run in parallel.
pub fn limit_behavior_probe(
    p: &PhysicalParams,
    kind: ModelKind,
    grid: &Grid,
    cfg: &SchemeConfig,
    beta_list: &[f64],
    seed: u64,
) -> Result<Vec<LimitRow>> {
    if beta_list.is_empty() {
        return Err(Error::InvalidParams("beta_list must not be empty".into()));
    }
    beta_list
        .par_iter()
        .map(|&beta| {
            let pb = p.clone().with_beta(beta);
            let s0 = initial_condition(grid, &pb, seed)?;
            let mut sink = Endpoints { first: None, last: None };
            Integrator::new(grid, &pb, kind, cfg)?.run(&s0, &mut sink)?;
            let (m0, m1) = (sink.first.expect("initial report"), sink.last.expect("final report"));
            Ok(LimitRow {
                beta,
                surface_drift: rel(m1.surface, m0.surface),
                bulk_drift: rel(m1.bulk_weighted, m0.bulk_weighted),
                total_drift: rel(m1.total, m0.total),
                final_mass: m1,
            })
        })
        .collect()
}
