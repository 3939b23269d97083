//! Simulation of bulk Cahn–Hilliard dynamics coupled to a dynamic boundary.
//!
//! A binary mixture fills a rectangle. One edge Γ carries its own order
//! parameter ψ and exchanges material with the bulk through a Robin-type
//! condition `α f_m = β μ_s − μ_b`. Four mobility variants select how the bulk
//! and surface potentials drive the surface fluxes:
//!
//! | model | transport   | reversible couplings | single-species mass |
//! |-------|-------------|----------------------|---------------------|
//! | A     | irreversible| no                   | conserved           |
//! | B     | irreversible| yes                  | conserved           |
//! | C     | reactive    | no                   | not conserved       |
//! | D     | reactive    | yes                  | not conserved       |
//!
//! Time stepping uses invariant energy quadratization, so each step is one
//! sparse linear solve and a modified energy decreases unconditionally.
//!
//! ```
//! use dynbc::{initial_condition, Grid, Integrator, MemorySink, ModelKind, PhysicalParams, SchemeConfig};
//!
//! let grid = Grid::reference(16)?;
//! let params = PhysicalParams::model_b();
//! let cfg = SchemeConfig { dt: 1e-3, max_steps: 5, ..SchemeConfig::default() };
//! let state = initial_condition(&grid, &params, 42)?;
//! let mut sink = MemorySink::default();
//! Integrator::new(&grid, &params, ModelKind::B, &cfg)?.run(&state, &mut sink)?;
//! let (m0, m5) = (sink.reports[0].mass.total, sink.reports[5].mass.total);
//! assert!(((m5 - m0) / m0).abs() < 1e-12);
//! # Ok::<(), dynbc::Error>(())
//! ```

pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod grid_ops;
pub mod integrator;
pub mod io;
pub mod linalg;
pub mod mobility;
pub mod model;

pub use diagnostics::{mass_report, MassTriple};
pub use energy::{chemical_potentials, total_energy, ChemicalPotentials, Energies, FloryHuggins};
pub use error::{Error, Result};
pub use grid_ops::{BulkField, SurfaceField};
pub use integrator::{Integrator, LinearSolver, MemorySink, SchemeConfig, Sink, StepReport};
pub use mobility::{assemble_surface_mobility, MobilitySpec};
pub use model::{initial_condition, validate_params, Edge, Grid, ModelKind, PhysicalParams, SimState};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/mobility.md")]
    mod mobility {}
    #[doc = include_str!("../../../book/src/time_stepping.md")]
    mod time_stepping {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
