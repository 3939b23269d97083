//! Domain types shared by every other module: the grid, the physical
//! parameter set, the model taxonomy and the simulation state.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::FloryHuggins;
use crate::error::{Error, Result};
use crate::grid_ops::{BulkField, SurfaceField};

/// Which edge of the rectangle carries the dynamic boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    #[default]
    Bottom,
    Top,
    Left,
    Right,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Edge::Bottom => "bottom",
            Edge::Top => "top",
            Edge::Left => "left",
            Edge::Right => "right",
        };
        f.write_str(s)
    }
}

/// Uniform cell-centred mesh on a rectangle with one dynamic edge Γ.
///
/// Cells are stored row-major with row 0 at the bottom (`index = iy * nx + ix`).
/// Surface quantities live on the face centres of Γ and are ordered by
/// increasing x (horizontal Γ) or increasing y (vertical Γ).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    gamma: Edge,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, bounds: [f64; 4], gamma: Edge) -> Result<Self> {
        let [x_min, x_max, y_min, y_max] = bounds;
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per axis, got {nx}x{ny}",
                Self::MIN_CELLS
            )));
        }
        let lx = x_max - x_min;
        let ly = y_max - y_min;
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "degenerate bounds [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        let h = lx / nx as f64;
        let hy = ly / ny as f64;
        if ((h - hy) / h).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "cells must be square: {lx}/{nx} != {ly}/{ny}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            h,
            x_min,
            x_max,
            y_min,
            y_max,
            gamma,
        })
    }

    /// `n x n` cells on (-1, 1)² with Γ at the bottom.
    pub fn reference(n: usize) -> Result<Self> {
        Self::new(n, n, [-1.0, 1.0, -1.0, 1.0], Edge::Bottom)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn gamma_edge(&self) -> Edge {
        self.gamma
    }

    pub fn bounds(&self) -> [f64; 4] {
        [self.x_min, self.x_max, self.y_min, self.y_max]
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of face centres on Γ.
    pub fn n_gamma(&self) -> usize {
        match self.gamma {
            Edge::Bottom | Edge::Top => self.nx,
            Edge::Left | Edge::Right => self.ny,
        }
    }

    /// Number of cell layers between Γ and the opposite edge.
    pub fn depth(&self) -> usize {
        match self.gamma {
            Edge::Bottom | Edge::Top => self.ny,
            Edge::Left | Edge::Right => self.nx,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn gamma_length(&self) -> f64 {
        self.n_gamma() as f64 * self.h
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x_min + (ix as f64 + 0.5) * self.h,
            self.y_min + (iy as f64 + 0.5) * self.h,
        )
    }

    /// Cell index at distance `layer` (0 = adjacent) from face `i` of Γ.
    pub fn gamma_cell_at(&self, i: usize, layer: usize) -> usize {
        match self.gamma {
            Edge::Bottom => self.cell_index(i, layer),
            Edge::Top => self.cell_index(i, self.ny - 1 - layer),
            Edge::Left => self.cell_index(layer, i),
            Edge::Right => self.cell_index(self.nx - 1 - layer, i),
        }
    }

    /// Cell adjacent to face `i` of Γ.
    pub fn gamma_cell(&self, i: usize) -> usize {
        self.gamma_cell_at(i, 0)
    }

    /// Position of the face centre `i` on Γ.
    pub fn gamma_point(&self, i: usize) -> (f64, f64) {
        let s = (i as f64 + 0.5) * self.h;
        match self.gamma {
            Edge::Bottom => (self.x_min + s, self.y_min),
            Edge::Top => (self.x_min + s, self.y_max),
            Edge::Left => (self.x_min, self.y_min + s),
            Edge::Right => (self.x_max, self.y_min + s),
        }
    }

    /// Signed distance of a point from Γ measured into the domain.
    pub fn distance_from_gamma(&self, x: f64, y: f64) -> f64 {
        match self.gamma {
            Edge::Bottom => y - self.y_min,
            Edge::Top => self.y_max - y,
            Edge::Left => x - self.x_min,
            Edge::Right => self.x_max - x,
        }
    }
}

/// The four mobility variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Purely irreversible transport.
    A,
    /// Irreversible transport with reversible bulk-surface couplings.
    B,
    /// Irreversible reactive transport.
    C,
    /// Reactive transport with reversible couplings.
    D,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::A, ModelKind::B, ModelKind::C, ModelKind::D];

    /// Whether single-species mass `β∫φ + ∫ψ` is conserved by construction.
    pub fn conserves_species(self) -> bool {
        matches!(self, ModelKind::A | ModelKind::B)
    }

    pub fn has_reversible_part(self) -> bool {
        matches!(self, ModelKind::B | ModelKind::D)
    }

    pub fn is_reactive(self) -> bool {
        matches!(self, ModelKind::C | ModelKind::D)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::A => "A",
            ModelKind::B => "B",
            ModelKind::C => "C",
            ModelKind::D => "D",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ModelKind::A),
            "B" | "b" => Ok(ModelKind::B),
            "C" | "c" => Ok(ModelKind::C),
            "D" | "d" => Ok(ModelKind::D),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Physical and numerical-model parameters.
///
/// Names of the mobility coefficients follow the surface mobility matrix:
/// `m12_2` is the surface-diffusion part of entry (1,2), `m12_1` its reactive
/// scalar part, and so on. `m13_s` is the reversible scalar coupling between
/// the trace equation and the bulk potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub alpha: f64,
    pub beta: f64,
    pub chi_b: f64,
    pub chi_s: f64,
    pub b: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    #[serde(default)]
    pub m_b1: f64,
    pub m_b2: f64,
    pub m_c: f64,
    #[serde(default)]
    pub m_g: f64,
    #[serde(default)]
    pub m12_1: f64,
    #[serde(default)]
    pub m12_2: f64,
    #[serde(default)]
    pub m22_1: f64,
    #[serde(default)]
    pub m22_2: f64,
    #[serde(default)]
    pub m23_1: f64,
    #[serde(default)]
    pub m23_2: f64,
    #[serde(default)]
    pub m13_s: f64,
    pub c0_bulk: f64,
    pub c0_surface: f64,
    pub log_reg_delta: f64,
}

impl PhysicalParams {
    /// Friction coefficient of the Robin exchange used by every bundled
    /// parameter set.
    pub const DEFAULT_ALPHA: f64 = 100.0;
    pub const DEFAULT_LOG_REG_DELTA: f64 = 1e-6;

    /// The spinodal-decomposition parameter set for Model A.
    pub fn model_a() -> Self {
        let b = 0.02;
        Self {
            alpha: Self::DEFAULT_ALPHA,
            beta: 1.0,
            chi_b: 4.0,
            chi_s: 5.0,
            b,
            gamma1: b * b / 3.0,
            gamma2: b * b / 6.0,
            m_b1: 0.0,
            m_b2: 5e-6,
            m_c: 1e-6,
            m_g: 0.0,
            m12_1: 0.0,
            m12_2: 1e-6,
            m22_1: 0.0,
            m22_2: 1e-5,
            m23_1: 0.0,
            m23_2: 0.0,
            m13_s: 0.0,
            c0_bulk: 1.0,
            c0_surface: 1.0,
            log_reg_delta: Self::DEFAULT_LOG_REG_DELTA,
        }
    }

    /// Model B: Model A plus the reversible surface-diffusive coupling
    /// `m23_2 = 1e-5`.
    pub fn model_b() -> Self {
        Self {
            m23_2: 1e-5,
            ..Self::model_a()
        }
    }

    /// Model C: Model A with small reactive mobilities switched on.
    pub fn model_c() -> Self {
        Self {
            m_b1: 1e-6,
            m22_1: 1e-6,
            ..Self::model_a()
        }
    }

    /// Model D: Model B with reactive mobilities.
    pub fn model_d() -> Self {
        Self {
            m_b1: 1e-6,
            m22_1: 1e-6,
            ..Self::model_b()
        }
    }

    /// Default parameter set for a model kind.
    pub fn defaults_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::A => Self::model_a(),
            ModelKind::B => Self::model_b(),
            ModelKind::C => Self::model_c(),
            ModelKind::D => Self::model_d(),
        }
    }

    /// Sets the interface scale `b` and the gradient coefficients derived from it.
    pub fn with_interface_scale(mut self, b: f64) -> Self {
        self.b = b;
        self.gamma1 = b * b / 3.0;
        self.gamma2 = b * b / 6.0;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn bulk_potential(&self) -> FloryHuggins {
        FloryHuggins::new(self.chi_b, self.log_reg_delta)
    }

    pub fn surface_potential(&self) -> FloryHuggins {
        FloryHuggins::new(self.chi_s, self.log_reg_delta)
    }

    /// Whether `gamma1`/`gamma2` still equal `b²/3` and `b²/6`.
    pub fn gradients_from_interface_scale(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE);
        close(self.gamma1, self.b * self.b / 3.0) && close(self.gamma2, self.b * self.b / 6.0)
    }

    /// All mobility coefficients with their names.
    pub fn mobilities(&self) -> [(&'static str, f64); 12] {
        [
            ("m_b1", self.m_b1),
            ("m_b2", self.m_b2),
            ("m_c", self.m_c),
            ("m_g", self.m_g),
            ("m12_1", self.m12_1),
            ("m12_2", self.m12_2),
            ("m22_1", self.m22_1),
            ("m22_2", self.m22_2),
            ("m23_1", self.m23_1),
            ("m23_2", self.m23_2),
            ("m13_s", self.m13_s),
            ("alpha", self.alpha),
        ]
    }

    /// Coefficients that must vanish for `kind`, with the reason.
    pub fn forbidden_for(&self, kind: ModelKind) -> Vec<(&'static str, f64, &'static str)> {
        let mut out = Vec::new();
        let reactive = [
            ("m_b1", self.m_b1),
            ("m12_1", self.m12_1),
            ("m22_1", self.m22_1),
            ("m23_1", self.m23_1),
        ];
        let reversible = [("m13_s", self.m13_s), ("m23_2", self.m23_2)];
        if !kind.is_reactive() {
            for (name, v) in reactive {
                if v != 0.0 {
                    out.push((name, v, "reactive mobility breaks single-species conservation"));
                }
            }
        }
        if !kind.has_reversible_part() {
            for (name, v) in reversible {
                if v != 0.0 {
                    out.push((name, v, "reversible coupling requires Model B or D"));
                }
            }
            if kind == ModelKind::C && self.m23_1 != 0.0 {
                out.push(("m23_1", self.m23_1, "Model C has no (2,3) mobility beyond the Robin entry"));
            }
        }
        out
    }
}

/// Outcome of one parameter check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not an error, but worth reporting.
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Per-constraint report produced by [`validate_params`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: impl Into<String>, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }

    fn require(&mut self, name: &str, ok: bool, detail: String) {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        self.push(name, status, detail);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Flag => "FLAG",
            };
            writeln!(f, "[{tag}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Checks positivity, model-kind gating and quadratization admissibility.
pub fn validate_params(p: &PhysicalParams, kind: ModelKind) -> ValidationReport {
    let mut r = ValidationReport::default();

    r.require(
        "alpha_positive",
        p.alpha > 0.0 && p.alpha.is_finite(),
        format!("alpha = {:e} (the Robin exchange divides by alpha)", p.alpha),
    );
    r.require(
        "beta_nonnegative",
        p.beta >= 0.0 && p.beta.is_finite(),
        format!("beta = {:e}", p.beta),
    );
    r.require(
        "gradient_coefficients_positive",
        p.gamma1 > 0.0 && p.gamma2 > 0.0,
        format!("gamma1 = {:e}, gamma2 = {:e}", p.gamma1, p.gamma2),
    );
    if p.gradients_from_interface_scale() {
        r.push(
            "gradient_coefficients_from_b",
            CheckStatus::Pass,
            format!("gamma1 = b^2/3, gamma2 = b^2/6 with b = {}", p.b),
        );
    } else {
        r.push(
            "gradient_coefficients_from_b",
            CheckStatus::Flag,
            format!(
                "overridden: gamma1 = {:e}, gamma2 = {:e} (b = {} gives {:e}, {:e})",
                p.gamma1,
                p.gamma2,
                p.b,
                p.b * p.b / 3.0,
                p.b * p.b / 6.0
            ),
        );
    }

    let negative: Vec<String> = p
        .mobilities()
        .iter()
        .filter(|(_, v)| !(*v >= 0.0 && v.is_finite()))
        .map(|(n, v)| format!("{n} = {v:e}"))
        .collect();
    r.require(
        "mobilities_nonnegative",
        negative.is_empty(),
        if negative.is_empty() {
            "all mobility scalars >= 0".to_string()
        } else {
            negative.join(", ")
        },
    );

    let forbidden = p.forbidden_for(kind);
    r.require(
        "model_gating",
        forbidden.is_empty(),
        if forbidden.is_empty() {
            format!("coefficients admissible for model {kind}")
        } else {
            forbidden
                .iter()
                .map(|(n, v, why)| format!("{n} = {v:e} ({why})"))
                .collect::<Vec<_>>()
                .join("; ")
        },
    );

    if kind.conserves_species() {
        r.require(
            "bulk_reactive_conservation",
            p.m_b1 == 0.0,
            format!("m_b1 = {:e} must be zero for single-species conservation", p.m_b1),
        );
    } else {
        r.push(
            "bulk_reactive_conservation",
            CheckStatus::Flag,
            format!("model {kind} is reactive: single-species mass is not conserved"),
        );
    }

    r.require(
        "log_reg_delta_range",
        p.log_reg_delta > 0.0 && p.log_reg_delta < 0.5,
        format!("delta = {:e}", p.log_reg_delta),
    );

    if p.log_reg_delta > 0.0 && p.log_reg_delta < 0.5 {
        for (name, pot, c0) in [
            ("ieq_bulk_radicand", p.bulk_potential(), p.c0_bulk),
            ("ieq_surface_radicand", p.surface_potential(), p.c0_surface),
        ] {
            let (_, fmin) = pot.minimum();
            r.require(
                name,
                c0 + fmin > 0.0,
                format!("C0 + min F = {c0:e} + {fmin:.6e} = {:.6e}", c0 + fmin),
            );
        }
    }
    r
}

/// Values carried over from the previous time level, used by the
/// second-order scheme to extrapolate the quadratization coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub phi: BulkField,
    pub psi: SurfaceField,
}

/// Full simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub phi: BulkField,
    /// Trace of φ on Γ; an independent unknown.
    pub phi_gamma: SurfaceField,
    pub psi: SurfaceField,
    pub q_b: BulkField,
    pub q_s: SurfaceField,
    pub t: f64,
    pub step: u64,
    pub rng_seed: u64,
    pub history: Option<History>,
}

impl SimState {
    /// Builds a state from fields, deriving the auxiliary variables from
    /// their defining square-root relations.
    pub fn from_fields(
        grid: &Grid,
        p: &PhysicalParams,
        phi: BulkField,
        phi_gamma: SurfaceField,
        psi: SurfaceField,
    ) -> Result<Self> {
        phi.check(grid, "phi")?;
        phi_gamma.check(grid, "phi_gamma")?;
        psi.check(grid, "psi")?;
        let (q_b, q_s) = crate::integrator::quadratize_fields(&phi, &psi, p)?;
        Ok(Self {
            phi,
            phi_gamma,
            psi,
            q_b,
            q_s,
            t: 0.0,
            step: 0,
            rng_seed: 0,
            history: None,
        })
    }

    /// Uniform state `φ = φ_Γ = ψ = c`.
    pub fn uniform(grid: &Grid, p: &PhysicalParams, c: f64) -> Result<Self> {
        Self::from_fields(
            grid,
            p,
            BulkField::constant(grid, c),
            SurfaceField::constant(grid, c),
            SurfaceField::constant(grid, c),
        )
    }

    pub fn min_max_phi(&self) -> (f64, f64) {
        self.phi
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Mean composition and noise amplitude of the spinodal quench.
pub const QUENCH_MEAN: f64 = 0.3;
pub const QUENCH_NOISE: f64 = 0.01;

/// Noisy quench `φ = 0.3 + 0.01 ζ`, `ζ ~ U[-1, 1]`, with `φ_Γ` the trace of φ
/// (the adjacent cell value) and `ψ = φ_Γ`.
pub fn initial_condition(grid: &Grid, p: &PhysicalParams, seed: u64) -> Result<SimState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi: Vec<f64> = (0..grid.n_cells())
        .map(|_| QUENCH_MEAN + QUENCH_NOISE * rng.random_range(-1.0..=1.0))
        .collect();
    let phi = BulkField::from_vec(grid, phi)?;
    let trace: Vec<f64> = (0..grid.n_gamma()).map(|i| phi[grid.gamma_cell(i)]).collect();
    let phi_gamma = SurfaceField::from_vec(grid, trace)?;
    let psi = phi_gamma.clone();
    let mut state = SimState::from_fields(grid, p, phi, phi_gamma, psi)?;
    state.rng_seed = seed;
    Ok(state)
}
