//! Flory–Huggins densities, discrete energies and chemical potentials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid_ops::{
    adjacent_values, boundary_trace_and_normal, bulk_gradient_energy, bulk_laplacian,
    surface_gradient_energy, surface_laplacian, BulkField, SurfaceField,
};
use crate::model::{Grid, PhysicalParams, SimState};

/// `F(φ) = φ ln φ + (1−φ) ln(1−φ) + χ φ(1−φ)`.
///
/// Each entropy term `x ln x` is continued below `delta` by its second-order
/// Taylor polynomial at `delta`, which keeps `F` twice continuously
/// differentiable on the whole real line. On `[delta, 1 − delta]` the exact
/// formula is evaluated, so both agree bit for bit there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloryHuggins {
    pub chi: f64,
    pub delta: f64,
}

fn xlnx(x: f64) -> f64 {
    x * x.ln()
}

impl FloryHuggins {
    pub fn new(chi: f64, delta: f64) -> Self {
        Self { chi, delta }
    }

    fn in_range(&self, phi: f64) -> bool {
        phi >= self.delta && phi <= 1.0 - self.delta
    }

    /// `x ln x` and its first two derivatives, continued below `delta`.
    fn entropy(&self, x: f64) -> (f64, f64, f64) {
        let d = self.delta;
        if x >= d {
            (xlnx(x), x.ln() + 1.0, 1.0 / x)
        } else {
            let (s0, s1, s2) = (xlnx(d), d.ln() + 1.0, 1.0 / d);
            let e = x - d;
            (s0 + s1 * e + 0.5 * s2 * e * e, s1 + s2 * e, s2)
        }
    }

    pub fn exact_value(&self, phi: f64) -> f64 {
        xlnx(phi) + xlnx(1.0 - phi) + self.chi * phi * (1.0 - phi)
    }

    pub fn exact_deriv(&self, phi: f64) -> f64 {
        (phi / (1.0 - phi)).ln() + self.chi * (1.0 - 2.0 * phi)
    }

    pub fn exact_second_deriv(&self, phi: f64) -> f64 {
        1.0 / phi + 1.0 / (1.0 - phi) - 2.0 * self.chi
    }

    pub fn value(&self, phi: f64) -> f64 {
        if self.in_range(phi) {
            return self.exact_value(phi);
        }
        self.entropy(phi).0 + self.entropy(1.0 - phi).0 + self.chi * phi * (1.0 - phi)
    }

    pub fn deriv(&self, phi: f64) -> f64 {
        if self.in_range(phi) {
            return self.exact_deriv(phi);
        }
        self.entropy(phi).1 - self.entropy(1.0 - phi).1 + self.chi * (1.0 - 2.0 * phi)
    }

    pub fn second_deriv(&self, phi: f64) -> f64 {
        if self.in_range(phi) {
            return self.exact_second_deriv(phi);
        }
        self.entropy(phi).2 + self.entropy(1.0 - phi).2 - 2.0 * self.chi
    }

    /// Global minimiser and minimum of the regularised potential.
    ///
    /// Scans a uniform grid slightly wider than `[0, 1]` and refines the best
    /// bracket by golden-section search.
    pub fn minimum(&self) -> (f64, f64) {
        const N: usize = 22_000;
        let (lo, hi) = (-0.05, 1.05);
        let step = (hi - lo) / N as f64;
        let mut candidates: Vec<f64> = (0..=N).map(|k| lo + k as f64 * step).collect();
        candidates.extend([self.delta, 1.0 - self.delta, 0.5]);
        let mut best = (f64::NAN, f64::INFINITY);
        for &x in &candidates {
            let v = self.value(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        let (mut a, mut b) = (best.0 - step, best.0 + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        for _ in 0..200 {
            if self.value(c) < self.value(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        let x = 0.5 * (a + b);
        let v = self.value(x);
        if v < best.1 {
            (x, v)
        } else {
            best
        }
    }
}

/// `F_b(φ)` with interaction strength `chi_b` and the default threshold.
pub fn bulk_potential(phi: f64, chi_b: f64) -> f64 {
    FloryHuggins::new(chi_b, PhysicalParams::DEFAULT_LOG_REG_DELTA).value(phi)
}

pub fn bulk_potential_deriv(phi: f64, chi_b: f64) -> f64 {
    FloryHuggins::new(chi_b, PhysicalParams::DEFAULT_LOG_REG_DELTA).deriv(phi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub total: f64,
    pub bulk: f64,
    pub surface: f64,
}

/// Discrete free energy. The half-cell gradient between Γ and the adjacent
/// cells is part of the bulk energy.
pub fn total_energy(state: &SimState, grid: &Grid, p: &PhysicalParams) -> Result<Energies> {
    state.phi.check(grid, "phi")?;
    state.phi_gamma.check(grid, "phi_gamma")?;
    state.psi.check(grid, "psi")?;
    let h = grid.h();
    let fb = p.bulk_potential();
    let fs = p.surface_potential();
    let bulk = h * h * state.phi.values().iter().map(|&v| fb.value(v)).sum::<f64>()
        + p.gamma1 * bulk_gradient_energy(&state.phi, &state.phi_gamma, grid);
    let surface = h * state.psi.values().iter().map(|&v| fs.value(v)).sum::<f64>()
        + p.gamma2 * surface_gradient_energy(&state.psi, grid);
    Ok(Energies {
        total: bulk + surface,
        bulk,
        surface,
    })
}

/// Energy with the potentials replaced by `q² − C0`.
pub fn quadratized_energy(state: &SimState, grid: &Grid, p: &PhysicalParams) -> Result<f64> {
    state.q_b.check(grid, "q_b")?;
    state.q_s.check(grid, "q_s")?;
    let h = grid.h();
    let bulk = h * h
        * state
            .q_b
            .values()
            .iter()
            .map(|&q| q * q - p.c0_bulk)
            .sum::<f64>()
        + p.gamma1 * bulk_gradient_energy(&state.phi, &state.phi_gamma, grid);
    let surface = h
        * state
            .q_s
            .values()
            .iter()
            .map(|&q| q * q - p.c0_surface)
            .sum::<f64>()
        + p.gamma2 * surface_gradient_energy(&state.psi, grid);
    Ok(bulk + surface)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalPotentials {
    pub mu_b: BulkField,
    pub mu_s: SurfaceField,
    pub mu_c: SurfaceField,
    /// Conjugate to the normal derivative; identically zero here.
    pub mu_g: SurfaceField,
    /// Exchange flux from the surface into the bulk, `(β μ_s − μ_b|_Γ)/α`.
    pub f_m: SurfaceField,
}

/// Variational derivatives of [`total_energy`] divided by the quadrature
/// weights: `h²` for cells, `h` for Γ faces.
///
/// On a curved boundary `μ_s` and `μ_c` would pick up mean-curvature terms,
/// and a second-gradient bulk energy would give a nonzero `μ_g`. Neither
/// exists for a straight edge with first-gradient energies.
pub fn chemical_potentials(
    state: &SimState,
    grid: &Grid,
    p: &PhysicalParams,
) -> Result<ChemicalPotentials> {
    let fb = p.bulk_potential();
    let fs = p.surface_potential();
    let lap = bulk_laplacian(&state.phi, &state.phi_gamma, grid)?;
    let mu_b = BulkField::from_fn(grid, |c| fb.deriv(state.phi[c]) - p.gamma1 * lap[c]);
    let ls = surface_laplacian(&state.psi, p.gamma2, grid)?;
    let mu_s = SurfaceField::from_fn(grid, |i| fs.deriv(state.psi[i]) - ls[i]);
    let (_, dn) = boundary_trace_and_normal(&state.phi, &state.phi_gamma, grid)?;
    let mu_c = dn.map(|v| p.gamma1 * v);
    let f_m = robin_flux(&mu_b, &mu_s, grid, p);
    Ok(ChemicalPotentials {
        mu_b,
        mu_s,
        mu_c,
        mu_g: SurfaceField::zeros(grid),
        f_m,
    })
}

/// `f_m = (β μ_s − μ_b|_Γ)/α`, with `μ_b|_Γ` taken in the adjacent cells.
pub fn robin_flux(
    mu_b: &BulkField,
    mu_s: &SurfaceField,
    grid: &Grid,
    p: &PhysicalParams,
) -> SurfaceField {
    let mb = adjacent_values(mu_b, grid);
    SurfaceField::from_fn(grid, |i| (p.beta * mu_s[i] - mb[i]) / p.alpha)
}

/// Degree-of-freedom block of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Bulk,
    Trace,
    Surface,
}

/// `|central difference of E along dir − ⟨μ, dir⟩_W|` for one block.
pub fn directional_error(
    state: &SimState,
    grid: &Grid,
    p: &PhysicalParams,
    block: Block,
    dir: &[f64],
    eps: f64,
) -> Result<f64> {
    let mu = chemical_potentials(state, grid, p)?;
    let h = grid.h();
    let shifted = |s: f64| -> Result<f64> {
        let mut st = state.clone();
        let target = match block {
            Block::Bulk => st.phi.values_mut(),
            Block::Trace => st.phi_gamma.values_mut(),
            Block::Surface => st.psi.values_mut(),
        };
        for (v, d) in target.iter_mut().zip(dir) {
            *v += s * d;
        }
        Ok(total_energy(&st, grid, p)?.total)
    };
    let fd = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
    let (force, w) = match block {
        Block::Bulk => (mu.mu_b.values(), h * h),
        Block::Trace => (mu.mu_c.values(), h),
        Block::Surface => (mu.mu_s.values(), h),
    };
    let analytic = w * force.iter().zip(dir).map(|(m, d)| m * d).sum::<f64>();
    Ok((fd - analytic).abs())
}

/// Random directions per block used by [`variational_consistency_check`].
pub const VARIATIONAL_DIRECTIONS: usize = 10;

/// Largest [`directional_error`] over random directions with entries in
/// `[-1, 1]`, drawn per block from a generator seeded by `state.rng_seed`.
pub fn variational_consistency_check(
    state: &SimState,
    grid: &Grid,
    p: &PhysicalParams,
    eps: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed ^ 0x5eed_f00d);
    let mut worst: f64 = 0.0;
    for (block, n) in [
        (Block::Bulk, grid.n_cells()),
        (Block::Trace, grid.n_gamma()),
        (Block::Surface, grid.n_gamma()),
    ] {
        for _ in 0..VARIATIONAL_DIRECTIONS {
            let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            worst = worst.max(directional_error(state, grid, p, block, &dir, eps)?);
        }
    }
    Ok(worst)
}
