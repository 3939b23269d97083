//! Staggered finite-difference operators.
//!
//! Bulk values sit at cell centres. Surface values sit at the face centres of
//! Γ. The Γ trace enters the bulk stencil through the ghost value
//! `φ_g = 2 φ_Γ − φ₁`, so a half-cell gradient `2(φ_Γ − φ₁)/h` couples the
//! adjacent cell to the trace.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::model::Grid;

macro_rules! field_type {
    ($name:ident, $len:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            data: Vec<f64>,
        }

        impl $name {
            pub fn zeros(grid: &Grid) -> Self {
                Self::constant(grid, 0.0)
            }

            pub fn constant(grid: &Grid, c: f64) -> Self {
                Self {
                    data: vec![c; grid.$len()],
                }
            }

            pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Result<Self> {
                let f = Self { data };
                f.check(grid, $what)?;
                Ok(f)
            }

            pub fn from_fn(grid: &Grid, f: impl FnMut(usize) -> f64) -> Self {
                Self {
                    data: (0..grid.$len()).map(f).collect(),
                }
            }

            /// Errors unless the field is shaped for `grid`.
            pub fn check(&self, grid: &Grid, what: &'static str) -> Result<()> {
                if self.data.len() != grid.$len() {
                    return Err(Error::ShapeMismatch {
                        what,
                        expected: grid.$len(),
                        actual: self.data.len(),
                    });
                }
                Ok(())
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn values(&self) -> &[f64] {
                &self.data
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.data
            }

            pub fn all_finite(&self) -> bool {
                self.data.iter().all(|v| v.is_finite())
            }

            pub fn sum(&self) -> f64 {
                self.data.iter().sum()
            }

            pub fn max_abs(&self) -> f64 {
                self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self {
                    data: self.data.iter().map(|&v| f(v)).collect(),
                }
            }

            /// `self + a * other`.
            pub fn axpy(&self, a: f64, other: &Self) -> Self {
                Self {
                    data: self
                        .data
                        .iter()
                        .zip(&other.data)
                        .map(|(x, y)| x + a * y)
                        .collect(),
                }
            }
        }

        impl Index<usize> for $name {
            type Output = f64;

            fn index(&self, i: usize) -> &f64 {
                &self.data[i]
            }
        }

        impl IndexMut<usize> for $name {
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.data[i]
            }
        }
    };
}

field_type!(BulkField, n_cells, "bulk field");
field_type!(SurfaceField, n_gamma, "surface field");

/// `∇_h·(M ∇_h μ)` with zero flux on the Neumann edges and the prescribed
/// outward flux on Γ.
///
/// Summation by parts holds exactly: `h²·Σ result = −h·Σ boundary_flux`.
pub fn div_flux(
    mu: &BulkField,
    m: f64,
    boundary_flux: &SurfaceField,
    grid: &Grid,
) -> Result<BulkField> {
    mu.check(grid, "mu")?;
    boundary_flux.check(grid, "boundary_flux")?;
    let (nx, ny, h) = (grid.nx(), grid.ny(), grid.h());
    let inv_h2 = 1.0 / (h * h);
    let mut out = vec![0.0; grid.n_cells()];
    let v = mu.values();

    // Each interior face is visited once so the sum telescopes exactly.
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            let a = grid.cell_index(ix, iy);
            let b = a + 1;
            let j = m * (v[b] - v[a]) * inv_h2;
            out[a] += j;
            out[b] -= j;
        }
    }
    for iy in 0..ny - 1 {
        for ix in 0..nx {
            let a = grid.cell_index(ix, iy);
            let b = a + nx;
            let j = m * (v[b] - v[a]) * inv_h2;
            out[a] += j;
            out[b] -= j;
        }
    }
    for i in 0..grid.n_gamma() {
        out[grid.gamma_cell(i)] -= boundary_flux[i] / h;
    }
    BulkField::from_vec(grid, out)
}

/// `∇_s·(c ∇_s u)` on Γ with mirror-ghost Neumann closure at both endpoints.
pub fn surface_laplacian(u: &SurfaceField, c: f64, grid: &Grid) -> Result<SurfaceField> {
    u.check(grid, "u")?;
    let n = grid.n_gamma();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut out = vec![0.0; n];
    let v = u.values();
    for i in 0..n - 1 {
        let j = c * (v[i + 1] - v[i]) * inv_h2;
        out[i] += j;
        out[i + 1] -= j;
    }
    SurfaceField::from_vec(grid, out)
}

/// Trace `φ_Γ` and outward normal derivative `2(φ_Γ − φ₁)/h` on Γ.
pub fn boundary_trace_and_normal(
    phi: &BulkField,
    phi_gamma: &SurfaceField,
    grid: &Grid,
) -> Result<(SurfaceField, SurfaceField)> {
    phi.check(grid, "phi")?;
    phi_gamma.check(grid, "phi_gamma")?;
    let h = grid.h();
    let dn = SurfaceField::from_fn(grid, |i| 2.0 * (phi_gamma[i] - phi[grid.gamma_cell(i)]) / h);
    Ok((phi_gamma.clone(), dn))
}

/// Values of a bulk field in the cells adjacent to Γ.
pub fn adjacent_values(f: &BulkField, grid: &Grid) -> SurfaceField {
    SurfaceField::from_fn(grid, |i| f[grid.gamma_cell(i)])
}

/// Five-point Laplacian with the Γ ghost closure `φ_g = 2φ_Γ − φ₁`.
pub fn bulk_laplacian(phi: &BulkField, phi_gamma: &SurfaceField, grid: &Grid) -> Result<BulkField> {
    let (_, dn) = boundary_trace_and_normal(phi, phi_gamma, grid)?;
    // An inflow gradient is an outward diffusive flux of −∂_nφ.
    let outward = dn.map(|v| -v);
    div_flux(phi, 1.0, &outward, grid)
}

/// Discrete bulk gradient energy `½ Σ|∇_h φ|² h²`, including the Γ half cells.
pub fn bulk_gradient_energy(phi: &BulkField, phi_gamma: &SurfaceField, grid: &Grid) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let v = phi.values();
    let mut s = 0.0;
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            let a = grid.cell_index(ix, iy);
            s += 0.5 * (v[a + 1] - v[a]).powi(2);
        }
    }
    for iy in 0..ny - 1 {
        for ix in 0..nx {
            let a = grid.cell_index(ix, iy);
            s += 0.5 * (v[a + nx] - v[a]).powi(2);
        }
    }
    for i in 0..grid.n_gamma() {
        s += (phi_gamma[i] - v[grid.gamma_cell(i)]).powi(2);
    }
    s
}

/// Discrete surface gradient energy `½ Σ|∇_s ψ|² h`.
pub fn surface_gradient_energy(psi: &SurfaceField, grid: &Grid) -> f64 {
    let v = psi.values();
    v.windows(2).map(|w| 0.5 * (w[1] - w[0]).powi(2)).sum::<f64>() / grid.h()
}
