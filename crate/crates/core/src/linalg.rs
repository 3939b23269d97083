//! Sparse helpers and a restarted GMRES.

use faer::sparse::{SparseColMat, SymbolicSparseColMatRef};

use crate::error::{Error, Result};

/// `y = A x` for a column-compressed matrix.
pub fn csc_matvec(a: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let a = a.as_ref();
    let mut y = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for k in cp[j]..cp[j + 1] {
            y[ri[k]] += v[k] * xj;
        }
    }
    y
}

/// Position of `(row, col)` in the value array, if stored.
pub fn csc_position(s: SymbolicSparseColMatRef<'_, usize>, row: usize, col: usize) -> Option<usize> {
    let cp = s.col_ptr();
    let rows = &s.row_idx()[cp[col]..cp[col + 1]];
    rows.binary_search(&row).ok().map(|k| cp[col] + k)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Approximate inverse used to precondition GMRES from the right.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>>;
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }
}

/// Inverse diagonal.
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseColMat<usize, f64>) -> Self {
        let s = a.symbolic();
        let inv_diag = (0..a.nrows())
            .map(|i| match csc_position(s, i, i) {
                Some(k) if a.val()[k] != 0.0 => 1.0 / a.val()[k],
                _ => 1.0,
            })
            .collect();
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted, right-preconditioned GMRES started from `x`.
///
/// Converged when `‖b − A x‖ ≤ tol·‖b‖`; the returned residual is recomputed
/// from the final iterate.
pub fn gmres(
    a: &SparseColMat<usize, f64>,
    b: &[f64],
    x: &mut [f64],
    pre: &dyn Preconditioner,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresOutcome> {
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(GmresOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let m = restart.max(1);
    let mut total = 0;
    loop {
        let ax = csc_matvec(a, x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(GmresOutcome {
                iterations: total,
                relative_residual: rel,
            });
        }
        if total >= max_iter {
            return Err(Error::SolverDiverged {
                iterations: total,
                residual: rel,
            });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let zk = pre.apply(&v[k])?;
            let mut w = csc_matvec(a, &zk);
            z.push(zk);
            // Modified Gram–Schmidt.
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                hess[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let wn = norm2(&w);
            hess[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let d = hess[k][k].hypot(hess[k + 1][k]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (hess[k][k] / d, hess[k + 1][k] / d) };
            cs[k] = c;
            sn[k] = s;
            hess[k][k] = d;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= 0.1 * tol || wn == 0.0 || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|wj| wj / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for (xj, zj) in x.iter_mut().zip(zi) {
                *xj += yi * zj;
            }
        }
    }
}
