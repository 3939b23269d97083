//! Bulk and surface mobility operators.
//!
//! The surface operator acts on the force vector `(μ_c, μ_s, μ_b|_Γ, μ_g)` and
//! produces minus the flux vector `(φ_Γ,t, ψ_t, f_m, ∂_nφ_t)`. Every entry is a
//! sum of scalar multiples of the identity and surface-diffusion operators
//! `−∇_s·(c∇_s)`.

use std::fmt;

use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid_ops::{surface_laplacian, SurfaceField};
use crate::model::{Grid, ModelKind, PhysicalParams};

/// Parameter a mobility term originates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    /// Terms forced by the Robin exchange `α f_m = β μ_s − μ_b`.
    Robin,
    Mc,
    Mg,
    M12Reactive,
    M12Diffusive,
    M22Reactive,
    M22Diffusive,
    M23Reactive,
    M23Diffusive,
    M13Reversible,
    /// Terms added by hand, outside any model.
    Custom,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Source::Robin => "robin",
            Source::Mc => "m_c",
            Source::Mg => "m_g",
            Source::M12Reactive => "m12_1",
            Source::M12Diffusive => "m12_2",
            Source::M22Reactive => "m22_1",
            Source::M22Diffusive => "m22_2",
            Source::M23Reactive => "m23_1",
            Source::M23Diffusive => "m23_2",
            Source::M13Reversible => "m13_s",
            Source::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    /// `c·I`
    Scalar,
    /// `−∇_s·(c∇_s)`
    SurfDiff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub kind: TermKind,
    pub coeff: f64,
    pub source: Source,
}

/// Shape of an entry, ignoring coefficient values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Zero,
    Scalar,
    SurfDiff,
    Mixed,
}

/// One operator entry of the surface mobility.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Entry {
    pub terms: Vec<Term>,
}

impl Entry {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scalar(coeff: f64, source: Source) -> Self {
        Self::zero().plus_scalar(coeff, source)
    }

    pub fn surf_diff(coeff: f64, source: Source) -> Self {
        Self::zero().plus_surf_diff(coeff, source)
    }

    /// Adds `c·I`; zero coefficients are dropped.
    pub fn plus_scalar(mut self, coeff: f64, source: Source) -> Self {
        if coeff != 0.0 {
            self.terms.push(Term {
                kind: TermKind::Scalar,
                coeff,
                source,
            });
        }
        self
    }

    /// Adds `−∇_s·(c∇_s)`; zero coefficients are dropped.
    pub fn plus_surf_diff(mut self, coeff: f64, source: Source) -> Self {
        if coeff != 0.0 {
            self.terms.push(Term {
                kind: TermKind::SurfDiff,
                coeff,
                source,
            });
        }
        self
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|_| a != 0.0)
                .map(|t| Term {
                    coeff: a * t.coeff,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn combined(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().copied());
        Self { terms }
    }

    /// Sum of scalar coefficients.
    pub fn scalar_part(&self) -> f64 {
        self.part(TermKind::Scalar)
    }

    /// Sum of surface-diffusion coefficients.
    pub fn diffusion_part(&self) -> f64 {
        self.part(TermKind::SurfDiff)
    }

    fn part(&self, kind: TermKind) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.kind == kind)
            .map(|t| t.coeff)
            .sum()
    }

    pub fn kind(&self) -> EntryKind {
        match (self.scalar_part() != 0.0, self.diffusion_part() != 0.0) {
            (false, false) => EntryKind::Zero,
            (true, false) => EntryKind::Scalar,
            (false, true) => EntryKind::SurfDiff,
            (true, true) => EntryKind::Mixed,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind() == EntryKind::Zero
    }

    /// Applies the entry to a surface field.
    pub fn apply(&self, u: &SurfaceField, grid: &Grid) -> Result<SurfaceField> {
        let (s, d) = (self.scalar_part(), self.diffusion_part());
        let lap = surface_laplacian(u, d, grid)?;
        Ok(SurfaceField::from_fn(grid, |i| s * u[i] - lap[i]))
    }

    /// Entry-wise equality of the reduced operator `s·I + d·(−L)`.
    pub fn same_operator(&self, other: &Self) -> bool {
        self.scalar_part() == other.scalar_part() && self.diffusion_part() == other.diffusion_part()
    }
}

/// Names of the force components, in operator column order.
pub const FORCE_NAMES: [&str; 4] = ["mu_c", "mu_s", "mu_b", "mu_g"];
/// Names of the flux components, in operator row order.
pub const FLUX_NAMES: [&str; 4] = ["phi_gamma_t", "psi_t", "f_m", "dn_phi_t"];

/// Complete mobility of a model: the bulk scalars and the 4×4 surface operator.
///
/// Indices are zero based; `entries[2]` is the Robin row.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilitySpec {
    pub kind: Option<ModelKind>,
    pub alpha: f64,
    pub beta: f64,
    pub m_b1: f64,
    pub m_b2: f64,
    pub entries: [[Entry; 4]; 4],
}

fn robin_row(alpha: f64, beta: f64) -> [Entry; 4] {
    [
        Entry::zero(),
        Entry::scalar(-beta / alpha, Source::Robin),
        Entry::scalar(1.0 / alpha, Source::Robin),
        Entry::zero(),
    ]
}

impl MobilitySpec {
    /// A spec whose only nonzero surface row is the Robin row.
    pub fn robin_only(alpha: f64, beta: f64) -> Self {
        let mut entries: [[Entry; 4]; 4] = Default::default();
        entries[2] = robin_row(alpha, beta);
        Self {
            kind: None,
            alpha,
            beta,
            m_b1: 0.0,
            m_b2: 0.0,
            entries,
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> &Entry {
        &self.entries[row][col]
    }

    pub fn set(&mut self, row: usize, col: usize, e: Entry) {
        self.entries[row][col] = e;
    }

    /// `(M + Mᵀ)/2`; the surface-diffusion operator is symmetric so the
    /// transpose only swaps entries.
    pub fn symmetric_part(&self) -> Self {
        self.mix(0.5)
    }

    /// `(M − Mᵀ)/2`.
    pub fn antisymmetric_part(&self) -> Self {
        let mut out = self.mix(-0.5);
        out.m_b1 = 0.0;
        out.m_b2 = 0.0;
        out
    }

    fn mix(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..4 {
            for j in 0..4 {
                out.entries[i][j] = self.entries[i][j]
                    .scaled(0.5)
                    .combined(&self.entries[j][i].scaled(s));
            }
        }
        out
    }

    /// Whether two specs define the same discrete operator.
    pub fn same_operator(&self, other: &Self) -> bool {
        self.alpha == other.alpha
            && self.beta == other.beta
            && self.m_b1 == other.m_b1
            && self.m_b2 == other.m_b2
            && (0..4).all(|i| (0..4).all(|j| self.entries[i][j].same_operator(&other.entries[i][j])))
    }

    /// Sparse matrix of the surface operator on the stacked Γ unknowns
    /// `(μ_c, μ_s, μ_b, μ_g)`, each block of length `n_Γ`.
    pub fn discretize(&self, grid: &Grid) -> Result<DiscreteOperatorMatrix> {
        let n = grid.n_gamma();
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let mut trips = Vec::new();
        for bi in 0..4 {
            for bj in 0..4 {
                let e = &self.entries[bi][bj];
                let (s, d) = (e.scalar_part(), e.diffusion_part());
                if s == 0.0 && d == 0.0 {
                    continue;
                }
                for i in 0..n {
                    let (r, c) = (bi * n + i, bj * n + i);
                    let nb = usize::from(i > 0) + usize::from(i + 1 < n);
                    trips.push(Triplet::new(r, c, s + d * nb as f64 * inv_h2));
                    if i > 0 {
                        trips.push(Triplet::new(r, c - 1, -d * inv_h2));
                    }
                    if i + 1 < n {
                        trips.push(Triplet::new(r, c + 1, -d * inv_h2));
                    }
                }
            }
        }
        let matrix = SparseColMat::try_new_from_triplets(4 * n, 4 * n, &trips)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(DiscreteOperatorMatrix {
            n_gamma: n,
            matrix,
        })
    }
}

/// Assembles the model's mobility from the parameter set.
pub fn assemble_surface_mobility(p: &PhysicalParams, kind: ModelKind) -> Result<MobilitySpec> {
    if let Some((coefficient, value, reason)) = p.forbidden_for(kind).into_iter().next() {
        return Err(Error::Gating {
            kind,
            coefficient,
            value,
            reason,
        });
    }
    if !(p.alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha must be positive, got {}", p.alpha)));
    }
    let (a, b) = (p.alpha, p.beta);
    let mut spec = MobilitySpec::robin_only(a, b);
    spec.kind = Some(kind);
    spec.m_b2 = p.m_b2;
    spec.m_b1 = if kind.is_reactive() { p.m_b1 } else { 0.0 };
    spec.set(0, 0, Entry::scalar(p.m_c, Source::Mc));
    spec.set(3, 3, Entry::scalar(p.m_g, Source::Mg));

    let m12 = Entry::surf_diff(p.m12_2, Source::M12Diffusive);
    let m22 = Entry::surf_diff(p.m22_2, Source::M22Diffusive);
    let robin22 = Entry::scalar(b * b / a, Source::Robin);
    match kind {
        ModelKind::A => {
            spec.set(0, 1, m12.clone());
            spec.set(1, 0, m12);
            spec.set(1, 1, robin22.combined(&m22));
            spec.set(1, 2, Entry::scalar(-b / a, Source::Robin));
        }
        ModelKind::B => {
            spec.set(0, 1, m12.clone());
            spec.set(1, 0, m12);
            spec.set(0, 2, Entry::scalar(2.0 * p.m13_s, Source::M13Reversible));
            spec.set(1, 1, robin22.combined(&m22));
            spec.set(
                1,
                2,
                Entry::scalar(-b / a, Source::Robin).plus_surf_diff(2.0 * p.m23_2, Source::M23Diffusive),
            );
        }
        ModelKind::C => {
            let m12 = m12.plus_scalar(p.m12_1, Source::M12Reactive);
            spec.set(0, 1, m12.clone());
            spec.set(1, 0, m12);
            spec.set(1, 1, robin22.combined(&m22).plus_scalar(p.m22_1, Source::M22Reactive));
            spec.set(1, 2, Entry::scalar(-b / a, Source::Robin));
        }
        ModelKind::D => {
            // Row 2 carries `+β/α` and no `β²/α`, exactly as the model is
            // stated; the reactive system does not conserve a single species.
            let m12 = m12.plus_scalar(p.m12_1, Source::M12Reactive);
            spec.set(0, 1, m12.clone());
            spec.set(1, 0, m12);
            spec.set(0, 2, Entry::scalar(2.0 * p.m13_s, Source::M13Reversible));
            spec.set(1, 1, m22.plus_scalar(p.m22_1, Source::M22Reactive));
            spec.set(
                1,
                2,
                Entry::scalar(b / a, Source::Robin)
                    .plus_scalar(2.0 * p.m23_1, Source::M23Reactive)
                    .plus_surf_diff(2.0 * p.m23_2, Source::M23Diffusive),
            );
        }
    }
    Ok(spec)
}

/// Earlier irreversible mobility: diagonal `M_c`, `M_s + β²/α` and the
/// Robin coupling, with `M_s` a surface entry supplied by the caller.
pub fn diagonal_robin_mobility(p: &PhysicalParams, m_s: Entry) -> MobilitySpec {
    let (a, b) = (p.alpha, p.beta);
    let mut spec = MobilitySpec::robin_only(a, b);
    spec.m_b2 = p.m_b2;
    spec.set(0, 0, Entry::scalar(p.m_c, Source::Mc));
    spec.set(1, 1, Entry::scalar(b * b / a, Source::Robin).combined(&m_s));
    spec.set(1, 2, Entry::scalar(-b / a, Source::Robin));
    spec.set(3, 3, Entry::scalar(p.m_g, Source::Mg));
    spec
}

/// Earlier reversible mobility with `+β/α` in row 2 and no `β²/α`.
pub fn legacy_reversible_mobility(p: &PhysicalParams, m_s: Entry) -> MobilitySpec {
    let (a, b) = (p.alpha, p.beta);
    let mut spec = MobilitySpec::robin_only(a, b);
    spec.m_b2 = p.m_b2;
    spec.set(0, 0, Entry::scalar(p.m_c, Source::Mc));
    spec.set(1, 1, m_s);
    spec.set(1, 2, Entry::scalar(b / a, Source::Robin));
    spec.set(3, 3, Entry::scalar(p.m_g, Source::Mg));
    spec
}

/// Sparse discretisation of a surface operator over `4·n_Γ` unknowns.
#[derive(Debug, Clone)]
pub struct DiscreteOperatorMatrix {
    pub n_gamma: usize,
    pub matrix: SparseColMat<usize, f64>,
}

impl DiscreteOperatorMatrix {
    pub fn dim(&self) -> usize {
        4 * self.n_gamma
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.matrix.to_dense()
    }

    /// `uᵀ M u`.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let m = self.matrix.as_ref();
        let mut s = 0.0;
        for j in 0..m.ncols() {
            let col = m.col_range(j);
            let rows = &m.symbolic().row_idx()[col.clone()];
            let vals = &m.val()[col];
            for (&i, &v) in rows.iter().zip(vals) {
                s += u[i] * v * u[j];
            }
        }
        s
    }

    /// Smallest eigenvalue of `(M + Mᵀ)/2`, by dense symmetric eigensolve.
    pub fn min_symmetric_eigenvalue(&self) -> Result<f64> {
        let d = self.to_dense();
        let n = d.nrows();
        let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (d[(i, j)] + d[(j, i)]));
        let eig = sym
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Factorization(format!("eigensolver: {e:?}")))?;
        Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub pass: bool,
    pub min_eig: f64,
}

/// Dense eigenvalue check of the symmetric part on the discretised Γ.
pub fn check_onsager_psd(spec: &MobilitySpec, grid: &Grid, tol: f64) -> Result<PsdReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let min_eig = spec.symmetric_part().discretize(grid)?.min_symmetric_eigenvalue()?;
    let bulk_ok = spec.m_b1 >= 0.0 && spec.m_b2 >= 0.0;
    Ok(PsdReport {
        pass: bulk_ok && min_eig >= -tol,
        min_eig,
    })
}

/// A term that keeps `β∫φ + ∫ψ` from being conserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Offender {
    /// Zero-based operator position, or `None` for the bulk reactive term.
    pub position: Option<(usize, usize)>,
    pub residual: f64,
    pub sources: Vec<Source>,
}

impl fmt::Display for Offender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.sources.iter().map(|s| s.to_string()).collect();
        match self.position {
            Some((i, j)) => write!(
                f,
                "entry ({}, {}) [{} vs {}]: scalar residual {:e} from {}",
                i + 1,
                j + 1,
                FLUX_NAMES[i],
                FORCE_NAMES[j],
                self.residual,
                names.join(", ")
            ),
            None => write!(f, "bulk reactive mobility m_b1 = {:e}", self.residual),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub conserving: bool,
    /// Whether the model kind is meant to conserve a single species.
    pub expected: bool,
    pub offenders: Vec<Offender>,
}

impl ConservationReport {
    /// Non-conservation is only a failure for kinds that promise it.
    pub fn passed(&self) -> bool {
        self.conserving || !self.expected
    }
}

/// Checks by entry tags that `β·(Robin row) + (ψ row)` contains only
/// surface-diffusion terms and that the bulk reactive mobility vanishes.
/// Surface-diffusion terms sum to zero under the Neumann closure, so these two
/// conditions make `β∫φ_t + ∫ψ_t = 0` exact.
pub fn check_conservation_compat(spec: &MobilitySpec, kind: Option<ModelKind>) -> ConservationReport {
    let kind = kind.or(spec.kind);
    let mut offenders = Vec::new();
    if spec.m_b1 != 0.0 {
        offenders.push(Offender {
            position: None,
            residual: spec.m_b1,
            sources: Vec::new(),
        });
    }
    let scale = (spec.beta * spec.beta / spec.alpha).abs().max(1.0 / spec.alpha);
    for j in 0..4 {
        let row2 = &spec.entries[1][j];
        let row3 = &spec.entries[2][j];
        let residual = row2.scalar_part() + spec.beta * row3.scalar_part();
        if residual.abs() > 1e-14 * scale {
            let mut sources: Vec<Source> = row2
                .terms
                .iter()
                .filter(|t| t.kind == TermKind::Scalar)
                .map(|t| t.source)
                .collect();
            sources.dedup();
            offenders.push(Offender {
                position: Some((1, j)),
                residual,
                sources,
            });
        }
    }
    ConservationReport {
        conserving: offenders.is_empty(),
        expected: kind.is_none_or(|k| k.conserves_species()),
        offenders,
    }
}

/// Largest `|uᵀ M⁽ᵃ⁾ u| / ‖u‖²` over random `u` with entries in `[-1, 1]`.
pub fn antisymmetric_dissipation_check(
    spec: &MobilitySpec,
    grid: &Grid,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if n_trials == 0 {
        return Err(Error::InvalidParams("n_trials must be at least 1".into()));
    }
    let a = spec.antisymmetric_part().discretize(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_trials {
        let u: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm2: f64 = u.iter().map(|v| v * v).sum();
        worst = worst.max(a.quadratic_form(&u).abs() / norm2);
    }
    Ok(worst)
}
