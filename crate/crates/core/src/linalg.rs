//! Dense complex-matrix primitives.
//!
//! Everything downstream works on [`ComplexMatrix`] (a dynamically sized
//! `nalgebra` matrix of double-precision complex numbers). This module owns the
//! numerical tolerance policy ([`Tolerance`]), the Hermitian eigensolver
//! wrapper, spectral calculus restricted to supports, Kronecker products,
//! partial traces and support projections, plus the repo-wide matrix JSON
//! encoding.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Numerical thresholds shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    /// Relative eigenvalue / singular-value cutoff for rank decisions.
    pub rank_cut: f64,
    /// Absolute threshold for verification residuals.
    pub residual: f64,
    /// Relative threshold for grouping eigenvalues into clusters.
    pub cluster_gap: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rank_cut: 1e-9,
            residual: 1e-8,
            cluster_gap: 1e-6,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.rank_cut) && ok(self.residual) && ok(self.cluster_gap)) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be strictly positive: {self:?}"
            )));
        }
        if self.rank_cut >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "rank_cut must be < 1, got {}",
                self.rank_cut
            )));
        }
        Ok(())
    }
}

/// An orthogonal projection together with its rank.
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: ComplexMatrix,
    pub rank: usize,
}

impl Projection {
    pub fn from_columns(cols: &ComplexMatrix) -> Projection {
        Projection {
            matrix: cols * cols.adjoint(),
            rank: cols.ncols(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest of ‖P − P†‖_F, ‖P² − P‖_F and |trace(P) − rank|.
    pub fn defect(&self) -> f64 {
        let p = &self.matrix;
        let herm = (p - p.adjoint()).norm();
        let idem = (p * p - p).norm();
        let tr = (p.trace().re - self.rank as f64).abs();
        herm.max(idem).max(tr)
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigh {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| Complex64::new(v, 0.0)),
        );
        &self.vectors * ComplexMatrix::from_diagonal(&d) * self.vectors.adjoint()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Columns of the eigenvector matrix with the given indices.
    pub fn columns(&self, idx: &[usize]) -> ComplexMatrix {
        let n = self.vectors.nrows();
        let mut out = ComplexMatrix::zeros(n, idx.len());
        for (c, &k) in idx.iter().enumerate() {
            out.set_column(c, &self.vectors.column(k));
        }
        out
    }
}

pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn real_diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = Complex64::new(v, 0.0);
    }
    m
}

/// Matrix unit |i⟩⟨j| of size d.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

/// Hilbert–Schmidt inner product trace(A†B).
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn require_square(a: &ComplexMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Relative anti-Hermitian defect ‖H − H†‖_F / max(‖H‖_F, tiny).
pub fn hermiticity_defect(h: &ComplexMatrix) -> f64 {
    let n = h.norm();
    if n == 0.0 {
        return 0.0;
    }
    (h - h.adjoint()).norm() / n
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// The input is symmetrised before decomposition, after checking that its
/// anti-Hermitian part is below `tol.residual` relative to its norm.
pub fn eigh(h: &ComplexMatrix, tol: &Tolerance) -> Result<Eigh> {
    let n = require_square(h, "eigh input")?;
    let dev = hermiticity_defect(h);
    if dev > tol.residual {
        return Err(Error::NotHermitian { deviation: dev });
    }
    eigh_unchecked(&hermitian_part(h), n)
}

fn eigh_unchecked(h: &ComplexMatrix, n: usize) -> Result<Eigh> {
    if n == 0 {
        return Ok(Eigh {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    if !is_finite(h) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let a = faer::Mat::<Complex64>::from_fn(n, n, |i, j| h[(i, j)]);
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::ConvergenceFailure { dim: n })?;
    let (u, s) = (evd.U(), evd.S());
    let values = (0..n).map(|k| s[k].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    Ok(Eigh { values, vectors })
}

/// Applies `f` to the spectrum of a Hermitian matrix.
///
/// With `support_only`, only eigenvalues above `rank_cut · λ_max` are mapped;
/// the remaining spectral directions are sent to zero.
pub fn spectral_apply<F>(
    h: &ComplexMatrix,
    f: F,
    support_only: bool,
    tol: &Tolerance,
) -> Result<ComplexMatrix>
where
    F: Fn(f64) -> Complex64,
{
    let eig = eigh(h, tol)?;
    let n = eig.values.len();
    let cut = tol.rank_cut * eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        if support_only && lam <= cut {
            continue;
        }
        let fl = f(lam);
        if !(fl.re.is_finite() && fl.im.is_finite()) {
            return Err(Error::DomainError { eigenvalue: lam });
        }
        let v = eig.vectors.column(k);
        out += (&v * v.adjoint()) * fl;
    }
    Ok(out)
}

/// Kronecker product with row index `i·p + k` for `B` of shape p×q.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Which tensor factor a partial trace removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Partial trace of a matrix on ℂ^{dA} ⊗ ℂ^{dB}, tracing out `side`.
pub fn partial_trace(m: &ComplexMatrix, da: usize, db: usize, side: Side) -> Result<ComplexMatrix> {
    let n = require_square(m, "partial_trace input")?;
    if da * db != n {
        return Err(Error::ShapeMismatch(format!(
            "partial_trace: {da}x{db} != {n}"
        )));
    }
    Ok(match side {
        Side::B => ComplexMatrix::from_fn(da, da, |i, j| {
            (0..db).fold(ZERO, |acc, k| acc + m[(i * db + k, j * db + k)])
        }),
        Side::A => ComplexMatrix::from_fn(db, db, |k, l| {
            (0..da).fold(ZERO, |acc, i| acc + m[(i * db + k, i * db + l)])
        }),
    })
}

/// Indices of eigenvalues kept by a relative cut, with the factor-10 ambiguity
/// band check shared by every rank decision in the crate.
pub(crate) fn rank_split(
    values: &[f64],
    scale: f64,
    rank_cut: f64,
    context: &'static str,
) -> Result<Vec<usize>> {
    let cut = rank_cut * scale;
    let mut keep = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        let a = v.abs();
        if a > cut / 10.0 && a < cut * 10.0 {
            return Err(Error::AmbiguousRank {
                value: v,
                cut,
                context,
            });
        }
        if v > cut {
            keep.push(k);
        }
    }
    Ok(keep)
}

/// Support projection of a positive semidefinite matrix.
pub fn support_projection(s: &ComplexMatrix, tol: &Tolerance) -> Result<Projection> {
    Ok(support_basis(s, tol)?.0)
}

/// Support projection and an orthonormal basis (columns) of its range.
pub fn support_basis(s: &ComplexMatrix, tol: &Tolerance) -> Result<(Projection, ComplexMatrix)> {
    let eig = eigh(s, tol)?;
    let n = eig.values.len();
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        if lmax < -tol.residual {
            return Err(Error::NotPsd {
                min_eigenvalue: eig.values[0],
            });
        }
        let cols = ComplexMatrix::zeros(n, 0);
        return Ok((Projection::from_columns(&cols), cols));
    }
    let lmin = eig.values[0];
    if lmin < -tol.residual * lmax {
        return Err(Error::NotPsd {
            min_eigenvalue: lmin,
        });
    }
    let keep = rank_split(&eig.values, lmax, tol.rank_cut, "support projection")?;
    let cols = eig.columns(&keep);
    Ok((Projection::from_columns(&cols), cols))
}

/// Eigendecomposition of the Hermitian dilation [[0, A], [A†, 0]], whose
/// spectrum is {±σₖ} plus |p − q| zeros. Working on the dilation keeps small
/// singular values at full relative precision instead of squaring them.
fn dilation_eigh(a: &ComplexMatrix) -> Result<Eigh> {
    let (p, q) = a.shape();
    let mut h = ComplexMatrix::zeros(p + q, p + q);
    h.view_mut((0, p), (p, q)).copy_from(a);
    h.view_mut((p, 0), (q, p)).copy_from(&a.adjoint());
    eigh_unchecked(&h, p + q)
}

/// Singular values in descending order (min(p, q) of them).
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(vec![]);
    }
    let eig = dilation_eigh(a)?;
    Ok(eig.values.iter().rev().take(k).map(|&v| v.max(0.0)).collect())
}

/// Thin SVD `A = W Σ Z†` with singular values in descending order.
///
/// Singular vectors are accurate to roughly ε‖A‖ over the distance of σₖ to
/// the rest of the dilation spectrum; columns for (near-)zero singular values
/// are not meaningful.
pub fn svd(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix)> {
    let (p, q) = a.shape();
    let k = p.min(q);
    if k == 0 {
        return Ok((ComplexMatrix::zeros(p, 0), vec![], ComplexMatrix::zeros(q, 0)));
    }
    let eig = dilation_eigh(a)?;
    let n = p + q;
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut w = ComplexMatrix::zeros(p, k);
    let mut z = ComplexMatrix::zeros(q, k);
    let mut s = Vec::with_capacity(k);
    for c in 0..k {
        let col = eig.vectors.column(n - 1 - c);
        w.set_column(c, &col.rows(0, p).scale(sqrt2));
        z.set_column(c, &col.rows(p, q).scale(sqrt2));
        s.push(eig.values[n - 1 - c].max(0.0));
    }
    Ok((w, s, z))
}

/// Trace norm via singular values.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Largest eigenvalue magnitude of a Hermitian matrix, or spectral norm otherwise.
pub fn operator_norm(a: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(a)?.into_iter().fold(0.0, f64::max))
}

/// Minimum eigenvalue of the Hermitian part of `a`.
pub fn min_eigenvalue(a: &ComplexMatrix) -> Result<f64> {
    let n = require_square(a, "min_eigenvalue input")?;
    let eig = eigh_unchecked(&hermitian_part(a), n)?;
    Ok(eig.values.first().copied().unwrap_or(0.0))
}

/// Groups ascending eigenvalues into clusters separated by more than
/// `gap · max(1, max|λ|)`. Returns index ranges and the smallest
/// inter-cluster gap (infinite for a single cluster).
pub(crate) fn cluster_sorted(values: &[f64], gap: f64) -> (Vec<std::ops::Range<usize>>, f64) {
    let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let thr = gap * scale;
    let mut clusters = Vec::new();
    let mut start = 0;
    let mut min_gap = f64::INFINITY;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > thr {
            if k < values.len() {
                min_gap = min_gap.min(values[k] - values[k - 1]);
            }
            clusters.push(start..k);
            start = k;
        }
    }
    if values.is_empty() {
        clusters.clear();
    }
    (clusters, min_gap / scale)
}

/// Repo-wide matrix encoding: `{"rows": r, "cols": c, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        let (r, c) = m.shape();
        MatrixJson {
            rows: r,
            cols: c,
            re: (0..r).map(|i| (0..c).map(|j| m[(i, j)].re).collect()).collect(),
            im: (0..r).map(|i| (0..c).map(|j| m[(i, j)].im).collect()).collect(),
        }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let bad = |what: &str| Error::InvalidInput(format!("matrix json: {what}"));
        if self.re.len() != self.rows || self.im.len() != self.rows {
            return Err(bad("row count does not match 'rows'"));
        }
        if self
            .re
            .iter()
            .chain(self.im.iter())
            .any(|row| row.len() != self.cols)
        {
            return Err(bad("column count does not match 'cols'"));
        }
        let m = ComplexMatrix::from_fn(self.rows, self.cols, |i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        });
        if !is_finite(&m) {
            return Err(bad("non-finite entry"));
        }
        Ok(m)
    }
}
