//! Subspaces and *-subalgebras of d×d matrices.
//!
//! A subspace is stored as a basis that is orthonormal for the Hilbert–Schmidt
//! inner product ⟨X, Y⟩ = trace(X†Y). Algebras additionally carry their unit.
//! The closure engine grows a seed subspace under adjoints, products and
//! commutator derivations; commutants and intersections are computed as null
//! spaces / eigenspaces of d²×d² Hermitian matrices.

use std::ops::Deref;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, hs_inner, ComplexMatrix, Tolerance, ZERO};

#[derive(Debug, Clone)]
pub struct OperatorSubspace {
    pub ambient_dim: usize,
    pub basis: Vec<ComplexMatrix>,
}

#[derive(Debug, Clone)]
pub struct OperatorAlgebra {
    pub space: OperatorSubspace,
    pub unit: ComplexMatrix,
}

impl Deref for OperatorAlgebra {
    type Target = OperatorSubspace;
    fn deref(&self) -> &OperatorSubspace {
        &self.space
    }
}

fn vectorize(m: &ComplexMatrix) -> &[Complex64] {
    m.as_slice()
}

/// Removes from `r` its components along the orthonormal `basis`.
fn project_out(basis: &[ComplexMatrix], r: &mut ComplexMatrix) {
    for b in basis {
        let bs = b.as_slice();
        let k = bs
            .iter()
            .zip(r.as_slice())
            .fold(ZERO, |acc, (x, y)| acc + x.conj() * y);
        if k == ZERO {
            continue;
        }
        for (y, x) in r.as_mut_slice().iter_mut().zip(bs) {
            *y -= x * k;
        }
    }
}

impl OperatorSubspace {
    pub fn new(ambient_dim: usize, basis: Vec<ComplexMatrix>) -> Self {
        OperatorSubspace { ambient_dim, basis }
    }

    pub fn zero(d: usize) -> Self {
        Self::new(d, vec![])
    }

    /// ℂ·1_d.
    pub fn scalars(d: usize) -> Self {
        Self::new(d, vec![linalg::identity(d).unscale((d as f64).sqrt())])
    }

    /// All of M_d, spanned by matrix units.
    pub fn full(d: usize) -> Self {
        let mut basis = Vec::with_capacity(d * d);
        for j in 0..d {
            for i in 0..d {
                basis.push(linalg::matrix_unit(d, i, j));
            }
        }
        Self::new(d, basis)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn coefficients(&self, x: &ComplexMatrix) -> Vec<Complex64> {
        self.basis.iter().map(|b| hs_inner(b, x)).collect()
    }

    /// Orthogonal (Hilbert–Schmidt) projection of `x` onto the subspace.
    pub fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.ambient_dim, self.ambient_dim);
        for b in &self.basis {
            out += b * hs_inner(b, x);
        }
        out
    }

    /// ‖X − Π(X)‖_F.
    pub fn residual(&self, x: &ComplexMatrix) -> f64 {
        let mut r = x.clone();
        project_out(&self.basis, &mut r);
        project_out(&self.basis, &mut r);
        r.norm()
    }

    /// Membership test: ‖X − Π(X)‖_F ≤ residual · max(1, ‖X‖_F).
    pub fn contains(&self, x: &ComplexMatrix, tol: &Tolerance) -> bool {
        x.nrows() == self.ambient_dim
            && x.ncols() == self.ambient_dim
            && self.residual(x) <= tol.residual * x.norm().max(1.0)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (a, x) in self.basis.iter().enumerate() {
            for (b, y) in self.basis.iter().enumerate().skip(a) {
                let g = hs_inner(x, y);
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }

    /// The subspace U·S·U†.
    pub fn conjugate(&self, u: &ComplexMatrix) -> OperatorSubspace {
        let ud = u.adjoint();
        Self::new(
            u.nrows(),
            self.basis.iter().map(|b| u * b * &ud).collect(),
        )
    }

    /// Largest residual of either basis against the other subspace; zero iff
    /// the two subspaces coincide.
    pub fn mutual_containment_residual(&self, other: &OperatorSubspace) -> f64 {
        if self.ambient_dim != other.ambient_dim {
            return f64::INFINITY;
        }
        let a = self.basis.iter().map(|b| other.residual(b));
        let b = other.basis.iter().map(|b| self.residual(b));
        a.chain(b).fold(0.0, f64::max)
    }

    /// Orthogonal projector onto the subspace, acting on column-major vec(X).
    fn projector(&self) -> ComplexMatrix {
        let n = self.ambient_dim * self.ambient_dim;
        let mut b = ComplexMatrix::zeros(n, self.dim());
        for (k, m) in self.basis.iter().enumerate() {
            b.column_mut(k).copy_from_slice(vectorize(m));
        }
        &b * b.adjoint()
    }
}

impl OperatorAlgebra {
    /// Wraps a subspace already known to be a *-algebra, computing its unit as
    /// the support projection of Σ b b†.
    pub fn from_space(space: OperatorSubspace, tol: &Tolerance) -> Result<OperatorAlgebra> {
        let d = space.ambient_dim;
        let mut s = ComplexMatrix::zeros(d, d);
        for b in &space.basis {
            s += b * b.adjoint();
        }
        let unit = linalg::support_projection(&s, tol)?.matrix;
        let alg = OperatorAlgebra { space, unit };
        let defect = alg.unit_defect();
        if defect > tol.residual {
            return Err(Error::VerificationFailed(format!(
                "algebra unit does not act as identity (defect {defect:.3e})"
            )));
        }
        Ok(alg)
    }

    pub fn full(d: usize) -> OperatorAlgebra {
        OperatorAlgebra {
            space: OperatorSubspace::full(d),
            unit: linalg::identity(d),
        }
    }

    pub fn scalars(d: usize) -> OperatorAlgebra {
        OperatorAlgebra {
            space: OperatorSubspace::scalars(d),
            unit: linalg::identity(d),
        }
    }

    /// max ‖u·b − b‖, ‖b·u − b‖ over the basis.
    pub fn unit_defect(&self) -> f64 {
        self.basis
            .iter()
            .map(|b| (&self.unit * b - b).norm().max((b * &self.unit - b).norm()))
            .fold(0.0, f64::max)
    }

    /// Largest non-membership residual of b† and b·c over all basis pairs.
    pub fn closure_defect(&self) -> f64 {
        let n = self.dim();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
        let prod = pairs
            .par_iter()
            .map(|&(a, b)| self.residual(&(&self.basis[a] * &self.basis[b])))
            .reduce(|| 0.0, f64::max);
        let adj = self
            .basis
            .iter()
            .map(|b| self.residual(&b.adjoint()))
            .fold(0.0, f64::max);
        prod.max(adj)
    }

    pub fn conjugate(&self, u: &ComplexMatrix) -> OperatorAlgebra {
        OperatorAlgebra {
            space: self.space.conjugate(u),
            unit: u * &self.unit * u.adjoint(),
        }
    }

    /// The corner algebra P·A·P for a projection P in the centre (or in A).
    pub fn compress(&self, p: &ComplexMatrix, tol: &Tolerance) -> Result<OperatorAlgebra> {
        let mats: Vec<ComplexMatrix> = self.basis.iter().map(|b| p * b * p).collect();
        let space = orthonormalize_span(&mats, self.ambient_dim, tol)?;
        Ok(OperatorAlgebra {
            space,
            unit: p.clone(),
        })
    }

    /// Basis of the self-adjoint part, orthonormal over the reals.
    pub fn hermitian_basis(&self) -> Vec<ComplexMatrix> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for b in &self.basis {
            out.push(linalg::hermitian_part(b));
            out.push((b - b.adjoint()).scale(0.5) * Complex64::new(0.0, -1.0));
        }
        out
    }
}

/// Orthonormal basis of the span of `mats`, rank decided by singular values
/// relative to `rank_cut`.
pub fn orthonormalize_span(
    mats: &[ComplexMatrix],
    ambient_dim: usize,
    tol: &Tolerance,
) -> Result<OperatorSubspace> {
    let n = ambient_dim * ambient_dim;
    if mats.is_empty() || n == 0 {
        return Ok(OperatorSubspace::zero(ambient_dim));
    }
    let mut stacked = ComplexMatrix::zeros(n, mats.len());
    for (k, m) in mats.iter().enumerate() {
        if m.shape() != (ambient_dim, ambient_dim) {
            return Err(Error::ShapeMismatch(format!(
                "orthonormalize_span: expected {ambient_dim}x{ambient_dim}, got {:?}",
                m.shape()
            )));
        }
        stacked.column_mut(k).copy_from_slice(m.as_slice());
    }
    let (w, s, _) = linalg::svd(&stacked)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(OperatorSubspace::zero(ambient_dim));
    }
    let keep = linalg::rank_split(&s, smax, tol.rank_cut, "orthonormalize_span")?;
    if keep.is_empty() {
        return Ok(OperatorSubspace::zero(ambient_dim));
    }
    // Kept singular vectors are accurate but not bitwise orthonormal.
    let q = w.select_columns(&keep).qr().q();
    let basis = (0..keep.len())
        .map(|k| ComplexMatrix::from_column_slice(ambient_dim, ambient_dim, q.column(k).as_slice()))
        .collect();
    Ok(OperatorSubspace::new(ambient_dim, basis))
}

/// Incremental Gram–Schmidt with explicit scale-aware acceptance.
struct SpanBuilder {
    basis: Vec<ComplexMatrix>,
    cut: f64,
    min_accepted: f64,
    max_rejected: f64,
}

impl SpanBuilder {
    fn new(cut: f64) -> Self {
        SpanBuilder {
            basis: Vec::new(),
            cut,
            min_accepted: f64::INFINITY,
            max_rejected: 0.0,
        }
    }

    fn len(&self) -> usize {
        self.basis.len()
    }

    /// Offers a batch of candidates with their natural sizes (product of
    /// factor norms, not their own norms, so cancellations are judged against
    /// the inputs).
    ///
    /// Acceptance is pivoted: the candidate with the largest relative residual
    /// enters first and is projected out of the rest, so noisy near-duplicates
    /// never displace a clean direction.
    fn offer_batch(&mut self, cands: Vec<(ComplexMatrix, f64)>, cap: usize) {
        let basis = &self.basis;
        let mut pool: Vec<(ComplexMatrix, f64)> = cands
            .into_par_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(mut c, s)| {
                project_out(basis, &mut c);
                project_out(basis, &mut c);
                (c, s)
            })
            .collect();
        while !pool.is_empty() {
            let (best, ratio) = pool
                .iter()
                .enumerate()
                .map(|(k, (r, s))| (k, r.norm() / s))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if ratio <= self.cut || self.len() >= cap {
                if ratio <= self.cut {
                    self.max_rejected = self.max_rejected.max(ratio);
                }
                return;
            }
            let (mut r, _) = pool.swap_remove(best);
            project_out(&self.basis, &mut r);
            let nr = r.norm();
            let q = r.unscale(nr);
            self.min_accepted = self.min_accepted.min(ratio);
            pool.par_iter_mut()
                .for_each(|(c, _)| project_out(std::slice::from_ref(&q), c));
            self.basis.push(q);
        }
    }

    fn check_gap(&self) -> Result<()> {
        if self.min_accepted < 10.0 * self.cut {
            return Err(Error::AmbiguousRank {
                value: self.min_accepted,
                cut: self.cut,
                context: "algebra closure (accepted)",
            });
        }
        if self.max_rejected > self.cut / 10.0 {
            return Err(Error::AmbiguousRank {
                value: self.max_rejected,
                cut: self.cut,
                context: "algebra closure (rejected)",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Job {
    Adjoint(usize),
    Product(usize, usize),
    Bracket(usize, usize),
}

const BATCH: usize = 256;

/// Smallest subspace containing `seed` that is closed under adjoint, products
/// and X ↦ [H, X] for every `H` in `derivations`, together with its unit.
///
/// Each round processes the elements added in the previous round: their
/// adjoints, their products (both orders) with every earlier element, and
/// their brackets with each derivation; new directions are orthonormalised
/// into the basis. The loop ends when a round adds nothing or the span is all
/// of M_d.
pub fn close_algebra(
    seed: &OperatorSubspace,
    derivations: &[ComplexMatrix],
    tol: &Tolerance,
) -> Result<OperatorAlgebra> {
    let d = seed.ambient_dim;
    let full = d * d;
    for h in derivations {
        if h.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "derivation must be {d}x{d}, got {:?}",
                h.shape()
            )));
        }
    }
    let dnorm: Vec<f64> = derivations.iter().map(|h| 2.0 * h.norm()).collect();
    let mut sb = SpanBuilder::new(tol.rank_cut);
    sb.offer_batch(
        seed.basis.iter().map(|b| (b.clone(), b.norm())).collect(),
        full,
    );

    let mut processed = 0;
    let mut rounds = 0;
    while processed < sb.len() && sb.len() < full {
        rounds += 1;
        if rounds > full + 1 {
            return Err(Error::NonConvergence { rounds });
        }
        let end = sb.len();
        let mut jobs = Vec::new();
        for k in processed..end {
            jobs.push(Job::Adjoint(k));
        }
        for k in processed..end {
            for j in 0..=k {
                jobs.push(Job::Product(j, k));
            }
        }
        for k in processed..end {
            for h in 0..derivations.len() {
                jobs.push(Job::Bracket(h, k));
            }
        }
        for chunk in jobs.chunks(BATCH) {
            if sb.len() >= full {
                break;
            }
            let cands: Vec<(ComplexMatrix, f64)> = chunk
                .par_iter()
                .flat_map_iter(|job| {
                    let b = &sb.basis;
                    match *job {
                        Job::Adjoint(k) => vec![(b[k].adjoint(), 1.0)],
                        Job::Product(j, k) if j == k => vec![(&b[j] * &b[k], 1.0)],
                        Job::Product(j, k) => vec![(&b[j] * &b[k], 1.0), (&b[k] * &b[j], 1.0)],
                        Job::Bracket(h, k) => {
                            vec![(linalg::commutator(&derivations[h], &b[k]), dnorm[h])]
                        }
                    }
                })
                .collect();
            sb.offer_batch(cands, full);
        }
        processed = end;
    }
    if sb.len() < full {
        sb.check_gap()?;
    }
    OperatorAlgebra::from_space(OperatorSubspace::new(d, sb.basis), tol)
}

/// {X : [b, X] = 0 for every basis element b}, with unit 1_d.
///
/// Solved as the null space of Σ_b L_b†L_b where L_b = I⊗b − bᵀ⊗I acts on
/// column-major vec(X).
pub fn commutant(s: &OperatorSubspace, tol: &Tolerance) -> Result<OperatorAlgebra> {
    let d = s.ambient_dim;
    let n = d * d;
    let id = linalg::identity(d);
    let mut a1 = ComplexMatrix::zeros(d, d);
    let mut a2 = ComplexMatrix::zeros(d, d);
    let mut t = ComplexMatrix::zeros(n, n);
    for b in &s.basis {
        a1 += b.adjoint() * b;
        a2 += b * b.adjoint();
        t += b.transpose().kronecker(&b.adjoint());
    }
    let a2 = a2.map(|z| z.conj());
    let m = id.kronecker(&a1) + a2.kronecker(&id) - &t - t.adjoint();
    let eig = linalg::eigh(&linalg::hermitian_part(&m), tol)?;
    // Natural size of the stacked map: Σ‖b‖²_F, so a roundoff-sized operator
    // (all of S scalar) still yields the full null space.
    let scale = eig.max_abs().max(a1.trace().re);
    let null: Vec<usize> = if scale == 0.0 {
        (0..n).collect()
    } else {
        let keep = linalg::rank_split(&eig.values, scale, tol.rank_cut, "commutant")?;
        (0..n).filter(|k| !keep.contains(k)).collect()
    };
    let basis = null
        .iter()
        .map(|&k| ComplexMatrix::from_column_slice(d, d, eig.vectors.column(k).as_slice()))
        .collect();
    Ok(OperatorAlgebra {
        space: OperatorSubspace::new(d, basis),
        unit: id,
    })
}

/// Intersection of two subspaces: the eigenvalue-1 eigenspace of the averaged
/// projector (P₁ + P₂)/2, clustered with `cluster_gap`.
pub fn intersect(
    a: &OperatorSubspace,
    b: &OperatorSubspace,
    tol: &Tolerance,
) -> Result<OperatorSubspace> {
    let d = a.ambient_dim;
    if b.ambient_dim != d {
        return Err(Error::ShapeMismatch("intersect: ambient dims differ".into()));
    }
    if a.dim() == 0 || b.dim() == 0 {
        return Ok(OperatorSubspace::zero(d));
    }
    let avg = (a.projector() + b.projector()).scale(0.5);
    let eig = linalg::eigh(&avg, tol)?;
    let mut basis = Vec::new();
    for (k, &lam) in eig.values.iter().enumerate() {
        let defect = (1.0 - lam).abs();
        if defect > tol.cluster_gap / 10.0 && defect < tol.cluster_gap * 10.0 {
            return Err(Error::AmbiguousRank {
                value: defect,
                cut: tol.cluster_gap,
                context: "subspace intersection",
            });
        }
        if defect <= tol.cluster_gap {
            basis.push(ComplexMatrix::from_column_slice(
                d,
                d,
                eig.vectors.column(k).as_slice(),
            ));
        }
    }
    Ok(OperatorSubspace::new(d, basis))
}

/// Z(A) = A ∩ A′.
pub fn center(a: &OperatorAlgebra, tol: &Tolerance) -> Result<OperatorAlgebra> {
    let comm = commutant(&a.space, tol)?;
    let z = intersect(&a.space, &comm.space, tol)?;
    Ok(OperatorAlgebra {
        space: z,
        unit: a.unit.clone(),
    })
}

/// Membership test with the repo-wide relative residual.
pub fn contains(s: &OperatorSubspace, x: &ComplexMatrix, tol: &Tolerance) -> bool {
    s.contains(x, tol)
}

/// Largest pairwise commutator norm among basis elements.
pub fn commutativity_defect(s: &OperatorSubspace) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in s.basis.iter().enumerate() {
        for b in s.basis.iter().skip(i + 1) {
            worst = worst.max(linalg::commutator(a, b).norm());
        }
    }
    worst
}
