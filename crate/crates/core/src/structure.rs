//! Block structure of finite-dimensional *-algebras and the Koashi–Imoto
//! decomposition of a statistical experiment.
//!
//! A *-algebra A ⊂ M_d with unit decomposes as ⊕ᵢ M_{nᵢ} ⊗ 1_{mᵢ} after a
//! unitary change of basis. Minimal central projections come from one generic
//! central element; the tensor split of each block comes from a generic
//! Hermitian element of the corner algebra (its spectral projections are n
//! equivalent minimal projections of rank m) plus connecting partial
//! isometries obtained by polar decomposition.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{self, Picture, Superoperator};
use crate::error::{Error, Result};
use crate::experiment::{self, StatisticalExperiment};
use crate::linalg::{
    self, cluster_sorted, kron, partial_trace, ComplexMatrix, MatrixJson, Projection, Side,
    Tolerance,
};
use crate::minsuff;
use crate::opspace::{self, OperatorAlgebra};
use crate::random::{self, child_seed, rng_from_seed, SeededRng};

const GENERIC_ATTEMPTS: usize = 10;

/// Minimal central projections of `a`, summing to its unit.
pub fn minimal_central_projections(
    a: &OperatorAlgebra,
    tol: &Tolerance,
    seed: u64,
) -> Result<Vec<Projection>> {
    let z = opspace::center(a, tol)?;
    let unit_rank = a.unit.trace().re.round() as usize;
    if z.dim() <= 1 {
        return Ok(vec![Projection {
            matrix: a.unit.clone(),
            rank: unit_rank,
        }]);
    }
    let d = a.ambient_dim;
    let herm = z.hermitian_basis();
    let off_unit = linalg::identity(d) - &a.unit;
    let mut rng = rng_from_seed(seed);
    for _ in 0..GENERIC_ATTEMPTS {
        let g = generic_combination(&mut rng, &herm, d);
        let norm = linalg::operator_norm(&g)?;
        if norm <= 0.0 {
            continue;
        }
        // Shift the unit's range to [2, 4] so the complement (eigenvalue 0)
        // is a cluster of its own.
        let shifted = linalg::hermitian_part(&(g.unscale(norm) + a.unit.scale(3.0)));
        let eig = linalg::eigh(&shifted, tol)?;
        let (clusters, min_gap) = cluster_sorted(&eig.values, tol.cluster_gap);
        if min_gap < 10.0 * tol.cluster_gap {
            continue;
        }
        let projs: Vec<Projection> = clusters
            .into_iter()
            .filter(|r| eig.values[r.start] > 1.0)
            .map(|r| {
                let idx: Vec<usize> = r.collect();
                Projection::from_columns(&eig.columns(&idx))
            })
            .collect();
        if projs.len() != z.dim() {
            continue;
        }
        let in_center = projs.iter().all(|p| {
            z.contains(&p.matrix, tol) && (&p.matrix * &off_unit).norm() <= tol.residual
        });
        if in_center {
            return Ok(projs);
        }
    }
    Err(Error::RetriesExhausted {
        what: "minimal central projections",
        attempts: GENERIC_ATTEMPTS,
    })
}

fn generic_combination(rng: &mut SeededRng, herm: &[ComplexMatrix], d: usize) -> ComplexMatrix {
    let mut g = ComplexMatrix::zeros(d, d);
    for h in herm {
        let c: f64 = rng.sample(StandardNormal);
        g += h.scale(c);
    }
    g
}

/// Tensor factorization of one block of an algebra.
#[derive(Debug, Clone)]
pub struct BlockFactorization {
    pub n: usize,
    pub m: usize,
    /// (n·m)×d with U U† = 1 and U†U = P; U e_{kl} U† = |k⟩⟨l| ⊗ 1_m.
    pub unitary: ComplexMatrix,
    /// e_{kl} in the ambient space, row-major in (k, l).
    pub matrix_units: Vec<ComplexMatrix>,
}

impl BlockFactorization {
    pub fn matrix_unit(&self, k: usize, l: usize) -> &ComplexMatrix {
        &self.matrix_units[k * self.n + l]
    }
}

/// Factorizes the corner algebra P·A·P ≅ M_n ⊗ 1_m for a minimal central
/// projection P.
pub fn factorize_block(
    a: &OperatorAlgebra,
    p: &Projection,
    tol: &Tolerance,
    seed: u64,
) -> Result<BlockFactorization> {
    let corner = a.compress(&p.matrix, tol)?;
    let dim = corner.dim();
    let n = (dim as f64).sqrt().round() as usize;
    if n == 0 || n * n != dim {
        return Err(Error::VerificationFailed(format!(
            "corner algebra of dimension {dim} is not a full matrix algebra"
        )));
    }
    let (_, v) = linalg::support_basis(&p.matrix, tol)?;
    let r = v.ncols();
    if r % n != 0 {
        return Err(Error::NonIntegralMultiplicity { rank: r, n });
    }
    let m = r / n;
    let vd = v.adjoint();
    let local: Vec<ComplexMatrix> = corner.basis.iter().map(|b| &vd * b * &v).collect();
    let local_herm: Vec<ComplexMatrix> = OperatorAlgebra {
        space: opspace::OperatorSubspace::new(r, local.clone()),
        unit: linalg::identity(r),
    }
    .hermitian_basis();

    let mut rng = rng_from_seed(seed);
    for _ in 0..GENERIC_ATTEMPTS {
        let Some(w) = try_factorize(&mut rng, &local, &local_herm, n, m, tol)? else {
            continue;
        };
        let full = &v * &w;
        let u = full.adjoint();
        if !factor_form_holds(&u, &corner, m, tol)? {
            continue;
        }
        let mut units = Vec::with_capacity(n * n);
        for k in 0..n {
            for l in 0..n {
                let kl = kron(&linalg::matrix_unit(n, k, l), &linalg::identity(m));
                units.push(&full * kl * &u);
            }
        }
        return Ok(BlockFactorization {
            n,
            m,
            unitary: u,
            matrix_units: units,
        });
    }
    Err(Error::RetriesExhausted {
        what: "block factorization",
        attempts: GENERIC_ATTEMPTS,
    })
}

/// One generic attempt in local coordinates. Returns W (r×r unitary) whose
/// column k·m + j is e_{k1} f_j, or None when the draw was not generic enough.
fn try_factorize(
    rng: &mut SeededRng,
    local: &[ComplexMatrix],
    local_herm: &[ComplexMatrix],
    n: usize,
    m: usize,
    tol: &Tolerance,
) -> Result<Option<ComplexMatrix>> {
    let r = n * m;
    let g = generic_combination(rng, local_herm, r);
    let norm = linalg::operator_norm(&g)?;
    if norm <= 0.0 {
        return Ok(None);
    }
    let eig = linalg::eigh(&linalg::hermitian_part(&g.unscale(norm)), tol)?;
    let (clusters, min_gap) = cluster_sorted(&eig.values, tol.cluster_gap);
    if clusters.len() != n || clusters.iter().any(|c| c.len() != m) {
        return Ok(None);
    }
    if n > 1 && min_gap < 10.0 * tol.cluster_gap {
        return Ok(None);
    }
    let frames: Vec<ComplexMatrix> = clusters
        .into_iter()
        .map(|c| eig.columns(&c.collect::<Vec<_>>()))
        .collect();

    let mut x = ComplexMatrix::zeros(r, r);
    for b in local {
        x += b * random::complex_normal(rng);
    }
    let xn = x.norm();
    let mut w = ComplexMatrix::zeros(r, r);
    w.view_mut((0, 0), (r, m)).copy_from(&frames[0]);
    for k in 1..n {
        // e_k x e_1 restricted to the frames is c·(unitary) for the block form.
        let mid = frames[k].adjoint() * &x * &frames[0];
        let (l, s, rt) = linalg::svd(&mid)?;
        let (smax, smin) = (s[0], s[s.len() - 1]);
        if smin < 1e-3 * xn || (smax - smin) > tol.cluster_gap * smax {
            return Ok(None);
        }
        let polar = l * rt.adjoint();
        w.view_mut((0, k * m), (r, m))
            .copy_from(&(&frames[k] * polar));
    }
    Ok(Some(w))
}

/// Checks U b U† ∈ M_n ⊗ 1_m for every basis element of the corner.
fn factor_form_holds(
    u: &ComplexMatrix,
    corner: &OperatorAlgebra,
    m: usize,
    tol: &Tolerance,
) -> Result<bool> {
    let n = u.nrows() / m;
    let ud = u.adjoint();
    for b in &corner.basis {
        let y = u * b * &ud;
        let reduced = partial_trace(&y, n, m, Side::B)?.unscale(m as f64);
        let dev = (&y - kron(&reduced, &linalg::identity(m))).norm();
        if dev > tol.residual * b.norm().max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One block Hᵢ ⊗ Kᵢ of the decomposition, in support-space coordinates.
#[derive(Debug, Clone)]
pub struct Block {
    pub projection: Projection,
    pub n: usize,
    pub m: usize,
    /// (n·m)×d′ with U U† = 1, U†U = P.
    pub unitary: ComplexMatrix,
    pub sigma: ComplexMatrix,
    /// qθ(i) indexed by label position.
    pub q: Vec<f64>,
    /// ρ_{i,θ} indexed by label position.
    pub rho: Vec<ComplexMatrix>,
    /// Labels with qθ(i) at or below the residual tolerance; their ρ is the
    /// maximally mixed placeholder.
    pub q_zero: Vec<bool>,
}

impl Block {
    /// U†(qθ ρ_{i,θ} ⊗ σᵢ)U in support coordinates.
    pub fn embedded_state(&self, theta: usize) -> ComplexMatrix {
        let inner = kron(&self.rho[theta], &self.sigma).scale(self.q[theta]);
        self.unitary.adjoint() * inner * &self.unitary
    }
}

#[derive(Debug, Clone)]
pub struct KIDecomposition {
    pub labels: Vec<String>,
    pub blocks: Vec<Block>,
    /// d×d′ isometry onto the joint support.
    pub support_isometry: ComplexMatrix,
    pub source_dim: usize,
}

impl KIDecomposition {
    pub fn support_dim(&self) -> usize {
        self.support_isometry.ncols()
    }

    pub fn block_dims(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.n, b.m)).collect()
    }

    /// Σᵢ embed(qθ(i) ρ_{i,θ} ⊗ σᵢ) in source coordinates.
    pub fn reconstruct(&self, theta: usize) -> ComplexMatrix {
        let dp = self.support_dim();
        let mut s = ComplexMatrix::zeros(dp, dp);
        for b in &self.blocks {
            s += b.embedded_state(theta);
        }
        &self.support_isometry * s * self.support_isometry.adjoint()
    }

    /// maxθ ‖ρθ − reconstruct(θ)‖_F, per label.
    pub fn reconstruction_residuals(&self, e: &StatisticalExperiment) -> Result<Vec<f64>> {
        if e.dim != self.source_dim || e.num_labels() != self.labels.len() {
            return Err(Error::ShapeMismatch(
                "decomposition does not match the experiment".into(),
            ));
        }
        Ok((0..e.num_labels())
            .map(|t| (&e.states[t] - self.reconstruct(t)).norm())
            .collect())
    }

    pub fn to_json(&self) -> DecompositionJson {
        DecompositionJson {
            labels: Some(self.labels.clone()),
            support_isometry: MatrixJson::from(&self.support_isometry),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockJson {
                    p: MatrixJson::from(&b.projection.matrix),
                    u: MatrixJson::from(&b.unitary),
                    n: b.n,
                    m: b.m,
                    sigma: MatrixJson::from(&b.sigma),
                    q: self.labels.iter().cloned().zip(b.q.iter().copied()).collect(),
                    rho: self
                        .labels
                        .iter()
                        .cloned()
                        .zip(b.rho.iter().map(MatrixJson::from))
                        .collect(),
                    q_zero_flags: self
                        .labels
                        .iter()
                        .zip(&b.q_zero)
                        .filter(|(_, &z)| z)
                        .map(|(l, _)| l.clone())
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub support_isometry: MatrixJson,
    pub blocks: Vec<BlockJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockJson {
    #[serde(rename = "P")]
    pub p: MatrixJson,
    #[serde(rename = "U")]
    pub u: MatrixJson,
    pub n: usize,
    pub m: usize,
    pub sigma: MatrixJson,
    pub q: BTreeMap<String, f64>,
    pub rho: BTreeMap<String, MatrixJson>,
    pub q_zero_flags: Vec<String>,
}

impl DecompositionJson {
    pub fn into_decomposition(self) -> Result<KIDecomposition> {
        let v = self.support_isometry.to_matrix()?;
        let labels = match self.labels {
            Some(l) => l,
            None => self
                .blocks
                .first()
                .map(|b| b.q.keys().cloned().collect())
                .unwrap_or_default(),
        };
        let dp = v.ncols();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.into_iter().enumerate() {
            let bad = |what: &str| Error::InvalidInput(format!("block {i}: {what}"));
            let pm = b.p.to_matrix()?;
            let u = b.u.to_matrix()?;
            let sigma = b.sigma.to_matrix()?;
            if pm.shape() != (dp, dp) || u.shape() != (b.n * b.m, dp) || sigma.shape() != (b.m, b.m)
            {
                return Err(bad("matrix shapes do not match n, m and the support dimension"));
            }
            let mut q = Vec::with_capacity(labels.len());
            let mut rho = Vec::with_capacity(labels.len());
            for l in &labels {
                q.push(*b.q.get(l).ok_or_else(|| bad(&format!("missing q for label {l}")))?);
                let r = b
                    .rho
                    .get(l)
                    .ok_or_else(|| bad(&format!("missing rho for label {l}")))?
                    .to_matrix()?;
                if r.shape() != (b.n, b.n) {
                    return Err(bad("rho shape"));
                }
                rho.push(r);
            }
            if b.q.len() != labels.len() || b.rho.len() != labels.len() {
                return Err(bad("label sets differ"));
            }
            let q_zero = labels.iter().map(|l| b.q_zero_flags.contains(l)).collect();
            let rank = pm.trace().re.round() as usize;
            blocks.push(Block {
                projection: Projection { matrix: pm, rank },
                n: b.n,
                m: b.m,
                unitary: u,
                sigma,
                q,
                rho,
                q_zero,
            });
        }
        Ok(KIDecomposition {
            labels,
            blocks,
            source_dim: v.nrows(),
            support_isometry: v,
        })
    }
}

/// Full pipeline: support restriction, M₀, central projections, per-block
/// factorization, state extraction, canonical ordering and the
/// reconstruction contract.
pub fn ki_decomposition(
    e: &StatisticalExperiment,
    tol: &Tolerance,
    seed: u64,
) -> Result<KIDecomposition> {
    tol.validate()?;
    experiment::validate(e, tol).into_result()?;
    let (er, v) = experiment::restrict_to_joint_support(e, tol)?;
    let m0 = minsuff::minimal_sufficient_algebra(&er, None, tol)?;
    decompose_algebra(e, &er, v, &m0, tol, seed)
}

/// Pipeline from a precomputed M₀ of the restricted experiment `er`.
pub fn decompose_algebra(
    e: &StatisticalExperiment,
    er: &StatisticalExperiment,
    v: ComplexMatrix,
    m0: &OperatorAlgebra,
    tol: &Tolerance,
    seed: u64,
) -> Result<KIDecomposition> {
    let rho_bar = experiment::average_state(er, None);
    let projections = minimal_central_projections(m0, tol, child_seed(seed, 0))?;
    let mut blocks = projections
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            let f = factorize_block(m0, &p, tol, child_seed(seed, i as u64 + 1))?;
            build_block(p, f, &rho_bar, er, tol)
        })
        .collect::<Result<Vec<Block>>>()?;
    blocks.sort_by(canonical_order);

    let k = KIDecomposition {
        labels: e.labels.clone(),
        blocks,
        support_isometry: v,
        source_dim: e.dim,
    };
    let residuals = k.reconstruction_residuals(e)?;
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if !(worst <= tol.residual) {
        return Err(Error::VerificationFailed(format!(
            "reconstruction residual {worst:.3e} exceeds {:.1e} (per label: {:?})",
            tol.residual, residuals
        )));
    }
    Ok(k)
}

/// Descending eigenbasis of a Hermitian matrix (columns).
fn descending_basis(h: &ComplexMatrix, tol: &Tolerance) -> Result<ComplexMatrix> {
    let eig = linalg::eigh(h, tol)?;
    let idx: Vec<usize> = (0..eig.values.len()).rev().collect();
    Ok(eig.columns(&idx))
}

fn build_block(
    p: Projection,
    f: BlockFactorization,
    rho_bar: &ComplexMatrix,
    er: &StatisticalExperiment,
    tol: &Tolerance,
) -> Result<Block> {
    let (n, m) = (f.n, f.m);
    let mut u = f.unitary;
    // Canonical frames: σ and the reduced average diagonal, descending.
    let local_bar = &u * rho_bar * u.adjoint();
    let wsig = descending_basis(
        &linalg::hermitian_part(&partial_trace(&local_bar, n, m, Side::A)?),
        tol,
    )?;
    let wrho = descending_basis(
        &linalg::hermitian_part(&partial_trace(&local_bar, n, m, Side::B)?),
        tol,
    )?;
    u = kron(&wrho, &wsig).adjoint() * u;
    let ud = u.adjoint();

    let local_bar = &u * rho_bar * &ud;
    let sig = linalg::hermitian_part(&partial_trace(&local_bar, n, m, Side::A)?);
    let sigma = sig.unscale(sig.trace().re);

    let mut q = Vec::with_capacity(er.num_labels());
    let mut rho = Vec::with_capacity(er.num_labels());
    let mut q_zero = Vec::with_capacity(er.num_labels());
    for s in &er.states {
        let local = &u * s * &ud;
        let qt = local.trace().re;
        if qt <= tol.residual {
            q.push(qt.max(0.0));
            rho.push(linalg::identity(n).unscale(n as f64));
            q_zero.push(true);
        } else {
            let r = linalg::hermitian_part(&partial_trace(&local, n, m, Side::B)?);
            q.push(qt);
            rho.push(r.unscale(qt));
            q_zero.push(false);
        }
    }
    Ok(Block {
        projection: p,
        n,
        m,
        unitary: u,
        sigma,
        q,
        rho,
        q_zero,
    })
}

fn canonical_order(a: &Block, b: &Block) -> std::cmp::Ordering {
    a.n.cmp(&b.n)
        .then(a.m.cmp(&b.m))
        .then_with(|| {
            let qa = a.q.first().copied().unwrap_or(0.0);
            let qb = b.q.first().copied().unwrap_or(0.0);
            qb.total_cmp(&qa)
        })
        .then_with(|| {
            let sa = (0..a.m).map(|k| a.sigma[(k, k)].re);
            let sb = (0..b.m).map(|k| b.sigma[(k, k)].re);
            sa.zip(sb)
                .map(|(x, y)| y.total_cmp(&x))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// ℰ(A) = Σᵢ U†(tr_K(U A U† (1 ⊗ σᵢ)) ⊗ 1_m)U on the support space.
pub fn explicit_conditional_expectation(k: &KIDecomposition) -> Superoperator {
    let dp = k.support_dim();
    let lifted: Vec<(ComplexMatrix, ComplexMatrix, usize, usize)> = k
        .blocks
        .iter()
        .map(|b| {
            (
                b.unitary.clone(),
                kron(&linalg::identity(b.n), &b.sigma),
                b.n,
                b.m,
            )
        })
        .collect();
    Superoperator::from_fn(dp, dp, |a| {
        let mut out = ComplexMatrix::zeros(dp, dp);
        for (u, one_sigma, n, m) in &lifted {
            let local = u * a * u.adjoint() * one_sigma;
            let reduced = partial_trace(&local, *n, *m, Side::B).expect("block shapes are consistent");
            out += u.adjoint() * kron(&reduced, &linalg::identity(*m)) * u;
        }
        out
    })
}

pub const DEFAULT_PROBES: usize = 200;

/// One named contract in a verification report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckItem {
    fn at_most(name: &str, value: f64, threshold: f64) -> CheckItem {
        CheckItem {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
            detail: None,
        }
    }

    fn failed(name: &str, threshold: f64, detail: String) -> CheckItem {
        CheckItem {
            name: name.into(),
            value: f64::INFINITY,
            threshold,
            passed: false,
            detail: Some(detail),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub reconstruction_residuals: BTreeMap<String, f64>,
    pub items: Vec<CheckItem>,
}

impl VerifyReport {
    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn failures(&self) -> Vec<&CheckItem> {
        self.items.iter().filter(|i| !i.passed).collect()
    }
}

/// Checks a decomposition against an experiment with [`DEFAULT_PROBES`]
/// probes drawn from seed 0.
pub fn verify_ki(e: &StatisticalExperiment, k: &KIDecomposition, tol: &Tolerance) -> Result<VerifyReport> {
    verify_ki_with(e, k, tol, 0, DEFAULT_PROBES)
}

pub fn verify_ki_with(
    e: &StatisticalExperiment,
    k: &KIDecomposition,
    tol: &Tolerance,
    probe_seed: u64,
    probe_count: usize,
) -> Result<VerifyReport> {
    let residuals = k.reconstruction_residuals(e)?;
    let dp = k.support_dim();
    let mut items = Vec::new();
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    items.push(CheckItem::at_most("reconstruction", worst, tol.residual));

    // Projection family.
    let mut proj_defect = 0.0_f64;
    let mut overlap = 0.0_f64;
    let mut sum = ComplexMatrix::zeros(dp, dp);
    let mut unitary_defect = 0.0_f64;
    for (i, b) in k.blocks.iter().enumerate() {
        if b.projection.matrix.shape() != (dp, dp) || b.unitary.shape() != (b.n * b.m, dp) {
            return Err(Error::ShapeMismatch(format!("block {i} has inconsistent shapes")));
        }
        proj_defect = proj_defect.max(b.projection.defect());
        sum += &b.projection.matrix;
        for c in &k.blocks[i + 1..] {
            overlap = overlap.max((&b.projection.matrix * &c.projection.matrix).norm());
        }
        let uu = &b.unitary * b.unitary.adjoint() - linalg::identity(b.n * b.m);
        let upu = b.unitary.adjoint() * &b.unitary - &b.projection.matrix;
        unitary_defect = unitary_defect.max(uu.norm()).max(upu.norm());
    }
    items.push(CheckItem::at_most("projections", proj_defect, tol.residual));
    items.push(CheckItem::at_most("orthogonality", overlap, tol.residual));
    items.push(CheckItem::at_most(
        "completeness",
        (sum - linalg::identity(dp)).norm(),
        tol.residual,
    ));
    items.push(CheckItem::at_most("block unitaries", unitary_defect, tol.residual));
    let nm_total: usize = k.blocks.iter().map(|b| b.n * b.m).sum();
    items.push(CheckItem::at_most(
        "support dimension",
        nm_total.abs_diff(dp) as f64,
        0.0,
    ));

    // σ faithfulness and q normalization.
    let mut sigma_margin = f64::INFINITY;
    for b in &k.blocks {
        sigma_margin = sigma_margin.min(linalg::min_eigenvalue(&b.sigma)?);
    }
    items.push(CheckItem {
        name: "sigma faithful".into(),
        value: sigma_margin,
        threshold: tol.rank_cut,
        passed: sigma_margin > tol.rank_cut,
        detail: None,
    });
    let mut q_defect = 0.0_f64;
    for t in 0..k.labels.len() {
        let s: f64 = k.blocks.iter().map(|b| b.q[t]).sum();
        q_defect = q_defect.max((s - 1.0).abs());
    }
    items.push(CheckItem::at_most("q normalization", q_defect, tol.residual));

    // Block-diagonal states (pinching leaves them fixed).
    let projs: Vec<ComplexMatrix> = k
        .blocks
        .iter()
        .map(|b| &k.support_isometry * &b.projection.matrix * k.support_isometry.adjoint())
        .collect();
    let mut pinch = 0.0_f64;
    for s in &e.states {
        let mut out = ComplexMatrix::zeros(e.dim, e.dim);
        for p in &projs {
            out += p * s * p;
        }
        pinch = pinch.max(linalg::trace_norm(&(out - s))?);
    }
    items.push(CheckItem::at_most("pinching non-disturbance", pinch, tol.residual / 10.0));

    // Two routes to ℰ and the state-preservation identity.
    let vd = k.support_isometry.adjoint();
    let restricted: Vec<ComplexMatrix> = e
        .states
        .iter()
        .map(|s| &vd * s * &k.support_isometry)
        .collect();
    let explicit = explicit_conditional_expectation(k);
    let probes = random::hermitian_probes(probe_seed, dp, probe_count);
    let agreement_threshold = 10.0 * tol.residual;
    match projection_route(e, &restricted, &k.labels, tol) {
        Ok(proj) => {
            let dist = channels::probe_distance(&explicit, &proj, &probes)?;
            items.push(CheckItem::at_most("expectation agreement", dist, agreement_threshold));
        }
        Err(err) => items.push(CheckItem::failed(
            "expectation agreement",
            agreement_threshold,
            err.to_string(),
        )),
    }
    let mut eq1 = 0.0_f64;
    for a in &probes {
        let ea = explicit.apply(a, Picture::Heisenberg)?;
        for s in &restricted {
            eq1 = eq1.max(((s * &ea).trace() - (s * a).trace()).norm());
        }
    }
    items.push(CheckItem::at_most("state preservation", eq1, tol.residual));

    let passed = items.iter().all(|i| i.passed);
    Ok(VerifyReport {
        passed,
        reconstruction_residuals: k.labels.iter().cloned().zip(residuals).collect(),
        items,
    })
}

fn projection_route(
    e: &StatisticalExperiment,
    restricted: &[ComplexMatrix],
    labels: &[String],
    tol: &Tolerance,
) -> Result<Superoperator> {
    let er = StatisticalExperiment {
        dim: restricted.first().map(|s| s.nrows()).unwrap_or(0),
        labels: labels.to_vec(),
        states: restricted.to_vec(),
        weights: e.weights.clone(),
    };
    let m0 = minsuff::minimal_sufficient_algebra(&er, None, tol)?;
    minsuff::conditional_expectation(&m0, &experiment::average_state(&er, None), tol)
}
