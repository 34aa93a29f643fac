//! Direct products of experiments: minimal sufficiency and classical parts.

use serde::{Deserialize, Serialize};

use crate::classical::{self, ClassicalExperiment};
use crate::error::{Error, Result};
use crate::experiment::StatisticalExperiment;
use crate::linalg::{kron, Tolerance};
use crate::minsuff;
use crate::structure::{self, KIDecomposition};

/// Largest admissible product dimension.
pub const MAX_PRODUCT_DIM: usize = 64;
/// q-factorization tolerance after block matching.
pub const Q_FACTOR_TOLERANCE: f64 = 1e-6;
/// Blocks up to which a failed greedy matching falls back to exhaustive search.
const EXHAUSTIVE_LIMIT: usize = 8;

/// Label of the pair (θ, ξ).
pub fn pair_label(theta: &str, xi: &str) -> String {
    format!("({theta},{xi})")
}

/// E ⊗ F with labels (θ,ξ) in θ-major order, states ρθ ⊗ τξ and product weights.
pub fn tensor_experiments(
    e: &StatisticalExperiment,
    f: &StatisticalExperiment,
) -> Result<StatisticalExperiment> {
    let mut labels = Vec::with_capacity(e.num_labels() * f.num_labels());
    let mut states = Vec::with_capacity(labels.capacity());
    for (lt, rt) in e.labels.iter().zip(&e.states) {
        for (lx, rx) in f.labels.iter().zip(&f.states) {
            labels.push(pair_label(lt, lx));
            states.push(kron(rt, rx));
        }
    }
    let weights = if e.weights.is_none() && f.weights.is_none() {
        None
    } else {
        let (we, wf) = (e.effective_weights(), f.effective_weights());
        Some(we.iter().flat_map(|a| wf.iter().map(move |b| a * b)).collect())
    };
    StatisticalExperiment::new(labels, states, weights)
}

fn check_product_size(e: &StatisticalExperiment, f: &StatisticalExperiment) -> Result<()> {
    if e.dim * f.dim > MAX_PRODUCT_DIM {
        return Err(Error::InvalidInput(format!(
            "product dimension {} exceeds {MAX_PRODUCT_DIM}",
            e.dim * f.dim
        )));
    }
    Ok(())
}

/// Verdicts (ms(E), ms(F), ms(E⊗F)).
pub fn check_product_minimal_sufficiency(
    e: &StatisticalExperiment,
    f: &StatisticalExperiment,
    tol: &Tolerance,
) -> Result<[bool; 3]> {
    check_product_size(e, f)?;
    let ef = tensor_experiments(e, f)?;
    Ok([
        minsuff::is_minimal_sufficient(e, tol)?,
        minsuff::is_minimal_sufficient(f, tol)?,
        minsuff::is_minimal_sufficient(&ef, tol)?,
    ])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductReport {
    pub left_dims: Vec<(usize, usize)>,
    pub right_dims: Vec<(usize, usize)>,
    pub product_dims: Vec<(usize, usize)>,
    pub matched: bool,
    /// max |q_{(θ,ξ)}(b) − qθ(i)·qξ(j)| under the best matching; absent when
    /// the dimension multisets already disagree.
    pub q_factorization_residual: Option<f64>,
    /// Product block b corresponds to the index pair `matching[b]`.
    pub matching: Option<Vec<(usize, usize)>>,
    pub minimal_sufficiency_checks: [bool; 3],
}

impl ProductReport {
    /// Both direct-product statements hold for this pair.
    pub fn theorems_hold(&self) -> bool {
        let [a, b, ab] = self.minimal_sufficiency_checks;
        self.matched && ab == (a && b)
    }
}

fn sorted(mut v: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    v.sort_unstable();
    v
}

/// Decomposes E, F and E⊗F and matches product blocks to index pairs.
pub fn check_product_classical(
    e: &StatisticalExperiment,
    f: &StatisticalExperiment,
    tol: &Tolerance,
    seed: u64,
) -> Result<ProductReport> {
    check_product_size(e, f)?;
    let ef = tensor_experiments(e, f)?;
    let ke = structure::ki_decomposition(e, tol, seed)?;
    let kf = structure::ki_decomposition(f, tol, seed)?;
    let kef = structure::ki_decomposition(&ef, tol, seed)?;
    let ms = [
        minsuff::is_minimal_sufficient(e, tol)?,
        minsuff::is_minimal_sufficient(f, tol)?,
        minsuff::is_minimal_sufficient(&ef, tol)?,
    ];
    compare_decompositions(&ke, &kf, &kef, ms)
}

/// Matching step on precomputed decompositions.
pub fn compare_decompositions(
    ke: &KIDecomposition,
    kf: &KIDecomposition,
    kef: &KIDecomposition,
    ms: [bool; 3],
) -> Result<ProductReport> {
    let left_dims = sorted(ke.block_dims());
    let right_dims = sorted(kf.block_dims());
    let product_dims = sorted(kef.block_dims());
    let mut expected = Vec::new();
    for &(n, m) in &left_dims {
        for &(n2, m2) in &right_dims {
            expected.push((n * n2, m * m2));
        }
    }
    let mut report = ProductReport {
        left_dims,
        right_dims,
        product_dims,
        matched: false,
        q_factorization_residual: None,
        matching: None,
        minimal_sufficiency_checks: ms,
    };
    if sorted(expected) != report.product_dims {
        return Ok(report);
    }
    let (ce, cf, cef) = (
        classical::classical_part(ke),
        classical::classical_part(kf),
        classical::classical_part(kef),
    );
    let pairs: Vec<(usize, usize)> = (0..ce.size())
        .flat_map(|i| (0..cf.size()).map(move |j| (i, j)))
        .collect();
    let cost = cost_matrix(ke, kf, kef, &ce, &cf, &cef, &pairs);
    let (assignment, best) = best_matching(&cost);
    if best > Q_FACTOR_TOLERANCE {
        return Err(Error::MatchingFailed {
            best,
            tolerance: Q_FACTOR_TOLERANCE,
        });
    }
    report.matched = true;
    report.q_factorization_residual = Some(best);
    report.matching = Some(assignment.into_iter().map(|p| pairs[p]).collect());
    Ok(report)
}

/// cost[b][p]: max over product labels of |q_{(θ,ξ)}(b) − qθ(i) qξ(j)| for
/// p = (i, j), infinite when the block dimensions are incompatible.
fn cost_matrix(
    ke: &KIDecomposition,
    kf: &KIDecomposition,
    kef: &KIDecomposition,
    ce: &ClassicalExperiment,
    cf: &ClassicalExperiment,
    cef: &ClassicalExperiment,
    pairs: &[(usize, usize)],
) -> Vec<Vec<f64>> {
    let nf = kf.labels.len();
    kef.blocks
        .iter()
        .enumerate()
        .map(|(b, blk)| {
            pairs
                .iter()
                .map(|&(i, j)| {
                    let (bi, bj) = (&ke.blocks[i], &kf.blocks[j]);
                    if (blk.n, blk.m) != (bi.n * bj.n, bi.m * bj.m) {
                        return f64::INFINITY;
                    }
                    let mut worst = 0.0_f64;
                    for t in 0..ke.labels.len() {
                        for x in 0..nf {
                            let want = ce.distributions[t][i] * cf.distributions[x][j];
                            let got = cef.distributions[t * nf + x][b];
                            worst = worst.max((got - want).abs());
                        }
                    }
                    worst
                })
                .collect()
        })
        .collect()
}

/// Bijection rows → columns minimizing the largest cost: greedy on sorted
/// costs, then exhaustive search for small instances when greedy fails.
fn best_matching(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let k = cost.len();
    let mut entries: Vec<(f64, usize, usize)> = cost
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &v)| (v, r, c)))
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut row_of = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut worst = 0.0_f64;
    for (v, r, c) in entries {
        if row_of[r] == usize::MAX && !used[c] {
            row_of[r] = c;
            used[c] = true;
            worst = worst.max(v);
        }
    }
    if worst <= Q_FACTOR_TOLERANCE || k > EXHAUSTIVE_LIMIT {
        return (row_of, worst);
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = (row_of, worst);
    permute(&mut perm, 0, cost, &mut best);
    best
}

fn permute(perm: &mut Vec<usize>, at: usize, cost: &[Vec<f64>], best: &mut (Vec<usize>, f64)) {
    if at == perm.len() {
        let w = perm
            .iter()
            .enumerate()
            .map(|(r, &c)| cost[r][c])
            .fold(0.0, f64::max);
        if w < best.1 {
            *best = (perm.clone(), w);
        }
        return;
    }
    for i in at..perm.len() {
        perm.swap(at, i);
        // Prune: the partial maximum already exceeds the best.
        if cost[at][perm[at]] < best.1 {
            permute(perm, at + 1, cost, best);
        }
        perm.swap(at, i);
    }
}
