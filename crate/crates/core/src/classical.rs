//! Classical part, broadcastability and the non-disturbing extraction.
//!
//! All maps act on the source space of the experiment. Off the joint support
//! the pinching keeps the complementary projection as an extra outcome-free
//! term, so every constructed map is a genuine channel on the full space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::{self, Picture, Superoperator};
use crate::error::{Error, Result};
use crate::experiment::StatisticalExperiment;
use crate::linalg::{self, kron, ComplexMatrix, Side, Tolerance};
use crate::structure::KIDecomposition;

/// Index set I with one probability vector per experiment label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalExperiment {
    pub index: Vec<usize>,
    pub labels: Vec<String>,
    /// `distributions[θ][i]`.
    pub distributions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalJson {
    pub index: Vec<usize>,
    pub distributions: BTreeMap<String, Vec<f64>>,
}

impl ClassicalExperiment {
    pub fn size(&self) -> usize {
        self.index.len()
    }

    pub fn distribution(&self, label: &str) -> Option<&[f64]> {
        let t = self.labels.iter().position(|l| l == label)?;
        Some(&self.distributions[t])
    }

    /// Largest deviation of any distribution from normalization.
    pub fn normalization_defect(&self) -> f64 {
        self.distributions
            .iter()
            .map(|q| (q.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> ClassicalJson {
        ClassicalJson {
            index: self.index.clone(),
            distributions: self
                .labels
                .iter()
                .cloned()
                .zip(self.distributions.iter().cloned())
                .collect(),
        }
    }
}

pub fn classical_part(k: &KIDecomposition) -> ClassicalExperiment {
    ClassicalExperiment {
        index: (0..k.blocks.len()).collect(),
        labels: k.labels.clone(),
        distributions: (0..k.labels.len())
            .map(|t| k.blocks.iter().map(|b| b.q[t]).collect())
            .collect(),
    }
}

pub fn is_broadcastable(k: &KIDecomposition) -> bool {
    k.blocks.iter().all(|b| b.n == 1)
}

/// Block projections V Pᵢ V† on the source space.
pub fn source_projections(k: &KIDecomposition) -> Vec<ComplexMatrix> {
    let v = &k.support_isometry;
    k.blocks
        .iter()
        .map(|b| v * &b.projection.matrix * v.adjoint())
        .collect()
}

/// 1 − VV†, the part of the source space outside the joint support.
fn off_support(k: &KIDecomposition) -> ComplexMatrix {
    let v = &k.support_isometry;
    linalg::identity(k.source_dim) - v * v.adjoint()
}

/// Copying channel for a classical experiment, stored in the Heisenberg
/// picture M_{d²} → M_d. In the Schrödinger picture it sends
/// ρ ↦ Σᵢ trace(P̂ᵢρ) ς̂ᵢ ⊗ ς̂ᵢ (+ trace((1 − VV†)ρ) ς̂₁ ⊗ ς̂₁ off the support).
pub fn broadcast_channel(k: &KIDecomposition) -> Result<Superoperator> {
    if let Some((i, b)) = k.blocks.iter().enumerate().find(|(_, b)| b.n > 1) {
        return Err(Error::NotClassical { block: i, n: b.n });
    }
    if k.blocks.is_empty() {
        return Err(Error::InvalidInput("decomposition has no blocks".into()));
    }
    let v = &k.support_isometry;
    let d = k.source_dim;
    let projections = source_projections(k);
    let copies: Vec<ComplexMatrix> = k
        .blocks
        .iter()
        .map(|b| {
            let s = v * b.unitary.adjoint() * &b.sigma * &b.unitary * v.adjoint();
            kron(&s, &s)
        })
        .collect();
    let rest = off_support(k);
    let has_rest = rest.norm() > 0.0;
    Ok(Superoperator::from_fn(d * d, d, |x| {
        let mut out = ComplexMatrix::zeros(d, d);
        for (p, c) in projections.iter().zip(&copies) {
            out += p * (c * x).trace();
        }
        if has_rest {
            out += &rest * (&copies[0] * x).trace();
        }
        out
    }))
}

/// Marginal defects of a broadcast witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BroadcastCertificate {
    /// maxθ ‖tr_B Λ*(ρθ) − ρθ‖_F.
    pub left_marginal: f64,
    /// maxθ ‖tr_A Λ*(ρθ) − ρθ‖_F.
    pub right_marginal: f64,
    pub cp: bool,
    pub tp: bool,
    pub min_choi_eigenvalue: f64,
}

impl BroadcastCertificate {
    pub fn worst_marginal(&self) -> f64 {
        self.left_marginal.max(self.right_marginal)
    }
}

pub fn certify_broadcast(
    witness: &Superoperator,
    e: &StatisticalExperiment,
    tol: &Tolerance,
) -> Result<BroadcastCertificate> {
    let d = e.dim;
    if witness.in_dim != d * d || witness.out_dim != d {
        return Err(Error::ShapeMismatch("witness does not map M_d to M_d ⊗ M_d".into()));
    }
    let mut left = 0.0_f64;
    let mut right = 0.0_f64;
    for s in &e.states {
        let out = witness.apply(s, Picture::Schrodinger)?;
        left = left.max((linalg::partial_trace(&out, d, d, Side::B)? - s).norm());
        right = right.max((linalg::partial_trace(&out, d, d, Side::A)? - s).norm());
    }
    let report = channels::is_cptp_unital(&witness.dual(), tol)?;
    Ok(BroadcastCertificate {
        left_marginal: left,
        right_marginal: right,
        cp: report.cp,
        tp: report.tp,
        min_choi_eigenvalue: report.min_choi_eigenvalue,
    })
}

/// Pinching along the block projections and the outcome distribution per label.
#[derive(Debug, Clone)]
pub struct ExtractionInstrument {
    pub pinching: Superoperator,
    pub outcomes: ClassicalExperiment,
}

pub fn extraction_instrument(k: &KIDecomposition) -> Result<ExtractionInstrument> {
    let mut projections = source_projections(k);
    let rest = off_support(k);
    if rest.norm() > 0.0 {
        projections.push(rest);
    }
    Ok(ExtractionInstrument {
        pinching: Superoperator::pinching(&projections)?,
        outcomes: classical_part(k),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionCertificate {
    /// maxθ ‖Λ*(ρθ) − ρθ‖_tr.
    pub disturbance: f64,
    /// max |trace(P̂ᵢρθ) − qθ(i)| against the classical part.
    pub outcome_deviation: f64,
    pub passed: bool,
}

/// Measures the instrument on the actual states: no disturbance within
/// `residual / 10` and outcome statistics equal to the classical part within
/// `residual / 100`.
pub fn certify_extraction(
    k: &KIDecomposition,
    e: &StatisticalExperiment,
    tol: &Tolerance,
) -> Result<ExtractionCertificate> {
    let inst = extraction_instrument(k)?;
    let disturbance = channels::max_disturbance(&inst.pinching, e)?;
    let projections = source_projections(k);
    let mut dev = 0.0_f64;
    for (t, s) in e.states.iter().enumerate() {
        for (i, p) in projections.iter().enumerate() {
            let measured = (p * s).trace().re;
            dev = dev.max((measured - inst.outcomes.distributions[t][i]).abs());
        }
    }
    Ok(ExtractionCertificate {
        disturbance,
        outcome_deviation: dev,
        passed: disturbance <= tol.residual / 10.0 && dev <= tol.residual / 100.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment;
    use crate::linalg::real_diag;
    use crate::random::{random_density, rng_from_seed};
    use crate::structure::ki_decomposition;
    use num_complex::Complex64;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn commuting_pair() -> StatisticalExperiment {
        StatisticalExperiment::from_states(vec![
            real_diag(&[0.5, 0.5]),
            real_diag(&[1.0 / 3.0, 2.0 / 3.0]),
        ])
        .unwrap()
    }

    fn pure_pair() -> StatisticalExperiment {
        let plus = ComplexMatrix::from_element(2, 2, Complex64::new(0.5, 0.0));
        StatisticalExperiment::from_states(vec![real_diag(&[1.0, 0.0]), plus]).unwrap()
    }

    fn identical() -> StatisticalExperiment {
        let rho = random_density(&mut rng_from_seed(12), 3);
        StatisticalExperiment::from_states(vec![rho.clone(), rho]).unwrap()
    }

    #[test]
    fn classical_part_examples() {
        let c = classical_part(&ki_decomposition(&identical(), &tol(), 0).unwrap());
        assert_eq!(c.size(), 1);
        assert!(c.distributions.iter().all(|q| (q[0] - 1.0).abs() < 1e-12));

        let c = classical_part(&ki_decomposition(&commuting_pair(), &tol(), 0).unwrap());
        assert_eq!(c.size(), 2);
        let mut q0 = c.distributions[0].clone();
        let mut q1 = c.distributions[1].clone();
        q0.sort_by(f64::total_cmp);
        q1.sort_by(f64::total_cmp);
        assert!((q0[0] - 0.5).abs() < 1e-12 && (q0[1] - 0.5).abs() < 1e-12);
        assert!((q1[0] - 1.0 / 3.0).abs() < 1e-12 && (q1[1] - 2.0 / 3.0).abs() < 1e-12);

        let c = classical_part(&ki_decomposition(&pure_pair(), &tol(), 0).unwrap());
        assert_eq!(c.size(), 1);
    }

    #[test]
    fn broadcastability_verdicts() {
        let k = ki_decomposition(&commuting_pair(), &tol(), 0).unwrap();
        assert!(is_broadcastable(&k));
        let k = ki_decomposition(&identical(), &tol(), 0).unwrap();
        assert!(is_broadcastable(&k));
        let k = ki_decomposition(&pure_pair(), &tol(), 0).unwrap();
        assert!(!is_broadcastable(&k));
        assert!(matches!(
            broadcast_channel(&k),
            Err(Error::NotClassical { n: 2, .. })
        ));
    }

    #[test]
    fn broadcast_witnesses_reproduce_marginals() {
        for e in [commuting_pair(), identical()] {
            let k = ki_decomposition(&e, &tol(), 0).unwrap();
            let w = broadcast_channel(&k).unwrap();
            let cert = certify_broadcast(&w, &e, &tol()).unwrap();
            assert!(cert.worst_marginal() <= 1e-9, "{cert:?}");
            assert!(cert.cp && cert.tp);
            assert!(channels::is_cptp_unital(&w, &tol()).unwrap().unital);
        }
    }

    #[test]
    fn commuting_pair_copy_is_diagonal() {
        let e = commuting_pair();
        let k = ki_decomposition(&e, &tol(), 0).unwrap();
        let w = broadcast_channel(&k).unwrap();
        let out = w.apply(&e.states[1], Picture::Schrodinger).unwrap();
        // Classical copy: diag(1/3, 0, 0, 2/3) in the |00>,|01>,|10>,|11> basis.
        let want = real_diag(&[1.0 / 3.0, 0.0, 0.0, 2.0 / 3.0]);
        assert!((out - want).norm() < 1e-12);
    }

    #[test]
    fn broadcast_off_support() {
        let e = StatisticalExperiment::from_states(vec![
            real_diag(&[0.5, 0.5, 0.0]),
            real_diag(&[0.2, 0.8, 0.0]),
        ])
        .unwrap();
        let k = ki_decomposition(&e, &tol(), 0).unwrap();
        let w = broadcast_channel(&k).unwrap();
        let cert = certify_broadcast(&w, &e, &tol()).unwrap();
        assert!(cert.cp && cert.tp && cert.worst_marginal() <= 1e-9);
    }

    #[test]
    fn extraction_examples() {
        let k = ki_decomposition(&pure_pair(), &tol(), 0).unwrap();
        let inst = extraction_instrument(&k).unwrap();
        let id = Superoperator::identity(2);
        let probes = crate::random::hermitian_probes(3, 2, 4);
        assert!(channels::probe_distance(&inst.pinching, &id, &probes).unwrap() < 1e-12);
        assert!(inst.outcomes.distributions.iter().all(|q| (q[0] - 1.0).abs() < 1e-12));

        let e = commuting_pair();
        let k = ki_decomposition(&e, &tol(), 0).unwrap();
        let cert = certify_extraction(&k, &e, &tol()).unwrap();
        assert!(cert.passed, "{cert:?}");

        let (e, truth) = experiment::gen_planted(&[(1, 2), (2, 1), (1, 1)], 3, 5).unwrap();
        let k = ki_decomposition(&e, &tol(), 0).unwrap();
        let cert = certify_extraction(&k, &e, &tol()).unwrap();
        assert!(cert.passed, "{cert:?}");
        // Planted q as an independent oracle: match blocks by dims and q.
        let c = classical_part(&k);
        for (i, b) in k.blocks.iter().enumerate() {
            let best = (0..truth.block_dims.len())
                .filter(|&j| truth.block_dims[j] == (b.n, b.m))
                .map(|j| {
                    (0..e.num_labels())
                        .map(|t| (truth.planted_q[t][j] - c.distributions[t][i]).abs())
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-8);
        }
    }

    #[test]
    fn classical_json_shape() {
        let k = ki_decomposition(&commuting_pair(), &tol(), 0).unwrap();
        let j = serde_json::to_value(classical_part(&k).to_json()).unwrap();
        assert_eq!(j["index"], serde_json::json!([0, 1]));
        assert_eq!(j["distributions"]["t0"].as_array().unwrap().len(), 2);
    }
}
