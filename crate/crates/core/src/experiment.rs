//! Statistical experiments: finite labelled families of density matrices.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, MatrixJson, Tolerance};
use crate::minsuff;
use crate::random::{self, rng_from_seed};

/// A labelled family of density matrices ρθ on ℂ^d with optional mixing weights.
#[derive(Debug, Clone)]
pub struct StatisticalExperiment {
    pub dim: usize,
    pub labels: Vec<String>,
    pub states: Vec<ComplexMatrix>,
    pub weights: Option<Vec<f64>>,
}

impl StatisticalExperiment {
    pub fn new(
        labels: Vec<String>,
        states: Vec<ComplexMatrix>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("experiment has no labels".into()));
        }
        if labels.len() != states.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels but {} states",
                labels.len(),
                states.len()
            )));
        }
        let dim = states[0].nrows();
        for (l, s) in labels.iter().zip(&states) {
            if s.shape() != (dim, dim) {
                return Err(Error::ShapeMismatch(format!(
                    "state '{l}' has shape {:?}, expected {dim}x{dim}",
                    s.shape()
                )));
            }
        }
        if let Some(w) = &weights {
            if w.len() != labels.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} weights for {} labels",
                    w.len(),
                    labels.len()
                )));
            }
        }
        Ok(StatisticalExperiment {
            dim,
            labels,
            states,
            weights,
        })
    }

    /// Builds an experiment with labels `t0, t1, …`.
    pub fn from_states(states: Vec<ComplexMatrix>) -> Result<Self> {
        let labels = (0..states.len()).map(|k| format!("t{k}")).collect();
        Self::new(labels, states, None)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// The stored weights, or uniform weights when none were given.
    pub fn effective_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.labels.len() as f64; self.labels.len()],
        }
    }

    pub fn state(&self, label: &str) -> Option<&ComplexMatrix> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| &self.states[k])
    }

    /// The experiment with every state conjugated, ρθ ↦ UρθU†.
    pub fn conjugate(&self, u: &ComplexMatrix) -> StatisticalExperiment {
        let ud = u.adjoint();
        StatisticalExperiment {
            dim: u.nrows(),
            labels: self.labels.clone(),
            states: self.states.iter().map(|s| u * s * &ud).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<StatisticalExperiment> {
        Self::new(self.labels.clone(), self.states.clone(), Some(weights))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: ExperimentJson = serde_json::from_str(s)?;
        j.into_experiment()
    }

    pub fn to_json(&self) -> ExperimentJson {
        ExperimentJson {
            dim: self.dim,
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            states: self
                .labels
                .iter()
                .zip(&self.states)
                .map(|(l, s)| (l.clone(), MatrixJson::from(s)))
                .collect(),
        }
    }
}

/// `{"dim": d, "labels": [...], "weights": [...], "states": {label: matrix}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentJson {
    pub dim: usize,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub states: BTreeMap<String, MatrixJson>,
}

impl ExperimentJson {
    pub fn into_experiment(self) -> Result<StatisticalExperiment> {
        let mut seen = HashSet::new();
        for l in &self.labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate label '{l}'")));
            }
        }
        if self.states.len() != self.labels.len() || self.labels.iter().any(|l| !self.states.contains_key(l)) {
            return Err(Error::InvalidInput(
                "state keys must match the label list exactly".into(),
            ));
        }
        let states = self
            .labels
            .iter()
            .map(|l| self.states[l].to_matrix())
            .collect::<Result<Vec<_>>>()?;
        let e = StatisticalExperiment::new(self.labels, states, self.weights)?;
        if e.dim != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "declared dim {} but states are {}x{}",
                self.dim, e.dim, e.dim
            )));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NotHermitian { label: String, deviation: f64 },
    NegativeEigenvalue { label: String, min_eigenvalue: f64 },
    TraceDeviation { label: String, trace: f64 },
    DuplicateLabel { label: String },
    InvalidWeights { reason: String },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let msg = self
            .violations
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidInput(format!("invalid experiment: {msg}")))
    }
}

/// Lists every violation of the density-matrix and label axioms.
pub fn validate(e: &StatisticalExperiment, tol: &Tolerance) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for l in &e.labels {
        if !seen.insert(l) {
            violations.push(Violation::DuplicateLabel { label: l.clone() });
        }
    }
    for (l, s) in e.labels.iter().zip(&e.states) {
        let dev = (s - s.adjoint()).norm();
        if dev > tol.residual * s.norm().max(1.0) {
            violations.push(Violation::NotHermitian {
                label: l.clone(),
                deviation: dev,
            });
            continue;
        }
        let tr = s.trace();
        if (tr.re - 1.0).abs() > tol.residual || tr.im.abs() > tol.residual {
            violations.push(Violation::TraceDeviation {
                label: l.clone(),
                trace: tr.re,
            });
        }
        match linalg::min_eigenvalue(s) {
            Ok(m) if m < -tol.residual => violations.push(Violation::NegativeEigenvalue {
                label: l.clone(),
                min_eigenvalue: m,
            }),
            Ok(_) => {}
            Err(_) => violations.push(Violation::NegativeEigenvalue {
                label: l.clone(),
                min_eigenvalue: f64::NAN,
            }),
        }
    }
    if let Some(w) = &e.weights {
        if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            violations.push(Violation::InvalidWeights {
                reason: "weights must be strictly positive".into(),
            });
        } else if (w.iter().sum::<f64>() - 1.0).abs() > tol.residual {
            violations.push(Violation::InvalidWeights {
                reason: format!("weights sum to {}", w.iter().sum::<f64>()),
            });
        }
    }
    ValidationReport { violations }
}

/// ρ̄ = Σθ wθ ρθ, using `weights` or else the experiment's effective weights.
pub fn average_state(e: &StatisticalExperiment, weights: Option<&[f64]>) -> ComplexMatrix {
    let owned;
    let w = match weights {
        Some(w) => w,
        None => {
            owned = e.effective_weights();
            &owned
        }
    };
    let mut avg = ComplexMatrix::zeros(e.dim, e.dim);
    for (s, &x) in e.states.iter().zip(w) {
        avg += s.scale(x);
    }
    avg
}

/// Restricts the experiment to the support of its average state.
///
/// Returns the restricted experiment and the isometry V: ℂ^{d′} → ℂ^d onto
/// the joint support; restricted states are V†ρθV. A faithful family comes
/// back unchanged with V = 1.
pub fn restrict_to_joint_support(
    e: &StatisticalExperiment,
    tol: &Tolerance,
) -> Result<(StatisticalExperiment, ComplexMatrix)> {
    let avg = average_state(e, None);
    let (proj, cols) = linalg::support_basis(&avg, tol)?;
    if proj.rank == e.dim {
        return Ok((e.clone(), linalg::identity(e.dim)));
    }
    let vd = cols.adjoint();
    let states = e.states.iter().map(|s| &vd * s * &cols).collect();
    let restricted = StatisticalExperiment {
        dim: proj.rank,
        labels: e.labels.clone(),
        states,
        weights: e.weights.clone(),
    };
    Ok((restricted, cols))
}

/// Planted decomposition used as generator ground truth.
#[derive(Debug, Clone)]
pub struct PlantedGroundTruth {
    pub block_dims: Vec<(usize, usize)>,
    pub planted_unitary: ComplexMatrix,
    pub planted_sigmas: Vec<ComplexMatrix>,
    /// `planted_q[θ][i]`.
    pub planted_q: Vec<Vec<f64>>,
    /// `planted_rho_i_theta[i][θ]`.
    pub planted_rho_i_theta: Vec<Vec<ComplexMatrix>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthJson {
    pub block_dims: Vec<(usize, usize)>,
    pub planted_unitary: MatrixJson,
    pub planted_sigmas: Vec<MatrixJson>,
    pub planted_q: BTreeMap<String, Vec<f64>>,
    pub planted_rho_i_theta: Vec<BTreeMap<String, MatrixJson>>,
}

impl PlantedGroundTruth {
    pub fn to_json(&self, labels: &[String]) -> GroundTruthJson {
        GroundTruthJson {
            block_dims: self.block_dims.clone(),
            planted_unitary: MatrixJson::from(&self.planted_unitary),
            planted_sigmas: self.planted_sigmas.iter().map(MatrixJson::from).collect(),
            planted_q: labels
                .iter()
                .cloned()
                .zip(self.planted_q.iter().cloned())
                .collect(),
            planted_rho_i_theta: self
                .planted_rho_i_theta
                .iter()
                .map(|per| {
                    labels
                        .iter()
                        .cloned()
                        .zip(per.iter().map(MatrixJson::from))
                        .collect()
                })
                .collect(),
        }
    }

    /// U (⊕ᵢ qθ(i) ρ_{i,θ} ⊗ σᵢ) U† for label index `theta`.
    pub fn assemble(&self, theta: usize) -> ComplexMatrix {
        let d: usize = self.block_dims.iter().map(|&(n, m)| n * m).sum();
        let mut inner = ComplexMatrix::zeros(d, d);
        let mut off = 0;
        for (i, &(n, m)) in self.block_dims.iter().enumerate() {
            let blk = linalg::kron(&self.planted_rho_i_theta[i][theta], &self.planted_sigmas[i])
                .scale(self.planted_q[theta][i]);
            inner.view_mut((off, off), (n * m, n * m)).copy_from(&blk);
            off += n * m;
        }
        &self.planted_unitary * inner * self.planted_unitary.adjoint()
    }
}

const PLANTED_ATTEMPTS: usize = 100;
/// Blocks with equal n whose q-ratio varies by less than this (relative) are
/// considered mergeable and redrawn.
const PLANTED_RATIO_SPREAD: f64 = 0.05;
/// Smallest admissible eigenvalue ratio of the planted average state.
const PLANTED_CONDITION: f64 = 1e-5;

/// Samples an experiment with a known Koashi–Imoto block structure.
///
/// States are ρθ = U (⊕ᵢ qθ(i) ρ_{i,θ} ⊗ σᵢ) U† with U Haar-random, σᵢ and
/// ρ_{i,θ} Ginibre density matrices and qθ flat-Dirichlet. Draws are rejected
/// when a block family fails to generate all of M_{nᵢ}, when two blocks with
/// the same nᵢ have an (almost) constant q-ratio, or when the average state is
/// badly conditioned.
pub fn gen_planted(
    block_dims: &[(usize, usize)],
    num_labels: usize,
    seed: u64,
) -> Result<(StatisticalExperiment, PlantedGroundTruth)> {
    if block_dims.is_empty() || block_dims.iter().any(|&(n, m)| n == 0 || m == 0) {
        return Err(Error::InvalidInput(
            "block dims must be a nonempty list of positive pairs".into(),
        ));
    }
    if num_labels == 0 {
        return Err(Error::InvalidInput("need at least one label".into()));
    }
    let d: usize = block_dims.iter().map(|&(n, m)| n * m).sum();
    if d > 64 {
        return Err(Error::InvalidInput(format!("total dimension {d} exceeds 64")));
    }
    let tol = Tolerance::default();
    let mut rng = rng_from_seed(seed);
    let nb = block_dims.len();
    for _ in 0..PLANTED_ATTEMPTS {
        let unitary = random::haar_unitary(&mut rng, d);
        let sigmas: Vec<ComplexMatrix> = block_dims
            .iter()
            .map(|&(_, m)| random::random_density(&mut rng, m))
            .collect();
        let q: Vec<Vec<f64>> = (0..num_labels)
            .map(|_| random::random_probability(&mut rng, nb))
            .collect();
        let rhos: Vec<Vec<ComplexMatrix>> = block_dims
            .iter()
            .map(|&(n, _)| {
                (0..num_labels)
                    .map(|_| random::random_density(&mut rng, n))
                    .collect()
            })
            .collect();

        if !blocks_irreducible(block_dims, &rhos, &tol) || !blocks_unmergeable(block_dims, &q) {
            continue;
        }
        let truth = PlantedGroundTruth {
            block_dims: block_dims.to_vec(),
            planted_unitary: unitary,
            planted_sigmas: sigmas,
            planted_q: q,
            planted_rho_i_theta: rhos,
        };
        let states: Vec<ComplexMatrix> = (0..num_labels).map(|t| truth.assemble(t)).collect();
        let e = StatisticalExperiment::from_states(states)?;
        let avg = average_state(&e, None);
        let eig = linalg::eigh(&avg, &tol)?;
        let (lo, hi) = (eig.values[0], eig.values[d - 1]);
        if lo < PLANTED_CONDITION * hi {
            continue;
        }
        return Ok((e, truth));
    }
    Err(Error::RetriesExhausted {
        what: "planted irreducibility",
        attempts: PLANTED_ATTEMPTS,
    })
}

fn blocks_irreducible(
    dims: &[(usize, usize)],
    rhos: &[Vec<ComplexMatrix>],
    tol: &Tolerance,
) -> bool {
    dims.iter().zip(rhos).all(|(&(n, _), fam)| {
        if n == 1 {
            return true;
        }
        let Ok(e) = StatisticalExperiment::from_states(fam.clone()) else {
            return false;
        };
        matches!(minsuff::minimal_sufficient_algebra(&e, None, tol), Ok(a) if a.dim() == n * n)
    })
}

fn blocks_unmergeable(dims: &[(usize, usize)], q: &[Vec<f64>]) -> bool {
    for i in 0..dims.len() {
        for j in (i + 1)..dims.len() {
            if dims[i].0 != dims[j].0 {
                continue;
            }
            let ratios: Vec<f64> = q.iter().map(|qt| qt[i] / qt[j]).collect();
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0, f64::max);
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            if (hi - lo) / mean < PLANTED_RATIO_SPREAD {
                return false;
            }
        }
    }
    true
}
