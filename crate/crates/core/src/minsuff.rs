//! Minimal sufficient subalgebra and the state-preserving conditional expectation.
//!
//! For a faithful family with reference state ρ̄ = Σ wθ ρθ, a subalgebra is
//! sufficient exactly when it contains every Dθ = ρ̄^{-1/2} ρθ ρ̄^{-1/2} and is
//! invariant under X ↦ [log ρ̄, X]. The minimal sufficient subalgebra M₀ is
//! therefore the closure of {1, Dθ} under products, adjoints and that
//! bracket. The conditional expectation onto M₀ preserving every ρθ is the
//! orthogonal projection for ⟨X, Y⟩ = trace(ρ̄ X†Y).

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channels::{self, Picture, Superoperator};
use crate::error::{Error, Result};
use crate::experiment::{self, StatisticalExperiment};
use crate::linalg::{self, hs_inner, ComplexMatrix, Tolerance};
use crate::opspace::{self, OperatorAlgebra};
use crate::random;

#[derive(Debug, Clone)]
pub struct CocycleGenerators {
    /// ρ̄, faithful.
    pub reference: ComplexMatrix,
    /// log ρ̄.
    pub modular_generator: ComplexMatrix,
    /// Dθ = ρ̄^{-1/2} ρθ ρ̄^{-1/2}, one per label.
    pub generators: Vec<ComplexMatrix>,
    pub weights: Vec<f64>,
}

impl CocycleGenerators {
    /// ‖Σθ wθ Dθ − 1‖_F.
    pub fn weighted_sum_defect(&self) -> f64 {
        let d = self.reference.nrows();
        let mut s = ComplexMatrix::zeros(d, d);
        for (g, &w) in self.generators.iter().zip(&self.weights) {
            s += g.scale(w);
        }
        (s - linalg::identity(d)).norm()
    }
}

pub fn cocycle_generators(
    e: &StatisticalExperiment,
    weights: Option<&[f64]>,
    tol: &Tolerance,
) -> Result<CocycleGenerators> {
    let w = match weights {
        Some(w) => {
            if w.len() != e.num_labels() {
                return Err(Error::ShapeMismatch(format!(
                    "{} weights for {} labels",
                    w.len(),
                    e.num_labels()
                )));
            }
            w.to_vec()
        }
        None => e.effective_weights(),
    };
    let reference = experiment::average_state(e, Some(&w));
    let eig = linalg::eigh(&reference, tol)?;
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    let lmin = eig.values.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 || lmin <= tol.rank_cut * lmax {
        return Err(Error::NotFaithful {
            min_eigenvalue: lmin,
        });
    }
    let v = &eig.vectors;
    let vd = v.adjoint();
    let diag = |f: &dyn Fn(f64) -> f64| {
        ComplexMatrix::from_diagonal(&DVector::from_iterator(
            eig.values.len(),
            eig.values.iter().map(|&x| Complex64::new(f(x), 0.0)),
        ))
    };
    let inv_sqrt = v * diag(&|x| x.powf(-0.5)) * &vd;
    let modular_generator = linalg::hermitian_part(&(v * diag(&f64::ln) * &vd));
    let generators = e
        .states
        .iter()
        .map(|s| linalg::hermitian_part(&(&inv_sqrt * s * &inv_sqrt)))
        .collect();
    Ok(CocycleGenerators {
        reference,
        modular_generator,
        generators,
        weights: w,
    })
}

/// M₀: the *-algebra generated by {1, Dθ} and closed under [log ρ̄, ·].
pub fn minimal_sufficient_algebra(
    e: &StatisticalExperiment,
    weights: Option<&[f64]>,
    tol: &Tolerance,
) -> Result<OperatorAlgebra> {
    let cg = cocycle_generators(e, weights, tol)?;
    algebra_from_generators(&cg, tol)
}

pub fn algebra_from_generators(cg: &CocycleGenerators, tol: &Tolerance) -> Result<OperatorAlgebra> {
    let d = cg.reference.nrows();
    let mut seed = vec![linalg::identity(d)];
    seed.extend(cg.generators.iter().cloned());
    let seed = opspace::orthonormalize_span(&seed, d, tol)?;
    opspace::close_algebra(&seed, std::slice::from_ref(&cg.modular_generator), tol)
}

/// Number of fixed probes used for the internal module-property check.
const MODULE_CHECK_PROBES: usize = 3;
const MODULE_CHECK_SEED: u64 = 0x5eed_ce;

/// The trace(ρ̄ X†Y)-orthogonal projection onto `m0`, as a Heisenberg map.
///
/// Fails with `NotInvariant` when the projection is not unital, not CP or
/// violates the module property on a few fixed probes, which happens exactly
/// when `m0` is not invariant under the modular flow of ρ̄.
pub fn conditional_expectation(
    m0: &OperatorAlgebra,
    rho_bar: &ComplexMatrix,
    tol: &Tolerance,
) -> Result<Superoperator> {
    let d = m0.ambient_dim;
    if rho_bar.shape() != (d, d) {
        return Err(Error::ShapeMismatch("reference state dimension".into()));
    }
    let k = m0.dim();
    let rb: Vec<ComplexMatrix> = m0.basis.iter().map(|b| b * rho_bar).collect();
    // G_kl = trace(ρ̄ b_k† b_l) = ⟨b_k, b_l ρ̄⟩
    let gram = ComplexMatrix::from_fn(k, k, |a, b| hs_inner(&m0.basis[a], &rb[b]));
    let gram = linalg::hermitian_part(&gram);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotInvariant("weighted Gram matrix is not positive definite".into()))?;
    let basis = &m0.basis;
    let cond_exp = Superoperator::from_fn(d, d, |x| {
        let xr = x * rho_bar;
        let rhs = DVector::from_iterator(k, basis.iter().map(|b| hs_inner(b, &xr)));
        let c = chol.solve(&rhs);
        let mut out = ComplexMatrix::zeros(d, d);
        for (b, ci) in basis.iter().zip(c.iter()) {
            out += b * *ci;
        }
        out
    });

    let report = channels::is_cptp_unital(&cond_exp, tol)?;
    if !report.unital || !report.cp {
        return Err(Error::NotInvariant(format!(
            "projection is not a unital CP map (unital defect {:.3e}, min Choi eigenvalue {:.3e})",
            report.unital_defect, report.min_choi_eigenvalue
        )));
    }
    let probes = random::hermitian_probes(MODULE_CHECK_SEED, d, MODULE_CHECK_PROBES);
    let module = module_property_defect(&cond_exp, m0, &probes)?;
    if module > tol.residual {
        return Err(Error::NotInvariant(format!(
            "module property violated by {module:.3e}"
        )));
    }
    Ok(cond_exp)
}

/// max over probes A and basis pairs (b₁, b₂) of
/// ‖ℰ(b₁ A b₂) − b₁ ℰ(A) b₂‖_F / (‖A‖_F·‖b₁‖·‖b₂‖), with b's scaled to unit norm.
pub fn module_property_defect(
    cond_exp: &Superoperator,
    m0: &OperatorAlgebra,
    probes: &[ComplexMatrix],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    let step = (m0.dim() / 6).max(1);
    let sample: Vec<&ComplexMatrix> = m0.basis.iter().step_by(step).collect();
    for a in probes {
        let ea = cond_exp.apply(a, Picture::Heisenberg)?;
        let an = a.norm().max(1e-300);
        for b1 in &sample {
            for b2 in &sample {
                let lhs = cond_exp.apply(&(*b1 * a * *b2), Picture::Heisenberg)?;
                let rhs = *b1 * &ea * *b2;
                worst = worst.max((lhs - rhs).norm() / an);
            }
        }
    }
    Ok(worst)
}

/// True iff the family is faithful on its ambient space and M₀ = M_d.
pub fn is_minimal_sufficient(e: &StatisticalExperiment, tol: &Tolerance) -> Result<bool> {
    let avg = experiment::average_state(e, None);
    let support = linalg::support_projection(&avg, tol)?;
    if support.rank < e.dim {
        return Ok(false);
    }
    let m0 = minimal_sufficient_algebra(e, None, tol)?;
    Ok(m0.dim() == e.dim * e.dim)
}
