//! Linear maps on matrix algebras stored through their Choi matrix.
//!
//! A [`Superoperator`] holds a map Λ: M_in → M_out as
//! Choi(Λ) = Σ_{ij} E_ij ⊗ Λ(E_ij), with E_ij the matrix units of M_in.
//! [`Picture::Heisenberg`] evaluates Λ itself and [`Picture::Schrodinger`]
//! evaluates the trace dual Λ*: M_out → M_in defined by
//! trace(Λ*(ρ) X) = trace(ρ Λ(X)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::StatisticalExperiment;
use crate::linalg::{self, ComplexMatrix, MatrixJson, Tolerance, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    Heisenberg,
    Schrodinger,
}

#[derive(Debug, Clone)]
pub struct Superoperator {
    pub in_dim: usize,
    pub out_dim: usize,
    pub choi: ComplexMatrix,
    pub kraus: Option<Vec<ComplexMatrix>>,
}

impl Superoperator {
    pub fn from_fn<F>(in_dim: usize, out_dim: usize, f: F) -> Superoperator
    where
        F: Fn(&ComplexMatrix) -> ComplexMatrix,
    {
        let mut choi = ComplexMatrix::zeros(in_dim * out_dim, in_dim * out_dim);
        for i in 0..in_dim {
            for j in 0..in_dim {
                let img = f(&linalg::matrix_unit(in_dim, i, j));
                choi.view_mut((i * out_dim, j * out_dim), (out_dim, out_dim))
                    .copy_from(&img);
            }
        }
        Superoperator {
            in_dim,
            out_dim,
            choi,
            kraus: None,
        }
    }

    pub fn from_choi(in_dim: usize, out_dim: usize, choi: ComplexMatrix) -> Result<Superoperator> {
        if choi.shape() != (in_dim * out_dim, in_dim * out_dim) {
            return Err(Error::ShapeMismatch(format!(
                "choi matrix of a {in_dim}->{out_dim} map must be {n}x{n}",
                n = in_dim * out_dim
            )));
        }
        Ok(Superoperator {
            in_dim,
            out_dim,
            choi,
            kraus: None,
        })
    }

    /// Λ(X) = Σ_k K_k X K_k†, each K_k of shape out×in.
    pub fn from_kraus(kraus: Vec<ComplexMatrix>) -> Result<Superoperator> {
        let Some(first) = kraus.first() else {
            return Err(Error::InvalidInput("empty Kraus list".into()));
        };
        let (out_dim, in_dim) = first.shape();
        if kraus.iter().any(|k| k.shape() != (out_dim, in_dim)) {
            return Err(Error::ShapeMismatch("Kraus operators differ in shape".into()));
        }
        let mut op = Superoperator::from_fn(in_dim, out_dim, |x| kraus_apply(&kraus, x));
        op.kraus = Some(kraus);
        Ok(op)
    }

    pub fn identity(d: usize) -> Superoperator {
        Superoperator::from_kraus(vec![linalg::identity(d)]).expect("nonempty")
    }

    /// Heisenberg-picture unitary channel X ↦ U†XU.
    pub fn unitary_conjugation(u: &ComplexMatrix) -> Superoperator {
        Superoperator::from_kraus(vec![u.adjoint()]).expect("nonempty")
    }

    /// Pinching X ↦ Σ PᵢXPᵢ.
    pub fn pinching(projections: &[ComplexMatrix]) -> Result<Superoperator> {
        Superoperator::from_kraus(projections.to_vec())
    }

    /// Replacement map X ↦ trace(X)·σ.
    pub fn reprepare(sigma: &ComplexMatrix) -> Superoperator {
        let d = sigma.nrows();
        Superoperator::from_fn(d, d, |x| sigma * x.trace())
    }

    pub fn transpose(d: usize) -> Superoperator {
        Superoperator::from_fn(d, d, |x| x.transpose())
    }

    /// Λ(E_ij).
    pub fn image_of_unit(&self, i: usize, j: usize) -> ComplexMatrix {
        let o = self.out_dim;
        self.choi.view((i * o, j * o), (o, o)).into_owned()
    }

    pub fn apply(&self, x: &ComplexMatrix, picture: Picture) -> Result<ComplexMatrix> {
        let (n, o) = (self.in_dim, self.out_dim);
        match picture {
            Picture::Heisenberg => {
                if x.shape() != (n, n) {
                    return Err(Error::ShapeMismatch(format!(
                        "heisenberg input must be {n}x{n}, got {:?}",
                        x.shape()
                    )));
                }
                let mut out = ComplexMatrix::zeros(o, o);
                for j in 0..n {
                    for i in 0..n {
                        let c = x[(i, j)];
                        if c == ZERO {
                            continue;
                        }
                        out += self.choi.view((i * o, j * o), (o, o)) * c;
                    }
                }
                Ok(out)
            }
            Picture::Schrodinger => {
                if x.shape() != (o, o) {
                    return Err(Error::ShapeMismatch(format!(
                        "schrodinger input must be {o}x{o}, got {:?}",
                        x.shape()
                    )));
                }
                // Λ*(ρ)_{ji} = trace(ρ Λ(E_ij)) = Σ_ab ρ_ab Λ(E_ij)_ba
                let mut out = ComplexMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let blk = self.choi.view((i * o, j * o), (o, o));
                        let mut s = ZERO;
                        for a in 0..o {
                            for b in 0..o {
                                s += x[(a, b)] * blk[(b, a)];
                            }
                        }
                        out[(j, i)] = s;
                    }
                }
                Ok(out)
            }
        }
    }

    /// The trace dual Λ*, stored as a map in its own right.
    pub fn dual(&self) -> Superoperator {
        let (n, o) = (self.in_dim, self.out_dim);
        let mut choi = ComplexMatrix::zeros(n * o, n * o);
        // Choi(Λ*) block (a,b) entry (j,i) = Λ(E_ij)_{ba}
        for i in 0..n {
            for j in 0..n {
                for a in 0..o {
                    for b in 0..o {
                        choi[(a * n + j, b * n + i)] = self.choi[(i * o + b, j * o + a)];
                    }
                }
            }
        }
        Superoperator {
            in_dim: o,
            out_dim: n,
            choi,
            kraus: self
                .kraus
                .as_ref()
                .map(|ks| ks.iter().map(|k| k.adjoint()).collect()),
        }
    }

    /// self ∘ inner.
    pub fn compose(&self, inner: &Superoperator) -> Result<Superoperator> {
        if inner.out_dim != self.in_dim {
            return Err(Error::ShapeMismatch("compose: dimensions do not chain".into()));
        }
        Ok(Superoperator::from_fn(inner.in_dim, self.out_dim, |x| {
            let y = inner
                .apply(x, Picture::Heisenberg)
                .expect("dimensions checked above");
            self.apply(&y, Picture::Heisenberg)
                .expect("dimensions checked above")
        }))
    }

    /// ‖Choi(Σ K·K†) − Choi‖_F when Kraus operators are present.
    pub fn kraus_consistency(&self) -> Option<f64> {
        let ks = self.kraus.as_ref()?;
        let rebuilt = Superoperator::from_fn(self.in_dim, self.out_dim, |x| kraus_apply(ks, x));
        Some((rebuilt.choi - &self.choi).norm())
    }

    pub fn to_json(&self) -> ChannelJson {
        ChannelJson::Choi {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            choi: MatrixJson::from(&self.choi),
        }
    }

    pub fn from_json(j: &ChannelJson) -> Result<Superoperator> {
        match j {
            ChannelJson::Choi {
                in_dim,
                out_dim,
                choi,
            } => Superoperator::from_choi(*in_dim, *out_dim, choi.to_matrix()?),
            ChannelJson::Kraus { kraus } => {
                Superoperator::from_kraus(kraus.iter().map(|k| k.to_matrix()).collect::<Result<_>>()?)
            }
        }
    }
}

fn kraus_apply(kraus: &[ComplexMatrix], x: &ComplexMatrix) -> ComplexMatrix {
    let o = kraus[0].nrows();
    let mut out = ComplexMatrix::zeros(o, o);
    for k in kraus {
        out += k * x * k.adjoint();
    }
    out
}

/// `{"in_dim", "out_dim", "choi"}` or `{"kraus": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ChannelJson {
    Choi {
        in_dim: usize,
        out_dim: usize,
        choi: MatrixJson,
    },
    Kraus {
        kraus: Vec<MatrixJson>,
    },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChannelReport {
    pub cp: bool,
    pub tp: bool,
    pub unital: bool,
    pub min_choi_eigenvalue: f64,
    pub tp_defect: f64,
    pub unital_defect: f64,
}

/// CP via Choi positivity, TP via tr_out(Choi) = 1_in, unital via Λ(1) = 1_out.
pub fn is_cptp_unital(op: &Superoperator, tol: &Tolerance) -> Result<ChannelReport> {
    let min_choi_eigenvalue = linalg::min_eigenvalue(&op.choi)?;
    let tr_out = linalg::partial_trace(&op.choi, op.in_dim, op.out_dim, linalg::Side::B)?;
    let tp_defect = (tr_out - linalg::identity(op.in_dim)).norm();
    let one = op.apply(&linalg::identity(op.in_dim), Picture::Heisenberg)?;
    let unital_defect = (one - linalg::identity(op.out_dim)).norm();
    Ok(ChannelReport {
        cp: min_choi_eigenvalue >= -tol.residual,
        tp: tp_defect <= tol.residual,
        unital: unital_defect <= tol.residual,
        min_choi_eigenvalue,
        tp_defect,
        unital_defect,
    })
}

/// Pointwise Schwarz test: [[Λ(A†A), Λ(A†)], [Λ(A), 1]] ⪰ 0.
pub fn schwarz_block_check(op: &Superoperator, a: &ComplexMatrix, tol: &Tolerance) -> Result<bool> {
    let o = op.out_dim;
    let ad = a.adjoint();
    let aa = op.apply(&(&ad * a), Picture::Heisenberg)?;
    let l_ad = op.apply(&ad, Picture::Heisenberg)?;
    let l_a = op.apply(a, Picture::Heisenberg)?;
    let mut blk = ComplexMatrix::zeros(2 * o, 2 * o);
    blk.view_mut((0, 0), (o, o)).copy_from(&aa);
    blk.view_mut((0, o), (o, o)).copy_from(&l_ad);
    blk.view_mut((o, 0), (o, o)).copy_from(&l_a);
    blk.view_mut((o, o), (o, o)).copy_from(&linalg::identity(o));
    let scale = 1.0 + a.norm() * a.norm();
    Ok(linalg::min_eigenvalue(&blk)? >= -tol.residual * scale)
}

/// A is in the multiplicative domain iff Λ(A†A) = Λ(A†)Λ(A) and
/// Λ(AA†) = Λ(A)Λ(A†); the Schwarz inequality is checked on A as well.
pub fn multiplicative_domain_member(
    op: &Superoperator,
    a: &ComplexMatrix,
    tol: &Tolerance,
) -> Result<bool> {
    if !schwarz_block_check(op, a, tol)? {
        return Ok(false);
    }
    let ad = a.adjoint();
    let l_a = op.apply(a, Picture::Heisenberg)?;
    let l_ad = op.apply(&ad, Picture::Heisenberg)?;
    let left = (op.apply(&(&ad * a), Picture::Heisenberg)? - &l_ad * &l_a).norm();
    let right = (op.apply(&(a * &ad), Picture::Heisenberg)? - &l_a * &l_ad).norm();
    let bound = tol.residual * (1.0 + a.norm() * a.norm());
    Ok(left <= bound && right <= bound)
}

/// max_θ ‖Λ*(ρθ) − ρθ‖_tr.
pub fn max_disturbance(op: &Superoperator, e: &StatisticalExperiment) -> Result<f64> {
    if op.in_dim != e.dim || op.out_dim != e.dim {
        return Err(Error::ShapeMismatch(format!(
            "channel {}->{} does not act on dimension {}",
            op.in_dim, op.out_dim, e.dim
        )));
    }
    let mut worst = 0.0_f64;
    for s in &e.states {
        let out = op.apply(s, Picture::Schrodinger)?;
        worst = worst.max(linalg::trace_norm(&(out - s))?);
    }
    Ok(worst)
}

pub fn preserves_experiment(
    op: &Superoperator,
    e: &StatisticalExperiment,
    tol: &Tolerance,
) -> Result<bool> {
    Ok(max_disturbance(op, e)? <= tol.residual)
}

/// max over probes of ‖Λ₁(X) − Λ₂(X)‖_F in the Heisenberg picture.
pub fn probe_distance(
    a: &Superoperator,
    b: &Superoperator,
    probes: &[ComplexMatrix],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for x in probes {
        let d = a.apply(x, Picture::Heisenberg)? - b.apply(x, Picture::Heisenberg)?;
        worst = worst.max(d.norm());
    }
    Ok(worst)
}
