//! Seeded property suites shared by `kidecomp verify` and the acceptance tests.
//!
//! Each check returns a [`PropertyResult`] carrying the worst observed value
//! and the threshold it was held to, so reports show margins and not only
//! verdicts.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{self, Picture, Superoperator};
use crate::classical;
use crate::error::{Error, Result};
use crate::experiment::{self, PlantedGroundTruth, StatisticalExperiment};
use crate::linalg::{self, real_diag, ComplexMatrix, Tolerance};
use crate::minsuff;
use crate::opspace::OperatorAlgebra;
use crate::products;
use crate::random::{self, child_seed, rng_from_seed, SeededRng};
use crate::structure::{self, KIDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Structure,
    Minsuff,
    Classical,
    Products,
    Invariance,
    Fixtures,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Structure,
        Suite::Minsuff,
        Suite::Classical,
        Suite::Products,
        Suite::Invariance,
        Suite::Fixtures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Structure => "structure",
            Suite::Minsuff => "minsuff",
            Suite::Classical => "classical",
            Suite::Products => "products",
            Suite::Invariance => "invariance",
            Suite::Fixtures => "fixtures",
        }
    }

    pub fn parse(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{s}'")))
    }
}

/// Ensemble sizes for the seeded suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSizes {
    pub planted: usize,
    pub expectation: usize,
    pub probes: usize,
    pub products: usize,
    pub invariance: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        SuiteSizes {
            planted: 100,
            expectation: 50,
            probes: 200,
            products: 50,
            invariance: 25,
        }
    }
}

impl SuiteSizes {
    /// Parses `key=value` pairs separated by commas, starting from the defaults.
    pub fn parse(s: &str) -> Result<SuiteSizes> {
        let mut out = SuiteSizes::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("size entry '{part}' is not key=value")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("size '{v}' is not a nonnegative integer")))?;
            match k.trim() {
                "planted" => out.planted = v,
                "expectation" => out.expectation = v,
                "probes" => out.probes = v,
                "products" => out.products = v,
                "invariance" => out.invariance = v,
                other => return Err(Error::InvalidInput(format!("unknown size key '{other}'"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub suite: Suite,
    pub passed: bool,
    /// Worst value observed over the ensemble (non-finite values mean the
    /// property could not be evaluated).
    pub worst: f64,
    pub threshold: f64,
    pub instances: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl PropertyResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}/{}: worst {:.3e} (threshold {:.1e}, {} instances){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.name,
            self.worst,
            self.threshold,
            self.instances,
            self.detail
                .as_ref()
                .map(|d| format!(" - {d}"))
                .unwrap_or_default()
        )
    }
}

/// Running maximum of a per-instance quantity against an upper threshold.
struct Tracker {
    name: &'static str,
    suite: Suite,
    threshold: f64,
    worst: f64,
    instances: usize,
    detail: Option<String>,
}

impl Tracker {
    fn new(name: &'static str, suite: Suite, threshold: f64) -> Tracker {
        Tracker {
            name,
            suite,
            threshold,
            worst: 0.0,
            instances: 0,
            detail: None,
        }
    }

    fn record(&mut self, value: f64, instance: &str) {
        self.instances += 1;
        let bad = !(value <= self.threshold);
        if bad && self.detail.is_none() {
            self.detail = Some(format!("first failure at {instance}: {value:.3e}"));
        }
        if value.is_nan() || value > self.worst {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
    }

    fn error(&mut self, err: &Error, instance: &str) {
        self.instances += 1;
        self.worst = f64::INFINITY;
        if self.detail.is_none() {
            self.detail = Some(format!("{instance}: {err}"));
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.into(),
            suite: self.suite,
            passed: self.worst <= self.threshold && self.instances > 0,
            worst: self.worst,
            threshold: self.threshold,
            instances: self.instances,
            detail: self.detail,
        }
    }
}

/// Block dims for the planted ensemble: 1–4 blocks, n ≤ 4, m ≤ 3, Σ n·m ≤ `max_dim`.
pub fn sample_block_dims(rng: &mut SeededRng, max_dim: usize) -> Vec<(usize, usize)> {
    loop {
        let blocks = rng.random_range(1..=4);
        let dims: Vec<(usize, usize)> = (0..blocks)
            .map(|_| (rng.random_range(1..=4), rng.random_range(1..=3)))
            .collect();
        let total: usize = dims.iter().map(|&(n, m)| n * m).sum();
        if total <= max_dim {
            return dims;
        }
    }
}

/// Planted instance `index` of the ensemble rooted at `seed`.
pub fn planted_instance(
    seed: u64,
    index: u64,
    max_dim: usize,
    labels: std::ops::RangeInclusive<usize>,
) -> Result<(StatisticalExperiment, PlantedGroundTruth)> {
    let root = child_seed(seed, index);
    let mut last = None;
    for attempt in 0..8 {
        let mut rng = rng_from_seed(child_seed(root, attempt));
        let dims = sample_block_dims(&mut rng, max_dim);
        let k = rng.random_range(labels.clone());
        match experiment::gen_planted(&dims, k, rng.random()) {
            Ok(x) => return Ok(x),
            Err(e @ Error::RetriesExhausted { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn sorted_dims(mut v: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    v.sort_unstable();
    v
}

/// max over labels of |planted q − recovered q| after matching blocks with
/// equal dims (greedy on distance; ties among equal dims are resolved by q).
pub fn planted_q_distance(k: &KIDecomposition, truth: &PlantedGroundTruth) -> f64 {
    let nl = k.labels.len();
    let mut used = vec![false; truth.block_dims.len()];
    let mut worst = 0.0_f64;
    for b in &k.blocks {
        let mut best: Option<(usize, f64)> = None;
        for (j, &dims) in truth.block_dims.iter().enumerate() {
            if used[j] || dims != (b.n, b.m) {
                continue;
            }
            let dist = (0..nl)
                .map(|t| (truth.planted_q[t][j] - b.q[t]).abs())
                .fold(0.0, f64::max);
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        match best {
            Some((j, dist)) => {
                used[j] = true;
                worst = worst.max(dist);
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Planted recovery, run on a single worker thread. With a `time_budget_s`,
/// wall time is reported as an extra property; without one the result is a
/// deterministic function of the seed.
pub fn structure_suite(
    seed: u64,
    sizes: &SuiteSizes,
    tol: &Tolerance,
    time_budget_s: Option<f64>,
) -> Vec<PropertyResult> {
    let s = Suite::Structure;
    let mut dims = Tracker::new("planted dims recovered", s, 0.0);
    let mut resid = Tracker::new("reconstruction residual", s, tol.residual);
    let mut qdist = Tracker::new("planted q agreement", s, 1e-6);
    let mut pinch = Tracker::new("pinching non-disturbance", s, tol.residual / 10.0);
    let mut counts = Tracker::new("block count identities", s, 0.0);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build();
    let run = || {
        let start = Instant::now();
        let mut out = Vec::with_capacity(sizes.planted);
        for i in 0..sizes.planted as u64 {
            let r = planted_instance(seed, i, 12, 2..=4).and_then(|(e, truth)| {
                let k = structure::ki_decomposition(&e, tol, child_seed(seed, i))?;
                Ok((e, truth, k))
            });
            out.push(r);
        }
        (out, start.elapsed().as_secs_f64())
    };
    let (results, secs) = match pool {
        Ok(p) => p.install(run),
        Err(_) => run(),
    };

    for (i, r) in results.into_iter().enumerate() {
        let name = format!("planted #{i}");
        match r {
            Ok((e, truth, k)) => {
                let ok = sorted_dims(k.block_dims()) == sorted_dims(truth.block_dims.clone());
                dims.record(if ok { 0.0 } else { 1.0 }, &name);
                match k.reconstruction_residuals(&e) {
                    Ok(v) => resid.record(v.into_iter().fold(0.0, f64::max), &name),
                    Err(err) => resid.error(&err, &name),
                }
                qdist.record(if ok { planted_q_distance(&k, &truth) } else { f64::INFINITY }, &name);
                pinch.record(pinching_disturbance(&k, &e), &name);
                let n2: usize = k.blocks.iter().map(|b| b.n * b.n).sum();
                let nm: usize = k.blocks.iter().map(|b| b.n * b.m).sum();
                let m0_dim: usize = truth.block_dims.iter().map(|&(n, _)| n * n).sum();
                counts.record((n2.abs_diff(m0_dim) + nm.abs_diff(k.support_dim())) as f64, &name);
            }
            Err(err) => {
                for t in [&mut dims, &mut resid, &mut qdist, &mut pinch, &mut counts] {
                    t.error(&err, &name);
                }
            }
        }
    }
    let mut out = vec![
        dims.finish(),
        resid.finish(),
        qdist.finish(),
        pinch.finish(),
        counts.finish(),
    ];
    if let Some(budget) = time_budget_s {
        let mut time = Tracker::new("runtime seconds", s, budget);
        time.record(secs, "ensemble");
        out.push(time.finish());
    }
    out
}

fn pinching_disturbance(k: &KIDecomposition, e: &StatisticalExperiment) -> f64 {
    let projections = classical::source_projections(k);
    let mut worst = 0.0_f64;
    for s in &e.states {
        let mut out = ComplexMatrix::zeros(e.dim, e.dim);
        for p in &projections {
            out += p * s * p;
        }
        worst = worst.max(linalg::trace_norm(&(out - s)).unwrap_or(f64::INFINITY));
    }
    worst
}

/// Per-instance measurements of the conditional expectation.
#[derive(Debug, Clone, Copy, Default)]
struct ExpectationMetrics {
    agreement: f64,
    state_preservation: f64,
    idempotence: f64,
    unitality: f64,
    choi_negativity: f64,
    module: f64,
    range: f64,
    kms: f64,
    ergodic: f64,
}

fn expectation_metrics(
    e: &StatisticalExperiment,
    tol: &Tolerance,
    seed: u64,
    probes: usize,
    inject_bug: bool,
) -> Result<ExpectationMetrics> {
    let k = structure::ki_decomposition(e, tol, seed)?;
    let v = &k.support_isometry;
    let vd = v.adjoint();
    let er = StatisticalExperiment {
        dim: k.support_dim(),
        labels: e.labels.clone(),
        states: e.states.iter().map(|s| &vd * s * v).collect(),
        weights: e.weights.clone(),
    };
    let dp = er.dim;
    let m0 = minsuff::minimal_sufficient_algebra(&er, None, tol)?;
    let rho_bar = experiment::average_state(&er, None);
    let mut cond = minsuff::conditional_expectation(&m0, &rho_bar, tol)?;
    if inject_bug {
        cond.choi = -cond.choi;
        cond.kraus = None;
    }
    let explicit = structure::explicit_conditional_expectation(&k);
    let probes = random::hermitian_probes(child_seed(seed, 0xE), dp, probes);
    let apply = |op: &Superoperator, x: &ComplexMatrix| op.apply(x, Picture::Heisenberg);

    let mut m = ExpectationMetrics {
        agreement: channels::probe_distance(&cond, &explicit, &probes)?,
        ..Default::default()
    };
    let report = channels::is_cptp_unital(&cond, tol)?;
    m.unitality = report.unital_defect;
    m.choi_negativity = (-report.min_choi_eigenvalue).max(0.0);

    let blocks: Vec<ComplexMatrix> = k.blocks.iter().map(|b| b.projection.matrix.clone()).collect();
    let pinch = Superoperator::pinching(&blocks)?;
    let sqrt_bar = linalg::spectral_apply(&rho_bar, |x| num_complex::Complex64::new(x.max(0.0).sqrt(), 0.0), false, tol)?;

    let images: Vec<ComplexMatrix> = probes.iter().map(|a| apply(&cond, a)).collect::<Result<_>>()?;
    for (idx, (a, ea)) in probes.iter().zip(&images).enumerate() {
        for s in &er.states {
            m.state_preservation = m
                .state_preservation
                .max(((s * ea).trace() - (s * a).trace()).norm());
        }
        m.idempotence = m.idempotence.max((apply(&cond, ea)? - ea).norm());
        m.range = m.range.max(m0.residual(ea));

        // Module property with M₀ elements taken from neighbouring probe images.
        let b1 = &images[(idx + 1) % images.len()];
        let b2 = &images[(idx + 2) % images.len()];
        let (n1, n2) = (b1.norm().max(1e-300), b2.norm().max(1e-300));
        let (b1, b2) = (b1.unscale(n1), b2.unscale(n2));
        let lhs = apply(&cond, &(&b1 * a * &b2))?;
        m.module = m.module.max((lhs - &b1 * ea * &b2).norm());

        // KMS symmetry against the next probe.
        let y = &probes[(idx + 1) % probes.len()];
        let ey = &images[(idx + 1) % images.len()];
        let l = (&sqrt_bar * ea.adjoint() * &sqrt_bar * y).trace();
        let r = (&sqrt_bar * a.adjoint() * &sqrt_bar * ey).trace();
        m.kms = m.kms.max((l - r).norm());

        let after_pinch = apply(&cond, &apply(&pinch, a)?)?;
        let pinch_after = apply(&pinch, ea)?;
        m.ergodic = m
            .ergodic
            .max((after_pinch - ea).norm())
            .max((pinch_after - ea).norm());
    }
    for b in &m0.basis {
        m.range = m.range.max((apply(&cond, b)? - b).norm());
    }
    Ok(m)
}

/// Conditional-expectation cross-checks on planted instances.
pub fn minsuff_suite(seed: u64, sizes: &SuiteSizes, tol: &Tolerance, inject_bug: bool) -> Vec<PropertyResult> {
    let s = Suite::Minsuff;
    let root = child_seed(seed, 0x2000);
    let metrics: Vec<(String, Result<ExpectationMetrics>)> = (0..sizes.expectation as u64)
        .into_par_iter()
        .map(|i| {
            let name = format!("expectation #{i}");
            let r = planted_instance(root, i, 12, 2..=4)
                .and_then(|(e, _)| expectation_metrics(&e, tol, child_seed(root, i), sizes.probes, inject_bug));
            (name, r)
        })
        .collect();
    let mut trackers = [
        Tracker::new("expectation agreement", s, 10.0 * tol.residual),
        Tracker::new("state preservation", s, tol.residual),
        Tracker::new("idempotence", s, tol.residual),
        Tracker::new("unitality", s, tol.residual),
        Tracker::new("choi positivity", s, tol.residual / 10.0),
        Tracker::new("module property", s, tol.residual),
        Tracker::new("range and fixed points", s, tol.residual),
        Tracker::new("kms symmetry", s, tol.residual),
        Tracker::new("ergodic consistency", s, tol.residual),
    ];
    for (name, r) in metrics {
        match r {
            Ok(m) => {
                let vals = [
                    m.agreement,
                    m.state_preservation,
                    m.idempotence,
                    m.unitality,
                    m.choi_negativity,
                    m.module,
                    m.range,
                    m.kms,
                    m.ergodic,
                ];
                for (t, v) in trackers.iter_mut().zip(vals) {
                    t.record(v, &name);
                }
            }
            Err(err) => trackers.iter_mut().for_each(|t| t.error(&err, &name)),
        }
    }
    trackers.into_iter().map(Tracker::finish).collect()
}

/// Curated fixtures shared by several suites.
pub mod fixtures {
    use super::*;
    use num_complex::Complex64;

    pub fn commuting_pair() -> StatisticalExperiment {
        StatisticalExperiment::from_states(vec![
            real_diag(&[0.5, 0.5]),
            real_diag(&[1.0 / 3.0, 2.0 / 3.0]),
        ])
        .expect("fixture is well formed")
    }

    /// |0⟩⟨0| and |+⟩⟨+|.
    pub fn pure_pair() -> StatisticalExperiment {
        let plus = ComplexMatrix::from_element(2, 2, Complex64::new(0.5, 0.0));
        StatisticalExperiment::from_states(vec![real_diag(&[1.0, 0.0]), plus])
            .expect("fixture is well formed")
    }

    pub fn identical(seed: u64, d: usize) -> StatisticalExperiment {
        let rho = random::random_density(&mut rng_from_seed(seed), d);
        StatisticalExperiment::from_states(vec![rho.clone(), rho]).expect("fixture is well formed")
    }
}

/// Extraction on planted instances and broadcasting on curated fixtures.
pub fn classical_suite(seed: u64, sizes: &SuiteSizes, tol: &Tolerance) -> Vec<PropertyResult> {
    let s = Suite::Classical;
    let root = child_seed(seed, 0x3000);
    let mut disturbance = Tracker::new("extraction non-disturbance", s, tol.residual / 10.0);
    let mut outcomes = Tracker::new("extraction outcomes", s, tol.residual / 100.0);
    let mut planted_q = Tracker::new("extraction planted q", s, tol.residual);

    let runs: Vec<(String, Result<(classical::ExtractionCertificate, f64)>)> = (0..sizes.planted as u64)
        .into_par_iter()
        .map(|i| {
            let name = format!("extraction #{i}");
            let r = planted_instance(root, i, 12, 2..=4).and_then(|(e, truth)| {
                let k = structure::ki_decomposition(&e, tol, child_seed(root, i))?;
                let cert = classical::certify_extraction(&k, &e, tol)?;
                Ok((cert, planted_q_distance(&k, &truth)))
            });
            (name, r)
        })
        .collect();
    let mut fixture_runs = Vec::new();
    for (name, e) in [
        ("identical", fixtures::identical(seed, 3)),
        ("commuting pair", fixtures::commuting_pair()),
        ("pure pair", fixtures::pure_pair()),
    ] {
        let r = structure::ki_decomposition(&e, tol, seed)
            .and_then(|k| classical::certify_extraction(&k, &e, tol).map(|c| (c, 0.0)));
        fixture_runs.push((name.to_string(), r));
    }
    for (name, r) in runs.into_iter().chain(fixture_runs) {
        match r {
            Ok((cert, q)) => {
                disturbance.record(cert.disturbance, &name);
                outcomes.record(cert.outcome_deviation, &name);
                planted_q.record(q, &name);
            }
            Err(err) => {
                for t in [&mut disturbance, &mut outcomes, &mut planted_q] {
                    t.error(&err, &name);
                }
            }
        }
    }
    let mut out = vec![disturbance.finish(), outcomes.finish(), planted_q.finish()];
    out.extend(broadcast_fixtures(seed, tol));
    out
}

/// Broadcast verdicts and witnesses on the curated fixtures.
pub fn broadcast_fixtures(seed: u64, tol: &Tolerance) -> Vec<PropertyResult> {
    let s = Suite::Classical;
    let mut verdicts = Tracker::new("broadcast verdicts", s, 0.0);
    let mut marginals = Tracker::new("broadcast marginals", s, tol.residual / 10.0);
    let mut channel = Tracker::new("broadcast witness is a channel", s, 0.0);
    let mut refusal = Tracker::new("no witness without classicality", s, 0.0);
    let cases = [
        ("identical", fixtures::identical(seed, 3), true),
        ("commuting pair", fixtures::commuting_pair(), true),
        ("pure pair", fixtures::pure_pair(), false),
    ];
    for (name, e, expected) in cases {
        let k = match structure::ki_decomposition(&e, tol, seed) {
            Ok(k) => k,
            Err(err) => {
                for t in [&mut verdicts, &mut marginals, &mut channel, &mut refusal] {
                    t.error(&err, name);
                }
                continue;
            }
        };
        let verdict = classical::is_broadcastable(&k);
        verdicts.record(if verdict == expected { 0.0 } else { 1.0 }, name);
        match classical::broadcast_channel(&k) {
            Ok(w) => {
                refusal.record(if verdict { 0.0 } else { 1.0 }, name);
                match classical::certify_broadcast(&w, &e, tol) {
                    Ok(c) => {
                        marginals.record(c.worst_marginal(), name);
                        channel.record(if c.cp && c.tp { 0.0 } else { 1.0 }, name);
                    }
                    Err(err) => {
                        marginals.error(&err, name);
                        channel.error(&err, name);
                    }
                }
            }
            Err(Error::NotClassical { .. }) => {
                refusal.record(if verdict { 1.0 } else { 0.0 }, name);
            }
            Err(err) => refusal.error(&err, name),
        }
    }
    vec![verdicts.finish(), marginals.finish(), channel.finish(), refusal.finish()]
}

/// Small experiment for the product ensembles; `kind` selects the family.
pub fn product_factor(seed: u64) -> Result<StatisticalExperiment> {
    let mut rng = rng_from_seed(seed);
    let kind = rng.random_range(0..4);
    let labels = rng.random_range(2..=3);
    match kind {
        // Generic states: minimal sufficient (M₀ = M_d) with probability one.
        0 => {
            let d = rng.random_range(1..=4);
            StatisticalExperiment::from_states(
                (0..labels).map(|_| random::random_density(&mut rng, d)).collect(),
            )
        }
        // Planted block structure.
        1 => {
            let dims = sample_block_dims(&mut rng, 4);
            experiment::gen_planted(&dims, labels, rng.random()).map(|(e, _)| e)
        }
        // Not faithful: generic states on a proper subspace.
        2 => {
            let d = rng.random_range(2..=4);
            let u = random::haar_unitary(&mut rng, d);
            let states = (0..labels)
                .map(|_| {
                    let mut s = ComplexMatrix::zeros(d, d);
                    let r = random::random_density(&mut rng, d - 1);
                    s.view_mut((0, 0), (d - 1, d - 1)).copy_from(&r);
                    &u * s * u.adjoint()
                })
                .collect();
            StatisticalExperiment::from_states(states)
        }
        // Identical states.
        _ => {
            let d = rng.random_range(1..=4);
            let rho = random::random_density(&mut rng, d);
            StatisticalExperiment::from_states(vec![rho; labels])
        }
    }
}

/// Theorems on direct products over seeded pairs.
pub fn products_suite(seed: u64, sizes: &SuiteSizes, tol: &Tolerance) -> Vec<PropertyResult> {
    let s = Suite::Products;
    let root2 = child_seed(seed, 0x5000);
    let root3 = child_seed(seed, 0x6000);

    let ms: Vec<(String, Result<[bool; 3]>)> = (0..sizes.products as u64)
        .into_par_iter()
        .map(|i| {
            let name = format!("pair #{i}");
            let r = product_factor(child_seed(root2, 2 * i)).and_then(|e| {
                let f = product_factor(child_seed(root2, 2 * i + 1))?;
                products::check_product_minimal_sufficiency(&e, &f, tol)
            });
            (name, r)
        })
        .collect();
    let mut thm2 = Tracker::new("minimal sufficiency of products", s, 0.0);
    let mut seen = BTreeMap::new();
    for (name, r) in ms {
        match r {
            Ok([a, b, ab]) => {
                thm2.record(if ab == (a && b) { 0.0 } else { 1.0 }, &name);
                *seen.entry(ab).or_insert(0usize) += 1;
            }
            Err(err) => thm2.error(&err, &name),
        }
    }
    let mut coverage = Tracker::new("product verdict coverage", s, 0.0);
    coverage.record(if seen.len() == 2 { 0.0 } else { 1.0 }, "ensemble");

    let cls: Vec<(String, Result<products::ProductReport>)> = (0..sizes.products as u64)
        .into_par_iter()
        .map(|i| {
            let name = format!("pair #{i}");
            let r = planted_instance(root3, 2 * i, 4, 2..=3).and_then(|(e, _)| {
                let (f, _) = planted_instance(root3, 2 * i + 1, 4, 2..=3)?;
                products::check_product_classical(&e, &f, tol, child_seed(root3, i))
            });
            (name, r)
        })
        .collect();
    let mut dims = Tracker::new("product block dims", s, 0.0);
    let mut qres = Tracker::new("product q factorization", s, products::Q_FACTOR_TOLERANCE);
    for (name, r) in cls {
        match r {
            Ok(rep) => {
                let expected: Vec<(usize, usize)> = sorted_dims(
                    rep.left_dims
                        .iter()
                        .flat_map(|&(n, m)| rep.right_dims.iter().map(move |&(n2, m2)| (n * n2, m * m2)))
                        .collect(),
                );
                dims.record(if expected == rep.product_dims { 0.0 } else { 1.0 }, &name);
                qres.record(rep.q_factorization_residual.unwrap_or(f64::INFINITY), &name);
            }
            Err(err) => {
                dims.error(&err, &name);
                qres.error(&err, &name);
            }
        }
    }
    vec![thm2.finish(), coverage.finish(), dims.finish(), qres.finish()]
}

/// Weight independence and unitary covariance of M₀.
pub fn invariance_suite(seed: u64, sizes: &SuiteSizes, tol: &Tolerance) -> Vec<PropertyResult> {
    let s = Suite::Invariance;
    let root = child_seed(seed, 0x7000);
    let runs: Vec<(String, Result<(f64, f64, bool)>)> = (0..sizes.invariance as u64)
        .into_par_iter()
        .map(|i| {
            let name = format!("invariance #{i}");
            let r = planted_instance(root, i, 12, 2..=4).and_then(|(e, _)| {
                let mut rng = rng_from_seed(child_seed(root, 1000 + i));
                let w1 = random::random_probability(&mut rng, e.num_labels());
                let w2 = random::random_probability(&mut rng, e.num_labels());
                let a = minsuff::minimal_sufficient_algebra(&e, Some(&w1), tol)?;
                let b = minsuff::minimal_sufficient_algebra(&e, Some(&w2), tol)?;
                let weights = a.mutual_containment_residual(&b);

                let u = random::haar_unitary(&mut rng, e.dim);
                let eu = e.conjugate(&u);
                let m = minsuff::minimal_sufficient_algebra(&e, None, tol)?;
                let mu = minsuff::minimal_sufficient_algebra(&eu, None, tol)?;
                let covariance = OperatorAlgebra::conjugate(&m, &u).mutual_containment_residual(&mu);
                let k = structure::ki_decomposition(&e, tol, child_seed(root, i))?;
                let ku = structure::ki_decomposition(&eu, tol, child_seed(root, i))?;
                let same = sorted_dims(k.block_dims()) == sorted_dims(ku.block_dims());
                Ok((weights, covariance, same))
            });
            (name, r)
        })
        .collect();
    let mut weights = Tracker::new("weight independence", s, tol.residual);
    let mut covariance = Tracker::new("unitary covariance", s, tol.residual);
    let mut dims = Tracker::new("covariant block dims", s, 0.0);
    for (name, r) in runs {
        match r {
            Ok((w, c, same)) => {
                weights.record(w, &name);
                covariance.record(c, &name);
                dims.record(if same { 0.0 } else { 1.0 }, &name);
            }
            Err(err) => {
                for t in [&mut weights, &mut covariance, &mut dims] {
                    t.error(&err, &name);
                }
            }
        }
    }
    vec![weights.finish(), covariance.finish(), dims.finish()]
}

/// Hand-computed fixtures: cocycle matrices of the commuting pair and M₀
/// dimensions of the identical, commuting and pure-pair families.
pub fn fixtures_suite(seed: u64, tol: &Tolerance) -> Vec<PropertyResult> {
    let s = Suite::Fixtures;
    let mut cocycles = Tracker::new("commuting pair cocycles", s, 1e-12);
    match minsuff::cocycle_generators(&fixtures::commuting_pair(), None, tol) {
        Ok(cg) => {
            let d0 = (&cg.generators[0] - real_diag(&[6.0 / 5.0, 6.0 / 7.0])).norm();
            let d1 = (&cg.generators[1] - real_diag(&[4.0 / 5.0, 8.0 / 7.0])).norm();
            cocycles.record(d0.max(d1), "commuting pair");
        }
        Err(err) => cocycles.error(&err, "commuting pair"),
    }
    let mut dims = Tracker::new("fixture algebra dimensions", s, 0.0);
    for (name, e, want) in [
        ("identical", fixtures::identical(seed, 2), 1usize),
        ("commuting pair", fixtures::commuting_pair(), 2),
        ("pure pair", fixtures::pure_pair(), 4),
    ] {
        match minsuff::minimal_sufficient_algebra(&e, None, tol) {
            Ok(a) => dims.record(a.dim().abs_diff(want) as f64, name),
            Err(err) => dims.error(&err, name),
        }
    }
    vec![cocycles.finish(), dims.finish()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub sizes: SuiteSizes,
    pub tolerance: Tolerance,
    pub suites: Vec<Suite>,
    pub results: Vec<PropertyResult>,
    pub passed: bool,
}

/// Runs the selected suites (all when `selected` is empty).
pub fn run_suites(
    selected: &[Suite],
    sizes: &SuiteSizes,
    seed: u64,
    tol: &Tolerance,
    inject_bug: bool,
) -> SuiteReport {
    let suites: Vec<Suite> = if selected.is_empty() {
        Suite::ALL.to_vec()
    } else {
        let mut v = selected.to_vec();
        v.sort();
        v.dedup();
        v
    };
    let mut results = Vec::new();
    for &suite in &suites {
        results.extend(match suite {
            Suite::Structure => structure_suite(seed, sizes, tol, None),
            Suite::Minsuff => minsuff_suite(seed, sizes, tol, inject_bug),
            Suite::Classical => classical_suite(seed, sizes, tol),
            Suite::Products => products_suite(seed, sizes, tol),
            Suite::Invariance => invariance_suite(seed, sizes, tol),
            Suite::Fixtures => fixtures_suite(seed, tol),
        });
    }
    let passed = results.iter().all(|r| r.passed);
    SuiteReport {
        seed,
        sizes: *sizes,
        tolerance: *tol,
        suites,
        results,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteSizes {
        SuiteSizes {
            planted: 4,
            expectation: 3,
            probes: 20,
            products: 4,
            invariance: 3,
        }
    }

    #[test]
    fn sizes_parse() {
        let s = SuiteSizes::parse("planted=7, probes=3").unwrap();
        assert_eq!(s.planted, 7);
        assert_eq!(s.probes, 3);
        assert_eq!(s.products, SuiteSizes::default().products);
        assert!(SuiteSizes::parse("bogus=1").is_err());
        assert!(SuiteSizes::parse("planted").is_err());
    }

    #[test]
    fn sampler_respects_bounds() {
        let mut rng = rng_from_seed(1);
        for _ in 0..200 {
            let dims = sample_block_dims(&mut rng, 12);
            assert!((1..=4).contains(&dims.len()));
            assert!(dims.iter().all(|&(n, m)| (1..=4).contains(&n) && (1..=3).contains(&m)));
            assert!(dims.iter().map(|&(n, m)| n * m).sum::<usize>() <= 12);
        }
    }

    #[test]
    fn small_suites_pass() {
        let tol = Tolerance::default();
        let report = run_suites(&[], &small(), 3, &tol, false);
        let failures: Vec<String> = report.results.iter().filter(|r| !r.passed).map(|r| r.line()).collect();
        assert!(report.passed, "{failures:#?}");
    }

    #[test]
    fn injected_bug_breaks_idempotence() {
        let tol = Tolerance::default();
        let report = run_suites(&[Suite::Minsuff], &small(), 3, &tol, true);
        assert!(!report.passed);
        let idem = report.results.iter().find(|r| r.name == "idempotence").unwrap();
        assert!(!idem.passed);
    }
}
