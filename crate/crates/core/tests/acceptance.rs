//! Acceptance gate: the eight criteria at their stated tolerances.
//!
//! Runs without the libtest harness so the verdict lines always print; the
//! process exits non-zero when any criterion fails.

use kidecomp::linalg::Tolerance;
use kidecomp::suite::{self, PropertyResult, SuiteSizes};

const SEED: u64 = 0;

struct Criterion {
    number: usize,
    title: &'static str,
    results: Vec<PropertyResult>,
}

impl Criterion {
    fn passed(&self) -> bool {
        !self.results.is_empty() && self.results.iter().all(|r| r.passed)
    }

    fn summary(&self) -> String {
        let worst = self
            .results
            .iter()
            .map(|r| format!("{} {:.2e}/{:.0e}", r.name, r.worst, r.threshold))
            .collect::<Vec<_>>()
            .join("; ");
        format!(
            "criterion {} [{}] {}: {}",
            self.number,
            if self.passed() { "PASS" } else { "FAIL" },
            self.title,
            worst
        )
    }
}

fn pick(results: &[PropertyResult], names: &[&str]) -> Vec<PropertyResult> {
    names
        .iter()
        .map(|n| {
            results
                .iter()
                .find(|r| r.name == *n)
                .cloned()
                .unwrap_or_else(|| panic!("suite did not report '{n}'"))
        })
        .collect()
}

fn main() {
    let tol = Tolerance::default();
    let sizes = SuiteSizes::default();
    assert_eq!(sizes.planted, 100);
    assert_eq!(sizes.expectation, 50);
    assert_eq!(sizes.probes, 200);
    assert_eq!(sizes.products, 50);
    assert_eq!(sizes.invariance, 25);

    let structure = suite::structure_suite(SEED, &sizes, &tol, Some(60.0));
    let minsuff = suite::minsuff_suite(SEED, &sizes, &tol, false);
    let classical = suite::classical_suite(SEED, &sizes, &tol);
    let products = suite::products_suite(SEED, &sizes, &tol);
    let invariance = suite::invariance_suite(SEED, &sizes, &tol);
    let fixtures = suite::fixtures_suite(SEED, &tol);

    // Bit stability: a second evaluation must agree to the last bit.
    let again = suite::fixtures_suite(SEED, &tol);
    let stable = PropertyResult {
        name: "bit-stable rerun".into(),
        suite: suite::Suite::Fixtures,
        passed: again == fixtures,
        worst: if again == fixtures { 0.0 } else { 1.0 },
        threshold: 0.0,
        instances: 1,
        detail: None,
    };
    let mut fixture_results = fixtures.clone();
    fixture_results.push(stable);

    let criteria = vec![
        Criterion {
            number: 1,
            title: "planted recovery",
            results: pick(
                &structure,
                &["planted dims recovered", "reconstruction residual", "runtime seconds"],
            ),
        },
        Criterion {
            number: 2,
            title: "conditional-expectation cross-check",
            results: pick(
                &minsuff,
                &[
                    "expectation agreement",
                    "state preservation",
                    "idempotence",
                    "unitality",
                    "choi positivity",
                    "module property",
                ],
            ),
        },
        Criterion {
            number: 3,
            title: "non-disturbing extraction",
            results: pick(&classical, &["extraction non-disturbance", "extraction outcomes"]),
        },
        Criterion {
            number: 4,
            title: "broadcastability fixtures",
            results: pick(
                &classical,
                &[
                    "broadcast verdicts",
                    "broadcast marginals",
                    "broadcast witness is a channel",
                    "no witness without classicality",
                ],
            ),
        },
        Criterion {
            number: 5,
            title: "minimal sufficiency of direct products",
            results: pick(&products, &["minimal sufficiency of products"]),
        },
        Criterion {
            number: 6,
            title: "KI decomposition of direct products",
            results: pick(&products, &["product block dims", "product q factorization"]),
        },
        Criterion {
            number: 7,
            title: "invariance",
            results: pick(
                &invariance,
                &["weight independence", "unitary covariance", "covariant block dims"],
            ),
        },
        Criterion {
            number: 8,
            title: "analytic fixtures",
            results: fixture_results,
        },
    ];

    let (mut failed, mut supporting) = (0, 0);
    for c in &criteria {
        println!("{}", c.summary());
        if !c.passed() {
            failed += 1;
            for r in c.results.iter().filter(|r| !r.passed) {
                println!("    {}", r.line());
            }
        }
    }
    // Supporting properties measured alongside the criteria.
    for r in structure
        .iter()
        .chain(&minsuff)
        .chain(&classical)
        .chain(&products)
        .filter(|r| !r.passed)
    {
        println!("    supporting property failed: {}", r.line());
        supporting += 1;
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed + supporting > 0 {
        std::process::exit(1);
    }
}
