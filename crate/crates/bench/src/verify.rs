//! Self-contained property checks over small instances, exposed through the
//! `verify` subcommand: estimator unbiasedness, the subgradient bound
//! enumeration, and exactly-once delay routing.

use nonsub::estimator::{build_mixture, exact_expectation};
use nonsub::feedback::{generate_delays, DelayKind, DelaySchedule, FeedbackRouter};
use nonsub::lovasz::{check_subgradient_bounds, decompose, lovasz_subgradient, FractionalPoint};
use nonsub::setfn::{analyze_dr_ratios, GroundSet, Table};
use nonsub::sparsebench::{generate_round, BenchConfig, RoundOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Result of one named check.
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn bench_instance(n: usize, seed: u64) -> RoundOracle {
    let cfg = BenchConfig {
        n,
        samples: 32,
        sparsity: 2.min(n),
        gamma: 0.1,
        noise_std: 0.1,
        horizon: 1,
        seed,
    };
    RoundOracle::new(generate_round(&cfg, 1).expect("round data"), cfg.gamma).expect("oracle")
}

/// Exact unbiasedness of the one-point estimator on random tabular
/// functions: the analytically summed expectation must equal the chain
/// subgradient componentwise.
pub fn check_unbiasedness(instances: usize) -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for trial in 0..instances {
        let n = rng.random_range(1..=8usize);
        let ground = GroundSet::new(n).unwrap();
        let mut values: Vec<f64> =
            (0..(1usize << n)).map(|_| rng.random_range(-4.0..4.0)).collect();
        values[0] = 0.0;
        let f = Table::new(ground, values).unwrap();
        let x =
            FractionalPoint::new((0..n).map(|_| rng.random()).collect()).unwrap();
        let chain = decompose(&x);
        let mu = [0.05, 0.2, 0.5][trial % 3];
        let dist = build_mixture(&chain, mu).unwrap();
        let expect = exact_expectation(&f, &chain, &dist);
        let grad = lovasz_subgradient(&f, &x);
        for (e, g) in expect.iter().zip(&grad) {
            worst = worst.max((e - g).abs());
        }
    }
    CheckResult {
        name: "estimator-unbiasedness",
        passed: worst <= 1e-10,
        detail: format!("{instances} instances, worst deviation {worst:.3e}"),
    }
}

/// Subgradient bound enumeration on benchmark instances with analyzer-derived
/// factors: `Σ_{i∈A} g_i ≤ (1/α) f̄(A) − β f̲(A)` for every subset.
pub fn check_subgradient_bound(instances: usize) -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0xbeef);
    let mut violations = 0usize;
    for trial in 0..instances {
        let oracle = bench_instance(6, 1000 + trial as u64);
        let parts = oracle.parts();
        let alpha = analyze_dr_ratios(&parts.upper).unwrap().alpha;
        let beta = analyze_dr_ratios(&parts.lower).unwrap().beta;
        let x =
            FractionalPoint::new((0..6).map(|_| rng.random()).collect()).unwrap();
        let report = check_subgradient_bounds(&parts, alpha, beta, &x, 1e-9).unwrap();
        violations += report.subset_violations.len();
        if report.extension_violation.is_some() {
            violations += 1;
        }
    }
    CheckResult {
        name: "subgradient-bound",
        passed: violations == 0,
        detail: format!("{instances} instances × 64 subsets, {violations} violations"),
    }
}

/// Exactly-once routing over random schedules.
pub fn check_routing(schedules: usize) -> CheckResult {
    let mut meta = ChaCha12Rng::seed_from_u64(0xf00d);
    for _ in 0..schedules {
        let horizon = meta.random_range(1..=200usize);
        let max = meta.random_range(1..=50usize);
        let schedule =
            DelaySchedule::new(DelayKind::Uniform { max, seed: meta.random() }, horizon);
        let delays = generate_delays(&schedule).unwrap();
        let mut router = FeedbackRouter::new(horizon);
        for (t, &d) in delays.iter().enumerate() {
            router.route(t + 1, d).unwrap();
        }
        let mut seen = vec![false; horizon + 1];
        let mut count = 0usize;
        for t in 1..=horizon {
            for k in router.arrivals(t) {
                if seen[k] || k + delays[k - 1] - 1 != t {
                    return CheckResult {
                        name: "delay-routing",
                        passed: false,
                        detail: format!("round {k} misrouted (T={horizon})"),
                    };
                }
                seen[k] = true;
                count += 1;
            }
        }
        if count + router.overdue().len() != horizon {
            return CheckResult {
                name: "delay-routing",
                passed: false,
                detail: format!("conservation broken at T={horizon}"),
            };
        }
    }
    CheckResult {
        name: "delay-routing",
        passed: true,
        detail: format!("{schedules} random schedules, exactly-once delivery"),
    }
}

/// The full verify suite.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_unbiasedness(30),
        check_subgradient_bound(5),
        check_routing(200),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_suite_is_green() {
        for check in run_all() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
