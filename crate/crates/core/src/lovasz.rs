//! Chain decomposition of a point in the unit hypercube, evaluation of the
//! induced piecewise-linear extension of a set function, and the approximate
//! subgradient used by all the learners.

use crate::error::{Error, Result};
use crate::setfn::{Decomposed, SetFunction, Subset, Table};

/// A point `x ∈ [0,1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalPoint {
    coords: Vec<f64>,
}

impl FractionalPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for (idx, &c) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Domain {
                    index: idx + 1,
                    value: c,
                });
            }
        }
        Ok(Self { coords })
    }

    /// Constant point `(v, …, v)`.
    pub fn constant(n: usize, v: f64) -> Result<Self> {
        Self::new(vec![v; n])
    }

    /// Indicator vector of a subset.
    pub fn indicator(n: usize, s: Subset) -> Self {
        let coords = (1..=n).map(|i| if s.contains(i) { 1.0 } else { 0.0 }).collect();
        Self { coords }
    }

    /// Skips the range check; callers must guarantee coordinates in `[0,1]`.
    pub(crate) fn new_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| (0.0..=1.0).contains(c)));
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// The sorted permutation, max chain `∅ = A_0 ⊆ … ⊆ A_n = [n]`, and convex
/// weights that express a fractional point as a mixture of chain indicators.
#[derive(Debug, Clone)]
pub struct ChainDecomposition {
    /// `pi[i-1]` is the element whose coordinate is the i-th largest.
    pub pi: Vec<usize>,
    /// `sets[i] = A_i = {pi(1), …, pi(i)}`, so `sets.len() == n + 1`.
    pub sets: Vec<Subset>,
    /// `lambdas[i] = x_{pi(i)} − x_{pi(i+1)}` with virtual `x_{pi(0)} = 1`,
    /// `x_{pi(n+1)} = 0`; nonnegative and summing to one.
    pub lambdas: Vec<f64>,
}

impl ChainDecomposition {
    pub fn n(&self) -> usize {
        self.pi.len()
    }
}

/// Sorts the coordinates of `x` in decreasing order (ties broken by ascending
/// element index) and returns the associated chain and mixture weights.
pub fn decompose(x: &FractionalPoint) -> ChainDecomposition {
    let n = x.dim();
    let coords = x.coords();

    let mut pi: Vec<usize> = (1..=n).collect();
    // Stable sort keeps ascending-index order within ties.
    pi.sort_by(|&a, &b| coords[b - 1].partial_cmp(&coords[a - 1]).unwrap());

    let mut sets = Vec::with_capacity(n + 1);
    let mut lambdas = Vec::with_capacity(n + 1);
    let mut prefix = Subset::EMPTY;
    sets.push(prefix);

    let mut prev = 1.0;
    for &el in &pi {
        let c = coords[el - 1];
        lambdas.push(prev - c);
        prefix = prefix.insert(el);
        sets.push(prefix);
        prev = c;
    }
    lambdas.push(prev);

    ChainDecomposition { pi, sets, lambdas }
}

/// Extension value `Σ_i λ_i f(A_i)` of `f` at `x`.
pub fn lovasz_value<F: SetFunction>(f: &F, x: &FractionalPoint) -> f64 {
    let chain = decompose(x);
    chain
        .lambdas
        .iter()
        .zip(&chain.sets)
        .map(|(&l, &s)| l * f.evaluate(s))
        .sum()
}

/// Value of the extension given a precomputed chain.
pub fn lovasz_value_on_chain<F: SetFunction>(f: &F, chain: &ChainDecomposition) -> f64 {
    chain
        .lambdas
        .iter()
        .zip(&chain.sets)
        .map(|(&l, &s)| l * f.evaluate(s))
        .sum()
}

/// Subgradient `g` of the extension at `x`: `g_{pi(i)} = f(A_i) − f(A_{i−1})`.
///
/// Satisfies `⟨g, x⟩ = lovasz_value(f, x)` and `Σ_i g_i = f([n]) − f(∅)`.
pub fn lovasz_subgradient<F: SetFunction>(f: &F, x: &FractionalPoint) -> Vec<f64> {
    subgradient_on_chain(f, &decompose(x))
}

/// Subgradient from a precomputed chain; evaluates `f` on all `n + 1` chain
/// sets.
pub fn subgradient_on_chain<F: SetFunction>(f: &F, chain: &ChainDecomposition) -> Vec<f64> {
    let values: Vec<f64> = chain.sets.iter().map(|&s| f.evaluate(s)).collect();
    subgradient_from_chain_values(chain, &values)
}

/// Subgradient from already-evaluated chain values `values[i] = f(A_i)`.
pub fn subgradient_from_chain_values(chain: &ChainDecomposition, values: &[f64]) -> Vec<f64> {
    let n = chain.n();
    let mut g = vec![0.0; n];
    for i in 1..=n {
        g[chain.pi[i - 1] - 1] = values[i] - values[i - 1];
    }
    g
}

/// One violated inequality found by [`check_subgradient_bounds`].
#[derive(Debug, Clone)]
pub struct BoundViolation {
    pub subset: Subset,
    pub lhs: f64,
    pub rhs: f64,
}

/// Result of [`check_subgradient_bounds`].
#[derive(Debug, Clone, Default)]
pub struct SubgradientBoundReport {
    /// Subsets `A` with `Σ_{i∈A} g_i > (1/α) f̄(A) − β f_(A)`.
    pub subset_violations: Vec<BoundViolation>,
    /// Set when `⟨g, x⟩ > (1/α) f̄_L(x) − β f__L(x)`, with the extension
    /// values of the parts standing in for their (intractable) convex
    /// closures.
    pub extension_violation: Option<(f64, f64)>,
}

impl SubgradientBoundReport {
    pub fn is_clean(&self) -> bool {
        self.subset_violations.is_empty() && self.extension_violation.is_none()
    }
}

// beta * f_(A) with the convention that a zero lower part contributes zero
// even when beta is the +inf sentinel.
fn scaled_lower(beta: f64, value: f64) -> f64 {
    if value == 0.0 {
        0.0
    } else {
        beta * value
    }
}

/// Enumerates the subgradient bound `Σ_{i∈A} g_i ≤ (1/α) f̄(A) − β f_(A)` over
/// every subset, and checks the extension-level surrogate at `x` itself.
pub fn check_subgradient_bounds<U: SetFunction, L: SetFunction>(
    df: &Decomposed<U, L>,
    alpha: f64,
    beta: f64,
    x: &FractionalPoint,
    tol: f64,
) -> Result<SubgradientBoundReport> {
    let upper = Table::tabulate(&df.upper)?;
    let lower = Table::tabulate(&df.lower)?;
    let ground = upper.ground();
    let chain = decompose(x);
    let g = subgradient_on_chain(&Decomposed::new(&upper, &lower), &chain);

    let mut report = SubgradientBoundReport::default();
    let inv_alpha = alpha.recip();

    for s in ground.subsets()? {
        let lhs: f64 = s.members().map(|i| g[i - 1]).sum();
        let rhs = inv_alpha * upper.evaluate(s) - scaled_lower(beta, lower.evaluate(s));
        if lhs > rhs + tol {
            report.subset_violations.push(BoundViolation { subset: s, lhs, rhs });
        }
    }

    let inner: f64 = g.iter().zip(x.coords()).map(|(gi, xi)| gi * xi).sum();
    let rhs = inv_alpha * lovasz_value_on_chain(&upper, &chain)
        - scaled_lower(beta, lovasz_value_on_chain(&lower, &chain));
    if inner > rhs + tol {
        report.extension_violation = Some((inner, rhs));
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setfn::{analyze_dr_ratios, GroundSet, Modular, RangeCost, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ground(n: usize) -> GroundSet {
        GroundSet::new(n).unwrap()
    }

    fn point(coords: &[f64]) -> FractionalPoint {
        FractionalPoint::new(coords.to_vec()).unwrap()
    }

    fn random_point(n: usize, rng: &mut ChaCha12Rng) -> FractionalPoint {
        point(&(0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
    }

    #[test]
    fn decompose_hand_example() {
        let chain = decompose(&point(&[0.9, 0.2, 0.5]));
        assert_eq!(chain.pi, vec![1, 3, 2]);
        let expected_sets = [
            Subset::EMPTY,
            Subset::from_elements(ground(3), &[1]).unwrap(),
            Subset::from_elements(ground(3), &[1, 3]).unwrap(),
            Subset::from_elements(ground(3), &[1, 2, 3]).unwrap(),
        ];
        assert_eq!(chain.sets, expected_sets);
        let expected_lambdas = [0.1, 0.4, 0.3, 0.2];
        for (l, e) in chain.lambdas.iter().zip(expected_lambdas) {
            assert!((l - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn decompose_indicator_breaks_ties_by_index() {
        let s = Subset::from_elements(ground(3), &[2, 3]).unwrap();
        let chain = decompose(&FractionalPoint::indicator(3, s));
        assert_eq!(chain.pi, vec![2, 3, 1]);
        assert!((chain.lambdas[2] - 1.0).abs() <= 1e-12);
        assert_eq!(chain.sets[2], s);
        for (i, &l) in chain.lambdas.iter().enumerate() {
            if i != 2 {
                assert!(l.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn decompose_origin_puts_mass_on_empty_set() {
        let chain = decompose(&point(&[0.0, 0.0, 0.0]));
        assert!((chain.lambdas[0] - 1.0).abs() <= 1e-12);
        assert!(chain.lambdas[1..].iter().all(|&l| l == 0.0));
    }

    #[test]
    fn fractional_point_rejects_out_of_range() {
        assert!(matches!(
            FractionalPoint::new(vec![0.5, 1.2]),
            Err(crate::Error::Domain { index: 2, .. })
        ));
        assert!(FractionalPoint::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn lovasz_value_recovers_set_values_at_indicators() {
        let g = ground(5);
        let f = RangeCost::new(g);
        for s in g.subsets().unwrap() {
            let v = lovasz_value(&f, &FractionalPoint::indicator(5, s));
            assert!((v - f.evaluate(s)).abs() <= 1e-12);
        }
    }

    #[test]
    fn lovasz_value_hand_example() {
        let f = RangeCost::new(ground(3));
        let v = lovasz_value(&f, &point(&[0.9, 0.2, 0.5]));
        assert!((v - 1.9).abs() <= 1e-12);
    }

    #[test]
    fn lovasz_value_zero_at_origin() {
        let f = RangeCost::new(ground(4));
        assert_eq!(lovasz_value(&f, &point(&[0.0; 4])), 0.0);
    }

    #[test]
    fn subgradient_hand_example() {
        let f = RangeCost::new(ground(3));
        let g = lovasz_subgradient(&f, &point(&[0.9, 0.2, 0.5]));
        assert_eq!(g, vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn subgradient_of_zero_function_is_zero() {
        let g = lovasz_subgradient(&Zero::new(ground(4)), &point(&[0.3, 0.9, 0.1, 0.5]));
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subgradient_of_modular_recovers_weights() {
        let w = vec![1.0, 2.0, 3.0];
        let f = Modular::new(ground(3), w.clone()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = random_point(3, &mut rng);
            let g = lovasz_subgradient(&f, &x);
            for (gi, wi) in g.iter().zip(&w) {
                assert!((gi - wi).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction_and_inner_product_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let f = RangeCost::new(ground(8));
        for _ in 0..1000 {
            let x = random_point(8, &mut rng);
            let chain = decompose(&x);

            let sum: f64 = chain.lambdas.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(chain.lambdas.iter().all(|&l| l >= 0.0));

            let mut recon = vec![0.0; 8];
            for (&l, &s) in chain.lambdas.iter().zip(&chain.sets) {
                for i in s.members() {
                    recon[i - 1] += l;
                }
            }
            for (r, xv) in recon.iter().zip(x.coords()) {
                assert!((r - xv).abs() <= 1e-12);
            }

            let g = subgradient_on_chain(&f, &chain);
            let inner: f64 = g.iter().zip(x.coords()).map(|(a, b)| a * b).sum();
            assert!((inner - lovasz_value_on_chain(&f, &chain)).abs() <= 1e-10);
        }
    }

    #[test]
    fn chain_expectation_matches_extension_value() {
        // E[f(S)] under P(S = A_i) = lambda_i, summed exactly over the chain.
        let f = RangeCost::new(ground(6));
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = random_point(6, &mut rng);
            let chain = decompose(&x);
            let expect: f64 = chain
                .lambdas
                .iter()
                .zip(&chain.sets)
                .map(|(&l, &s)| l * f.evaluate(s))
                .sum();
            assert!((expect - lovasz_value(&f, &x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn extension_of_submodular_function_is_convex() {
        // sqrt(|S|) is submodular, so the extension must satisfy the chord
        // inequality everywhere.
        let g = ground(6);
        let values: Vec<f64> = g.subsets().unwrap().map(|s| (s.len() as f64).sqrt()).collect();
        let f = Table::new(g, values).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = random_point(6, &mut rng);
            let y = random_point(6, &mut rng);
            for theta in [0.25, 0.5, 0.75] {
                let mix: Vec<f64> = x
                    .coords()
                    .iter()
                    .zip(y.coords())
                    .map(|(a, b)| theta * a + (1.0 - theta) * b)
                    .collect();
                let lhs = lovasz_value(&f, &point(&mix));
                let rhs = theta * lovasz_value(&f, &x) + (1.0 - theta) * lovasz_value(&f, &y);
                assert!(lhs <= rhs + 1e-10);
            }
        }
    }

    #[test]
    fn telescoping_sum_of_subgradient() {
        let g = ground(7);
        let f = RangeCost::new(g);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = random_point(7, &mut rng);
            let grad = lovasz_subgradient(&f, &x);
            let sum: f64 = grad.iter().sum();
            assert!((sum - f.evaluate(g.full_subset())).abs() <= 1e-10);
        }
    }

    #[test]
    fn bound_clean_for_range_cost_with_zero_lower() {
        let g = ground(6);
        let df = Decomposed::new(RangeCost::new(g), Zero::new(g));
        let alpha = 1.0 / 5.0;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = random_point(6, &mut rng);
            let report = check_subgradient_bounds(&df, alpha, f64::INFINITY, &x, 1e-9).unwrap();
            assert!(report.subset_violations.is_empty());
            assert!(report.extension_violation.is_none());
        }
    }

    #[test]
    fn bound_trivially_clean_for_zero_decomposition() {
        let g = ground(4);
        let df = Decomposed::new(Zero::new(g), Zero::new(g));
        let report =
            check_subgradient_bounds(&df, 1.0, 1.0, &point(&[0.1, 0.9, 0.4, 0.6]), 1e-12).unwrap();
        assert!(report.is_clean());
    }

    #[test]
    fn bound_check_detects_a_false_alpha() {
        // Claiming a larger alpha than the measured one must surface
        // violations for some subset on a non-modular function.
        let g = ground(5);
        let f = RangeCost::new(g);
        let measured = analyze_dr_ratios(&f).unwrap();
        assert!(measured.alpha < 1.0);
        let df = Decomposed::new(f, Zero::new(g));
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mut found = false;
        for _ in 0..50 {
            let x = random_point(5, &mut rng);
            let report = check_subgradient_bounds(&df, 1.0, f64::INFINITY, &x, 1e-9).unwrap();
            if !report.subset_violations.is_empty() {
                found = true;
                break;
            }
        }
        assert!(found, "inflated alpha never produced a violation");
    }
}
