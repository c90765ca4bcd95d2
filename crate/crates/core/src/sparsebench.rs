//! Synthetic structured-sparse-learning environment.
//!
//! Each round draws a fresh regression problem `y_t = A_t x* + ε_t` with a
//! planted consecutive-ones support. The round objective splits into an
//! upward part `γ·F` (the range cost, scaled by the trade-off weight) and a
//! downward part `G`, the improvement of the restricted least-squares
//! minimum over the zero fit. Playing a support `S` costs
//! `H_t(S) = γ F(S) − G_t(S)`; both parts are normalized and nondecreasing,
//! so the objective fits the decomposed-oracle machinery.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::explained_energy;
use crate::seed::derive_indexed;
use crate::setfn::{Decomposed, GroundSet, RangeCost, SetFunction, Subset, ENUMERATION_GUARD};

/// Parameters of the synthetic environment.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Dimensionality of the ground set and of the regression weights.
    pub n: usize,
    /// Samples drawn per round (rows of `A_t`).
    pub samples: usize,
    /// Number of consecutive ones in the planted weight vector.
    pub sparsity: usize,
    /// Trade-off weight on the range-cost regularizer.
    pub gamma: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_std: f64,
    /// Number of rounds.
    pub horizon: usize,
    /// Master seed of the data stream.
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Parameter("bench.n must be at least 1".into()));
        }
        if self.sparsity < 1 || self.sparsity > self.n {
            return Err(Error::Parameter(format!(
                "bench.sparsity must lie in 1..={}, got {}",
                self.n, self.sparsity
            )));
        }
        if self.samples < 1 {
            return Err(Error::Parameter("bench.samples must be at least 1".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Parameter("bench.gamma must be positive".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Parameter("bench.noise_std must be nonnegative".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Parameter("bench.horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// The planted weight vector: ones on `1..=sparsity`, zero elsewhere.
    pub fn planted_weights(&self) -> Vec<f64> {
        (1..=self.n)
            .map(|i| if i <= self.sparsity { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn ground(&self) -> Result<GroundSet> {
        GroundSet::new(self.n)
    }
}

/// One round of regression data, with the normal-equation inputs cached.
#[derive(Debug, Clone)]
pub struct RoundData {
    round: usize,
    n: usize,
    samples: usize,
    /// Row-major `samples × n`.
    matrix: Vec<f64>,
    target: Vec<f64>,
    gram: Vec<f64>,
    aty: Vec<f64>,
    target_norm2: f64,
}

impl RoundData {
    /// Assembles round data from explicit matrix and target.
    pub fn from_parts(round: usize, n: usize, matrix: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        if n == 0 || matrix.len() % n != 0 {
            return Err(Error::Parameter("matrix shape inconsistent with n".into()));
        }
        let samples = matrix.len() / n;
        if target.len() != samples {
            return Err(Error::Parameter("target length inconsistent with matrix".into()));
        }
        let mut gram = vec![0.0; n * n];
        let mut aty = vec![0.0; n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..samples).map(|r| matrix[r * n + i] * matrix[r * n + j]).sum();
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
            aty[i] = (0..samples).map(|r| matrix[r * n + i] * target[r]).sum();
        }
        let target_norm2 = target.iter().map(|v| v * v).sum();
        Ok(Self {
            round,
            n,
            samples,
            matrix,
            target,
            gram,
            aty,
            target_norm2,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// `ℓ(0) = ½‖y‖²`, the unrestricted baseline loss.
    pub fn zero_loss(&self) -> f64 {
        0.5 * self.target_norm2
    }
}

/// Draws the round-`t` data from the config's seeded stream. Regeneration is
/// random-access: round `t` is reproducible without replaying earlier rounds.
pub fn generate_round(config: &BenchConfig, t: usize) -> Result<RoundData> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(derive_indexed(config.seed, "round-data", t as u64));
    let normal = StandardNormal;
    let (s, n) = (config.samples, config.n);

    let mut matrix = vec![0.0; s * n];
    for v in matrix.iter_mut() {
        *v = normal.sample(&mut rng);
    }
    let weights = config.planted_weights();
    let mut target = vec![0.0; s];
    for (r, y) in target.iter_mut().enumerate() {
        let clean: f64 = (0..n).map(|c| matrix[r * n + c] * weights[c]).sum();
        let noise: f64 = normal.sample(&mut rng);
        *y = clean + config.noise_std * noise;
    }
    RoundData::from_parts(t, n, matrix, target)
}

/// `F(S) = max(S) − min(S) + 1` with `F(∅) = 0`.
pub fn range_cost(s: Subset) -> f64 {
    match (s.max_element(), s.min_element()) {
        (Some(max), Some(min)) => (max - min + 1) as f64,
        _ => 0.0,
    }
}

/// Minimum of `½‖A_t x − y_t‖²` over vectors supported on `S`.
///
/// Solved through the normal equations of the support submatrix with a
/// pivoted rank-revealing factorization; the minimum value is the same for
/// every least-squares solution, so rank deficiency is harmless.
pub fn restricted_loss_min(data: &RoundData, s: Subset) -> Result<f64> {
    let members: Vec<usize> = s.members().take_while(|&i| i <= data.n).collect();
    if members.len() != s.len() {
        return Err(Error::ElementOutOfRange {
            index: s.max_element().unwrap_or(0),
            n: data.n,
        });
    }
    let k = members.len();
    if k == 0 {
        return Ok(data.zero_loss());
    }
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (a, &i) in members.iter().enumerate() {
        for (b, &j) in members.iter().enumerate() {
            gram[a * k + b] = data.gram[(i - 1) * data.n + (j - 1)];
        }
        rhs[a] = data.aty[i - 1];
    }
    let energy = explained_energy(&gram, &rhs, k).ok_or_else(|| {
        Error::Solver(format!(
            "factorization failed at round {} on subset {}",
            data.round,
            s.display()
        ))
    })?;
    // The explained energy can exceed ‖y‖² only by rounding noise.
    Ok((0.5 * (data.target_norm2 - energy)).max(0.0))
}

/// The improvement `G_t(S) = ℓ(0) − min_{supp(x)⊆S} ℓ(x)`: normalized,
/// nondecreasing and the downward half of the round objective.
pub fn loss_improvement(data: &RoundData, s: Subset) -> Result<f64> {
    Ok(data.zero_loss() - restricted_loss_min(data, s)?)
}

/// The per-round decomposed objective `H_t = γ F − G_t`, with the expensive
/// `G_t` evaluations memoized by subset mask. Each oracle call is counted at
/// the `H_t` level regardless of memo hits.
pub struct RoundOracle {
    ground: GroundSet,
    gamma: f64,
    data: RoundData,
    range: RangeCost,
    memo: RefCell<HashMap<u64, f64>>,
    calls: Cell<u64>,
}

impl RoundOracle {
    pub fn new(data: RoundData, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Parameter("gamma must be positive".into()));
        }
        let ground = GroundSet::new(data.n)?;
        Ok(Self {
            ground,
            gamma,
            data,
            range: RangeCost::new(ground),
            memo: RefCell::new(HashMap::new()),
            calls: Cell::new(0),
        })
    }

    pub fn data(&self) -> &RoundData {
        &self.data
    }

    pub fn round(&self) -> usize {
        self.data.round
    }

    /// `γ F(S)`.
    pub fn upper(&self, s: Subset) -> f64 {
        self.gamma * self.range.evaluate(s)
    }

    /// `G_t(S)`, memoized.
    pub fn lower(&self, s: Subset) -> f64 {
        if let Some(&v) = self.memo.borrow().get(&s.mask()) {
            return v;
        }
        let v = loss_improvement(&self.data, s)
            .unwrap_or_else(|e| panic!("restricted least squares failed: {e}"));
        self.memo.borrow_mut().insert(s.mask(), v);
        v
    }

    /// Evaluations requested so far (memo hits included).
    pub fn calls(&self) -> u64 {
        self.calls.get()
    }

    /// Borrowed decomposed view for the structural checks.
    pub fn parts(&self) -> Decomposed<UpperPart<'_>, LowerPart<'_>> {
        Decomposed::new(UpperPart(self), LowerPart(self))
    }
}

impl SetFunction for RoundOracle {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn evaluate(&self, s: Subset) -> f64 {
        self.calls.set(self.calls.get() + 1);
        self.upper(s) - self.lower(s)
    }
}

/// `γ F` as a standalone oracle borrowing the round.
pub struct UpperPart<'a>(&'a RoundOracle);

impl SetFunction for UpperPart<'_> {
    fn ground(&self) -> GroundSet {
        self.0.ground
    }

    fn evaluate(&self, s: Subset) -> f64 {
        self.0.upper(s)
    }
}

/// `G_t` as a standalone oracle borrowing the round.
pub struct LowerPart<'a>(&'a RoundOracle);

impl SetFunction for LowerPart<'_> {
    fn ground(&self) -> GroundSet {
        self.0.ground
    }

    fn evaluate(&self, s: Subset) -> f64 {
        self.0.lower(s)
    }
}

fn cmp_subsets(a: Subset, b: Subset) -> std::cmp::Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| a.members().cmp(b.members()))
}

/// Minimizer over all subsets of precomputed objective sums (`sums[mask]`),
/// ties broken by smallest cardinality then lexicographic member order.
pub fn comparator_from_sums(sums: &[f64], n: usize) -> Result<(Subset, f64)> {
    if n > ENUMERATION_GUARD {
        return Err(Error::Capacity {
            n,
            max: ENUMERATION_GUARD,
        });
    }
    if sums.len() != 1 << n {
        return Err(Error::Parameter(format!(
            "expected {} sums, got {}",
            1usize << n,
            sums.len()
        )));
    }
    let mut best = Subset::EMPTY;
    let mut best_value = sums[0];
    for mask in 1..sums.len() {
        let candidate = Subset::from_mask(mask as u64);
        let value = sums[mask];
        if value < best_value
            || (value == best_value && cmp_subsets(candidate, best) == std::cmp::Ordering::Less)
        {
            best = candidate;
            best_value = value;
        }
    }
    Ok((best, best_value))
}

/// Exhaustive hindsight comparator `argmin_S Σ_t H_t(S)` over the given
/// rounds.
pub fn brute_force_comparator(objectives: &[RoundOracle]) -> Result<(Subset, f64)> {
    let n = objectives
        .first()
        .ok_or_else(|| Error::Parameter("no objectives supplied".into()))?
        .ground
        .size();
    if n > ENUMERATION_GUARD {
        return Err(Error::Capacity {
            n,
            max: ENUMERATION_GUARD,
        });
    }
    let mut sums = vec![0.0; 1 << n];
    for oracle in objectives {
        for (mask, sum) in sums.iter_mut().enumerate() {
            *sum += oracle.evaluate(Subset::from_mask(mask as u64));
        }
    }
    comparator_from_sums(&sums, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setfn::analyze_dr_ratios;
    use rand::Rng;

    fn config(n: usize, samples: usize, noise_std: f64, seed: u64) -> BenchConfig {
        BenchConfig {
            n,
            samples,
            sparsity: 2,
            gamma: 0.1,
            noise_std,
            horizon: 10,
            seed,
        }
    }

    // Independent least-squares route for cross-checking: twice-iterated
    // Gram-Schmidt orthonormalization of the support columns, then the
    // residual of projecting y onto their span.
    fn mgs_restricted_min(data: &RoundData, s: Subset) -> f64 {
        let n = data.n();
        let rows = data.samples();
        let cols: Vec<usize> = s.members().collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for &c in &cols {
            let mut v: Vec<f64> = (0..rows).map(|r| data.matrix()[r * n + (c - 1)]).collect();
            for _ in 0..2 {
                for q in &basis {
                    let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= dot * qi;
                    }
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-10 {
                for vi in v.iter_mut() {
                    *vi /= norm;
                }
                basis.push(v);
            }
        }
        let mut residual: Vec<f64> = data.target().to_vec();
        for q in &basis {
            let dot: f64 = q.iter().zip(&residual).map(|(a, b)| a * b).sum();
            for (ri, qi) in residual.iter_mut().zip(q) {
                *ri -= dot * qi;
            }
        }
        0.5 * residual.iter().map(|a| a * a).sum::<f64>()
    }

    #[test]
    fn planted_weights_are_consecutive_ones() {
        let cfg = config(10, 16, 0.1, 1);
        assert_eq!(
            cfg.planted_weights(),
            vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn round_data_is_reproducible() {
        let cfg = config(6, 12, 0.1, 42);
        let a = generate_round(&cfg, 3).unwrap();
        let b = generate_round(&cfg, 3).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_eq!(a.target(), b.target());
        let c = generate_round(&cfg, 4).unwrap();
        assert_ne!(a.target(), c.target());
    }

    #[test]
    fn range_cost_examples() {
        let g = GroundSet::new(10).unwrap();
        assert_eq!(range_cost(Subset::EMPTY), 0.0);
        assert_eq!(range_cost(Subset::from_elements(g, &[2, 5]).unwrap()), 4.0);
        assert_eq!(range_cost(Subset::from_elements(g, &[7]).unwrap()), 1.0);
    }

    #[test]
    fn empty_support_gives_zero_improvement() {
        let cfg = config(6, 24, 0.1, 7);
        let data = generate_round(&cfg, 1).unwrap();
        assert_eq!(restricted_loss_min(&data, Subset::EMPTY).unwrap(), data.zero_loss());
        assert_eq!(loss_improvement(&data, Subset::EMPTY).unwrap(), 0.0);
    }

    #[test]
    fn noiseless_true_support_interpolates() {
        let cfg = config(6, 24, 0.0, 11);
        let g = cfg.ground().unwrap();
        let data = generate_round(&cfg, 1).unwrap();
        let support = Subset::from_elements(g, &[1, 2]).unwrap();
        let min = restricted_loss_min(&data, support).unwrap();
        assert!(min.abs() <= 1e-9, "noiseless restricted minimum {min}");
        let bigger = Subset::from_elements(g, &[1, 2, 5]).unwrap();
        assert!(restricted_loss_min(&data, bigger).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn restricted_min_is_monotone_under_nesting() {
        let cfg = config(8, 32, 0.1, 13);
        let data = generate_round(&cfg, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let small = Subset::from_mask(rng.random_range(0..(1u64 << 8)));
            let extra = Subset::from_mask(rng.random_range(0..(1u64 << 8)));
            let big = Subset::from_mask(small.mask() | extra.mask());
            let v_small = restricted_loss_min(&data, small).unwrap();
            let v_big = restricted_loss_min(&data, big).unwrap();
            assert!(
                v_small >= v_big - 1e-9,
                "nesting violated: {} -> {v_small}, {} -> {v_big}",
                small.display(),
                big.display()
            );
        }
    }

    #[test]
    fn pivoted_solver_agrees_with_gram_schmidt_route() {
        let cfg = config(7, 20, 0.1, 19);
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for t in 1..=5 {
            let data = generate_round(&cfg, t).unwrap();
            for _ in 0..40 {
                let s = Subset::from_mask(rng.random_range(0..(1u64 << 7)));
                let fast = restricted_loss_min(&data, s).unwrap();
                let slow = mgs_restricted_min(&data, s);
                assert!(
                    (fast - slow).abs() <= 1e-8 * (1.0 + slow.abs()),
                    "subset {}: {fast} vs {slow}",
                    s.display()
                );
            }
        }
    }

    #[test]
    fn restricted_min_rejects_foreign_elements() {
        let cfg = config(4, 12, 0.1, 3);
        let data = generate_round(&cfg, 1).unwrap();
        let foreign = Subset::from_mask(1 << 9);
        assert!(restricted_loss_min(&data, foreign).is_err());
    }

    #[test]
    fn round_oracle_is_normalized_and_memo_transparent() {
        let cfg = config(6, 24, 0.1, 17);
        let data = generate_round(&cfg, 1).unwrap();
        let oracle = RoundOracle::new(data.clone(), cfg.gamma).unwrap();
        assert_eq!(oracle.evaluate(Subset::EMPTY), 0.0);

        let mut rng = ChaCha12Rng::seed_from_u64(29);
        for _ in 0..50 {
            let s = Subset::from_mask(rng.random_range(0..(1u64 << 6)));
            let memoized = oracle.evaluate(s);
            let direct =
                cfg.gamma * range_cost(s) - loss_improvement(&data, s).unwrap();
            assert!((memoized - direct).abs() <= 1e-12);
            // Second evaluation hits the memo and must agree bit for bit.
            assert_eq!(oracle.evaluate(s), memoized);
        }
    }

    #[test]
    fn true_support_is_attractive_in_the_noiseless_case() {
        let cfg = config(8, 32, 0.0, 31);
        let g = cfg.ground().unwrap();
        let data = generate_round(&cfg, 1).unwrap();
        let oracle = RoundOracle::new(data, cfg.gamma).unwrap();
        let support = Subset::from_elements(g, &[1, 2]).unwrap();
        let h = oracle.evaluate(support);
        assert!(
            (h - (cfg.gamma * 2.0 - oracle.lower(support))).abs() <= 1e-12
        );
        assert!(h < 0.0, "true support should have negative objective, got {h}");
    }

    #[test]
    fn analyzer_recovers_range_cost_alpha_on_upper_part() {
        let cfg = config(6, 24, 0.1, 37);
        let data = generate_round(&cfg, 1).unwrap();
        let oracle = RoundOracle::new(data, cfg.gamma).unwrap();
        let parts = oracle.parts();
        let ratios = analyze_dr_ratios(&parts.upper).unwrap();
        assert!((ratios.alpha - 0.2).abs() <= 1e-12, "alpha = {}", ratios.alpha);
    }

    #[test]
    fn comparator_prefers_planted_support_for_small_gamma() {
        let cfg = BenchConfig {
            n: 10,
            samples: 64,
            sparsity: 2,
            gamma: 0.1,
            noise_std: 0.0,
            horizon: 1,
            seed: 41,
        };
        let data = generate_round(&cfg, 1).unwrap();
        let oracle = RoundOracle::new(data, cfg.gamma).unwrap();
        let (best, value) = brute_force_comparator(std::slice::from_ref(&oracle)).unwrap();
        let g = cfg.ground().unwrap();
        let support = Subset::from_elements(g, &[1, 2]).unwrap();
        assert!(support.is_subset_of(&best), "best {} misses the support", best.display());
        assert!(value < 0.0);
    }

    #[test]
    fn comparator_empty_for_dominant_regularizer() {
        let cfg = BenchConfig {
            n: 6,
            samples: 24,
            sparsity: 2,
            gamma: 1e6,
            noise_std: 0.1,
            horizon: 1,
            seed: 43,
        };
        let data = generate_round(&cfg, 1).unwrap();
        let oracle = RoundOracle::new(data, cfg.gamma).unwrap();
        let (best, _) = brute_force_comparator(std::slice::from_ref(&oracle)).unwrap();
        assert!(best.is_empty());
    }

    #[test]
    fn comparator_tie_break_on_zero_sums() {
        let (best, value) = comparator_from_sums(&vec![0.0; 16], 4).unwrap();
        assert!(best.is_empty());
        assert_eq!(value, 0.0);
    }

    #[test]
    fn comparator_tie_break_prefers_small_then_lex() {
        // masks: {} and {1} share the minimum; {1} wins over {2}.
        let mut sums = vec![1.0; 8];
        sums[0b001] = -2.0;
        sums[0b010] = -2.0;
        let (best, value) = comparator_from_sums(&sums, 3).unwrap();
        assert_eq!(best, Subset::from_mask(0b001));
        assert_eq!(value, -2.0);
        // Equal-cardinality tie beyond mask order: {1,4} must beat {2,3}.
        let mut sums = vec![1.0; 16];
        sums[0b1001] = -5.0;
        sums[0b0110] = -5.0;
        let (best, _) = comparator_from_sums(&sums, 4).unwrap();
        assert_eq!(best, Subset::from_mask(0b1001));
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = config(4, 8, 0.1, 1);
        cfg.sparsity = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = config(4, 8, 0.1, 1);
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
    }
}
