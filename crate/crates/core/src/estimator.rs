//! One-point gradient estimation for bandit feedback.
//!
//! The decision set is drawn from the chain mixture with a uniform
//! exploration floor, the single observed loss is importance-weighted into
//! per-position value estimates, and their consecutive differences form an
//! unbiased estimate of the extension subgradient. Only two adjacent entries
//! of the estimate can be nonzero.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::lovasz::ChainDecomposition;
use crate::setfn::{SetFunction, Subset};

/// Sampling distribution over the chain positions `0..=n`:
/// `p_i = (1 − μ) λ_i + μ/(n+1)`.
#[derive(Debug, Clone)]
pub struct MixtureDistribution {
    pub probs: Vec<f64>,
    pub mu: f64,
}

/// Builds the exploration-mixed sampling distribution for a chain.
pub fn build_mixture(chain: &ChainDecomposition, mu: f64) -> Result<MixtureDistribution> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(format!(
            "exploration probability must lie in (0,1), got {mu}"
        )));
    }
    let floor = mu / (chain.n() as f64 + 1.0);
    let probs = chain.lambdas.iter().map(|&l| (1.0 - mu) * l + floor).collect();
    Ok(MixtureDistribution { probs, mu })
}

/// What the player saw in one bandit round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditObservation {
    /// Chain position `i*` that was drawn.
    pub index: usize,
    /// The played set `A_{i*}`.
    pub set: Subset,
    /// The single observed loss `f(A_{i*})`.
    pub loss: f64,
}

/// Importance-weighted subgradient estimate built from one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedGradient {
    pub g: Vec<f64>,
}

/// Draws an index from a probability vector with one uniform variate.
pub fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let r: f64 = rng.random();
    let mut cdf = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cdf += p;
        if r < cdf {
            return i;
        }
    }
    // Rounding left the cdf a hair short of 1.
    probs.len() - 1
}

// The estimate for a fixed outcome: position i* with observed loss v has
// importance weight 1/p_{i*}; differencing the per-position estimates leaves
// +v/p at pi(i*) and −v/p at pi(i*+1) when those positions exist.
fn estimate_for_outcome(
    chain: &ChainDecomposition,
    dist: &MixtureDistribution,
    index: usize,
    loss: f64,
) -> EstimatedGradient {
    let n = chain.n();
    let mut g = vec![0.0; n];
    let weighted = loss / dist.probs[index];
    if index >= 1 {
        g[chain.pi[index - 1] - 1] += weighted;
    }
    if index + 1 <= n {
        g[chain.pi[index] - 1] -= weighted;
    }
    EstimatedGradient { g }
}

/// Samples a chain position from the mixture, queries the oracle once, and
/// returns the observation together with the gradient estimate.
pub fn sample_and_estimate<F: SetFunction>(
    f: &F,
    chain: &ChainDecomposition,
    dist: &MixtureDistribution,
    rng: &mut dyn RngCore,
) -> (BanditObservation, EstimatedGradient) {
    let index = sample_index(&dist.probs, rng);
    let set = chain.sets[index];
    let loss = f.evaluate(set);
    let estimate = estimate_for_outcome(chain, dist, index, loss);
    (BanditObservation { index, set, loss }, estimate)
}

/// Exact expectation of the estimate, summed analytically over all `n + 1`
/// outcomes. Must equal the chain subgradient componentwise; kept as an
/// independent route for unbiasedness checks.
pub fn exact_expectation<F: SetFunction>(
    f: &F,
    chain: &ChainDecomposition,
    dist: &MixtureDistribution,
) -> Vec<f64> {
    let n = chain.n();
    let mut expect = vec![0.0; n];
    for index in 0..=n {
        let loss = f.evaluate(chain.sets[index]);
        let outcome = estimate_for_outcome(chain, dist, index, loss);
        let p = dist.probs[index];
        for (e, g) in expect.iter_mut().zip(&outcome.g) {
            *e += p * g;
        }
    }
    expect
}
