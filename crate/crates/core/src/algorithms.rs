//! The online learners.
//!
//! All five are step-driven state machines over the same protocol: each
//! round they play a subset sampled from the current iterate's chain,
//! observe (only) what the feedback model allows, register the resulting
//! gradient with its delay, and fold whatever feedback arrived this round
//! into the next iterate. They differ in the gradient they form (exact chain
//! subgradient vs. one-point estimate) and in how delayed arrivals are
//! consumed (all at once, oldest-first, or per completed block).

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::estimator::{build_mixture, sample_and_estimate, sample_index};
use crate::feedback::{BlockPools, FeedbackRouter};
use crate::lovasz::{decompose, subgradient_from_chain_values, FractionalPoint};
use crate::setfn::{Counted, SetFunction, Subset};

/// Identifier of one of the five learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Full information, all available gradients applied per round.
    DogdNf,
    /// Full information, oldest pooled gradient applied per round.
    Doagd,
    /// Bandit, all available estimated gradients applied per round.
    DbgdNf,
    /// Bandit, oldest pooled estimated gradient applied per round.
    Dbagd,
    /// Bandit, per-block updates from completed gradient pools.
    BdbgdNf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::DogdNf,
        Algorithm::Doagd,
        Algorithm::DbgdNf,
        Algorithm::Dbagd,
        Algorithm::BdbgdNf,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Algorithm::DogdNf => "dogd-nf",
            Algorithm::Doagd => "doagd",
            Algorithm::DbgdNf => "dbgd-nf",
            Algorithm::Dbagd => "dbagd",
            Algorithm::BdbgdNf => "bdbgd-nf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dogd-nf" => Ok(Algorithm::DogdNf),
            "doagd" => Ok(Algorithm::Doagd),
            "dbgd-nf" => Ok(Algorithm::DbgdNf),
            "dbagd" => Ok(Algorithm::Dbagd),
            "bdbgd-nf" => Ok(Algorithm::BdbgdNf),
            other => Err(Error::Parameter(format!("unknown algorithm `{other}`"))),
        }
    }

    /// Whether the learner only observes the played loss value.
    pub fn is_bandit(&self) -> bool {
        matches!(self, Algorithm::DbgdNf | Algorithm::Dbagd | Algorithm::BdbgdNf)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Fully resolved learner parameters.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub n: usize,
    /// Learning rate applied to each gradient sum.
    pub eta: f64,
    /// Exploration probability; bandit learners only.
    pub mu: Option<f64>,
    /// Block size; blocking learner only.
    pub block_size: Option<usize>,
    /// Scale bound used by the parameter formulas.
    pub loss_bound: f64,
    /// Maximum delay the schedule can produce.
    pub max_delay: usize,
    /// Average delay of the schedule.
    pub mean_delay: f64,
    /// Grid-search factor applied to the exploration probability.
    pub exploration_scale: f64,
    /// Human-readable notes accumulated while resolving parameters
    /// (e.g. a clamped exploration probability).
    pub warnings: Vec<String>,
}

const MU_MIN: f64 = 1e-6;
const MU_MAX: f64 = 1.0 - 1e-6;

/// Resolves the prescribed `(η, μ, K)` for an algorithm from the horizon,
/// dimensionality, loss scale, delay statistics, and exploration factor `q`.
pub fn default_params(
    algorithm: Algorithm,
    horizon: usize,
    n: usize,
    loss_bound: f64,
    max_delay: usize,
    mean_delay: f64,
    q: f64,
) -> Result<LearnerConfig> {
    if horizon < 1 || n < 1 {
        return Err(Error::Parameter("horizon and n must be at least 1".into()));
    }
    if !(loss_bound > 0.0) || !(mean_delay >= 1.0) || max_delay < 1 || !(q > 0.0) {
        return Err(Error::Parameter(
            "loss bound, delays and q must be positive (mean delay ≥ 1)".into(),
        ));
    }
    let t = horizon as f64;
    let nf = n as f64;
    let l = loss_bound;
    let d = max_delay as f64;
    let d_bar = mean_delay;

    let mut warnings = Vec::new();
    let mut clamp_mu = |raw: f64| -> f64 {
        let clamped = raw.clamp(MU_MIN, MU_MAX);
        if clamped != raw {
            warnings.push(format!(
                "exploration probability {raw:.6} clamped to {clamped:.6}"
            ));
        }
        clamped
    };

    let (eta, mu, block_size) = match algorithm {
        Algorithm::DogdNf => (nf.sqrt() / (l * (d_bar * t).sqrt()), None, None),
        Algorithm::Doagd => (nf.sqrt() / (l * (d * t).sqrt()), None, None),
        Algorithm::DbgdNf => (
            1.0 / (l * d_bar.cbrt() * t.powf(2.0 / 3.0)),
            Some(clamp_mu(q * nf * d_bar.cbrt() / t.cbrt())),
            None,
        ),
        Algorithm::Dbagd => (
            1.0 / (l * d.cbrt() * t.powf(2.0 / 3.0)),
            Some(clamp_mu(q * nf * d.cbrt() / t.cbrt())),
            None,
        ),
        Algorithm::BdbgdNf => {
            let block = (t.cbrt().round() as usize).clamp(1, horizon);
            (
                (1.0 / (l * t.powf(2.0 / 3.0))).min(1.0 / (l * (d * t).sqrt())),
                Some(clamp_mu(q * nf / t.cbrt())),
                Some(block),
            )
        }
    };

    Ok(LearnerConfig {
        algorithm,
        horizon,
        n,
        eta,
        mu,
        block_size,
        loss_bound,
        max_delay,
        mean_delay,
        exploration_scale: q,
        warnings,
    })
}

/// What happened in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub set: Subset,
    pub loss: f64,
    pub delay: usize,
    pub oracle_calls: u64,
}

/// A step-driven online learner.
pub trait OnlineLearner {
    fn algorithm(&self) -> Algorithm;

    /// Plays round `t` against the given loss oracle, registers the round's
    /// feedback with delay `delay`, applies whatever arrived, and reports the
    /// round. Rounds must be stepped in order `1..=horizon`.
    fn step(
        &mut self,
        t: usize,
        delay: usize,
        oracle: &dyn SetFunction,
        rng: &mut dyn RngCore,
    ) -> Result<RoundRecord>;

    /// The current iterate (the block iterate for the blocking learner).
    fn iterate(&self) -> &[f64];

    /// Gradients applied to the iterate so far.
    fn gradients_applied(&self) -> usize;

    /// Replaces the opening iterate; only meaningful before the first step.
    fn reset_to(&mut self, point: &FractionalPoint);
}

// Shared descent step: x ← clip(x − η Σ g). Everything flows through this
// one routine so equal gradient sequences yield bit-equal iterates across
// learners.
fn apply_descent(x: &mut [f64], grads: &[&[f64]], eta: f64) {
    if grads.is_empty() {
        return;
    }
    for (i, xi) in x.iter_mut().enumerate() {
        let mut sum = 0.0;
        for g in grads {
            sum += g[i];
        }
        *xi = (*xi - eta * sum).clamp(0.0, 1.0);
    }
}

// Every learner opens at the origin: the chain there puts all its weight on
// the empty set, the normalized zero-loss baseline, so anything better must
// be learned from feedback.
fn initial_point(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn check_round(t: usize, expected: usize, horizon: usize) -> Result<()> {
    if t != expected {
        return Err(Error::Protocol(format!(
            "round {t} stepped out of order (expected {expected})"
        )));
    }
    if t > horizon {
        return Err(Error::Protocol(format!("round {t} beyond horizon {horizon}")));
    }
    Ok(())
}

// The bandit play: chain from the iterate, exploration mixture, one oracle
// query, importance-weighted estimate.
fn bandit_play(
    x: &[f64],
    mu: f64,
    oracle: &dyn SetFunction,
    rng: &mut dyn RngCore,
) -> Result<(Subset, f64, Vec<f64>, u64)> {
    let counted = Counted::new(oracle);
    let chain = decompose(&FractionalPoint::new_unchecked(x.to_vec()));
    let dist = build_mixture(&chain, mu)?;
    let (obs, est) = sample_and_estimate(&counted, &chain, &dist, rng);
    Ok((obs.set, obs.loss, est.g, counted.calls()))
}

// The full-information play: evaluate every chain set (n+1 oracle calls),
// sample the played set from the chain weights, return the exact chain
// subgradient.
fn full_info_play(
    x: &[f64],
    oracle: &dyn SetFunction,
    rng: &mut dyn RngCore,
) -> (Subset, f64, Vec<f64>, u64) {
    let counted = Counted::new(oracle);
    let chain = decompose(&FractionalPoint::new_unchecked(x.to_vec()));
    let values: Vec<f64> = chain.sets.iter().map(|&s| counted.evaluate(s)).collect();
    let index = sample_index(&chain.lambdas, rng);
    let grad = subgradient_from_chain_values(&chain, &values);
    (chain.sets[index], values[index], grad, counted.calls())
}

/// Full-information learner applying every gradient the moment it arrives.
pub struct DogdNf {
    horizon: usize,
    eta: f64,
    x: Vec<f64>,
    router: FeedbackRouter,
    stash: HashMap<usize, Vec<f64>>,
    next_round: usize,
    applied: usize,
}

impl DogdNf {
    pub fn new(n: usize, horizon: usize, eta: f64) -> Self {
        Self {
            horizon,
            eta,
            x: initial_point(n),
            router: FeedbackRouter::new(horizon),
            stash: HashMap::new(),
            next_round: 1,
            applied: 0,
        }
    }

    pub fn with_initial(mut self, x: &FractionalPoint) -> Self {
        self.x = x.coords().to_vec();
        self
    }
}

impl OnlineLearner for DogdNf {
    fn algorithm(&self) -> Algorithm {
        Algorithm::DogdNf
    }

    fn step(
        &mut self,
        t: usize,
        delay: usize,
        oracle: &dyn SetFunction,
        rng: &mut dyn RngCore,
    ) -> Result<RoundRecord> {
        check_round(t, self.next_round, self.horizon)?;
        self.next_round += 1;

        let (set, loss, grad, oracle_calls) = full_info_play(&self.x, oracle, rng);
        self.router.route(t, delay)?;
        self.stash.insert(t, grad);

        let arrivals = self.router.arrivals(t);
        let grads: Vec<Vec<f64>> = arrivals
            .iter()
            .map(|k| self.stash.remove(k).expect("arrival without stashed gradient"))
            .collect();
        self.applied += grads.len();
        let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        apply_descent(&mut self.x, &refs, self.eta);

        Ok(RoundRecord { round: t, set, loss, delay, oracle_calls })
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn gradients_applied(&self) -> usize {
        self.applied
    }

    fn reset_to(&mut self, point: &FractionalPoint) {
        debug_assert_eq!(self.next_round, 1, "reset after stepping");
        self.x = point.coords().to_vec();
    }
}

/// Bandit learner applying every estimated gradient the moment it arrives.
pub struct DbgdNf {
    horizon: usize,
    eta: f64,
    mu: f64,
    x: Vec<f64>,
    router: FeedbackRouter,
    stash: HashMap<usize, Vec<f64>>,
    next_round: usize,
    applied: usize,
}

impl DbgdNf {
    pub fn new(n: usize, horizon: usize, eta: f64, mu: f64) -> Self {
        Self {
            horizon,
            eta,
            mu,
            x: initial_point(n),
            router: FeedbackRouter::new(horizon),
            stash: HashMap::new(),
            next_round: 1,
            applied: 0,
        }
    }

    pub fn with_initial(mut self, x: &FractionalPoint) -> Self {
        self.x = x.coords().to_vec();
        self
    }
}

impl OnlineLearner for DbgdNf {
    fn algorithm(&self) -> Algorithm {
        Algorithm::DbgdNf
    }

    fn step(
        &mut self,
        t: usize,
        delay: usize,
        oracle: &dyn SetFunction,
        rng: &mut dyn RngCore,
    ) -> Result<RoundRecord> {
        check_round(t, self.next_round, self.horizon)?;
        self.next_round += 1;

        let (set, loss, grad, oracle_calls) = bandit_play(&self.x, self.mu, oracle, rng)?;
        self.router.route(t, delay)?;
        self.stash.insert(t, grad);

        let arrivals = self.router.arrivals(t);
        let grads: Vec<Vec<f64>> = arrivals
            .iter()
            .map(|k| self.stash.remove(k).expect("arrival without stashed gradient"))
            .collect();
        self.applied += grads.len();
        let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        apply_descent(&mut self.x, &refs, self.eta);

        Ok(RoundRecord { round: t, set, loss, delay, oracle_calls })
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn gradients_applied(&self) -> usize {
        self.applied
    }

    fn reset_to(&mut self, point: &FractionalPoint) {
        debug_assert_eq!(self.next_round, 1, "reset after stepping");
        self.x = point.coords().to_vec();
    }
}

// Oldest-first gradient pool shared by the two baseline learners: arrivals
// are keyed by query round and at most one gradient is consumed per round.
#[derive(Default)]
struct OldestFirstPool {
    pool: BTreeMap<usize, Vec<f64>>,
}

impl OldestFirstPool {
    fn push(&mut self, round: usize, grad: Vec<f64>) {
        self.pool.insert(round, grad);
    }

    fn pop_oldest(&mut self) -> Option<Vec<f64>> {
        self.pool.pop_first().map(|(_, g)| g)
    }
}

/// Full-information baseline: one oldest pooled gradient per round.
pub struct Doagd {
    horizon: usize,
    eta: f64,
    x: Vec<f64>,
    router: FeedbackRouter,
    stash: HashMap<usize, Vec<f64>>,
    pool: OldestFirstPool,
    next_round: usize,
    applied: usize,
}

impl Doagd {
    pub fn new(n: usize, horizon: usize, eta: f64) -> Self {
        Self {
            horizon,
            eta,
            x: initial_point(n),
            router: FeedbackRouter::new(horizon),
            stash: HashMap::new(),
            pool: OldestFirstPool::default(),
            next_round: 1,
            applied: 0,
        }
    }

    pub fn with_initial(mut self, x: &FractionalPoint) -> Self {
        self.x = x.coords().to_vec();
        self
    }
}

impl OnlineLearner for Doagd {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Doagd
    }

    fn step(
        &mut self,
        t: usize,
        delay: usize,
        oracle: &dyn SetFunction,
        rng: &mut dyn RngCore,
    ) -> Result<RoundRecord> {
        check_round(t, self.next_round, self.horizon)?;
        self.next_round += 1;

        let (set, loss, grad, oracle_calls) = full_info_play(&self.x, oracle, rng);
        self.router.route(t, delay)?;
        self.stash.insert(t, grad);

        for k in self.router.arrivals(t) {
            let g = self.stash.remove(&k).expect("arrival without stashed gradient");
            self.pool.push(k, g);
        }
        if let Some(g) = self.pool.pop_oldest() {
            self.applied += 1;
            apply_descent(&mut self.x, &[g.as_slice()], self.eta);
        }

        Ok(RoundRecord { round: t, set, loss, delay, oracle_calls })
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn gradients_applied(&self) -> usize {
        self.applied
    }

    fn reset_to(&mut self, point: &FractionalPoint) {
        debug_assert_eq!(self.next_round, 1, "reset after stepping");
        self.x = point.coords().to_vec();
    }
}

/// Bandit baseline: one oldest pooled estimated gradient per round.
pub struct Dbagd {
    horizon: usize,
    eta: f64,
    mu: f64,
    x: Vec<f64>,
    router: FeedbackRouter,
    stash: HashMap<usize, Vec<f64>>,
    pool: OldestFirstPool,
    next_round: usize,
    applied: usize,
}

impl Dbagd {
    pub fn new(n: usize, horizon: usize, eta: f64, mu: f64) -> Self {
        Self {
            horizon,
            eta,
            mu,
            x: initial_point(n),
            router: FeedbackRouter::new(horizon),
            stash: HashMap::new(),
            pool: OldestFirstPool::default(),
            next_round: 1,
            applied: 0,
        }
    }

    pub fn with_initial(mut self, x: &FractionalPoint) -> Self {
        self.x = x.coords().to_vec();
        self
    }
}

impl OnlineLearner for Dbagd {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Dbagd
    }

    fn step(
        &mut self,
        t: usize,
        delay: usize,
        oracle: &dyn SetFunction,
        rng: &mut dyn RngCore,
    ) -> Result<RoundRecord> {
        check_round(t, self.next_round, self.horizon)?;
        self.next_round += 1;

        let (set, loss, grad, oracle_calls) = bandit_play(&self.x, self.mu, oracle, rng)?;
        self.router.route(t, delay)?;
        self.stash.insert(t, grad);

        for k in self.router.arrivals(t) {
            let g = self.stash.remove(&k).expect("arrival without stashed gradient");
            self.pool.push(k, g);
        }
        if let Some(g) = self.pool.pop_oldest() {
            self.applied += 1;
            apply_descent(&mut self.x, &[g.as_slice()], self.eta);
        }

        Ok(RoundRecord { round: t, set, loss, delay, oracle_calls })
    }

    fn iterate(&self) -> &[f64] {
        &self.x
    }

    fn gradients_applied(&self) -> usize {
        self.applied
    }

    fn reset_to(&mut self, point: &FractionalPoint) {
        debug_assert_eq!(self.next_round, 1, "reset after stepping");
        self.x = point.coords().to_vec();
    }
}

/// Blocking bandit learner: the iterate is frozen for `K` consecutive rounds
/// and updated once per block from the pools whose block has fully arrived.
pub struct BdbgdNf {
    horizon: usize,
    eta: f64,
    mu: f64,
    block_size: usize,
    y: Vec<f64>,
    router: FeedbackRouter,
    stash: HashMap<usize, Vec<f64>>,
    pools: BlockPools<Vec<f64>>,
    block_buffer: Vec<(usize, Vec<f64>)>,
    next_round: usize,
    applied: usize,
}

impl BdbgdNf {
    pub fn new(n: usize, horizon: usize, eta: f64, mu: f64, block_size: usize) -> Result<Self> {
        if block_size < 1 || block_size > horizon {
            return Err(Error::Parameter(format!(
                "block size must lie in 1..={horizon}, got {block_size}"
            )));
        }
        Ok(Self {
            horizon,
            eta,
            mu,
            block_size,
            y: initial_point(n),
            router: FeedbackRouter::new(horizon),
            stash: HashMap::new(),
            pools: BlockPools::new(block_size, horizon)?,
            block_buffer: Vec::new(),
            next_round: 1,
            applied: 0,
        })
    }

    pub fn with_initial(mut self, x: &FractionalPoint) -> Self {
        self.y = x.coords().to_vec();
        self
    }

    fn is_block_end(&self, t: usize) -> bool {
        t == self.horizon || t % self.block_size == 0
    }
}

impl OnlineLearner for BdbgdNf {
    fn algorithm(&self) -> Algorithm {
        Algorithm::BdbgdNf
    }

    fn step(
        &mut self,
        t: usize,
        delay: usize,
        oracle: &dyn SetFunction,
        rng: &mut dyn RngCore,
    ) -> Result<RoundRecord> {
        check_round(t, self.next_round, self.horizon)?;
        self.next_round += 1;

        // Play from the frozen block iterate.
        let (set, loss, grad, oracle_calls) = bandit_play(&self.y, self.mu, oracle, rng)?;
        self.router.route(t, delay)?;
        self.stash.insert(t, grad);

        for k in self.router.arrivals(t) {
            let g = self.stash.remove(&k).expect("arrival without stashed gradient");
            self.block_buffer.push((k, g));
        }

        if self.is_block_end(t) {
            let ready = self.pools.deposit_and_collect(self.block_buffer.drain(..))?;
            let grads: Vec<Vec<f64>> = ready.into_iter().flat_map(|(_, gs)| gs).collect();
            self.applied += grads.len();
            let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            apply_descent(&mut self.y, &refs, self.eta);
        }

        Ok(RoundRecord { round: t, set, loss, delay, oracle_calls })
    }

    fn iterate(&self) -> &[f64] {
        &self.y
    }

    fn gradients_applied(&self) -> usize {
        self.applied
    }

    fn reset_to(&mut self, point: &FractionalPoint) {
        debug_assert_eq!(self.next_round, 1, "reset after stepping");
        self.y = point.coords().to_vec();
    }
}

/// Instantiates the learner described by a resolved config, opening at
/// `initial` when given (the origin otherwise).
pub fn build_learner(
    config: &LearnerConfig,
    initial: Option<&FractionalPoint>,
) -> Result<Box<dyn OnlineLearner>> {
    let need_mu = || {
        config.mu.ok_or_else(|| {
            Error::Parameter(format!("{} requires an exploration probability", config.algorithm))
        })
    };
    if let Some(point) = initial {
        if point.dim() != config.n {
            return Err(Error::Parameter(format!(
                "initial point has dimension {}, expected {}",
                point.dim(),
                config.n
            )));
        }
    }
    let mut learner: Box<dyn OnlineLearner> = match config.algorithm {
        Algorithm::DogdNf => Box::new(DogdNf::new(config.n, config.horizon, config.eta)),
        Algorithm::Doagd => Box::new(Doagd::new(config.n, config.horizon, config.eta)),
        Algorithm::DbgdNf => Box::new(DbgdNf::new(config.n, config.horizon, config.eta, need_mu()?)),
        Algorithm::Dbagd => Box::new(Dbagd::new(config.n, config.horizon, config.eta, need_mu()?)),
        Algorithm::BdbgdNf => {
            let block = config.block_size.ok_or_else(|| {
                Error::Parameter("bdbgd-nf requires a block size".into())
            })?;
            Box::new(BdbgdNf::new(config.n, config.horizon, config.eta, need_mu()?, block)?)
        }
    };
    if let Some(point) = initial {
        learner.reset_to(point);
    }
    Ok(learner)
}
