//! Experiment orchestration: the (algorithm × q × seed) run matrix per delay
//! regime, the seed-shared hindsight comparator, grid search over the
//! exploration scale, and reproducible seed wiring.
//!
//! Randomness is split into labelled per-seed streams (round data, delay
//! schedule, decision sampling, initial point), so every algorithm in a cell
//! sees the same environment and sampling stream, and any round's data can
//! be regenerated in isolation.

use std::sync::Mutex;
use std::time::Instant;

use nonsub::algorithms::{build_learner, default_params, Algorithm, LearnerConfig, RoundRecord};
use nonsub::feedback::{delay_stats, generate_delays, read_delays, DelayKind, DelaySchedule};
use nonsub::lovasz::FractionalPoint;
use nonsub::seed::{derive, fingerprint};
use nonsub::setfn::{analyze_dr_ratios, SetFunction, Subset};
use nonsub::sparsebench::{comparator_from_sums, generate_round, BenchConfig, RoundOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::{DelayMode, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::regret::{ComparatorSeries, RegretLedger};

/// Where a ledger constant came from; recorded in the run metadata.
#[derive(Debug, Clone)]
pub struct LedgerFactors {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_source: String,
    pub beta_source: String,
}

/// One executed cell of the matrix.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub q: f64,
    pub seed: u64,
    /// Regime label: the schedule's maximum delay bound.
    pub regime: usize,
    pub mean_delay: f64,
    pub fingerprint: u64,
    pub records: Vec<RoundRecord>,
    pub ledger: RegretLedger,
    pub loss_bound: f64,
    pub oracle_calls: u64,
    pub overdue: usize,
    /// Gradients folded into the iterate over the whole run.
    pub applied: usize,
    pub wall_secs: f64,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn final_regret(&self) -> f64 {
        self.ledger.final_scaled()
    }
}

/// Aggregated view of one algorithm in one regime at its selected q.
#[derive(Debug, Clone)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub regime: usize,
    pub chosen_q: f64,
    pub mean_final_regret: f64,
    pub std_final_regret: f64,
}

/// Everything produced for one delay regime.
pub struct RegimeResult {
    pub regime: usize,
    /// Outcomes for the selected q only, every algorithm × seed.
    pub outcomes: Vec<RunOutcome>,
    pub summaries: Vec<AlgorithmSummary>,
    pub comparators: Vec<(u64, ComparatorSeries)>,
    /// Cells that failed (description per cell); failures skip the cell,
    /// never the matrix.
    pub failures: Vec<String>,
}

/// Full experiment output.
pub struct ExperimentResults {
    pub factors: LedgerFactors,
    pub regimes: Vec<RegimeResult>,
    pub config_fingerprint: u64,
}

pub fn sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Order-preserving parallel map over a fixed worker count.
pub fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers <= 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(items.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue poisoned").pop();
                match next {
                    Some((idx, item)) => {
                        let out = f(item);
                        results.lock().expect("results poisoned").push((idx, out));
                    }
                    None => break,
                }
            });
        }
    });
    let mut collected = results.into_inner().expect("results poisoned");
    collected.sort_by_key(|(idx, _)| *idx);
    collected.into_iter().map(|(_, r)| r).collect()
}

fn worker_count(config: &ExperimentConfig) -> usize {
    if config.parallel > 0 {
        config.parallel
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

/// The delay schedule of one (regime, seed) cell.
pub fn schedule_for(
    config: &ExperimentConfig,
    regime: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let kind = match &config.delay_mode {
        DelayMode::Constant => DelayKind::Constant { delay: regime },
        DelayMode::Uniform => DelayKind::Uniform {
            max: regime,
            seed: derive(seed, "delay"),
        },
        DelayMode::Spike => DelayKind::Spike,
        DelayMode::File(path) => {
            let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
            let delays = read_delays(std::io::BufReader::new(file))?;
            if delays.len() != config.horizon {
                return Err(HarnessError::Config(format!(
                    "`delay.file`: {} delays for horizon {}",
                    delays.len(),
                    config.horizon
                )));
            }
            DelayKind::Custom { delays }
        }
    };
    Ok(generate_delays(&DelaySchedule::new(kind, config.horizon))?)
}

/// Regime labels implied by the delay mode.
pub fn regimes_of(config: &ExperimentConfig) -> Result<Vec<usize>> {
    match &config.delay_mode {
        DelayMode::Constant | DelayMode::Uniform => Ok(config.delay_maxes.clone()),
        DelayMode::Spike => Ok(vec![(config.horizon / 2).max(1)]),
        DelayMode::File(_) => {
            let delays = schedule_for(config, 0, 0)?;
            Ok(vec![delay_stats(&delays).max])
        }
    }
}

/// Loss-scale bound for one seed: the largest `f̄ + f̲` over round-1 subsets,
/// doubled as slack for round-to-round variation.
pub fn loss_bound_for(config: &ExperimentConfig, seed: u64) -> Result<f64> {
    if let Some(l) = config.loss_bound {
        return Ok(l);
    }
    let bench = config.bench_config(seed);
    let oracle = RoundOracle::new(generate_round(&bench, 1)?, bench.gamma)?;
    let mut max = 0.0f64;
    for mask in 0..(1u64 << config.n) {
        let s = Subset::from_mask(mask);
        max = max.max(oracle.upper(s) + oracle.lower(s));
    }
    Ok(2.0 * max)
}

/// Resolves the ledger's approximation factors, measuring the supermodularity
/// ratio on a reduced instance when not pinned by the config.
pub fn resolve_factors(config: &ExperimentConfig) -> Result<LedgerFactors> {
    let alpha;
    let alpha_source;
    match config.alpha {
        Some(a) => {
            alpha = a;
            alpha_source = "config".to_string();
        }
        None => {
            if config.n < 2 {
                alpha = 1.0;
                alpha_source = "degenerate n=1".to_string();
            } else {
                alpha = 1.0 / (config.n as f64 - 1.0);
                alpha_source = format!("range-cost closed form 1/(n-1), n={}", config.n);
            }
        }
    }

    let beta;
    let beta_source;
    match config.beta {
        Some(b) => {
            beta = b;
            beta_source = "config".to_string();
        }
        None => {
            let n_sub = config.n.min(8);
            let probe = BenchConfig {
                n: n_sub,
                samples: config.samples,
                sparsity: config.sparsity.min(n_sub),
                gamma: config.gamma,
                noise_std: config.noise_std,
                horizon: 1,
                seed: derive(config.seeds[0], "beta-probe"),
            };
            let oracle = RoundOracle::new(generate_round(&probe, 1)?, probe.gamma)?;
            let ratios = analyze_dr_ratios(&oracle.parts().lower)?;
            if ratios.beta.is_finite() {
                beta = ratios.beta;
                beta_source = format!("analyzer on reduced instance n={n_sub}");
            } else {
                beta = 1.0;
                beta_source = format!(
                    "analyzer on reduced instance n={n_sub} found no constraining pair; defaulted"
                );
            }
        }
    }

    Ok(LedgerFactors {
        alpha,
        beta,
        alpha_source,
        beta_source,
    })
}

/// Builds the comparator for one seed by streaming every round once and
/// accumulating all `2^n` subset sums, then a second pass for the per-round
/// values at `S*`.
pub fn comparator_for_seed(config: &ExperimentConfig, seed: u64) -> Result<ComparatorSeries> {
    let bench = config.bench_config(seed);
    let n = config.n;
    let mut sums = vec![0.0; 1usize << n];
    for t in 1..=config.horizon {
        let oracle = RoundOracle::new(generate_round(&bench, t)?, bench.gamma)?;
        for (mask, sum) in sums.iter_mut().enumerate() {
            *sum += oracle.evaluate(Subset::from_mask(mask as u64));
        }
    }
    let (s_star, total) = comparator_from_sums(&sums, n)?;

    let mut upper_at_star = Vec::with_capacity(config.horizon);
    let mut lower_at_star = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let oracle = RoundOracle::new(generate_round(&bench, t)?, bench.gamma)?;
        upper_at_star.push(oracle.upper(s_star));
        lower_at_star.push(oracle.lower(s_star));
    }
    Ok(ComparatorSeries {
        s_star,
        total,
        upper_at_star,
        lower_at_star,
    })
}

/// Independent optimality re-check: a fresh enumeration pass confirming no
/// subset beats `S*` on the realized sum (streamed in reverse round order so
/// the accumulation differs from the first pass).
pub fn verify_comparator(
    config: &ExperimentConfig,
    seed: u64,
    comparator: &ComparatorSeries,
    tol: f64,
) -> Result<bool> {
    let bench = config.bench_config(seed);
    let n = config.n;
    let mut sums = vec![0.0; 1usize << n];
    for t in (1..=config.horizon).rev() {
        let oracle = RoundOracle::new(generate_round(&bench, t)?, bench.gamma)?;
        for (mask, sum) in sums.iter_mut().enumerate() {
            *sum += oracle.evaluate(Subset::from_mask(mask as u64));
        }
    }
    let star_sum = sums[comparator.s_star.mask() as usize];
    Ok(sums.iter().all(|&v| v >= star_sum - tol) && (star_sum - comparator.total).abs() <= tol)
}

/// Resolved parameters for one cell, with any per-algorithm overrides folded
/// in.
pub fn cell_params(
    config: &ExperimentConfig,
    algorithm: Algorithm,
    regime: usize,
    mean_delay: f64,
    loss_bound: f64,
    q: f64,
) -> Result<LearnerConfig> {
    let mut params = default_params(
        algorithm,
        config.horizon,
        config.n,
        loss_bound,
        regime,
        mean_delay,
        q,
    )?;
    if let Some(o) = config.overrides.get(&algorithm) {
        if let Some(eta) = o.eta {
            params.eta = eta;
            params.warnings.push(format!("eta overridden to {eta}"));
        }
        if let Some(mu) = o.mu {
            params.mu = Some(mu);
            params.warnings.push(format!("mu overridden to {mu}"));
        }
        if let Some(block) = o.block_size {
            params.block_size = Some(block);
            params.warnings.push(format!("block size overridden to {block}"));
        }
    }
    Ok(params)
}

/// Opening iterate for all of a seed's cells: drawn uniformly from the
/// hypercube so no algorithm starts with a structurally special chain, and
/// shared across algorithms so comparisons stay paired.
pub fn initial_point_for(config: &ExperimentConfig, seed: u64) -> FractionalPoint {
    let mut rng = ChaCha12Rng::seed_from_u64(derive(seed, "init"));
    FractionalPoint::new((0..config.n).map(|_| rng.random()).collect())
        .expect("uniform draws lie in the hypercube")
}

/// Executes one (algorithm, regime, q, seed) cell against its comparator.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    config: &ExperimentConfig,
    factors: &LedgerFactors,
    comparator: &ComparatorSeries,
    algorithm: Algorithm,
    regime: usize,
    q: f64,
    seed: u64,
    loss_bound: f64,
    config_fp: u64,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let delays = schedule_for(config, regime, seed)?;
    let stats = delay_stats(&delays);
    let params = cell_params(config, algorithm, regime, stats.mean, loss_bound, q)?;
    let initial = initial_point_for(config, seed);
    let mut learner = build_learner(&params, Some(&initial))?;

    let bench = config.bench_config(seed);
    let mut sample_rng = ChaCha12Rng::seed_from_u64(derive(seed, "sample"));
    let mut records = Vec::with_capacity(config.horizon);
    let mut oracle_calls = 0u64;
    let mut overdue = 0usize;
    for t in 1..=config.horizon {
        let oracle = RoundOracle::new(generate_round(&bench, t)?, bench.gamma)?;
        let delay = delays[t - 1];
        if t + delay - 1 > config.horizon {
            overdue += 1;
        }
        let record = learner.step(t, delay, &oracle, &mut sample_rng)?;
        oracle_calls += record.oracle_calls;
        records.push(record);
    }

    let ledger = RegretLedger::build(&records, comparator, factors.alpha, factors.beta)?;
    let fp = fingerprint(
        format!(
            "{config_fp:016x}|{}|{regime}|{q}|{seed}|{}",
            algorithm.id(),
            env!("CARGO_PKG_VERSION")
        )
        .as_bytes(),
    );

    Ok(RunOutcome {
        algorithm,
        q,
        seed,
        regime,
        mean_delay: stats.mean,
        fingerprint: fp,
        records,
        ledger,
        loss_bound,
        oracle_calls,
        overdue,
        applied: learner.gradients_applied(),
        wall_secs: start.elapsed().as_secs_f64(),
        warnings: params.warnings.clone(),
    })
}

/// Exploration factors actually searched for an algorithm.
fn q_grid_for(config: &ExperimentConfig, algorithm: Algorithm) -> Vec<f64> {
    if algorithm.is_bandit() {
        config.q_grid.clone()
    } else {
        vec![1.0]
    }
}

/// Runs one delay regime: every (algorithm, q, seed) cell, grid selection of
/// q by mean final regret, aggregation for the summary table.
pub fn run_regime(
    config: &ExperimentConfig,
    factors: &LedgerFactors,
    regime: usize,
    comparators: &[(u64, ComparatorSeries)],
    loss_bounds: &[(u64, f64)],
    config_fp: u64,
    workers: usize,
) -> Result<RegimeResult> {
    let mut cells = Vec::new();
    for &algorithm in &config.algorithms {
        for q in q_grid_for(config, algorithm) {
            for &seed in &config.seeds {
                cells.push((algorithm, q, seed));
            }
        }
    }

    let results: Vec<(Algorithm, f64, u64, Result<RunOutcome>)> =
        parallel_map(cells, workers, |(algorithm, q, seed)| {
            let comparator = &comparators
                .iter()
                .find(|(s, _)| *s == seed)
                .expect("comparator missing for seed")
                .1;
            let loss_bound = loss_bounds
                .iter()
                .find(|(s, _)| *s == seed)
                .expect("loss bound missing for seed")
                .1;
            let outcome = run_cell(
                config, factors, comparator, algorithm, regime, q, seed, loss_bound, config_fp,
            );
            (algorithm, q, seed, outcome)
        });

    // A broken cell is recorded and skipped; the rest of the matrix stands.
    let mut all: Vec<RunOutcome> = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (algorithm, q, seed, outcome) in results {
        match outcome {
            Ok(outcome) => all.push(outcome),
            Err(e) => failures.push(format!(
                "{} d={regime} q={q} seed={seed}: {e}",
                algorithm.id()
            )),
        }
    }

    // Grid search: smallest mean final regret across seeds wins; ties go to
    // the smaller q for determinism.
    let mut summaries = Vec::new();
    let mut selected = Vec::new();
    for &algorithm in &config.algorithms {
        let mut best: Option<(f64, f64, f64)> = None; // (q, mean, std)
        for q in q_grid_for(config, algorithm) {
            let finals: Vec<f64> = all
                .iter()
                .filter(|o| o.algorithm == algorithm && o.q == q)
                .map(RunOutcome::final_regret)
                .collect();
            if finals.is_empty() {
                continue;
            }
            let (mean, std) = sample_std(&finals);
            let better = match best {
                None => true,
                Some((_, best_mean, _)) => mean < best_mean,
            };
            if better {
                best = Some((q, mean, std));
            }
        }
        let Some((chosen_q, mean, std)) = best else {
            failures.push(format!(
                "{} d={regime}: no successful cell, omitted from the summary",
                algorithm.id()
            ));
            continue;
        };
        summaries.push(AlgorithmSummary {
            algorithm,
            regime,
            chosen_q,
            mean_final_regret: mean,
            std_final_regret: std,
        });
        selected.extend(
            all.iter()
                .filter(|o| o.algorithm == algorithm && o.q == chosen_q)
                .cloned(),
        );
    }

    Ok(RegimeResult {
        regime,
        outcomes: selected,
        summaries,
        comparators: comparators.to_vec(),
        failures,
    })
}

/// Runs the whole experiment matrix.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let workers = worker_count(config);
    let config_fp = fingerprint(config.canonical().as_bytes());
    let factors = resolve_factors(config)?;

    // Comparators and loss bounds depend only on the seed's data stream, so
    // they are shared across regimes, algorithms and the q grid.
    let comparator_jobs: Vec<u64> = config.seeds.clone();
    let comparators: Vec<(u64, ComparatorSeries)> = {
        let computed = parallel_map(comparator_jobs, workers, |seed| {
            comparator_for_seed(config, seed).map(|c| (seed, c))
        });
        let mut out = Vec::with_capacity(computed.len());
        for item in computed {
            out.push(item?);
        }
        out
    };
    let mut loss_bounds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        loss_bounds.push((seed, loss_bound_for(config, seed)?));
    }

    let mut regimes = Vec::new();
    for regime in regimes_of(config)? {
        regimes.push(run_regime(
            config,
            &factors,
            regime,
            &comparators,
            &loss_bounds,
            config_fp,
            workers,
        )?);
    }

    Ok(ExperimentResults {
        factors,
        regimes,
        config_fingerprint: config_fp,
    })
}
