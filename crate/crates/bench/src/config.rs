//! Experiment configuration: a flat `key = value` text format with dotted
//! section prefixes. Unknown keys are errors, every diagnostic carries the
//! offending key, and the canonical rendering of a parsed config doubles as
//! the fingerprint input.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nonsub::algorithms::Algorithm;

use crate::error::{HarnessError, Result};

/// How delays are produced, before a regime's max delay is plugged in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayMode {
    Constant,
    Uniform,
    Spike,
    /// Plain-text schedule, one delay per line.
    File(PathBuf),
}

/// Per-algorithm parameter overrides (otherwise the prescribed defaults).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlgorithmOverride {
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub block_size: Option<usize>,
}

/// A fully parsed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub horizon: usize,
    pub samples: usize,
    pub sparsity: usize,
    pub gamma: f64,
    pub noise_std: f64,
    pub delay_mode: DelayMode,
    /// One delay regime per entry (ignored for spike/file modes).
    pub delay_maxes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub q_grid: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Ledger approximation factor; `None` = range-cost closed form.
    pub alpha: Option<f64>,
    /// Ledger supermodularity factor; `None` = measured on a reduced instance.
    pub beta: Option<f64>,
    /// Loss-scale bound; `None` = enumerated from round-1 data, doubled.
    pub loss_bound: Option<f64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 = all available.
    pub parallel: usize,
    pub overrides: BTreeMap<Algorithm, AlgorithmOverride>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10,
            horizon: 8000,
            samples: 128,
            sparsity: 2,
            gamma: 0.1,
            noise_std: 0.1,
            delay_mode: DelayMode::Uniform,
            delay_maxes: vec![10],
            seeds: (1..=10).collect(),
            q_grid: vec![0.01, 0.1, 1.0],
            algorithms: Algorithm::ALL.to_vec(),
            alpha: None,
            beta: None,
            loss_bound: None,
            out_dir: PathBuf::from("out"),
            parallel: 0,
            overrides: BTreeMap::new(),
        }
    }
}

fn bad(key: &str, line: usize, what: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("`{key}` (line {line}): {what}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, line: usize, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| bad(key, line, format!("cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, line: usize, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|piece| {
            piece
                .trim()
                .parse()
                .map_err(|_| bad(key, line, format!("cannot parse `{}`", piece.trim())))
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses the text format. Defaults cover everything except what the
    /// caller chooses to set; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let mut delay_maxes_set = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {line}: expected `key = value`"))
            })?;
            let key = key.trim();
            let value = value.trim();

            match key {
                "bench.n" => config.n = parse_num(key, line, value)?,
                "bench.horizon" => config.horizon = parse_num(key, line, value)?,
                "bench.samples" => config.samples = parse_num(key, line, value)?,
                "bench.sparsity" => config.sparsity = parse_num(key, line, value)?,
                "bench.gamma" => config.gamma = parse_num(key, line, value)?,
                "bench.noise_std" => config.noise_std = parse_num(key, line, value)?,
                "delay.kind" => {
                    config.delay_mode = match value {
                        "constant" => DelayMode::Constant,
                        "uniform" => DelayMode::Uniform,
                        "spike" => DelayMode::Spike,
                        other => {
                            return Err(bad(
                                key,
                                line,
                                format!("`{other}` is not constant|uniform|spike|file"),
                            ))
                        }
                    };
                }
                "delay.file" => {
                    config.delay_mode = DelayMode::File(PathBuf::from(value));
                }
                "delay.max" => {
                    config.delay_maxes = parse_list(key, line, value)?;
                    delay_maxes_set = true;
                }
                "seeds" => config.seeds = parse_list(key, line, value)?,
                "q_grid" => config.q_grid = parse_list(key, line, value)?,
                "algorithms" => {
                    config.algorithms = value
                        .split(',')
                        .map(|name| {
                            Algorithm::parse(name).map_err(|e| bad(key, line, e))
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
                "alpha" => {
                    config.alpha = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(key, line, value)?)
                    };
                }
                "beta" => {
                    config.beta = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(key, line, value)?)
                    };
                }
                "loss_bound" => {
                    config.loss_bound = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(key, line, value)?)
                    };
                }
                "out_dir" => config.out_dir = PathBuf::from(value),
                "parallel" => config.parallel = parse_num(key, line, value)?,
                _ => {
                    if let Some(rest) = key.strip_prefix("override.") {
                        let (algo_name, field) = rest.split_once('.').ok_or_else(|| {
                            bad(key, line, "expected override.<algorithm>.<field>")
                        })?;
                        let algorithm =
                            Algorithm::parse(algo_name).map_err(|e| bad(key, line, e))?;
                        let entry = config.overrides.entry(algorithm).or_default();
                        match field {
                            "eta" => entry.eta = Some(parse_num(key, line, value)?),
                            "mu" => entry.mu = Some(parse_num(key, line, value)?),
                            "block" => entry.block_size = Some(parse_num(key, line, value)?),
                            other => {
                                return Err(bad(
                                    key,
                                    line,
                                    format!("`{other}` is not eta|mu|block"),
                                ))
                            }
                        }
                    } else {
                        return Err(HarnessError::Config(format!(
                            "unknown key `{key}` (line {line})"
                        )));
                    }
                }
            }
        }

        if matches!(config.delay_mode, DelayMode::Spike | DelayMode::File(_)) && delay_maxes_set {
            return Err(HarnessError::Config(
                "`delay.max`: not applicable for spike/file schedules".into(),
            ));
        }

        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.n < 1 || self.n > 20 {
            return fail(format!(
                "`bench.n`: {} outside 1..=20 (the hindsight comparator enumerates all subsets)",
                self.n
            ));
        }
        if self.horizon < 1 {
            return fail("`bench.horizon`: must be at least 1".into());
        }
        if self.sparsity < 1 || self.sparsity > self.n {
            return fail(format!("`bench.sparsity`: {} outside 1..={}", self.sparsity, self.n));
        }
        if self.samples < 1 {
            return fail("`bench.samples`: must be at least 1".into());
        }
        if !(self.gamma > 0.0) {
            return fail("`bench.gamma`: must be positive".into());
        }
        if self.noise_std < 0.0 {
            return fail("`bench.noise_std`: must be nonnegative".into());
        }
        if self.seeds.is_empty() {
            return fail("`seeds`: at least one seed required".into());
        }
        if self.algorithms.is_empty() {
            return fail("`algorithms`: at least one algorithm required".into());
        }
        if self.q_grid.is_empty() && self.algorithms.iter().any(Algorithm::is_bandit) {
            return fail("`q_grid`: required for bandit algorithms".into());
        }
        if self.q_grid.iter().any(|&q| !(q > 0.0)) {
            return fail("`q_grid`: factors must be positive".into());
        }
        if matches!(self.delay_mode, DelayMode::Constant | DelayMode::Uniform) {
            if self.delay_maxes.is_empty() {
                return fail("`delay.max`: at least one regime required".into());
            }
            if self.delay_maxes.iter().any(|&d| d < 1) {
                return fail("`delay.max`: delays must be at least 1".into());
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return fail("`alpha`: must be positive".into());
            }
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return fail("`beta`: must be positive".into());
            }
        }
        if let Some(l) = self.loss_bound {
            if !(l > 0.0) {
                return fail("`loss_bound`: must be positive".into());
            }
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return fail("`seeds`: duplicates not allowed".into());
        }
        Ok(())
    }

    /// Canonical rendering; the fingerprint input. Field order is fixed.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("bench.n", self.n.to_string());
        push("bench.horizon", self.horizon.to_string());
        push("bench.samples", self.samples.to_string());
        push("bench.sparsity", self.sparsity.to_string());
        push("bench.gamma", self.gamma.to_string());
        push("bench.noise_std", self.noise_std.to_string());
        let kind = match &self.delay_mode {
            DelayMode::Constant => "constant".to_string(),
            DelayMode::Uniform => "uniform".to_string(),
            DelayMode::Spike => "spike".to_string(),
            DelayMode::File(path) => format!("file:{}", path.display()),
        };
        push("delay.kind", kind);
        if matches!(self.delay_mode, DelayMode::Constant | DelayMode::Uniform) {
            push(
                "delay.max",
                self.delay_maxes.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
            );
        }
        push(
            "seeds",
            self.seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        );
        push(
            "q_grid",
            self.q_grid.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        );
        push(
            "algorithms",
            self.algorithms.iter().map(|a| a.id().to_string()).collect::<Vec<_>>().join(","),
        );
        push("alpha", self.alpha.map_or("auto".into(), |v| v.to_string()));
        push("beta", self.beta.map_or("auto".into(), |v| v.to_string()));
        push(
            "loss_bound",
            self.loss_bound.map_or("auto".into(), |v| v.to_string()),
        );
        for (algorithm, o) in &self.overrides {
            if let Some(eta) = o.eta {
                push(&format!("override.{}.eta", algorithm.id()), eta.to_string());
            }
            if let Some(mu) = o.mu {
                push(&format!("override.{}.mu", algorithm.id()), mu.to_string());
            }
            if let Some(block) = o.block_size {
                push(&format!("override.{}.block", algorithm.id()), block.to_string());
            }
        }
        out
    }

    /// The synthetic-environment parameters for one seed.
    pub fn bench_config(&self, seed: u64) -> nonsub::sparsebench::BenchConfig {
        nonsub::sparsebench::BenchConfig {
            n: self.n,
            samples: self.samples,
            sparsity: self.sparsity,
            gamma: self.gamma,
            noise_std: self.noise_std,
            horizon: self.horizon,
            seed,
        }
    }
}
