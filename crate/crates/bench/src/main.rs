//! Command-line entry point.
//!
//! Subcommands: `run` (execute a config file), `verify` (property suite over
//! small instances), `replot` (regenerate SVGs from persisted CSVs).
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use nonsub_bench::config::ExperimentConfig;
use nonsub_bench::error::HarnessError;
use nonsub_bench::output::{emit_outputs, replot};
use nonsub_bench::runner::run_experiment;
use nonsub_bench::verify;

const USAGE: &str = "\
usage: nonsub-bench <command> [options]

commands:
  run      execute an experiment config and write CSVs, plots and metadata
  verify   run the property suite (unbiasedness, subgradient bound, routing)
  replot   regenerate plots from the CSVs of a previous run

options:
  --config <path>    experiment config file (required for run)
  --out <dir>        output directory (overrides the config; required for replot)
  --seeds <a,b,c>    comma-separated seed list (overrides the config)
  --parallel <k>     worker threads (overrides the config; 0 = all cores)
";

struct Cli {
    command: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    parallel: Option<usize>,
}

fn parse_cli(args: &[String]) -> Result<Cli, String> {
    let command = args.first().cloned().ok_or_else(|| "missing command".to_string())?;
    if !matches!(command.as_str(), "run" | "verify" | "replot") {
        return Err(format!("unknown command `{command}`"));
    }
    let mut cli = Cli {
        command,
        config: None,
        out: None,
        seeds: None,
        parallel: None,
    };
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = || {
            it.next()
                .cloned()
                .ok_or_else(|| format!("flag `{flag}` expects a value"))
        };
        match flag.as_str() {
            "--config" => cli.config = Some(PathBuf::from(value()?)),
            "--out" => cli.out = Some(PathBuf::from(value()?)),
            "--seeds" => {
                let raw = value()?;
                let seeds = raw
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().map_err(|_| format!("bad seed `{s}`")))
                    .collect::<Result<Vec<u64>, String>>()?;
                cli.seeds = Some(seeds);
            }
            "--parallel" => {
                cli.parallel =
                    Some(value()?.parse().map_err(|_| "bad --parallel value".to_string())?)
            }
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(cli)
}

fn cmd_run(cli: &Cli) -> Result<(), HarnessError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Config("`run` requires --config".into()))?;
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seeds) = &cli.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(parallel) = cli.parallel {
        config.parallel = parallel;
    }
    config.validate()?;

    let results = run_experiment(&config)?;
    let written = emit_outputs(&results, &config.out_dir)?;

    println!(
        "ledger: alpha = {} ({}), beta = {} ({})",
        results.factors.alpha,
        results.factors.alpha_source,
        results.factors.beta,
        results.factors.beta_source
    );
    for regime in &results.regimes {
        for failure in &regime.failures {
            eprintln!("warning: cell failed: {failure}");
        }
        for s in &regime.summaries {
            println!(
                "d = {:>5}  {:<9} final regret {:>14.3} ± {:>10.3}  (q = {})",
                s.regime, s.algorithm.id(), s.mean_final_regret, s.std_final_regret, s.chosen_q
            );
        }
    }
    println!("{} files under {}", written.len(), config.out_dir.display());
    Ok(())
}

fn cmd_verify() -> Result<(), HarnessError> {
    let mut failed = false;
    for check in verify::run_all() {
        println!(
            "{} {:<22} {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
        failed |= !check.passed;
    }
    if failed {
        Err(HarnessError::Runtime("verification failed".into()))
    } else {
        Ok(())
    }
}

fn cmd_replot(cli: &Cli) -> Result<(), HarnessError> {
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| HarnessError::Config("`replot` requires --out".into()))?;
    let written = replot(out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_cli(&args) {
        Ok(cli) => cli,
        Err(message) => {
            eprintln!("error: {message}\n\n{USAGE}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command.as_str() {
        "run" => cmd_run(&cli),
        "verify" => cmd_verify(),
        "replot" => cmd_replot(&cli),
        _ => unreachable!("validated in parse_cli"),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
