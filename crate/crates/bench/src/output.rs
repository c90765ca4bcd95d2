//! Result persistence: round and regret CSVs per run, the summary table,
//! run metadata, and self-contained SVG regret plots with seed bands.
//!
//! Every file is written atomically (temp file + rename) and floats are
//! rendered with Rust's shortest round-trip formatting, so identical runs
//! produce byte-identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nonsub::algorithms::Algorithm;
use nonsub::setfn::Subset;

use crate::error::{HarnessError, Result};
use crate::runner::{sample_std, AlgorithmSummary, ExperimentResults, RunOutcome};

pub const ROUNDS_HEADER: &str = "t,algorithm,seed,set,loss,delay,oracle_calls";
pub const REGRET_HEADER: &str =
    "t,loss,comparator_scaled,comparator_plain,regret_scaled,regret_plain";
pub const SUMMARY_HEADER: &str = "algorithm,d,mean_final_regret,std_final_regret,chosen_q";

/// Writes `bytes` to `path` via a temporary sibling and an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn set_field(s: Subset) -> String {
    s.members().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// File stem of one run: `<algorithm>_d<regime>_q<q>_s<seed>`.
pub fn run_stem(outcome: &RunOutcome) -> String {
    format!(
        "{}_d{}_q{}_s{}",
        outcome.algorithm.id(),
        outcome.regime,
        outcome.q,
        outcome.seed
    )
}

pub fn rounds_csv(outcome: &RunOutcome) -> String {
    let mut out = String::with_capacity(outcome.records.len() * 32);
    out.push_str(ROUNDS_HEADER);
    out.push('\n');
    for r in &outcome.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.round,
            outcome.algorithm.id(),
            outcome.seed,
            set_field(r.set),
            r.loss,
            r.delay,
            r.oracle_calls
        )
        .expect("write to string");
    }
    out
}

pub fn regret_csv(outcome: &RunOutcome) -> String {
    let ledger = &outcome.ledger;
    let mut out = String::with_capacity(ledger.losses.len() * 48);
    out.push_str(REGRET_HEADER);
    out.push('\n');
    for t in 0..ledger.losses.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t + 1,
            ledger.losses[t],
            ledger.comparator_scaled[t],
            ledger.comparator_plain[t],
            ledger.regret_scaled[t],
            ledger.regret_plain[t]
        )
        .expect("write to string");
    }
    out
}

pub fn summary_csv(summaries: &[AlgorithmSummary]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.algorithm.id(),
            s.regime,
            s.mean_final_regret,
            s.std_final_regret,
            s.chosen_q
        )
        .expect("write to string");
    }
    out
}

fn meta_text(results: &ExperimentResults) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "config_fingerprint = {:016x}", results.config_fingerprint);
    let _ = writeln!(out, "alpha = {}", results.factors.alpha);
    let _ = writeln!(out, "alpha_source = {}", results.factors.alpha_source);
    let _ = writeln!(out, "beta = {}", results.factors.beta);
    let _ = writeln!(out, "beta_source = {}", results.factors.beta_source);
    for regime in &results.regimes {
        for failure in &regime.failures {
            let _ = writeln!(out, "failed {failure}");
        }
        for (seed, comparator) in &regime.comparators {
            let _ = writeln!(
                out,
                "comparator d={} seed={} s_star={} total={}",
                regime.regime,
                seed,
                comparator.s_star.display(),
                comparator.total
            );
        }
        for outcome in &regime.outcomes {
            let _ = writeln!(
                out,
                "run {} fingerprint={:016x} loss_bound={} mean_delay={} overdue={} oracle_calls={}{}",
                run_stem(outcome),
                outcome.fingerprint,
                outcome.loss_bound,
                outcome.mean_delay,
                outcome.overdue,
                outcome.oracle_calls,
                if outcome.warnings.is_empty() {
                    String::new()
                } else {
                    format!(" warnings={}", outcome.warnings.join("; "))
                }
            );
        }
    }
    out
}

/// One plotted curve: per-round mean with a ±1 std band over seeds.
pub struct Curve {
    pub label: String,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn nice_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs();
    if magnitude >= 1e5 || magnitude < 1e-2 {
        format!("{v:.1e}")
    } else if magnitude >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders mean-regret-versus-round curves as a standalone SVG document.
pub fn render_plot(title: &str, y_label: &str, curves: &[Curve]) -> String {
    let width = 780.0;
    let height = 520.0;
    let (ml, mr, mt, mb) = (78.0, 20.0, 46.0, 56.0);
    let pw = width - ml - mr;
    let ph = height - mt - mb;

    let horizon = curves.iter().map(|c| c.mean.len()).max().unwrap_or(1).max(1);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for c in curves {
        for v in c.lo.iter().chain(&c.hi).chain(&c.mean) {
            y_min = y_min.min(*v);
            y_max = y_max.max(*v);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let x_of = |t: f64| ml + pw * (t - 1.0) / (horizon as f64 - 1.0).max(1.0);
    let y_of = |v: f64| mt + ph * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"Helvetica,Arial,sans-serif\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{title}</text>",
        ml + pw / 2.0
    );

    // Gridlines and ticks.
    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let y = mt + ph * frac;
        let value = y_max - frac * (y_max - y_min);
        let _ = writeln!(
            svg,
            "<line x1=\"{ml}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\" stroke-width=\"1\"/>",
            ml + pw
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            ml - 6.0,
            y + 4.0,
            nice_number(value)
        );
        let x = ml + pw * frac;
        let t_label = 1.0 + frac * (horizon as f64 - 1.0);
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            mt + ph + 18.0,
            nice_number(t_label.round())
        );
    }
    // Zero line when visible.
    if y_min < 0.0 && y_max > 0.0 {
        let y = y_of(0.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{ml}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#888888\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>",
            ml + pw
        );
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333333\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">round</text>",
        ml + pw / 2.0,
        height - 14.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>",
        mt + ph / 2.0,
        mt + ph / 2.0
    );

    let stride = (horizon / 400).max(1);
    let samples: Vec<usize> = (0..horizon)
        .step_by(stride)
        .chain(std::iter::once(horizon - 1))
        .collect();

    for (idx, curve) in curves.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pick = |series: &[f64], t: usize| series[t.min(series.len() - 1)];

        // Seed band.
        let mut band = String::new();
        for &t in &samples {
            let _ = write!(band, "{:.2},{:.2} ", x_of(t as f64 + 1.0), y_of(pick(&curve.hi, t)));
        }
        for &t in samples.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x_of(t as f64 + 1.0), y_of(pick(&curve.lo, t)));
        }
        let _ = writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>",
            band.trim_end()
        );

        // Mean line.
        let mut line = String::new();
        for &t in &samples {
            let _ = write!(line, "{:.2},{:.2} ", x_of(t as f64 + 1.0), y_of(pick(&curve.mean, t)));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            line.trim_end()
        );

        // Legend entry.
        let ly = mt + 16.0 + idx as f64 * 18.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2.5\"/>",
            ml + 12.0,
            ml + 40.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
            ml + 46.0,
            ly + 4.0,
            curve.label
        );
    }

    svg.push_str("</svg>\n");
    svg
}

/// Mean and ±1 std band across a group of per-round series.
pub fn band_of(series: &[&[f64]]) -> Curve {
    let horizon = series.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(horizon);
    let mut lo = Vec::with_capacity(horizon);
    let mut hi = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let values: Vec<f64> = series.iter().map(|s| s[t.min(s.len() - 1)]).collect();
        let (m, sd) = sample_std(&values);
        mean.push(m);
        lo.push(m - sd);
        hi.push(m + sd);
    }
    Curve {
        label: String::new(),
        mean,
        lo,
        hi,
    }
}

fn feedback_class(algorithm: Algorithm) -> &'static str {
    if algorithm.is_bandit() {
        "bandit"
    } else {
        "full"
    }
}

// Curves per (feedback class) for one regime's selected outcomes.
fn regime_curves(outcomes: &[RunOutcome]) -> BTreeMap<&'static str, Vec<Curve>> {
    let mut grouped: BTreeMap<&'static str, BTreeMap<String, Vec<&RunOutcome>>> = BTreeMap::new();
    for outcome in outcomes {
        grouped
            .entry(feedback_class(outcome.algorithm))
            .or_default()
            .entry(outcome.algorithm.id().to_string())
            .or_default()
            .push(outcome);
    }
    let mut plots = BTreeMap::new();
    for (class, algos) in grouped {
        let mut curves = Vec::new();
        for (label, outs) in algos {
            let series: Vec<&[f64]> =
                outs.iter().map(|o| o.ledger.regret_scaled.as_slice()).collect();
            let mut curve = band_of(&series);
            curve.label = label;
            curves.push(curve);
        }
        plots.insert(class, curves);
    }
    plots
}

/// Writes every artifact of a finished experiment under `out_dir`; returns
/// the paths written.
pub fn emit_outputs(results: &ExperimentResults, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let mut all_summaries = Vec::new();
    for regime in &results.regimes {
        all_summaries.extend(regime.summaries.iter().cloned());
        for outcome in &regime.outcomes {
            let stem = run_stem(outcome);
            let rounds_path = out_dir.join("runs").join(format!("{stem}.rounds.csv"));
            atomic_write(&rounds_path, rounds_csv(outcome).as_bytes())?;
            written.push(rounds_path);
            let regret_path = out_dir.join("runs").join(format!("{stem}.regret.csv"));
            atomic_write(&regret_path, regret_csv(outcome).as_bytes())?;
            written.push(regret_path);
        }

        for (class, curves) in regime_curves(&regime.outcomes) {
            let title = format!("d = {} ({class} feedback)", regime.regime);
            let svg = render_plot(&title, "cumulative (α,β)-regret", &curves);
            let path = out_dir.join("plots").join(format!("{class}_d{}.svg", regime.regime));
            atomic_write(&path, svg.as_bytes())?;
            written.push(path);
        }
    }

    let summary_path = out_dir.join("summary.csv");
    atomic_write(&summary_path, summary_csv(&all_summaries).as_bytes())?;
    written.push(summary_path);

    let meta_path = out_dir.join("meta.txt");
    atomic_write(&meta_path, meta_text(results).as_bytes())?;
    written.push(meta_path);

    Ok(written)
}

/// Reads the `regret_scaled` column of a per-run regret CSV.
pub fn read_regret_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Runtime(format!("{}: empty file", path.display())))?;
    if header != REGRET_HEADER {
        return Err(HarnessError::Runtime(format!(
            "{}: unexpected header `{header}`",
            path.display()
        )));
    }
    let mut series = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(HarnessError::Runtime(format!(
                "{}: row {} has {} fields",
                path.display(),
                idx + 2,
                fields.len()
            )));
        }
        let v: f64 = fields[4].parse().map_err(|_| {
            HarnessError::Runtime(format!("{}: row {}: bad regret value", path.display(), idx + 2))
        })?;
        series.push(v);
    }
    Ok(series)
}

// Parsed pieces of a run stem: algorithm, regime, q, seed.
fn parse_stem(stem: &str) -> Option<(String, usize, String, u64)> {
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() != 4 {
        return None;
    }
    let regime = parts[1].strip_prefix('d')?.parse().ok()?;
    let q = parts[2].strip_prefix('q')?.to_string();
    let seed = parts[3].strip_prefix('s')?.parse().ok()?;
    Some((parts[0].to_string(), regime, q, seed))
}

/// Rebuilds the SVG plots from the CSVs in `out_dir` (the `replot`
/// subcommand): chosen q per (algorithm, regime) comes from `summary.csv`.
pub fn replot(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let summary_path = out_dir.join("summary.csv");
    let text =
        std::fs::read_to_string(&summary_path).map_err(|e| HarnessError::io(&summary_path, e))?;
    let mut chosen: BTreeMap<(String, usize), String> = BTreeMap::new();
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == SUMMARY_HEADER => {}
        other => {
            return Err(HarnessError::Runtime(format!(
                "summary.csv: unexpected header {other:?}"
            )))
        }
    }
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            continue;
        }
        let regime: usize = fields[1]
            .parse()
            .map_err(|_| HarnessError::Runtime("summary.csv: bad d column".into()))?;
        chosen.insert((fields[0].to_string(), regime), fields[4].to_string());
    }

    // Collect the chosen runs' series grouped by (regime, class, algorithm).
    let runs_dir = out_dir.join("runs");
    let mut grouped: BTreeMap<(usize, &'static str, String), Vec<Vec<f64>>> = BTreeMap::new();
    let entries = std::fs::read_dir(&runs_dir).map_err(|e| HarnessError::io(&runs_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(&runs_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".regret.csv") else {
            continue;
        };
        let Some((algo, regime, q, _seed)) = parse_stem(stem) else {
            continue;
        };
        if chosen.get(&(algo.clone(), regime)).map(String::as_str) != Some(q.as_str()) {
            continue;
        }
        let algorithm = Algorithm::parse(&algo)?;
        let series = read_regret_series(&entry.path())?;
        grouped
            .entry((regime, feedback_class(algorithm), algo))
            .or_default()
            .push(series);
    }
    if grouped.is_empty() {
        return Err(HarnessError::Runtime(format!(
            "no chosen-q regret CSVs found under {}",
            runs_dir.display()
        )));
    }

    let mut plots: BTreeMap<(usize, &'static str), Vec<Curve>> = BTreeMap::new();
    for ((regime, class, algo), series) in grouped {
        let views: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        let mut curve = band_of(&views);
        curve.label = algo;
        plots.entry((regime, class)).or_default().push(curve);
    }

    let mut written = Vec::new();
    for ((regime, class), curves) in plots {
        let title = format!("d = {regime} ({class} feedback)");
        let svg = render_plot(&title, "cumulative (α,β)-regret", &curves);
        let path = out_dir.join("plots").join(format!("{class}_d{regime}.svg"));
        atomic_write(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
