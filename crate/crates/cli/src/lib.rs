//! Command-line front end: load a run configuration, simulate, and write
//! traces and metric tables.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sebrake_core::config::{parse_config, ControllerChoice, RunConfig, NOMINAL_CONFIG};
use sebrake_core::metrics::StepMetrics;
use sebrake_core::oracle::{lie_oracle, sample_envelope_states, DEFAULT_H_STEP};
use sebrake_core::report::{comparison_table, metrics_table, sweep_table, write_trace_csv};
use sebrake_core::sim::{robustness_sweep, run_closed_loop, ControllerKind, Trace};

pub const METRICS_FILE: &str = "metrics.txt";
pub const COMPARISON_FILE: &str = "comparison.txt";
pub const SWEEP_FILE: &str = "sweep.txt";

#[derive(Debug, Parser)]
#[command(name = "sebrake", version, about = "Feedback-linearizing control of a self-energizing brake")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML); the shipped nominal config when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `run.output_path`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Integration step in seconds, overriding `scenario.dt`.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured scenario.
    Run {
        /// Overrides `run.controller_kind`.
        #[arg(long, value_parser = parse_choice)]
        controller: Option<ControllerChoice>,
    },
    /// Feedback-linearizing controller against the proportional baseline.
    Compare,
    /// Rerun the scenario with the plant's supply gains scaled.
    Sweep {
        /// Comma-separated list (`0.9,1.1`) or range `lo..hi:step`.
        #[arg(long, value_parser = |s: &str| parse_factors(s).map(Factors))]
        factors: Option<Factors>,
        /// `fbl` (default) or `baseline`.
        #[arg(long, value_parser = parse_choice)]
        controller: Option<ControllerChoice>,
    },
    /// Check the configuration and exit.
    Validate,
    /// Compare closed-form Lie derivatives with numeric differentiation.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        states: usize,
    },
}

fn parse_choice(s: &str) -> Result<ControllerChoice, String> {
    match s {
        "fbl" => Ok(ControllerChoice::Fbl),
        "baseline" => Ok(ControllerChoice::Baseline),
        "both" => Ok(ControllerChoice::Both),
        _ => Err(format!("expected fbl, baseline or both, got `{s}`")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factors(pub Vec<f64>);

/// `a,b,c` or `lo..hi:step` (inclusive of `hi` up to rounding).
pub fn parse_factors(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    if let Some((range, step)) = s.split_once(':') {
        let (lo, hi) = range.split_once("..").ok_or("range must look like lo..hi:step")?;
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0) || !(hi >= lo) {
            return Err("range needs hi >= lo and step > 0".into());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        // Round away binary noise so 0.9 + 2 * 0.05 prints as 1.
        Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
    } else {
        let v = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("no factors given".into());
        }
        Ok(v)
    }
}

/// What a command produced; `success` decides the exit status.
#[derive(Debug, Default)]
pub struct Report {
    pub success: bool,
    pub text: String,
    pub files: Vec<PathBuf>,
}

pub fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => NOMINAL_CONFIG.to_string(),
    };
    let mut cfg = parse_config(&text).map_err(anyhow::Error::new)?;
    if let Some(out) = &common.out {
        cfg.run.output_path = out.clone();
    }
    if let Some(dt) = common.dt {
        cfg.scenario.dt = dt;
        let v = cfg.violations();
        if !v.is_empty() {
            bail!(sebrake_core::config::ConfigError::Validation(v));
        }
    }
    Ok(cfg)
}

fn kinds(choice: ControllerChoice) -> &'static [ControllerKind] {
    match choice {
        ControllerChoice::Fbl => &[ControllerKind::Fbl],
        ControllerChoice::Baseline => &[ControllerKind::Baseline],
        ControllerChoice::Both => &[ControllerKind::Fbl, ControllerKind::Baseline],
    }
}

fn kind_name(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Fbl => "fbl",
        ControllerKind::FblExact => "fbl_exact",
        ControllerKind::Baseline => "baseline",
    }
}

pub fn trace_file_name(kind: ControllerKind) -> String {
    format!("trace_{}.csv", kind_name(kind))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_text(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(())
}

fn write_trace(dir: &Path, trace: &Trace, files: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let path = dir.join(trace_file_name(trace.kind));
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_trace_csv(trace, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(())
}

pub fn run_scenarios(cfg: &RunConfig, choice: ControllerChoice) -> anyhow::Result<Report> {
    let dir = &cfg.run.output_path;
    ensure_dir(dir)?;
    let mut report = Report { success: true, ..Report::default() };
    let mut tables: Vec<(ControllerKind, Vec<StepMetrics>)> = Vec::new();
    for &kind in kinds(choice) {
        let trace = run_closed_loop(&cfg.scenario, &cfg.plant, &cfg.controller, kind)
            .with_context(|| format!("{} run failed", kind_name(kind)))?;
        write_trace(dir, &trace, &mut report.files)?;
        let metrics = trace.all_metrics().context("computing step metrics")?;
        report.success &= metrics.iter().all(StepMetrics::settled);
        let _ = writeln!(report.text, "{}", metrics_table(kind_name(kind), &metrics, &cfg.force_map));
        tables.push((kind, metrics));
    }
    write_text(dir.join(METRICS_FILE), &report.text, &mut report.files)?;
    if let [(_, fbl), (_, base)] = tables.as_slice() {
        let cmp = comparison_table(fbl, base);
        write_text(dir.join(COMPARISON_FILE), &cmp, &mut report.files)?;
        let _ = writeln!(report.text, "{cmp}");
    }
    Ok(report)
}

pub fn run_sweep(cfg: &RunConfig, factors: &[f64], choice: ControllerChoice) -> anyhow::Result<Report> {
    let kind = match choice {
        ControllerChoice::Baseline => ControllerKind::Baseline,
        ControllerChoice::Fbl | ControllerChoice::Both => ControllerKind::Fbl,
    };
    let dir = &cfg.run.output_path;
    ensure_dir(dir)?;
    let rows = robustness_sweep(&cfg.scenario, &cfg.plant, &cfg.controller, kind, factors);
    let mut report = Report {
        success: rows.iter().all(|r| r.all_settled()),
        text: format!("{} sweep over T_sup factors\n{}", kind_name(kind), sweep_table(&rows)),
        files: Vec::new(),
    };
    let text = report.text.clone();
    write_text(dir.join(SWEEP_FILE), &text, &mut report.files)?;
    Ok(report)
}

pub fn validate(cfg: &RunConfig) -> Report {
    let s = &cfg.scenario;
    Report {
        success: true,
        text: format!(
            "configuration valid: {} reference segments over {} s at dt = {} s ({} steps)\n",
            s.schedule.len(),
            s.duration,
            s.dt,
            s.steps_count()
        ),
        files: Vec::new(),
    }
}

/// Thresholds: closed forms within 1e-5 relative, `L_g h` and `L_g L_f h`
/// below 1e-8 of `L_g L_f^2 h`.
pub fn oracle_report(cfg: &RunConfig, seed: u64, states: usize) -> anyhow::Result<Report> {
    const REL_TOL: f64 = 1e-5;
    const VANISH_TOL: f64 = 1e-8;
    let p = &cfg.plant;
    let mut worst = [0.0_f64; 5];
    let mut vanish = 0.0_f64;
    let mut regimes = [0usize; 2];
    let mut degree_ok = true;
    for s in sample_envelope_states(p, states, seed, 0.02) {
        let r = lie_oracle(&s, 0.0, p, DEFAULT_H_STEP).with_context(|| format!("oracle at {s:?}"))?;
        regimes[(s.x_v < 0.0) as usize] += 1;
        for (w, e) in worst.iter_mut().zip([r.rel.z2, r.rel.z3, r.rel.a, r.rel.b, r.rel.q]) {
            *w = w.max(e);
        }
        let (g0, g1) = r.scaled_vanishing_terms();
        vanish = vanish.max(g0).max(g1);
        degree_ok &= r.relative_degree(VANISH_TOL) == Some(3);
    }
    let mut text = format!(
        "Lie-derivative oracle: {states} states (seed {seed}), case A {} / case B {}\n",
        regimes[0], regimes[1]
    );
    let _ = writeln!(text, "{:<28} {:>12} {:>10}", "quantity", "max_error", "status");
    let names = ["z2 = Lf h", "z3 = Lf^2 h", "a = Lf^3 h", "b = Lg Lf^2 h", "q = Lf p_L"];
    let mut success = degree_ok;
    for (name, w) in names.iter().zip(worst) {
        success &= w < REL_TOL;
        let _ = writeln!(text, "{name:<28} {w:>12.3e} {:>10}", if w < REL_TOL { "ok" } else { "FAIL" });
    }
    success &= vanish < VANISH_TOL;
    let _ = writeln!(
        text,
        "{:<28} {vanish:>12.3e} {:>10}",
        "|Lg h|, |Lg Lf h| (scaled)",
        if vanish < VANISH_TOL { "ok" } else { "FAIL" }
    );
    let _ = writeln!(text, "relative degree 3 at every state: {}", if degree_ok { "yes" } else { "no" });
    Ok(Report { success, text, files: Vec::new() })
}

pub fn execute(cli: &Cli) -> anyhow::Result<Report> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Run { controller } => run_scenarios(&cfg, controller.unwrap_or(cfg.run.controller_kind)),
        Command::Compare => run_scenarios(&cfg, ControllerChoice::Both),
        Command::Sweep { factors, controller } => {
            let factors = factors.clone().map_or_else(|| cfg.sweep.factors.clone(), |f| f.0);
            if let Some(f) = factors.iter().find(|f| !(**f > 0.0)) {
                bail!("sweep factors must be > 0, got {f}");
            }
            run_sweep(&cfg, &factors, controller.unwrap_or(cfg.run.controller_kind))
        }
        Command::Validate => Ok(validate(&cfg)),
        Command::Oracle { seed, states } => oracle_report(&cfg, *seed, *states),
    }
}
