mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use selfnorm::analytic::{bias_rate_table, LinearModel};
use selfnorm::depmeasure::{coefficient_grid, fit_estimates};
use selfnorm::montecarlo::{render_csv, render_dat};
use selfnorm::selftest::{run_selftest, SelftestOptions};
use selfnorm::{
    compare_rules, fit_rate, run_experiment, CalibrationCache, CouplingMode, Error, ExperimentPlan,
    Process, StreamKey, StreamRole,
};

use config::{config_error, Config, ConfigError, SCHEMA_VERSION};
use output::{csv_preamble, write_atomic};

const BUILD_ID: &str = env!("SELFNORM_BUILD_ID");

#[derive(Parser, Debug)]
#[command(name = "selfnorm", version, about = "Berry-Esseen rates of self-normalized sums under weak dependence")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "SELFNORM_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment plan and write results.csv, summary.json and .dat files.
    Simulate,
    /// Compare bandwidth rules by fitted rates, or print an exact bias table.
    Rates,
    /// Estimate dependence coefficients from coupled replicas.
    Depmeasure,
    /// Run the oracle suite.
    Selftest {
        /// Perturb the normal CDF seen by the accuracy check.
        #[arg(long, hide = true)]
        corrupt_normal_cdf: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let is_config = e.downcast_ref::<ConfigError>().is_some();
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config { 2 } else { 1 })
        }
    }
}

/// Library errors found while checking a config before any computation.
fn invalid(e: Error) -> anyhow::Error {
    config_error(e.to_string())
}

fn runtime(e: Error) -> anyhow::Error {
    match e {
        Error::Config(msg) => config_error(msg),
        other => anyhow::Error::new(other),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Command::Selftest { corrupt_normal_cdf } = cli.command {
        setup_threads(cli.threads.unwrap_or(0))?;
        let report = run_selftest(&SelftestOptions { corrupt_normal_cdf });
        print!("{}", report.render());
        if !report.passed() {
            for f in report.failures() {
                eprintln!("selftest failed: {}", f.name);
            }
            return Ok(ExitCode::from(1));
        }
        return Ok(ExitCode::SUCCESS);
    }
    let path = cli
        .config
        .clone()
        .ok_or_else(|| config_error("--config PATH is required for this command"))?;
    let mut cfg = Config::load(&path)?;
    if let Some(seed) = cli.seed {
        if let Some(plan) = cfg.plan.as_mut() {
            plan.master_seed = seed;
        }
        if let Some(dm) = cfg.depmeasure.as_mut() {
            dm.master_seed = seed;
        }
    }
    let out_dir = cli
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("selfnorm-out"));
    setup_threads(cli.threads.unwrap_or(cfg.threads))?;
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out_dir),
        Command::Rates => cmd_rates(&cfg, &out_dir),
        Command::Depmeasure => cmd_depmeasure(&cfg, &out_dir),
        Command::Selftest { .. } => unreachable!(),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn setup_threads(threads: usize) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn open_cache(cfg: &Config, out_dir: &Path) -> anyhow::Result<CalibrationCache> {
    let path = cfg
        .calibration
        .cache
        .clone()
        .unwrap_or_else(|| out_dir.join("calibration.json"));
    CalibrationCache::open(&path, cfg.calibration.steps).map_err(anyhow::Error::new)
}

fn require_plan(cfg: &Config) -> anyhow::Result<&ExperimentPlan> {
    cfg.plan
        .as_ref()
        .ok_or_else(|| config_error("config has no \"plan\" section"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, &text)
}

fn cmd_simulate(cfg: &Config, out_dir: &Path) -> anyhow::Result<()> {
    let plan = require_plan(cfg)?;
    plan.validate().map_err(invalid)?;
    let cache = open_cache(cfg, out_dir)?;
    info!("simulating {} grid points with {} replications", plan.n_grid.len(), plan.reps);
    let result = run_experiment(plan, &cache).map_err(runtime)?;
    cache.save()?;
    for w in &result.warnings {
        warn!("{w}");
    }
    let csv = csv_preamble(plan.master_seed, BUILD_ID, SCHEMA_VERSION) + &render_csv(&result.reports);
    write_atomic(&out_dir.join("results.csv"), &csv)?;
    let mut fits = serde_json::Map::new();
    for m in &plan.metrics {
        let reports: Vec<_> = result.reports.iter().filter(|r| r.metric == *m).cloned().collect();
        if reports.len() >= 4 {
            if let Ok(fit) = fit_rate(&reports) {
                fits.insert(m.to_string(), serde_json::to_value(fit)?);
            }
        }
        write_atomic(&out_dir.join(format!("{m}.dat")), &render_dat(&result.reports, *m))?;
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "build": BUILD_ID,
        "master_seed": plan.master_seed,
        "plan": plan,
        "references": result.references,
        "rate_fits": fits,
        "warnings": result.warnings,
    });
    write_json(&out_dir.join("summary.json"), &summary)?;
    println!("wrote {} rows to {}", result.reports.len(), out_dir.join("results.csv").display());
    Ok(())
}

fn cmd_rates(cfg: &Config, out_dir: &Path) -> anyhow::Result<()> {
    if let Some(bt) = &cfg.bias_table {
        return bias_table(bt, out_dir);
    }
    let plan = require_plan(cfg)?;
    if plan.n_grid.len() < 4 {
        return Err(config_error(format!(
            "need ≥ 4 grid points for a rate fit, n_grid has {}",
            plan.n_grid.len()
        )));
    }
    plan.validate().map_err(invalid)?;
    let variants = if cfg.rules.is_empty() {
        vec![plan.variant()]
    } else {
        cfg.rules.clone()
    };
    let cache = open_cache(cfg, out_dir)?;
    let table = compare_rules(plan, &variants, &cache).map_err(runtime)?;
    cache.save()?;
    let reports: Vec<_> = table.results.iter().flat_map(|r| r.reports.clone()).collect();
    let csv = csv_preamble(plan.master_seed, BUILD_ID, SCHEMA_VERSION) + &render_csv(&reports);
    write_atomic(&out_dir.join("results.csv"), &csv)?;
    for (i, r) in table.results.iter().enumerate() {
        for m in &plan.metrics {
            write_atomic(&out_dir.join(format!("rule{i}-{m}.dat")), &render_dat(&r.reports, *m))?;
        }
    }
    println!("{:<48} {:>6} {:>9} {:>9} {:>7}", "rule", "metric", "slope", "stderr", "r2");
    for f in &table.fits {
        println!(
            "{:<48} {:>6} {:>9.4} {:>9.4} {:>7.3}",
            f.name, f.metric.to_string(), f.fit.slope, f.fit.stderr_slope, f.fit.r_squared
        );
    }
    for d in &table.differences {
        println!(
            "{} - {} [{}]: {:.4} (joint stderr {:.4})",
            d.first, d.second, d.metric, d.difference, d.joint_stderr
        );
    }
    let references: Vec<_> = table
        .results
        .iter()
        .map(|r| json!({ "rule": r.variant.name(), "references": r.references }))
        .collect();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "build": BUILD_ID,
        "master_seed": plan.master_seed,
        "plan": plan,
        "rules": variants,
        "fits": table.fits,
        "differences": table.differences,
        "references": references,
        "warnings": table.warnings,
    });
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(())
}

fn bias_table(bt: &config::BiasTableConfig, out_dir: &Path) -> anyhow::Result<()> {
    bt.process.validate().map_err(invalid)?;
    if bt.n_grid.is_empty() || bt.rules.is_empty() {
        return Err(config_error("bias_table needs a non-empty n_grid and rules"));
    }
    for r in &bt.rules {
        r.validate().map_err(invalid)?;
    }
    let model = LinearModel::from_class(&bt.process.model)
        .map_err(invalid)?
        .ok_or_else(|| {
            config_error(format!(
                "bias table needs a linear process class (ar1, linear, ou_sde), got {}",
                bt.process.model.name()
            ))
        })?;
    let mut csv = String::from("# exact sqrt(n)*|sigma^2 - sigma_b^2|\n");
    csv.push_str(&format!("# schema_version={SCHEMA_VERSION}\n# build={BUILD_ID}\n"));
    csv.push_str("n,rule,b,bias,scaled_bias\n");
    let mut tables = Vec::new();
    println!("{:>10} {:<28} {:>8} {:>14} {:>14}", "n", "rule", "b", "bias", "sqrt(n)*bias");
    for rule in &bt.rules {
        let rows = bias_rate_table(&model, rule, &bt.n_grid).map_err(invalid)?;
        let increasing = rows.windows(2).all(|w| w[1].scaled > w[0].scaled);
        let decreasing = rows.windows(2).all(|w| w[1].scaled < w[0].scaled);
        for r in &rows {
            csv.push_str(&format!("{},{},{},{:e},{:e}\n", r.n, rule.label(), r.b, r.bias, r.scaled));
            println!("{:>10} {:<28} {:>8} {:>14.6e} {:>14.6e}", r.n, rule.label(), r.b, r.bias, r.scaled);
        }
        tables.push(json!({
            "rule": rule.label(),
            "rows": rows.iter().map(|r| json!({"n": r.n, "b": r.b, "bias": r.bias, "scaled": r.scaled})).collect::<Vec<_>>(),
            "strictly_increasing": increasing,
            "strictly_decreasing": decreasing,
        }));
    }
    write_atomic(&out_dir.join("bias_table.csv"), &csv)?;
    write_json(
        &out_dir.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "build": BUILD_ID,
            "process": bt.process,
            "sigma_sq": model.sigma_sq(),
            "tables": tables,
        }),
    )
}

fn cmd_depmeasure(cfg: &Config, out_dir: &Path) -> anyhow::Result<()> {
    let dm = cfg
        .depmeasure
        .as_ref()
        .ok_or_else(|| config_error("config has no \"depmeasure\" section"))?;
    dm.process.validate().map_err(invalid)?;
    let fit_lags = dm.lags.iter().filter(|l| **l > 0).count();
    if fit_lags < 4 {
        return Err(config_error(format!(
            "decay fit needs ≥ 4 positive lags, got {fit_lags}"
        )));
    }
    if dm.modes.is_empty() {
        return Err(config_error("depmeasure.modes must not be empty"));
    }
    if dm.reps < selfnorm::depmeasure::MIN_REPS {
        return Err(config_error(format!(
            "depmeasure.reps must be >= {}",
            selfnorm::depmeasure::MIN_REPS
        )));
    }
    if dm.p.is_nan() || dm.p < 1.0 {
        return Err(config_error("depmeasure.p must be >= 1"));
    }
    let cache = open_cache(cfg, out_dir)?;
    let process = Process::build(&dm.process, &cache).map_err(runtime)?;
    cache.save()?;
    let key = StreamKey::new(dm.master_seed, dm.process.hash64(), 0, StreamRole::Path);
    let mut fits = serde_json::Map::new();
    for mode in &dm.modes {
        let name = match mode {
            CouplingMode::SingleSwap => "theta",
            CouplingMode::TailSwap => "lambda",
        };
        let estimates =
            coefficient_grid(&process, &dm.lags, dm.p, dm.reps, *mode, key).map_err(runtime)?;
        let mut csv = csv_preamble(dm.master_seed, BUILD_ID, SCHEMA_VERSION);
        csv.push_str("lag,p,estimate,stderr,reps\n");
        for e in &estimates {
            csv.push_str(&format!("{},{},{:e},{:e},{}\n", e.lag, e.p, e.estimate, e.stderr, e.reps));
        }
        write_atomic(&out_dir.join(format!("{name}.csv")), &csv)?;
        let fit = fit_estimates(&estimates);
        match &fit {
            Ok(f) => println!("{name}: {:?} (residual {:.3e})", f.fitted_model, f.residual),
            Err(e) => println!("{name}: no decay fit ({e})"),
        }
        fits.insert(
            name.to_string(),
            match fit {
                Ok(f) => serde_json::to_value(f)?,
                Err(e) => json!({ "error": e.to_string() }),
            },
        );
    }
    write_json(
        &out_dir.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "build": BUILD_ID,
            "master_seed": dm.master_seed,
            "config": dm,
            "fits": fits,
        }),
    )
}
