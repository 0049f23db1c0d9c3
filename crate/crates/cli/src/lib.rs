//! Command implementations behind the `erpo` binary.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use erpo_core::experiment::{self, Environment};
use erpo_core::posterior::{DirichletPosterior, TransitionLog};
use erpo_core::{Domain, ReturnSummary, RunConfig, SoftmaxPolicy, TrainResult, Variant};
use serde::Serialize;

use config::{resolve, to_toml, RunArgs};
use output::*;

#[derive(Debug, Parser)]
#[command(name = "erpo", version, about = "Soft-robust risk-constrained policy optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll the baseline policy on the true model and write the transition log.
    GenData {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a policy and write traces, the final policy and a config snapshot.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Fill `wall_ms` with elapsed time instead of zeros.
        #[arg(long)]
        record_timing: bool,
    },
    /// Evaluate a policy across posterior models.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "PATH")]
        policy: PathBuf,
    },
    /// Train and evaluate several variants on the same data.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "risk-neutral,risk-averse,soft-robust")]
        variants: Vec<Variant>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { run } => gen_data(&resolve(&run)?),
        Command::Train { run, record_timing } => train(&resolve(&run)?, record_timing).map(|_| ()),
        Command::Eval { run, policy } => eval(&resolve(&run)?, &policy).map(|_| ()),
        Command::Compare { run, variants } => compare(&resolve(&run)?, &variants),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn write_environment(dir: &Path, env: &Environment) -> Result<()> {
    write_json(&dir.join("true_mdp.json"), &env.mdp)?;
    if let Some(meta) = &env.asset {
        write_json(&dir.join("asset_metadata.json"), meta)?;
    }
    Ok(())
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let env = experiment::build_environment(cfg)?;
    let log = experiment::generate_data(cfg, &env)?;
    let path = write_file(&dir.join("transitions.txt"), &log.to_text())?;
    write_environment(&dir, &env)?;
    println!("{} {}", path.display(), log.len());
    Ok(())
}

fn load_or_generate(cfg: &RunConfig, env: &Environment, dir: &Path) -> Result<TransitionLog> {
    match &cfg.data {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(TransitionLog::parse(&text)?)
        }
        None => {
            let log = experiment::generate_data(cfg, env)?;
            write_file(&dir.join("transitions.txt"), &log.to_text())?;
            Ok(log)
        }
    }
}

fn posterior(cfg: &RunConfig, dir: &Path) -> Result<(Environment, DirichletPosterior)> {
    let env = experiment::build_environment(cfg)?;
    let log = load_or_generate(cfg, &env, dir)?;
    let post = experiment::build_posterior(cfg, &env, &log)?;
    Ok((env, post))
}

fn train_into(cfg: &RunConfig, post: &DirichletPosterior, dir: &Path, record_timing: bool) -> Result<TrainResult> {
    let start = Instant::now();
    let result = experiment::train(cfg, post)?;
    let total = start.elapsed().as_millis() as u64;
    let wall: Vec<u64> = if record_timing {
        let n = result.traces.len().max(1) as u64;
        (1..=result.traces.len() as u64).map(|k| total * k / n).collect()
    } else {
        Vec::new()
    };
    write_file(&dir.join("trace.csv"), &trace_csv(&result.traces, &wall))?;
    if cfg.domain == Domain::Asset {
        write_file(&dir.join("action_probs.csv"), &action_probs_csv(&result.traces, post.n_actions()))?;
    }
    write_json(&dir.join("policy.json"), &result.policy)?;
    if let Some(critic) = &result.critic {
        write_json(&dir.join("critic.json"), critic)?;
    }
    Ok(result)
}

pub fn train(cfg: &RunConfig, record_timing: bool) -> Result<TrainResult> {
    let dir = out_dir(cfg)?;
    write_file(&dir.join("config.toml"), &to_toml(cfg)?)?;
    let (env, post) = posterior(cfg, &dir)?;
    write_environment(&dir, &env)?;
    let result = train_into(cfg, &post, &dir, record_timing)?;
    println!("{}", dir.display());
    Ok(result)
}

pub fn eval(cfg: &RunConfig, policy_path: &Path) -> Result<ReturnSummary> {
    let dir = out_dir(cfg)?;
    let text = std::fs::read_to_string(policy_path).with_context(|| format!("reading {}", policy_path.display()))?;
    let policy: SoftmaxPolicy =
        serde_json::from_str(&text).with_context(|| format!("parsing policy {}", policy_path.display()))?;
    let (_, post) = posterior(cfg, &dir)?;
    let returns = experiment::evaluate(cfg, &post, &policy)?;
    let summary = ReturnSummary::from_returns(&returns)?;
    write_file(&dir.join("returns.csv"), &returns_csv(&returns))?;
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    variants: Vec<(String, ReturnSummary)>,
    /// Sample variance of soft-robust returns over that of risk-neutral returns.
    variance_ratio: Option<f64>,
}

pub fn compare(cfg: &RunConfig, variants: &[Variant]) -> Result<()> {
    if variants.is_empty() {
        bail!("no variants to compare");
    }
    let dir = out_dir(cfg)?;
    write_file(&dir.join("config.toml"), &to_toml(cfg)?)?;
    let (env, post) = posterior(cfg, &dir)?;
    write_environment(&dir, &env)?;
    let mut rows = Vec::with_capacity(variants.len());
    let mut summaries = Vec::with_capacity(variants.len());
    for v in variants {
        let sub = RunConfig { variant: *v, ..cfg.clone() };
        let run = || -> Result<Vec<f64>> {
            let vdir = dir.join(v.as_str());
            ensure_dir(&vdir)?;
            let result = train_into(&sub, &post, &vdir, false)?;
            let returns = experiment::evaluate(&sub, &post, &result.policy)?;
            write_file(&vdir.join("returns.csv"), &returns_csv(&returns))?;
            Ok(returns)
        };
        let returns = run().with_context(|| format!("variant {v} failed"))?;
        summaries.push((v.to_string(), ReturnSummary::from_returns(&returns)?));
        rows.push((v.to_string(), returns));
    }
    let var_of = |name: Variant| summaries.iter().find(|(n, _)| n == name.as_str()).map(|(_, s)| s.variance());
    let variance_ratio = match (var_of(Variant::SoftRobust), var_of(Variant::RiskNeutral)) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    write_file(&dir.join("compare.csv"), &compare_csv(&rows))?;
    write_json(&dir.join("compare_summary.json"), &CompareSummary { variants: summaries, variance_ratio })?;
    println!("{}", dir.display());
    Ok(())
}

/// One-line JSON description of a failure.
pub fn error_json(err: &anyhow::Error) -> String {
    let core = err.chain().find_map(|e| e.downcast_ref::<erpo_core::Error>());
    let io = err.chain().find_map(|e| e.downcast_ref::<std::io::Error>());
    let kind = match (core, io) {
        (Some(e), _) => e.kind(),
        (None, Some(_)) => "io",
        _ => "error",
    };
    let mut obj = serde_json::Map::new();
    obj.insert("error".into(), kind.into());
    if let Some(erpo_core::Error::InvalidConfig { field, .. }) = core {
        obj.insert("field".into(), field.clone().into());
    }
    obj.insert("message".into(), format!("{err:#}").into());
    serde_json::Value::Object(obj).to_string()
}
