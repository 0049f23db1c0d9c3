use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use erpo_core::algo::TdMode;
use erpo_core::eval::EvalMode;
use erpo_core::lagrangian::PenaltySign;
use erpo_core::{Algo, Domain, RunConfig, Variant};

/// Flags shared by every subcommand. Each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub domain: Option<Domain>,
    #[arg(long)]
    pub algo: Option<Algo>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Models sampled per episode.
    #[arg(long)]
    pub models: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub penalty_sign: Option<PenaltySign>,
    #[arg(long)]
    pub td_mode: Option<TdMode>,
    /// Baseline transitions to log.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Models drawn for evaluation.
    #[arg(long)]
    pub eval_models: Option<usize>,
    #[arg(long)]
    pub eval_mode: Option<EvalMode>,
    /// Existing transition log to build the posterior from.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Overlays `overlay` onto `base`, recursing into tables.
fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

pub fn read_config_file(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Resolves the run configuration: flag, then config file, then domain default.
pub fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => Some(read_config_file(p)?),
        None => None,
    };
    let file_domain = file
        .as_ref()
        .and_then(|t| t.get("domain"))
        .and_then(|v| v.as_str())
        .map(str::parse::<Domain>)
        .transpose()?;
    let domain = args.domain.or(file_domain).unwrap_or(Domain::Asset);

    let mut value = toml::Value::try_from(RunConfig::for_domain(domain)).context("serializing defaults")?;
    if let Some(table) = file {
        merge(&mut value, toml::Value::Table(table));
    }
    let mut cfg: RunConfig = value.try_into().context("invalid config")?;
    cfg.domain = domain;
    apply_flags(&mut cfg, args);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_flags(cfg: &mut RunConfig, a: &RunArgs) {
    macro_rules! set {
        ($($field:ident <- $flag:expr),* $(,)?) => {
            $(if let Some(v) = $flag.clone() { cfg.$field = v; })*
        };
    }
    set!(
        seed <- a.seed,
        algo <- a.algo,
        variant <- a.variant,
        alpha <- a.alpha,
        beta <- a.beta,
        episodes <- a.episodes,
        models <- a.models,
        horizon <- a.horizon,
        penalty_sign <- a.penalty_sign,
        td_mode <- a.td_mode,
        baseline_samples <- a.samples,
        eval_models <- a.eval_models,
        eval_mode <- a.eval_mode,
    );
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).context("serializing config")
}
