use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use erpo_core::algo::EpisodeTrace;
use serde::Serialize;

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).context("serializing json")?;
    text.push('\n');
    write_file(path, &text)
}

/// Per-episode diagnostics; `wall_ms` holds cumulative milliseconds or zeros.
pub fn trace_csv(traces: &[EpisodeTrace], wall_ms: &[u64]) -> String {
    let mut s = String::from("episode,lambda,constraint_estimate,mean_return,min_return,theta_norm,wall_ms\n");
    for (i, t) in traces.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.episode,
            fmt_f64(t.lambda),
            fmt_f64(t.constraint_estimate),
            fmt_f64(t.mean_return),
            fmt_f64(t.min_return),
            fmt_f64(t.theta_norm),
            wall_ms.get(i).copied().unwrap_or(0)
        );
    }
    s
}

pub fn action_probs_csv(traces: &[EpisodeTrace], n_actions: usize) -> String {
    let mut s = String::from("episode");
    for a in 1..=n_actions {
        let _ = write!(s, ",p_asset{a}");
    }
    s.push('\n');
    for t in traces {
        if let Some(p) = &t.action_probs {
            s.push_str(&t.episode.to_string());
            for x in p {
                s.push(',');
                s.push_str(&fmt_f64(*x));
            }
            s.push('\n');
        }
    }
    s
}

pub fn returns_csv(returns: &[f64]) -> String {
    let mut s = String::from("model_index,return\n");
    for (i, r) in returns.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", fmt_f64(*r));
    }
    s
}

pub fn compare_csv(rows: &[(String, Vec<f64>)]) -> String {
    let mut s = String::from("variant,model_index,return\n");
    for (variant, returns) in rows {
        for (i, r) in returns.iter().enumerate() {
            let _ = writeln!(s, "{variant},{i},{}", fmt_f64(*r));
        }
    }
    s
}
