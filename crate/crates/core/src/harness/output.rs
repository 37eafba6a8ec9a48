use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::{figures, RunRecord};
use crate::error::Result;
use crate::policy::trace_csv;
use crate::reward::trajectory_csv;

/// Formatting shared by summary.csv and figure labels so the two agree exactly.
pub fn fmt_stat(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// One row per (seed, method entry). Values use round-trip float formatting.
pub fn results_csv(record: &RunRecord) -> String {
    let cfg = &record.config;
    let mut out = String::from("env,method,seed,n,m,beta,reward_acc,r_star,r_pi,gap\n");
    for s in &record.seeds {
        for e in &s.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                cfg.env.name(),
                e.label,
                s.seed,
                cfg.n,
                e.m,
                cfg.beta,
                opt(s.reward_accuracy),
                e.report.r_star,
                e.report.r_pi,
                e.report.gap
            );
        }
    }
    out
}

pub fn summary_csv(record: &RunRecord) -> String {
    let mut out = String::from("method,m,seeds,trimmed_gap,mean_gap,min_gap,max_gap\n");
    for s in &record.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.label,
            s.m,
            s.seeds,
            s.trimmed_gap.map(fmt_stat).unwrap_or_default(),
            fmt_stat(s.mean_gap),
            fmt_stat(s.min_gap),
            fmt_stat(s.max_gap)
        );
    }
    out
}

pub fn summary_json(record: &RunRecord) -> serde_json::Value {
    let accs: Vec<_> = record
        .seeds
        .iter()
        .map(|s| json!({ "seed": s.seed, "reward_accuracy": s.reward_accuracy }))
        .collect();
    json!({
        "config": record.config,
        "methods": record.summaries,
        "reward_accuracy": accs,
        "failures": record.failures.iter().map(|(s, m)| json!({ "seed": s, "error": m })).collect::<Vec<_>>(),
        "warnings": record.warnings,
        "timings": record.timings,
    })
}

/// Writes results.csv, summary.{json,csv}, config.cfg, training curves and figures/ under `dir`.
pub fn write_artifacts(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("figures"))?;
    fs::create_dir_all(dir.join("traces"))?;
    fs::write(dir.join("results.csv"), results_csv(record))?;
    fs::write(dir.join("summary.csv"), summary_csv(record))?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary_json(record))? + "\n",
    )?;
    fs::write(dir.join("config.cfg"), record.config.to_config_text())?;
    if let Some(curve) = &record.reward_curve {
        fs::write(dir.join("traces").join("reward_loss.csv"), trajectory_csv(curve))?;
    }
    for (label, rows) in &record.traces {
        let name: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
            .collect();
        fs::write(dir.join("traces").join(format!("{name}.csv")), trace_csv(rows))?;
    }
    for (name, svg) in figures::emit_figures(record)? {
        fs::write(dir.join("figures").join(name), svg)?;
    }
    Ok(())
}
