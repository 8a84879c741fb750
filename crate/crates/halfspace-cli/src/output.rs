//! Run-directory layout: a resolved config snapshot, CSV profiles, and a
//! machine-readable summary. Floats are written with the shortest
//! round-trip representation so identical runs produce identical bytes.

use crate::config::RunConfig;
use crate::pipeline::{OutputEntry, SolveSummary};
use anyhow::{Context, Result};
use halfspace::postprocess::{sample_profile, SolutionRef};
use halfspace::recovery::RecoveredSolution;
use std::path::Path;

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One CSV per requested depth, columns `v,f`.
pub fn write_profiles(
    dir: &Path,
    cfg: &RunConfig,
    rec: &RecoveredSolution,
) -> Result<Vec<OutputEntry>> {
    let grid = cfg.v_grid();
    let filter = cfg.filter_spec().expect("validated config");
    let mut outputs = Vec::new();
    for (i, &x) in cfg.output.x_samples.iter().enumerate() {
        let prof = sample_profile(SolutionRef::Recovered(rec), x, &grid, filter)
            .map_err(|e| anyhow::anyhow!("profile sampling: {e}"))?;
        let mut csv = String::from("v,f\n");
        for (v, f) in prof {
            csv.push_str(&format!("{v},{f}\n"));
        }
        let name = format!("profile_{i:02}.csv");
        write_file(dir, &name, csv.as_bytes())?;
        outputs.push(OutputEntry { file: name, x });
    }
    Ok(outputs)
}

pub fn write_summary(dir: &Path, cfg: &RunConfig, summary: &SolveSummary) -> Result<()> {
    write_file(dir, "config.toml", cfg.to_toml().as_bytes())?;
    let json = serde_json::to_string_pretty(summary).context("serializing summary")? + "\n";
    write_file(dir, "summary.json", json.as_bytes())?;
    Ok(())
}
