use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use ptp_core::baselines::OverlapReport;
use ptp_core::{EfficiencyReport, LlmProfile, PruneConfig, PruneResult, Reduction, TileGrid};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "report_v1";
pub const COMPARE_SCHEMA: &str = "compare_v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub profile: LlmProfile,
    pub baseline: EfficiencyReport,
    pub pruned: EfficiencyReport,
    pub reduction: Reduction,
}

impl Efficiency {
    pub fn new(total: usize, kept: usize, profile: LlmProfile) -> Self {
        let baseline = EfficiencyReport::new(total as u64, &profile);
        let pruned = EfficiencyReport::new(kept as u64, &profile);
        Efficiency {
            profile,
            reduction: Reduction::between(&baseline, &pruned),
            baseline,
            pruned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config: PruneConfig,
    pub grid: TileGrid,
    pub vision_layer: usize,
    pub llm_block: usize,
    #[serde(flatten)]
    pub result: PruneResult,
    pub efficiency: Efficiency,
    /// Baseline kept sets compared against this run's kept set.
    pub overlap: BTreeMap<String, OverlapReport>,
    pub random_generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub strategy: String,
    pub ratio: f64,
    pub kept: usize,
    pub score_mass_retained: f64,
    pub score_mass_std: f64,
    pub jaccard_vs_ptp: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioOverlaps {
    pub ratio: f64,
    /// Keyed by strategy; random uses the first seed.
    pub overlaps: BTreeMap<String, OverlapReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema: String,
    pub alpha: f32,
    pub seeds: usize,
    pub base_seed: u64,
    pub random_generator: String,
    pub rows: Vec<CompareRow>,
    pub per_ratio: Vec<RatioOverlaps>,
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
