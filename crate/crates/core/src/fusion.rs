//! Signal normalization, fusion, per-region budget allocation and top-k
//! selection: the stage that turns the three importance signals into a kept
//! token set.

use std::cmp::Ordering;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::bundle::AttentionBundle;
use crate::error::{Error, Result};
use crate::instruction::{top_down_scores, TokenMode, TopDownScores};
use crate::saliency::{bottom_up_scores, region_scores, BottomUpScores, HeadMode, RegionScores};
use crate::tiling::TileGrid;

pub const DEFAULT_ALPHA: f32 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Region budgets, fused token scores, thumbnail included.
    #[default]
    Ptp,
    /// Equal budgets per region, fused token scores.
    NoRegion,
    /// Fusion weight forced to 0.
    BottomUpOnly,
    /// Fusion weight forced to 1.
    TopDownOnly,
    Random,
    Spatial,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Ptp,
        Strategy::NoRegion,
        Strategy::BottomUpOnly,
        Strategy::TopDownOnly,
        Strategy::Random,
        Strategy::Spatial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Ptp => "ptp",
            Strategy::NoRegion => "no_region",
            Strategy::BottomUpOnly => "bottom_up_only",
            Strategy::TopDownOnly => "top_down_only",
            Strategy::Random => "random",
            Strategy::Spatial => "spatial",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Fraction of visual tokens removed, in `[0, 1)`.
    pub ratio: f64,
    /// Weight of the instruction signal in the fused score, in `[0, 1]`.
    pub alpha: f32,
    pub strategy: Strategy,
    pub seed: u64,
    /// Head reduction for vision CLS attention.
    pub head_mode: HeadMode,
    /// Reduction over instruction tokens.
    pub token_mode: TokenMode,
    /// Head reduction for LLM attention.
    pub llm_head_mode: HeadMode,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            ratio: 0.5,
            alpha: DEFAULT_ALPHA,
            strategy: Strategy::Ptp,
            seed: 0,
            head_mode: HeadMode::Mean,
            token_mode: TokenMode::Max,
            llm_head_mode: HeadMode::Mean,
        }
    }
}

impl PruneConfig {
    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_alpha(mut self, alpha: f32) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio.is_finite() && (0.0..1.0).contains(&self.ratio)) {
            return Err(Error::InvalidConfig(format!(
                "ratio must lie in [0, 1), got {}",
                self.ratio
            )));
        }
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// The fusion weight actually applied under the configured strategy.
    pub fn effective_alpha(&self) -> f32 {
        match self.strategy {
            Strategy::BottomUpOnly => 0.0,
            Strategy::TopDownOnly => 1.0,
            _ => self.alpha,
        }
    }
}

/// Number of tokens kept out of `total` at pruning ratio `ratio`:
/// `floor((1 - ratio) * total)`.
///
/// A 1e-9 slack absorbs binary representation error so that decimal ratios
/// such as 0.1 of 10 tokens keep 9, not 8.
pub fn retained_budget(total: usize, ratio: f64) -> usize {
    let kept = ((1.0 - ratio) * total as f64 + 1e-9).floor();
    (kept.max(0.0) as usize).min(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    /// One quota per region; the thumbnail quota is last.
    pub quotas: Vec<usize>,
    #[serde(rename = "K")]
    pub total_budget: usize,
}

/// Max-shifted softmax in `f64`.
pub fn softmax(scores: &[f32]) -> Vec<f64> {
    let max = scores
        .iter()
        .map(|&x| f64::from(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&x| (f64::from(x) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Splits `amount` units across the indices in `eligible` in proportion to
/// `weights`: floor every real share, then hand out the remaining units by
/// descending fractional part, lower index first on ties.
fn largest_remainder(weights: &[f64], eligible: &[usize], amount: usize) -> Vec<usize> {
    let mut out = vec![0usize; weights.len()];
    if eligible.is_empty() || amount == 0 {
        return out;
    }
    let mut sum: f64 = eligible.iter().map(|&i| weights[i]).sum();
    let uniform = !(sum.is_finite() && sum > 0.0);
    if uniform {
        sum = eligible.len() as f64;
    }

    let mut fracs = Vec::with_capacity(eligible.len());
    let mut assigned = 0usize;
    for &i in eligible {
        let w = if uniform { 1.0 } else { weights[i] };
        let target = amount as f64 * w / sum;
        let floor = target.floor();
        out[i] = floor as usize;
        assigned += out[i];
        fracs.push((target - floor, i));
    }
    fracs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let remaining = amount.saturating_sub(assigned);
    for k in 0..remaining {
        out[fracs[k % fracs.len()].1] += 1;
    }
    out
}

/// Integer apportionment of `total` units by `weights` with a per-slot
/// ceiling of `cap`. Slots whose quota exceeds `cap` are clamped and the
/// overflow is re-apportioned over the slots still below `cap`, repeating
/// until nothing overflows.
pub fn apportion(weights: &[f64], total: usize, cap: usize) -> Result<Vec<usize>> {
    let capacity = weights.len().saturating_mul(cap);
    if total > capacity {
        return Err(Error::BudgetTooLarge {
            budget: total,
            total: capacity,
        });
    }
    let all: Vec<usize> = (0..weights.len()).collect();
    let mut quotas = largest_remainder(weights, &all, total);
    loop {
        let overflow: usize = quotas.iter().map(|&q| q.saturating_sub(cap)).sum();
        if overflow == 0 {
            return Ok(quotas);
        }
        for q in quotas.iter_mut() {
            *q = (*q).min(cap);
        }
        let open: Vec<usize> = all.iter().copied().filter(|&i| quotas[i] < cap).collect();
        for (q, extra) in quotas
            .iter_mut()
            .zip(largest_remainder(weights, &open, overflow))
        {
            *q += extra;
        }
    }
}

/// Region budgets proportional to `softmax(a)`, summing to
/// `floor((1 - ratio) * T)`, each at most the tile's token count.
pub fn allocate_budgets(
    regions: &RegionScores,
    grid: &TileGrid,
    ratio: f64,
) -> Result<BudgetAllocation> {
    if regions.len() != grid.regions() {
        return Err(Error::LengthMismatch {
            expected: grid.regions(),
            actual: regions.len(),
        });
    }
    let k = retained_budget(grid.total_tokens(), ratio);
    let quotas = apportion(&softmax(&regions.a), k, grid.tokens_per_tile)?;
    Ok(BudgetAllocation {
        quotas,
        total_budget: k,
    })
}

/// Equal-weight budgets, used when region saliency is switched off.
pub fn allocate_uniform(grid: &TileGrid, ratio: f64) -> Result<BudgetAllocation> {
    let k = retained_budget(grid.total_tokens(), ratio);
    let quotas = apportion(&vec![1.0; grid.regions()], k, grid.tokens_per_tile)?;
    Ok(BudgetAllocation {
        quotas,
        total_budget: k,
    })
}

/// Min-max scaling to `[0, 1]`; a constant input maps to 0.5 everywhere.
pub fn normalize_minmax(x: &[f32]) -> Vec<f32> {
    let (lo, hi) = x
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if x.is_empty() {
        return Vec::new();
    }
    if lo == hi {
        return vec![0.5; x.len()];
    }
    let (lo, range) = (f64::from(lo), f64::from(hi) - f64::from(lo));
    x.iter()
        .map(|&v| (((f64::from(v) - lo) / range) as f32).clamp(0.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedScores {
    pub s: Vec<f32>,
    pub b_norm: Vec<f32>,
    pub c_norm: Vec<f32>,
}

/// `s_j = alpha * c_j + (1 - alpha) * b_j`.
pub fn fuse(b_norm: &[f32], c_norm: &[f32], alpha: f32) -> Result<FusedScores> {
    if b_norm.len() != c_norm.len() {
        return Err(Error::LengthMismatch {
            expected: b_norm.len(),
            actual: c_norm.len(),
        });
    }
    let s = b_norm
        .iter()
        .zip(c_norm)
        .map(|(&b, &c)| alpha * c + (1.0 - alpha) * b)
        .collect();
    Ok(FusedScores {
        s,
        b_norm: b_norm.to_vec(),
        c_norm: c_norm.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Global token indices, ascending.
    pub kept: Vec<usize>,
    /// Tokens kept per region, thumbnail last.
    #[serde(rename = "quotas")]
    pub per_tile_kept: Vec<usize>,
    #[serde(rename = "K")]
    pub total_budget: usize,
    #[serde(rename = "T")]
    pub total_tokens: usize,
}

impl PruneResult {
    /// Builds a result from an arbitrary kept set, counting per-region hits.
    pub fn from_kept(mut kept: Vec<usize>, grid: &TileGrid) -> Result<Self> {
        kept.sort_unstable();
        kept.dedup();
        let total = grid.total_tokens();
        let mut per_tile = vec![0usize; grid.regions()];
        for &idx in &kept {
            let addr = grid.address_of(idx)?;
            per_tile[addr.tile_index] += 1;
        }
        Ok(PruneResult {
            total_budget: kept.len(),
            kept,
            per_tile_kept: per_tile,
            total_tokens: total,
        })
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total_tokens];
        for &i in &self.kept {
            if let Some(m) = mask.get_mut(i) {
                *m = true;
            }
        }
        mask
    }
}

/// Descending score, then ascending index.
fn rank_order(scores: &[f32], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Keeps the `quota` best-scoring tokens of every region.
pub fn select(s: &[f32], allocation: &BudgetAllocation, grid: &TileGrid) -> Result<PruneResult> {
    if s.len() != grid.total_tokens() {
        return Err(Error::LengthMismatch {
            expected: grid.total_tokens(),
            actual: s.len(),
        });
    }
    if allocation.quotas.len() != grid.regions() {
        return Err(Error::LengthMismatch {
            expected: grid.regions(),
            actual: allocation.quotas.len(),
        });
    }
    if let Some(&q) = allocation
        .quotas
        .iter()
        .find(|&&q| q > grid.tokens_per_tile)
    {
        return Err(Error::BudgetTooLarge {
            budget: q,
            total: grid.tokens_per_tile,
        });
    }

    let per_region: Vec<Vec<usize>> = allocation
        .quotas
        .par_iter()
        .enumerate()
        .map(|(region, &quota)| {
            let mut idx: Vec<usize> = grid.region_range(region).collect();
            idx.sort_unstable_by(|&a, &b| rank_order(s, a, b));
            idx.truncate(quota);
            idx
        })
        .collect();

    let mut kept: Vec<usize> = per_region.into_iter().flatten().collect();
    kept.sort_unstable();
    Ok(PruneResult {
        kept,
        per_tile_kept: allocation.quotas.clone(),
        total_budget: allocation.quotas.iter().sum(),
        total_tokens: grid.total_tokens(),
    })
}

/// Every intermediate of a pruning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub regions: RegionScores,
    pub allocation: BudgetAllocation,
    pub fused: FusedScores,
    pub result: PruneResult,
}

/// Pruning from already-computed signals: region scores `a`, raw bottom-up
/// scores `b` and raw top-down scores `c`, both in global token order.
pub fn prune_scores(
    grid: &TileGrid,
    regions: &RegionScores,
    b: &[f32],
    c: &[f32],
    config: &PruneConfig,
) -> Result<PruneTrace> {
    config.validate()?;
    grid.validate()?;
    let total = grid.total_tokens();
    for len in [b.len(), c.len()] {
        if len != total {
            return Err(Error::LengthMismatch {
                expected: total,
                actual: len,
            });
        }
    }

    let fused = fuse(
        &normalize_minmax(b),
        &normalize_minmax(c),
        config.effective_alpha(),
    )?;
    let allocation = match config.strategy {
        Strategy::NoRegion | Strategy::Spatial => allocate_uniform(grid, config.ratio)?,
        _ => allocate_budgets(regions, grid, config.ratio)?,
    };

    let result = match config.strategy {
        Strategy::Random => {
            let kept = baselines::random_prune(total, allocation.total_budget, config.seed)?;
            PruneResult::from_kept(kept, grid)?
        }
        Strategy::Spatial => {
            let kept = baselines::spatial_prune(grid, allocation.total_budget)?;
            PruneResult::from_kept(kept, grid)?
        }
        _ => select(&fused.s, &allocation, grid)?,
    };

    Ok(PruneTrace {
        regions: regions.clone(),
        allocation,
        fused,
        result,
    })
}

/// Raw per-token signals extracted from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub regions: RegionScores,
    pub bottom_up: BottomUpScores,
    pub top_down: TopDownScores,
}

pub fn compute_signals(bundle: &AttentionBundle, config: &PruneConfig) -> Result<Signals> {
    bundle.validate()?;
    Ok(Signals {
        regions: region_scores(
            &bundle.cls_tile,
            &bundle.cls_global,
            bundle.grid.has_thumbnail,
        )?,
        bottom_up: bottom_up_scores(&bundle.attn_cls_patch, config.head_mode)?,
        top_down: top_down_scores(
            &bundle.attn_instr_visual,
            config.token_mode,
            config.llm_head_mode,
            bundle.llm_block,
        )?,
    })
}

pub fn prune_traced(bundle: &AttentionBundle, config: &PruneConfig) -> Result<PruneTrace> {
    let signals = compute_signals(bundle, config)?;
    prune_scores(
        &bundle.grid,
        &signals.regions,
        &signals.bottom_up.b,
        &signals.top_down.c,
        config,
    )
}

/// Full pipeline: region scores, budgets, token scores, fusion, selection.
pub fn prune(bundle: &AttentionBundle, config: &PruneConfig) -> Result<PruneResult> {
    prune_traced(bundle, config).map(|t| t.result)
}
