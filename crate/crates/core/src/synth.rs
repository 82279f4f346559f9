//! Deterministic synthetic bundles with planted salient tiles and patches.
//!
//! Region structure: every cold sub-image CLS sits at a fixed angle of 60
//! degrees from the global CLS; a hot one is rotated toward it, to
//! `60 / (1 + concentration)` degrees. Attention rows are non-negative and sum
//! to one per head; a row with planted patches puts `concentration / (1 +
//! concentration)` of its mass uniformly on them and spreads the rest over
//! the other patches with mild noise.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_3;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::AttentionBundle;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tiling::TileGrid;

fn default_dim() -> usize {
    64
}
fn default_concentration() -> f64 {
    1000.0
}
fn default_query_len() -> usize {
    4
}
fn default_heads() -> usize {
    4
}
fn default_vision_layer() -> usize {
    8
}
fn default_llm_block() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub grid: TileGrid,
    #[serde(default = "default_dim")]
    pub d: usize,
    /// Sub-image indices whose CLS is pulled toward the global CLS.
    #[serde(default)]
    pub hot_tiles: BTreeSet<usize>,
    /// Region index (thumbnail = number of sub-images) to planted patches.
    #[serde(default)]
    pub hot_patches: BTreeMap<usize, BTreeSet<usize>>,
    #[serde(default = "default_concentration")]
    pub concentration: f64,
    #[serde(default = "default_query_len")]
    pub query_len: usize,
    /// Global token indices favoured by the instruction attention.
    #[serde(default)]
    pub instr_hot_patches: BTreeSet<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_heads")]
    pub vision_heads: usize,
    #[serde(default = "default_heads")]
    pub llm_heads: usize,
    #[serde(default = "default_vision_layer")]
    pub vision_layer: usize,
    #[serde(default = "default_llm_block")]
    pub llm_block: usize,
}

impl SynthSpec {
    /// A spec with nothing planted.
    pub fn new(grid: TileGrid, seed: u64) -> Self {
        SynthSpec {
            grid,
            d: default_dim(),
            hot_tiles: BTreeSet::new(),
            hot_patches: BTreeMap::new(),
            concentration: default_concentration(),
            query_len: default_query_len(),
            instr_hot_patches: BTreeSet::new(),
            seed,
            vision_heads: default_heads(),
            llm_heads: default_heads(),
            vision_layer: default_vision_layer(),
            llm_block: default_llm_block(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthSpec(msg));
        self.grid
            .validate()
            .map_err(|e| Error::InvalidSynthSpec(e.to_string()))?;
        if self.d < 2 {
            return bad(format!("embedding dim must be at least 2, got {}", self.d));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return bad(format!(
                "concentration must be positive and finite, got {}",
                self.concentration
            ));
        }
        if self.query_len == 0 || self.vision_heads == 0 || self.llm_heads == 0 {
            return bad("query_len and head counts must be positive".into());
        }
        let s = self.grid.sub_images();
        if let Some(&t) = self.hot_tiles.iter().find(|&&t| t >= s) {
            return bad(format!("hot tile {t} outside {s} sub-images"));
        }
        for (&region, patches) in &self.hot_patches {
            if region >= self.grid.regions() {
                return bad(format!("hot patch region {region} out of range"));
            }
            if let Some(&p) = patches.iter().find(|&&p| p >= self.grid.tokens_per_tile) {
                return bad(format!("hot patch {p} in region {region} out of range"));
            }
        }
        if let Some(&j) = self
            .instr_hot_patches
            .iter()
            .find(|&&j| j >= self.grid.total_tokens())
        {
            return bad(format!("instruction hot token {j} out of range"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSynthSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Smallest concentration above which every planted patch outweighs every
/// other patch of its row, for `hot` planted patches among `n`.
///
/// Cold weights are drawn from `[0.5, 1.5)`, so a cold patch holds at most
/// `3 (1 - f) / (n - hot)` of the row while a planted one holds `f / hot`.
pub fn planted_dominance_threshold(n: usize, hot: usize) -> f64 {
    if hot == 0 || hot >= n {
        return 0.0;
    }
    3.0 * hot as f64 / (n - hot) as f64
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector orthogonal to the unit vector `g`.
fn orthogonal_unit(rng: &mut ChaCha8Rng, g: &[f64]) -> Vec<f64> {
    loop {
        let v = random_unit(rng, g.len());
        let dot: f64 = v.iter().zip(g).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = v.iter().zip(g).map(|(a, b)| a - dot * b).collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return w.into_iter().map(|x| x / n).collect();
        }
    }
}

/// One probability row over `width` entries with `hot` receiving the
/// concentrated share.
fn planted_row(
    rng: &mut ChaCha8Rng,
    width: usize,
    hot: &BTreeSet<usize>,
    concentration: f64,
) -> Vec<f32> {
    let noise: Vec<f64> = (0..width).map(|_| rng.gen_range(0.5..1.5)).collect();
    let cold_sum: f64 = (0..width)
        .filter(|j| !hot.contains(j))
        .map(|j| noise[j])
        .sum();
    let (hot_share, cold_share) = if hot.is_empty() {
        (0.0, 1.0)
    } else if hot.len() == width {
        (1.0, 0.0)
    } else {
        let f = concentration / (1.0 + concentration);
        (f, 1.0 - f)
    };
    (0..width)
        .map(|j| {
            let v = if hot.contains(&j) {
                hot_share / hot.len() as f64
            } else {
                cold_share * noise[j] / cold_sum
            };
            v as f32
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<AttentionBundle> {
    spec.validate()?;
    let grid = spec.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let g = random_unit(&mut rng, spec.d);
    let cold_angle = FRAC_PI_3;
    let hot_angle = cold_angle / (1.0 + spec.concentration);
    let mut cls_tile = Vec::with_capacity(grid.sub_images() * spec.d);
    for i in 0..grid.sub_images() {
        let angle = if spec.hot_tiles.contains(&i) {
            hot_angle
        } else {
            cold_angle
        };
        let w = orthogonal_unit(&mut rng, &g);
        let scale: f64 = rng.gen_range(0.5..2.0);
        cls_tile.extend(
            g.iter()
                .zip(&w)
                .map(|(gk, wk)| (scale * (angle.cos() * gk + angle.sin() * wk)) as f32),
        );
    }

    let n = grid.tokens_per_tile;
    let empty = BTreeSet::new();
    let mut attn_cls_patch = Vec::with_capacity(grid.regions() * spec.vision_heads * n);
    for region in 0..grid.regions() {
        let hot = spec.hot_patches.get(&region).unwrap_or(&empty);
        for _ in 0..spec.vision_heads {
            attn_cls_patch.extend(planted_row(&mut rng, n, hot, spec.concentration));
        }
    }

    let t = grid.total_tokens();
    let mut attn_instr = Vec::with_capacity(spec.llm_heads * spec.query_len * t);
    for _ in 0..spec.llm_heads * spec.query_len {
        attn_instr.extend(planted_row(
            &mut rng,
            t,
            &spec.instr_hot_patches,
            spec.concentration,
        ));
    }

    let bundle = AttentionBundle {
        grid,
        cls_global: g.iter().map(|&x| x as f32).collect(),
        cls_tile: Tensor::new(vec![grid.sub_images(), spec.d], cls_tile)?,
        attn_cls_patch: Tensor::new(vec![grid.regions(), spec.vision_heads, n], attn_cls_patch)?,
        attn_instr_visual: Tensor::new(vec![spec.llm_heads, spec.query_len, t], attn_instr)?,
        vision_layer: spec.vision_layer,
        llm_block: spec.llm_block,
        extra_metadata: BTreeMap::from([
            ("model".to_string(), "synthetic".to_string()),
            ("seed".to_string(), spec.seed.to_string()),
        ]),
    };
    bundle.validate()?;
    Ok(bundle)
}
