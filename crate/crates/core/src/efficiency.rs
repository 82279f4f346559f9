//! Analytic prefill cost of the LLM over the visual tokens.
//!
//! Per decoder layer and `n` tokens with hidden size `d` and MLP width `m`:
//! `4·n·d²` for the Q/K/V/O projections, `2·n²·d` for scores and value
//! mixing, `3·n·d·m` for the gated MLP. A multiply-add counts as two FLOPs.
//! The KV cache holds one key and one value vector per token per layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BYTES_PER_MB: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmProfile {
    pub layers: u64,
    pub hidden: u64,
    pub ffn_intermediate: u64,
    #[serde(default = "default_kv_bytes")]
    pub kv_bytes_per_elem: u64,
}

fn default_kv_bytes() -> u64 {
    2
}

impl Default for LlmProfile {
    /// InternVL2-2B language model dimensions, fp16 cache.
    fn default() -> Self {
        LlmProfile {
            layers: 24,
            hidden: 2048,
            ffn_intermediate: 8192,
            kv_bytes_per_elem: 2,
        }
    }
}

impl LlmProfile {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.hidden == 0
            || self.ffn_intermediate == 0
            || self.kv_bytes_per_elem == 0
        {
            return Err(Error::InvalidConfig(
                "LLM profile dimensions must all be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: LlmProfile =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Exact FLOP count for `n` tokens.
pub fn flop_count(n: u64, p: &LlmProfile) -> u128 {
    let (n, d, m, l) = (
        u128::from(n),
        u128::from(p.hidden),
        u128::from(p.ffn_intermediate),
        u128::from(p.layers),
    );
    2 * l * (4 * n * d * d + 2 * n * n * d + 3 * n * d * m)
}

pub fn tflops(n: u64, p: &LlmProfile) -> f64 {
    flop_count(n, p) as f64 / 1e12
}

pub fn kv_cache_bytes(n: u64, p: &LlmProfile) -> u64 {
    2 * p.layers * p.hidden * p.kv_bytes_per_elem * n
}

pub fn kv_cache_mb(n: u64, p: &LlmProfile) -> f64 {
    kv_cache_bytes(n, p) as f64 / BYTES_PER_MB
}

/// Rounds half away from zero to `places` decimals, the way printed tables
/// round (134.25 -> 134.3).
pub fn round_to(x: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (x * scale).round() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub tokens: u64,
    pub tflops: f64,
    pub kv_cache_mb: f64,
}

impl EfficiencyReport {
    pub fn new(tokens: u64, profile: &LlmProfile) -> Self {
        EfficiencyReport {
            tokens,
            tflops: tflops(tokens, profile),
            kv_cache_mb: kv_cache_mb(tokens, profile),
        }
    }

    /// `tokens, tflops (2 d.p.), kv MB (1 d.p.)`
    pub fn table_row(&self) -> String {
        format!(
            "{}, {:.2}, {:.1}",
            self.tokens,
            round_to(self.tflops, 2),
            round_to(self.kv_cache_mb, 1)
        )
    }
}

/// Fractional savings of a pruned run against the unpruned baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub tokens: f64,
    pub tflops: f64,
    pub kv_cache: f64,
}

fn saving(pruned: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        1.0 - pruned / baseline
    }
}

impl Reduction {
    pub fn between(baseline: &EfficiencyReport, pruned: &EfficiencyReport) -> Self {
        Reduction {
            tokens: saving(pruned.tokens as f64, baseline.tokens as f64),
            tflops: saving(pruned.tflops, baseline.tflops),
            kv_cache: saving(pruned.kv_cache_mb, baseline.kv_cache_mb),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_row() {
        let p = LlmProfile::default();
        assert_eq!(
            EfficiencyReport::new(1792, &p).table_row(),
            "1792, 6.40, 336.0"
        );
        assert_eq!(kv_cache_mb(1792, &p), 336.0);
    }

    #[test]
    fn pruned_rows() {
        let p = LlmProfile::default();
        assert_eq!(round_to(tflops(896, &p), 2), 3.04);
        assert_eq!(round_to(kv_cache_mb(716, &p), 1), 134.3);
        assert_eq!(
            EfficiencyReport::new(179, &p).table_row(),
            "179, 0.58, 33.6"
        );
    }

    #[test]
    fn zero_tokens_cost_nothing() {
        let p = LlmProfile::default();
        assert_eq!(flop_count(0, &p), 0);
        assert_eq!(kv_cache_bytes(0, &p), 0);
        assert_eq!(EfficiencyReport::new(0, &p).table_row(), "0, 0.00, 0.0");
    }

    #[test]
    fn kv_is_linear_and_flops_superlinear() {
        let p = LlmProfile::default();
        for (a, b) in [(1u64, 2u64), (100, 17), (896, 896)] {
            assert_eq!(
                kv_cache_bytes(a + b, &p),
                kv_cache_bytes(a, &p) + kv_cache_bytes(b, &p)
            );
        }
        for n in [1u64, 2, 10, 1792] {
            assert!(flop_count(2 * n, &p) > 2 * flop_count(n, &p));
            assert!(flop_count(n + 1, &p) > flop_count(n, &p));
        }
    }

    #[test]
    fn reduction_is_one_minus_ratio() {
        let p = LlmProfile::default();
        let base = EfficiencyReport::new(1792, &p);
        let pruned = EfficiencyReport::new(896, &p);
        let r = Reduction::between(&base, &pruned);
        assert_eq!(r.tokens, 0.5);
        assert_eq!(r.kv_cache, 0.5);
        assert!((r.tflops - (1.0 - pruned.tflops / base.tflops)).abs() < 1e-15);
        assert!((r.tflops - 0.525).abs() < 0.001);
        let same = Reduction::between(&base, &base);
        assert_eq!((same.tokens, same.tflops, same.kv_cache), (0.0, 0.0, 0.0));
    }

    #[test]
    fn profile_json() {
        let p = LlmProfile::from_json(r#"{"layers":2,"hidden":8,"ffn_intermediate":16}"#).unwrap();
        assert_eq!(p.kv_bytes_per_elem, 2);
        assert!(LlmProfile::from_json(r#"{"layers":0,"hidden":8,"ffn_intermediate":16}"#).is_err());
    }
}
