//! Reference pruning strategies and kept-set comparison metrics.
//!
//! `random_prune` draws from ChaCha8 (`rand_chacha`, seeded through
//! `SeedableRng::seed_from_u64`) and runs a partial Fisher-Yates shuffle with
//! rejection-sampled bounded draws, so a given seed yields the same set on
//! every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::apportion;
use crate::tiling::TileGrid;

pub const RANDOM_GENERATOR: &str = "chacha8-seed_from_u64/partial-fisher-yates";

/// Unbiased draw from `[0, bound)` by rejecting the top partial block.
fn bounded(rng: &mut impl RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// `k` distinct indices drawn uniformly from `[0, total)`, ascending.
pub fn random_prune(total: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > total {
        return Err(Error::BudgetTooLarge { budget: k, total });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..total).collect();
    for i in 0..k {
        let j = i + bounded(&mut rng, (total - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    Ok(pool)
}

/// Evenly strided patch offsets `round(t * (n - 1) / (q - 1))` for
/// `t = 0..q`, with any collision moved to the next free offset.
pub fn strided_patches(n: usize, q: usize) -> Vec<usize> {
    match q {
        0 => return Vec::new(),
        1 => return vec![0],
        _ => {}
    }
    let q = q.min(n);
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(q);
    for t in 0..q {
        // round half up, in integers
        let num = 2 * t * (n - 1) + (q - 1);
        let mut p = num / (2 * (q - 1));
        while taken[p] {
            p = (p + 1) % n;
        }
        taken[p] = true;
        out.push(p);
    }
    out.sort_unstable();
    out
}

/// Equal per-region budgets with evenly strided patches inside each region.
pub fn spatial_prune(grid: &TileGrid, k: usize) -> Result<Vec<usize>> {
    let total = grid.total_tokens();
    if k > total {
        return Err(Error::BudgetTooLarge { budget: k, total });
    }
    let quotas = apportion(&vec![1.0; grid.regions()], k, grid.tokens_per_tile)?;
    let n = grid.tokens_per_tile;
    Ok(quotas
        .iter()
        .enumerate()
        .flat_map(|(region, &q)| {
            strided_patches(n, q)
                .into_iter()
                .map(move |p| region * n + p)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub jaccard: f64,
    /// Share of total fused score held by the reference set.
    pub score_mass_reference: f64,
    /// Share of total fused score held by the candidate set.
    pub score_mass_candidate: f64,
    /// Fraction of each region's tokens the candidate keeps.
    pub per_tile_retention: Vec<f64>,
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::BTreeSet<_> = a.iter().collect();
    let sb: std::collections::BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// `sum_{j in kept} s_j / sum_j s_j`. When every score is zero the share
/// falls back to the kept fraction.
pub fn score_mass(kept: &[usize], s: &[f32]) -> Result<f64> {
    let total: f64 = s.iter().map(|&v| f64::from(v)).sum();
    let mut held = 0.0;
    for &i in kept {
        let v = s.get(i).ok_or(Error::OutOfRange {
            index: i,
            len: s.len(),
        })?;
        held += f64::from(*v);
    }
    if total <= 0.0 {
        return Ok(if s.is_empty() {
            0.0
        } else {
            kept.len() as f64 / s.len() as f64
        });
    }
    Ok((held / total).min(1.0))
}

/// Compares a candidate kept set against a reference kept set under fused
/// scores `s`.
pub fn compare(
    reference: &[usize],
    candidate: &[usize],
    s: &[f32],
    grid: &TileGrid,
) -> Result<OverlapReport> {
    let mut per_tile = vec![0usize; grid.regions()];
    for &i in candidate {
        per_tile[grid.address_of(i)?.tile_index] += 1;
    }
    for &i in reference {
        grid.address_of(i)?;
    }
    Ok(OverlapReport {
        jaccard: jaccard(reference, candidate),
        score_mass_reference: score_mass(reference, s)?,
        score_mass_candidate: score_mass(candidate, s)?,
        per_tile_retention: per_tile
            .into_iter()
            .map(|c| c as f64 / grid.tokens_per_tile as f64)
            .collect(),
    })
}
