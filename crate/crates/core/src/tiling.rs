//! Sub-image grid planning and the global visual-token index space.
//!
//! Tokens are numbered tile by tile: all patches of sub-image 0, then
//! sub-image 1, ..., and finally the thumbnail, which always occupies the
//! last slot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TILE_PX: u32 = 448;
pub const DEFAULT_TOKENS_PER_TILE: usize = 256;
pub const DEFAULT_MAX_TILES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_tile_px")]
    pub tile_px: u32,
    #[serde(default = "default_tokens_per_tile")]
    pub tokens_per_tile: usize,
    #[serde(default = "default_true")]
    pub has_thumbnail: bool,
}

fn default_tile_px() -> u32 {
    DEFAULT_TILE_PX
}

fn default_tokens_per_tile() -> usize {
    DEFAULT_TOKENS_PER_TILE
}

fn default_true() -> bool {
    true
}

impl TileGrid {
    /// A grid with the default tile size, 256 tokens per tile and a thumbnail.
    pub fn new(rows: usize, cols: usize) -> Self {
        TileGrid {
            rows,
            cols,
            tile_px: DEFAULT_TILE_PX,
            tokens_per_tile: DEFAULT_TOKENS_PER_TILE,
            has_thumbnail: true,
        }
    }

    pub fn with_tokens_per_tile(mut self, n: usize) -> Self {
        self.tokens_per_tile = n;
        self
    }

    pub fn with_thumbnail(mut self, has_thumbnail: bool) -> Self {
        self.has_thumbnail = has_thumbnail;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid must have at least one tile, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.tokens_per_tile == 0 || self.tile_px == 0 {
            return Err(Error::InvalidConfig(
                "tile_px and tokens_per_tile must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of sub-images, excluding the thumbnail.
    pub fn sub_images(&self) -> usize {
        self.rows * self.cols
    }

    /// Number of token regions: sub-images plus the thumbnail when present.
    pub fn regions(&self) -> usize {
        self.sub_images() + usize::from(self.has_thumbnail)
    }

    /// Region index of the thumbnail, if the grid has one.
    pub fn thumbnail_index(&self) -> Option<usize> {
        self.has_thumbnail.then(|| self.sub_images())
    }

    pub fn total_tokens(&self) -> usize {
        self.regions() * self.tokens_per_tile
    }

    pub fn region_range(&self, region: usize) -> std::ops::Range<usize> {
        let n = self.tokens_per_tile;
        region * n..(region + 1) * n
    }

    pub fn global_index(&self, addr: TokenAddress) -> Result<usize> {
        if addr.tile_index >= self.regions() {
            return Err(Error::OutOfRange {
                index: addr.tile_index,
                len: self.regions(),
            });
        }
        if addr.patch_index >= self.tokens_per_tile {
            return Err(Error::OutOfRange {
                index: addr.patch_index,
                len: self.tokens_per_tile,
            });
        }
        Ok(addr.tile_index * self.tokens_per_tile + addr.patch_index)
    }

    pub fn address_of(&self, index: usize) -> Result<TokenAddress> {
        if index >= self.total_tokens() {
            return Err(Error::OutOfRange {
                index,
                len: self.total_tokens(),
            });
        }
        Ok(TokenAddress {
            tile_index: index / self.tokens_per_tile,
            patch_index: index % self.tokens_per_tile,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenAddress {
    pub tile_index: usize,
    pub patch_index: usize,
}

/// Picks the `rows x cols` sub-image grid whose aspect ratio is closest (in
/// log space) to the image's, subject to `rows * cols <= max_tiles`.
///
/// Candidates are visited by increasing tile count. When two grids match the
/// aspect ratio equally well, the larger one is taken only if the image holds
/// more than half of that grid's pixel area, so small images are not
/// upsampled onto many tiles. Degenerate inputs give a 1x1 grid.
pub fn plan_grid(image_w: u32, image_h: u32, max_tiles: usize, tile_px: u32) -> TileGrid {
    let tile_px = tile_px.max(1);
    let mut grid = TileGrid::new(1, 1);
    grid.tile_px = tile_px;
    if image_w == 0 || image_h == 0 || max_tiles == 0 {
        return grid;
    }

    let mut candidates: Vec<(usize, usize)> = (1..=max_tiles)
        .flat_map(|m| (1..=max_tiles / m).map(move |n| (m, n)))
        .collect();
    candidates.sort_by_key(|&(m, n)| (m * n, m));

    let target = (f64::from(image_w) / f64::from(image_h)).ln();
    let area = f64::from(image_w) * f64::from(image_h);
    let tile_area = f64::from(tile_px) * f64::from(tile_px);
    let distance = |m: usize, n: usize| ((n as f64 / m as f64).ln() - target).abs();

    let (mut best_m, mut best_n) = candidates[0];
    let mut best_dist = distance(best_m, best_n);
    for &(m, n) in &candidates[1..] {
        let dist = distance(m, n);
        if dist < best_dist || (dist == best_dist && area > 0.5 * tile_area * (m * n) as f64) {
            best_m = m;
            best_n = n;
            best_dist = dist;
        }
    }
    grid.rows = best_m;
    grid.cols = best_n;
    grid
}
