//! Binary PGM (P5) rendering of a kept-token mask.
//!
//! Sub-images are laid out in the tile grid, row-major, one pixel per patch
//! with a one-pixel gutter between tiles. The thumbnail sits below the grid,
//! left-aligned, separated by one more gutter row.

use anyhow::{bail, ensure, Result};
use ptp_core::TileGrid;

pub const KEPT: u8 = 255;
pub const PRUNED: u8 = 0;
pub const GUTTER: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskLayout {
    pub side: usize,
    pub width: usize,
    pub height: usize,
}

pub fn layout(grid: &TileGrid) -> Result<MaskLayout> {
    let n = grid.tokens_per_tile;
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        bail!("tokens_per_tile {n} is not a perfect square; cannot lay patches out");
    }
    let width = grid.cols * side + (grid.cols - 1);
    let mut height = grid.rows * side + (grid.rows - 1);
    if grid.has_thumbnail {
        height += 1 + side;
    }
    Ok(MaskLayout {
        side,
        width,
        height,
    })
}

/// Returns the full PGM file contents.
pub fn render(grid: &TileGrid, mask: &[bool]) -> Result<Vec<u8>> {
    ensure!(
        mask.len() == grid.total_tokens(),
        "mask has {} entries, grid has {} tokens",
        mask.len(),
        grid.total_tokens()
    );
    let MaskLayout {
        side,
        width,
        height,
    } = layout(grid)?;
    let mut pixels = vec![GUTTER; width * height];
    for region in 0..grid.regions() {
        let (y0, x0) = if region < grid.sub_images() {
            (
                (region / grid.cols) * (side + 1),
                (region % grid.cols) * (side + 1),
            )
        } else {
            (grid.rows * (side + 1), 0)
        };
        for (p, &kept) in mask[grid.region_range(region)].iter().enumerate() {
            let (y, x) = (y0 + p / side, x0 + p % side);
            pixels[y * width + x] = if kept { KEPT } else { PRUNED };
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

/// Parses a P5 file written by [`render`]: `(width, height, pixels)`.
#[cfg(test)]
pub fn parse(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        ensure!(start < pos, "truncated PGM header");
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    ensure!(fields[0] == "P5", "not a binary PGM (magic {})", fields[0]);
    let width: usize = fields[1].parse()?;
    let height: usize = fields[2].parse()?;
    ensure!(fields[3] == "255", "unsupported maxval {}", fields[3]);
    // exactly one whitespace byte separates header from raster
    let raster = &bytes[pos + 1..];
    ensure!(
        raster.len() == width * height,
        "raster has {} bytes, expected {}",
        raster.len(),
        width * height
    );
    Ok((width, height, raster.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_kept_pixel() {
        let grid = TileGrid::new(1, 1).with_tokens_per_tile(4);
        let mut mask = vec![false; 8];
        mask[0] = true;
        let bytes = render(&grid, &mask).unwrap();
        let (w, h, px) = parse(&bytes).unwrap();
        assert_eq!((w, h), (2, 5));
        assert_eq!(px.iter().filter(|&&p| p == KEPT).count(), 1);
        assert_eq!(px[0], KEPT);
        // gutter row between the grid and the thumbnail
        assert_eq!(&px[4..6], &[GUTTER, GUTTER]);
    }

    #[test]
    fn all_kept_interior_is_white() {
        let grid = TileGrid::new(2, 3).with_tokens_per_tile(9);
        let bytes = render(&grid, &vec![true; grid.total_tokens()]).unwrap();
        let (w, h, px) = parse(&bytes).unwrap();
        assert_eq!(w, 3 * 3 + 2);
        assert_eq!(h, 2 * 3 + 1 + 1 + 3);
        assert_eq!(
            px.iter().filter(|&&p| p == KEPT).count(),
            grid.total_tokens()
        );
        assert!(px.iter().all(|&p| p == KEPT || p == GUTTER));
    }

    #[test]
    fn header_and_width_formula() {
        let grid = TileGrid::new(2, 4)
            .with_tokens_per_tile(16)
            .with_thumbnail(false);
        let bytes = render(&grid, &vec![false; grid.total_tokens()]).unwrap();
        assert!(bytes.starts_with(b"P5\n"));
        let (w, h, _) = parse(&bytes).unwrap();
        assert_eq!(w, 4 * 4 + 3);
        assert_eq!(h, 2 * 4 + 1);
    }

    #[test]
    fn tile_placement() {
        // second tile of a 1x2 grid, patch 3 = (row 1, col 1) inside tile
        let grid = TileGrid::new(1, 2).with_tokens_per_tile(4);
        let mut mask = vec![false; grid.total_tokens()];
        mask[4 + 3] = true;
        let (w, _, px) = parse(&render(&grid, &mask).unwrap()).unwrap();
        assert_eq!(w, 5);
        assert_eq!(px[w + 3 + 1], KEPT);
        assert_eq!(px.iter().filter(|&&p| p == KEPT).count(), 1);
    }

    #[test]
    fn mismatches_rejected() {
        let grid = TileGrid::new(1, 1).with_tokens_per_tile(4);
        assert!(render(&grid, &[true; 3]).is_err());
        let odd = TileGrid::new(1, 1).with_tokens_per_tile(5);
        assert!(render(&odd, &[true; 10]).is_err());
    }
}
