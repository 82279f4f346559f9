//! The set of tensors the pruning engine consumes, with its mapping to and
//! from the on-disk tensor store.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::instruction::DEFAULT_LLM_BLOCK;
use crate::tensor::Tensor;
use crate::tensor_store::{read_bundle, write_bundle, TensorEntry, TensorManifest, TensorMap};
use crate::tiling::{TileGrid, DEFAULT_TILE_PX};

pub const CLS_GLOBAL: &str = "cls_global";
pub const CLS_TILE: &str = "cls_tile";
pub const ATTN_CLS_PATCH: &str = "attn_cls_patch";
pub const ATTN_INSTR_VISUAL: &str = "attn_instr_visual";

pub mod meta {
    pub const MODEL: &str = "model";
    pub const ROWS: &str = "rows";
    pub const COLS: &str = "cols";
    pub const TILE_PX: &str = "tile_px";
    pub const TOKENS_PER_TILE: &str = "tokens_per_tile";
    pub const HAS_THUMBNAIL: &str = "has_thumbnail";
    pub const VISION_LAYER: &str = "vision_layer";
    pub const LLM_BLOCK: &str = "llm_block";
    pub const QUERY_LEN: &str = "query_len";
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    pub grid: TileGrid,
    /// `[d]`
    pub cls_global: Vec<f32>,
    /// `[S, d]`
    pub cls_tile: Tensor,
    /// `[regions, vision heads, N]`, sub-images then thumbnail.
    pub attn_cls_patch: Tensor,
    /// `[llm heads, |Q|, T]`
    pub attn_instr_visual: Tensor,
    pub vision_layer: usize,
    pub llm_block: usize,
    /// Free-form entries beyond the grid and layer keys (model name etc).
    pub extra_metadata: BTreeMap<String, String>,
}

fn parse_meta<T: FromStr>(metadata: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match metadata.get(key) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidMetadata {
                key: key.to_string(),
                value: v.clone(),
            }),
    }
}

fn require_meta<T: FromStr>(metadata: &BTreeMap<String, String>, key: &str) -> Result<T> {
    parse_meta(metadata, key)?.ok_or_else(|| Error::MissingMetadata(key.to_string()))
}

impl AttentionBundle {
    pub fn vision_heads(&self) -> usize {
        self.attn_cls_patch.shape()[1]
    }

    pub fn llm_heads(&self) -> usize {
        self.attn_instr_visual.shape()[0]
    }

    pub fn query_len(&self) -> usize {
        self.attn_instr_visual.shape()[1]
    }

    pub fn embed_dim(&self) -> usize {
        self.cls_global.len()
    }

    /// Checks every tensor shape against the grid.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let d = self.cls_global.len();
        if d == 0 {
            return Err(Error::InvalidShape {
                name: CLS_GLOBAL.into(),
                shape: vec![0],
            });
        }
        let s = self.grid.sub_images();
        let n = self.grid.tokens_per_tile;
        self.cls_tile.expect_shape(CLS_TILE, &[s, d])?;
        let cls_patch = self.attn_cls_patch.shape();
        if cls_patch.len() != 3 {
            return Err(Error::ShapeMismatch {
                name: ATTN_CLS_PATCH.into(),
                expected: format!("[{}, H_v, {n}]", self.grid.regions()),
                actual: cls_patch.to_vec(),
            });
        }
        self.attn_cls_patch
            .expect_shape(ATTN_CLS_PATCH, &[self.grid.regions(), cls_patch[1], n])?;
        let instr = self.attn_instr_visual.shape();
        if instr.len() != 3 {
            return Err(Error::ShapeMismatch {
                name: ATTN_INSTR_VISUAL.into(),
                expected: format!("[H_l, |Q|, {}]", self.grid.total_tokens()),
                actual: instr.to_vec(),
            });
        }
        self.attn_instr_visual.expect_shape(
            ATTN_INSTR_VISUAL,
            &[instr[0], instr[1], self.grid.total_tokens()],
        )?;
        self.attn_cls_patch.expect_non_negative(ATTN_CLS_PATCH)?;
        self.attn_instr_visual
            .expect_non_negative(ATTN_INSTR_VISUAL)?;
        Ok(())
    }

    pub fn from_store(manifest: &TensorManifest, tensors: &TensorMap) -> Result<Self> {
        let md = &manifest.metadata;
        let rows: usize = require_meta(md, meta::ROWS)?;
        let cols: usize = require_meta(md, meta::COLS)?;
        let vision_layer: usize = require_meta(md, meta::VISION_LAYER)?;
        let llm_block = parse_meta(md, meta::LLM_BLOCK)?.unwrap_or(DEFAULT_LLM_BLOCK);
        let tile_px = parse_meta(md, meta::TILE_PX)?.unwrap_or(DEFAULT_TILE_PX);
        let has_thumbnail = parse_meta(md, meta::HAS_THUMBNAIL)?.unwrap_or(true);

        let tensor = |name: &str| -> Result<Tensor> {
            let entry = manifest
                .entry(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            let data = tensors
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            Tensor::new(entry.shape.clone(), data.clone()).map_err(|_| Error::ElementCount {
                name: name.to_string(),
                expected: entry.shape.iter().product(),
                actual: data.len(),
            })
        };

        let cls_global = tensor(CLS_GLOBAL)?;
        if cls_global.rank() != 1 {
            return Err(Error::ShapeMismatch {
                name: CLS_GLOBAL.into(),
                expected: "[d]".into(),
                actual: cls_global.shape().to_vec(),
            });
        }
        let attn_cls_patch = tensor(ATTN_CLS_PATCH)?;
        let patches = *attn_cls_patch.shape().last().unwrap();
        let tokens_per_tile = match parse_meta::<usize>(md, meta::TOKENS_PER_TILE)? {
            Some(n) if n != patches => {
                return Err(Error::InvalidMetadata {
                    key: meta::TOKENS_PER_TILE.into(),
                    value: format!("{n} (tensor has {patches} patches per tile)"),
                })
            }
            _ => patches,
        };

        let grid = TileGrid {
            rows,
            cols,
            tile_px,
            tokens_per_tile,
            has_thumbnail,
        };
        const KNOWN: [&str; 8] = [
            meta::ROWS,
            meta::COLS,
            meta::TILE_PX,
            meta::TOKENS_PER_TILE,
            meta::HAS_THUMBNAIL,
            meta::VISION_LAYER,
            meta::LLM_BLOCK,
            meta::QUERY_LEN,
        ];
        let extra_metadata = md
            .iter()
            .filter(|(k, _)| !KNOWN.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        let bundle = AttentionBundle {
            grid,
            cls_global: cls_global.into_data(),
            cls_tile: tensor(CLS_TILE)?,
            attn_cls_patch,
            attn_instr_visual: tensor(ATTN_INSTR_VISUAL)?,
            vision_layer,
            llm_block,
            extra_metadata,
        };
        bundle.validate()?;
        if let Some(q) = parse_meta::<usize>(md, meta::QUERY_LEN)? {
            if q != bundle.query_len() {
                return Err(Error::InvalidMetadata {
                    key: meta::QUERY_LEN.into(),
                    value: format!("{q} (tensor has {} query tokens)", bundle.query_len()),
                });
            }
        }
        Ok(bundle)
    }

    pub fn to_store(&self) -> Result<(TensorManifest, TensorMap)> {
        self.validate()?;
        let mut metadata = self.extra_metadata.clone();
        let g = &self.grid;
        for (k, v) in [
            (meta::ROWS, g.rows.to_string()),
            (meta::COLS, g.cols.to_string()),
            (meta::TILE_PX, g.tile_px.to_string()),
            (meta::TOKENS_PER_TILE, g.tokens_per_tile.to_string()),
            (meta::HAS_THUMBNAIL, g.has_thumbnail.to_string()),
            (meta::VISION_LAYER, self.vision_layer.to_string()),
            (meta::LLM_BLOCK, self.llm_block.to_string()),
        ] {
            metadata.insert(k.to_string(), v);
        }
        metadata.insert(meta::QUERY_LEN.to_string(), self.query_len().to_string());

        let manifest = TensorManifest {
            tensors: vec![
                TensorEntry::f32(CLS_GLOBAL, vec![self.cls_global.len()]),
                TensorEntry::f32(CLS_TILE, self.cls_tile.shape().to_vec()),
                TensorEntry::f32(ATTN_CLS_PATCH, self.attn_cls_patch.shape().to_vec()),
                TensorEntry::f32(ATTN_INSTR_VISUAL, self.attn_instr_visual.shape().to_vec()),
            ],
            metadata,
            ..Default::default()
        };
        let mut map = TensorMap::new();
        map.insert(CLS_GLOBAL.into(), self.cls_global.clone());
        map.insert(CLS_TILE.into(), self.cls_tile.data().to_vec());
        map.insert(ATTN_CLS_PATCH.into(), self.attn_cls_patch.data().to_vec());
        map.insert(
            ATTN_INSTR_VISUAL.into(),
            self.attn_instr_visual.data().to_vec(),
        );
        Ok((manifest, map))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (manifest, tensors) = read_bundle(dir)?;
        Self::from_store(&manifest, &tensors)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let (manifest, tensors) = self.to_store()?;
        write_bundle(&manifest, &tensors, dir)
    }
}
