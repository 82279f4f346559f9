//! Bottom-up importance: region alignment with the global view and per-patch
//! CLS attention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How per-head attention rows are collapsed into one row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    #[default]
    Mean,
    Max,
}

impl HeadMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadMode::Mean => "mean",
            HeadMode::Max => "max",
        }
    }
}

impl std::str::FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(HeadMode::Mean),
            "max" => Ok(HeadMode::Max),
            other => Err(Error::InvalidConfig(format!("unknown head mode `{other}`"))),
        }
    }
}

/// Collapses `rows` (all of equal width) with a fixed left-to-right reduction.
pub(crate) fn aggregate_rows<'a, I>(rows: I, width: usize, mode: HeadMode) -> Vec<f32>
where
    I: ExactSizeIterator<Item = &'a [f32]>,
{
    let count = rows.len();
    match mode {
        HeadMode::Mean => {
            let mut acc = vec![0f64; width];
            for row in rows {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += f64::from(v);
                }
            }
            acc.into_iter().map(|s| (s / count as f64) as f32).collect()
        }
        HeadMode::Max => {
            let mut acc = vec![f32::NEG_INFINITY; width];
            for row in rows {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a = a.max(v);
                }
            }
            acc
        }
    }
}

/// Region saliency: cosine of each sub-image CLS with the global CLS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionScores {
    /// Sub-images first, then the thumbnail (when present).
    pub a: Vec<f32>,
}

impl RegionScores {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottomUpScores {
    pub b: Vec<f32>,
    pub head_mode: HeadMode,
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            actual: u.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm("cosine of a zero vector".into()));
    }
    let dot: f64 = u
        .iter()
        .zip(v)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    Ok(((dot / (nu * nv)) as f32).clamp(-1.0, 1.0))
}

/// Computes `a_i = cos(cls_i, cls_g)` for each sub-image. The thumbnail, when
/// present, is the global view itself and scores exactly 1.
pub fn region_scores(
    cls_tile: &Tensor,
    cls_global: &[f32],
    has_thumbnail: bool,
) -> Result<RegionScores> {
    if cls_global.is_empty() {
        return Err(Error::InvalidShape {
            name: "cls_global".into(),
            shape: vec![0],
        });
    }
    let d = cls_global.len();
    let [s, width] = cls_tile.shape() else {
        return Err(Error::ShapeMismatch {
            name: "cls_tile".into(),
            expected: format!("[S, {d}]"),
            actual: cls_tile.shape().to_vec(),
        });
    };
    if *width != d {
        return Err(Error::ShapeMismatch {
            name: "cls_tile".into(),
            expected: format!("[{s}, {d}]"),
            actual: cls_tile.shape().to_vec(),
        });
    }
    if norm(cls_global) == 0.0 {
        return Err(Error::ZeroNorm("cls_global".into()));
    }
    let mut a = Vec::with_capacity(s + 1);
    for i in 0..*s {
        let score = cosine(cls_tile.row(&[i]), cls_global)
            .map_err(|_| Error::ZeroNorm(format!("cls_tile[{i}]")))?;
        a.push(score);
    }
    if has_thumbnail {
        a.push(1.0);
    }
    Ok(RegionScores { a })
}

/// Per-token CLS-to-patch attention, heads collapsed by `head_mode`. Input
/// is `[regions, heads, patches]`; output is laid out in global token order.
pub fn bottom_up_scores(attn_cls_patch: &Tensor, head_mode: HeadMode) -> Result<BottomUpScores> {
    let &[regions, heads, patches] = attn_cls_patch.shape() else {
        return Err(Error::ShapeMismatch {
            name: "attn_cls_patch".into(),
            expected: "[regions, heads, patches]".into(),
            actual: attn_cls_patch.shape().to_vec(),
        });
    };
    attn_cls_patch.expect_non_negative("attn_cls_patch")?;
    let mut b = Vec::with_capacity(regions * patches);
    for r in 0..regions {
        let rows = (0..heads).map(|h| attn_cls_patch.row(&[r, h]));
        b.extend(aggregate_rows(rows, patches, head_mode));
    }
    Ok(BottomUpScores { b, head_mode })
}
