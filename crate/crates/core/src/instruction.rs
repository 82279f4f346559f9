//! Top-down importance from the LLM's instruction-to-visual attention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::{aggregate_rows, HeadMode};
use crate::tensor::Tensor;

pub const DEFAULT_LLM_BLOCK: usize = 2;

/// Reduction over instruction tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    Max,
    Mean,
}

impl TokenMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenMode::Max => "max",
            TokenMode::Mean => "mean",
        }
    }
}

impl std::str::FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(TokenMode::Max),
            "mean" => Ok(TokenMode::Mean),
            other => Err(Error::InvalidConfig(format!(
                "unknown token mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopDownScores {
    pub c: Vec<f32>,
    pub query_len: usize,
    pub token_mode: TokenMode,
    pub head_mode: HeadMode,
    pub llm_block: usize,
}

/// `attn_instr_visual` is `[heads, queries, visual tokens]`. Heads are
/// collapsed first, then queries.
pub fn top_down_scores(
    attn_instr_visual: &Tensor,
    token_mode: TokenMode,
    head_mode: HeadMode,
    llm_block: usize,
) -> Result<TopDownScores> {
    let &[heads, queries, tokens] = attn_instr_visual.shape() else {
        return Err(Error::ShapeMismatch {
            name: "attn_instr_visual".into(),
            expected: "[heads, queries, tokens]".into(),
            actual: attn_instr_visual.shape().to_vec(),
        });
    };
    if queries == 0 {
        return Err(Error::EmptyQuery);
    }
    attn_instr_visual.expect_non_negative("attn_instr_visual")?;

    let per_query: Vec<Vec<f32>> = (0..queries)
        .map(|q| {
            let rows = (0..heads).map(|h| attn_instr_visual.row(&[h, q]));
            aggregate_rows(rows, tokens, head_mode)
        })
        .collect();

    let reduce = match token_mode {
        TokenMode::Max => HeadMode::Max,
        TokenMode::Mean => HeadMode::Mean,
    };
    let c = aggregate_rows(per_query.iter().map(Vec::as_slice), tokens, reduce);

    Ok(TopDownScores {
        c,
        query_len: queries,
        token_mode,
        head_mode,
        llm_block,
    })
}
